"""Phase estimation: full circuit, closed-form fast path, success bounds.

The unitary is always ``exp(2*pi*i*power*B)`` for a symmetric ``B`` with
spectrum in (0, 1). Because the bottom register starts in a superposition of
eigenvectors and the circuit never mixes eigenvectors, the medium-register
distribution is the mixture over branches j (weights ``p_j**2``) of the
single-phase kernel::

    K_m(phi, k) = |2^-m sum_{x < 2^m} exp(2 pi i x (phi - k / 2^m))|^2

which is what :func:`fast_path_distribution` evaluates directly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import RescalingRequiredError, ValidationError
from .linalg import SpectralDecomposition, matrix_phase_unitary
from .statevector import StateVector

_CHUNK = 1 << 20
_TINY = 1e-200


@dataclass(frozen=True)
class QpeOutcome:
    """Medium-register distribution after phase estimation.

    ``per_eigenvalue[j]`` is the conditional distribution given branch j and
    ``weights[j]`` its probability, so ``distribution == weights @ per_eigenvalue``.
    """

    m: int
    weights: np.ndarray
    per_eigenvalue: np.ndarray
    distribution: np.ndarray


def check_unit_interval(eigenvalues: np.ndarray) -> None:
    bad = [float(v) for v in eigenvalues if not 0.0 < v < 1.0]
    if bad:
        raise RescalingRequiredError(
            f"eigenvalues {bad} lie outside (0, 1); rescale the system first"
        )


def module_phase(eigenvalue: float, power: int) -> float:
    """Phase seen by ``exp(2 pi i power B)`` on eigenvalue ``eigenvalue``, in [0, 1)."""
    return float(np.mod(eigenvalue * power, 1.0))


def truncate(eigenvalue: float, bits: int) -> int:
    """``floor(eigenvalue * 2**bits)``, the integer of the leading ``bits`` bits."""
    return int(math.floor(eigenvalue * 2**bits))


def bit_string(value: int, bits: int) -> str:
    return format(value, f"0{bits}b")


def qpe_kernel(phase: float, m: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Closed-form outcome probabilities ``K_m(phase, k)`` for ``start <= k < stop``."""
    big_m = 2**m
    stop = big_m if stop is None else stop
    k = np.arange(start, stop, dtype=float)
    d = phase - k / big_m
    d = d - np.round(d)
    s = np.sin(np.pi * d)
    num = np.sin(np.pi * big_m * d)
    out = np.ones_like(d)
    nz = np.abs(d) > _TINY  # below this the ratio is 1 to double precision
    out[nz] = (num[nz] / (big_m * s[nz])) ** 2
    return out


def kernel_amplitudes(phase: float, m: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Complex outcome amplitudes ``2^-m sum_x exp(2 pi i x (phase - k / 2^m))``."""
    big_m = 2**m
    stop = big_m if stop is None else stop
    k = np.arange(start, stop, dtype=float)
    d = phase - k / big_m
    d = d - np.round(d)
    s = np.sin(np.pi * d)
    out = np.ones(d.shape, dtype=complex)
    nz = np.abs(d) > _TINY  # below this the ratio is 1 to double precision
    out[nz] = np.exp(1j * np.pi * (big_m - 1) * d[nz]) * np.sin(np.pi * big_m * d[nz]) / (big_m * s[nz])
    return out


def kernel_bin_overlaps(phases, m: int, n_high: int) -> np.ndarray:
    """``G[j, l, a] = sum_r amp_j(a, r) * conj(amp_l(a, r))`` over the low bits r.

    The diagonal ``G[j, j]`` equals :func:`kernel_bin_masses`; off-diagonal
    entries carry the interference between branches that survives when the
    bottom register is measured in the computational basis.
    """
    if not 0 <= n_high <= m:
        raise ValidationError(f"n_high={n_high} must lie in [0, {m}]")
    phases = list(phases)
    low = 2 ** (m - n_high)
    out = np.zeros((len(phases), len(phases), 2**n_high), dtype=complex)
    step = max(low, (_CHUNK // low) * low)
    for start in range(0, 2**m, step):
        stop = min(start + step, 2**m)
        amps = np.stack([kernel_amplitudes(ph, m, start, stop).reshape(-1, low) for ph in phases])
        out[:, :, start // low : stop // low] += np.einsum("jar,lar->jla", amps, amps.conj())
    return out


def kernel_bin_masses(phase: float, m: int, n_high: int) -> np.ndarray:
    """Kernel mass aggregated over the low ``m - n_high`` bits.

    Entry ``a`` is the probability that the leading ``n_high`` bits of the
    m-bit outcome equal ``a``. Evaluated in chunks so large ``m`` stays
    within memory.
    """
    if not 0 <= n_high <= m:
        raise ValidationError(f"n_high={n_high} must lie in [0, {m}]")
    low = 2 ** (m - n_high)
    out = np.zeros(2**n_high)
    step = max(low, (_CHUNK // low) * low)
    for start in range(0, 2**m, step):
        stop = min(start + step, 2**m)
        vals = qpe_kernel(phase, m, start, stop)
        out[start // low : stop // low] += vals.reshape(-1, low).sum(axis=1)
    return out


def fast_path_distribution(sd: SpectralDecomposition, m: int, power: int = 1) -> QpeOutcome:
    """Medium-register distribution without building the statevector.

    Costs O(N 2^m) rather than O(2^(m + n_bottom)) amplitudes per gate.
    """
    check_unit_interval(sd.eigenvalues)
    if sd.projections is None:
        raise ValidationError("spectral decomposition needs a bound right-hand side")
    weights = sd.projections**2
    cond = np.stack([qpe_kernel(module_phase(lam, power), m) for lam in sd.eigenvalues])
    return QpeOutcome(m, weights, cond, weights @ cond)


def controlled_powers(sd: SpectralDecomposition, m: int, power: int = 1) -> list[np.ndarray]:
    """``U^(2^(m-1-k))`` for medium qubit k (k = 0 is the most significant)."""
    return [matrix_phase_unitary(sd, power * 2 ** (m - 1 - k)) for k in range(m)]


def run_qpe_circuit(
    state: StateVector,
    sd: SpectralDecomposition,
    m: int | None = None,
    power: int = 1,
    unitaries: Sequence[np.ndarray] | None = None,
) -> StateVector:
    """Hadamards on the medium register, controlled powers, inverse QFT."""
    medium = state.layout.medium
    m = len(medium) if m is None else m
    if m != len(medium):
        raise ValidationError(f"medium register has {len(medium)} qubits, m={m} requested")
    us = controlled_powers(sd, m, power) if unitaries is None else unitaries
    state.apply_hadamard(medium)
    for k, q in enumerate(medium):
        state.apply_controlled_unitary(q, us[k])
    return state.apply_inverse_qft(medium)


def run_inverse_qpe_circuit(
    state: StateVector,
    sd: SpectralDecomposition,
    power: int = 1,
    unitaries: Sequence[np.ndarray] | None = None,
) -> StateVector:
    medium = state.layout.medium
    m = len(medium)
    us = controlled_powers(sd, m, power) if unitaries is None else unitaries
    state.apply_qft(medium)
    for k in reversed(range(m)):
        state.apply_controlled_unitary(medium[k], us[k].conj().T)
    return state.apply_hadamard(medium)


def failure_bound_single(n_redund: int) -> float:
    """Upper bound on the failure rate of one phase-estimation module."""
    if n_redund < 2:
        raise ValidationError(f"the failure bound needs n_redund >= 2, got {n_redund}")
    return 1.0 / (2.0 * (2**n_redund - 2))


def n_modules(m_prec: int, n_accur: int) -> int:
    if n_accur < 1 or m_prec < 1:
        raise ValidationError(f"need m_prec >= 1 and n_accur >= 1, got {m_prec}, {n_accur}")
    return -(-m_prec // n_accur)


def success_bound_multi(m_prec: int, n_accur: int, n_redund: int) -> float:
    """Lower bound on the probability that every module succeeds."""
    return (1.0 - failure_bound_single(n_redund)) ** n_modules(m_prec, n_accur)


def success_surface(
    m_prec: int, accur_range: Iterable[int], redund_range: Iterable[int]
) -> list[dict]:
    """Grid of :func:`success_bound_multi`, one row per (n_accur, n_redund)."""
    accur = list(accur_range)
    redund = list(redund_range)
    if not accur or not redund:
        raise ValidationError("accuracy and redundancy ranges must be non-empty")
    return [
        {
            "n_accur": a,
            "n_redund": r,
            "n_module": n_modules(m_prec, a),
            "p_success": success_bound_multi(m_prec, a, r),
        }
        for a in accur
        for r in redund
    ]


def surface_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["n_accur", "n_redund", "n_module", "p_success"], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "p_success": f"{row['p_success']:.12g}"})
    return buf.getvalue()


def window_success_probability(phase: float, m: int, n_redund: int) -> float:
    """Probability that the m-bit outcome lies within ``2**n_redund - 1`` steps
    (cyclically) of ``floor(phase * 2**m)``, the event the failure bound covers.
    """
    big_m = 2**m
    b = int(math.floor(phase * big_m)) % big_m
    e = 2**n_redund - 1
    ks = np.arange(b - e, b + e + 1) % big_m
    ks = np.unique(ks)
    probs = qpe_kernel(phase, m)
    return float(probs[ks].sum())

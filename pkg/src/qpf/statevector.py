"""Dense statevector kernel for the phase-estimation circuits.

Bit convention: global qubit 0 is the most significant bit of the amplitude
index. Registers are concatenated as ``top | medium | bottom`` and the medium
register holds the accuracy qubits before the redundant ones, so the leading
``n_accur`` medium bits are the high bits of a phase estimate. Within any
ordered qubit list passed to an operation, the first qubit is the most
significant bit of the basis value that list describes.

All gate methods mutate the state in place and return it, so calls chain.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ImpossibleOutcomeError,
    NormalizationError,
    ResourceCapError,
    ValidationError,
)

DEFAULT_MAX_QUBITS = 24
NORM_TOL = 1e-10
UNITARY_TOL = 1e-10


def max_qubits() -> int:
    """Simulator qubit cap; ``QPF_MAX_QUBITS`` overrides the default of 24."""
    raw = os.environ.get("QPF_MAX_QUBITS")
    if raw is None or raw.strip() == "":
        return DEFAULT_MAX_QUBITS
    try:
        cap = int(raw)
    except ValueError:
        raise ValidationError(f"QPF_MAX_QUBITS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise ValidationError(f"QPF_MAX_QUBITS must be positive, got {cap}")
    return cap


def bottom_qubits_for(dim: int) -> int:
    return max(1, math.ceil(math.log2(dim))) if dim > 1 else 1


@dataclass(frozen=True)
class RegisterLayout:
    n_top: int
    n_accur: int
    n_redund: int
    n_bottom: int

    def __post_init__(self):
        if self.n_top not in (0, 1):
            raise ValidationError(f"n_top must be 0 or 1, got {self.n_top}")
        if self.n_accur < 1:
            raise ValidationError(f"n_accur must be >= 1, got {self.n_accur}")
        if self.n_redund < 0:
            raise ValidationError(f"n_redund must be >= 0, got {self.n_redund}")
        if self.n_bottom < 1:
            raise ValidationError(f"n_bottom must be >= 1, got {self.n_bottom}")

    @property
    def n_medium(self) -> int:
        return self.n_accur + self.n_redund

    @property
    def total(self) -> int:
        return self.n_top + self.n_medium + self.n_bottom

    @property
    def top(self) -> list[int]:
        return list(range(self.n_top))

    @property
    def medium(self) -> list[int]:
        return list(range(self.n_top, self.n_top + self.n_medium))

    @property
    def accuracy(self) -> list[int]:
        return self.medium[: self.n_accur]

    @property
    def redundant(self) -> list[int]:
        return self.medium[self.n_accur :]

    @property
    def bottom(self) -> list[int]:
        start = self.n_top + self.n_medium
        return list(range(start, start + self.n_bottom))

    def check_cap(self, cap: int | None = None) -> None:
        cap = max_qubits() if cap is None else cap
        if self.total > cap:
            raise ResourceCapError(
                f"layout needs {self.total} qubits but the simulator cap is {cap}; "
                "use the closed-form engine instead"
            )


class StateVector:
    def __init__(self, layout: RegisterLayout, amplitudes: np.ndarray):
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape != (2**layout.total,):
            raise ValidationError(
                f"expected {2**layout.total} amplitudes for {layout.total} qubits, "
                f"got shape {amplitudes.shape}"
            )
        self.layout = layout
        self.amplitudes = amplitudes

    @property
    def n_qubits(self) -> int:
        return self.layout.total

    def copy(self) -> StateVector:
        return StateVector(self.layout, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    # -- helpers -----------------------------------------------------------

    def _check_qubits(self, qubits: Sequence[int]) -> list[int]:
        qubits = [int(q) for q in qubits]
        if len(set(qubits)) != len(qubits):
            raise ValidationError(f"duplicate qubit indices in {qubits}")
        for q in qubits:
            if not 0 <= q < self.n_qubits:
                raise ValidationError(f"qubit index {q} out of range for {self.n_qubits} qubits")
        return qubits

    def _grouped_view(self, qubits: list[int]) -> np.ndarray:
        """Writable view with ``qubits`` moved to the leading axes, in order."""
        t = self.amplitudes.reshape([2] * self.n_qubits)
        return np.moveaxis(t, qubits, list(range(len(qubits))))

    # -- gates -------------------------------------------------------------

    def apply_hadamard(self, qubits: Sequence[int]) -> StateVector:
        for q in self._check_qubits(qubits):
            a = self.amplitudes.reshape(2**q, 2, -1)
            a0, a1 = a[:, 0, :].copy(), a[:, 1, :]
            a[:, 0, :] = (a0 + a1) * (1 / math.sqrt(2))
            a[:, 1, :] = (a0 - a1) * (1 / math.sqrt(2))
        return self

    def apply_controlled_unitary(self, control: int, u: np.ndarray) -> StateVector:
        """Multiply the bottom block of every control=1 amplitude by ``u``."""
        (control,) = self._check_qubits([control])
        nb = self.layout.n_bottom
        if control >= self.n_qubits - nb:
            raise ValidationError("control qubit must lie outside the bottom register")
        u = np.asarray(u, dtype=complex)
        if u.shape != (2**nb, 2**nb):
            raise ValidationError(f"unitary has shape {u.shape}, bottom register needs {(2**nb, 2**nb)}")
        dev = np.linalg.norm(u.conj().T @ u - np.eye(2**nb))
        if dev > UNITARY_TOL:
            raise ValidationError(f"matrix is not unitary (||U^dag U - I|| = {dev:.3e})")
        a = self.amplitudes.reshape(2**control, 2, -1, 2**nb)
        a[:, 1] = a[:, 1] @ u.T
        return self

    def _fourier(self, qubits: Sequence[int], inverse: bool) -> StateVector:
        qubits = self._check_qubits(qubits)
        if not qubits:
            return self
        t = self._grouped_view(qubits)
        shape = t.shape
        block = t.reshape((2 ** len(qubits),) + shape[len(qubits):])
        # numpy's forward FFT carries exp(-2 pi i x k / M): the inverse QFT
        out = np.fft.fft(block, axis=0, norm="ortho") if inverse else np.fft.ifft(block, axis=0, norm="ortho")
        t[...] = out.reshape(shape)
        return self

    def apply_qft(self, qubits: Sequence[int]) -> StateVector:
        return self._fourier(qubits, inverse=False)

    def apply_inverse_qft(self, qubits: Sequence[int]) -> StateVector:
        return self._fourier(qubits, inverse=True)

    def apply_multiplexed_rotation(
        self,
        controls: Sequence[int],
        target: int,
        angle_of: Mapping[int, float] | Sequence[float] | np.ndarray | Callable[[int], float],
        *,
        reach_tol: float = 0.0,
    ) -> StateVector:
        """Apply ``R_y(angle_of[v])`` to ``target`` for each control basis value v.

        Angles may be given as a mapping, a dense array (NaN = undefined) or a
        callable. An undefined angle for a value that carries probability
        above ``reach_tol`` raises.
        """
        qubits = self._check_qubits(list(controls) + [target])
        k = len(qubits) - 1
        angles = _angle_table(angle_of, 2**k)
        t = self._grouped_view(qubits)
        shape = t.shape
        block = t.reshape(2**k, 2, -1)
        missing = np.isnan(angles)
        if missing.any():
            mass = np.sum(np.abs(block[missing]) ** 2, axis=(1, 2))
            reached = np.flatnonzero(missing)[mass > reach_tol]
            if reached.size:
                raise ValidationError(
                    f"no rotation angle for reachable control values {reached.tolist()[:8]}"
                )
            angles = np.where(missing, 0.0, angles)
        c = np.cos(angles / 2)[:, None]
        s = np.sin(angles / 2)[:, None]
        a0 = block[:, 0, :].copy()
        a1 = block[:, 1, :]
        new0 = c * a0 - s * a1
        new1 = s * a0 + c * a1
        out = np.stack([new0, new1], axis=1)
        t[...] = out.reshape(shape)
        return self

    # -- measurement -------------------------------------------------------

    def marginal_probabilities(self, qubits: Sequence[int]) -> np.ndarray:
        """Probability of each basis value of ``qubits`` (index = basis value)."""
        qubits = self._check_qubits(qubits)
        p = (np.abs(self.amplitudes) ** 2).reshape([2] * self.n_qubits)
        others = tuple(q for q in range(self.n_qubits) if q not in qubits)
        reduced = p.sum(axis=others) if others else p
        # remaining axes are in ascending qubit order; reorder to the request
        ascending = sorted(qubits)
        reduced = np.transpose(reduced, [ascending.index(q) for q in qubits])
        return reduced.reshape(-1)

    def project(self, qubits: Sequence[int], outcome: int, *, min_prob: float = 1e-15) -> tuple[StateVector, float]:
        """Collapse ``qubits`` onto ``outcome``; returns (self, prior probability)."""
        qubits = self._check_qubits(qubits)
        if not 0 <= outcome < 2 ** len(qubits):
            raise ValidationError(f"outcome {outcome} does not fit in {len(qubits)} qubits")
        t = self._grouped_view(qubits)
        block = t.reshape((2 ** len(qubits),) + t.shape[len(qubits):])
        prob = float(np.sum(np.abs(block[outcome]) ** 2))
        if prob <= min_prob:
            raise ImpossibleOutcomeError(
                f"outcome {outcome} on qubits {qubits} has probability {prob:.3e}"
            )
        kept = block[outcome] / math.sqrt(prob)
        block[...] = 0.0
        block[outcome] = kept
        t[...] = block.reshape(t.shape)
        return self, prob

    def sample(self, qubits: Sequence[int], shots: int, seed: int) -> dict[int, int]:
        """Histogram of ``shots`` independent measurements of ``qubits``."""
        if shots < 1:
            raise ValidationError(f"shots must be >= 1, got {shots}")
        return sample_distribution(self.marginal_probabilities(qubits), shots, seed)

    def bottom_amplitudes(self) -> np.ndarray:
        """Bottom-register amplitudes, valid when other registers are in a basis state."""
        nb = self.layout.n_bottom
        a = self.amplitudes.reshape(-1, 2**nb)
        row = int(np.argmax(np.sum(np.abs(a) ** 2, axis=1)))
        return a[row].copy()


def _angle_table(angle_of, size: int) -> np.ndarray:
    if callable(angle_of):
        return np.array([angle_of(v) for v in range(size)], dtype=float)
    if isinstance(angle_of, Mapping):
        table = np.full(size, np.nan)
        for v, ang in angle_of.items():
            table[int(v)] = ang
        return table
    table = np.asarray(angle_of, dtype=float)
    if table.shape != (size,):
        raise ValidationError(f"angle table has shape {table.shape}, expected ({size},)")
    return table


def sample_distribution(probs: np.ndarray, shots: int, seed: int) -> dict[int, int]:
    """Multinomial draw from ``probs`` with numpy's PCG64 generator seeded by ``seed``."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    counts = np.random.default_rng(seed).multinomial(shots, probs)
    return {int(v): int(c) for v, c in enumerate(counts) if c}


def init_with_amplitudes(layout: RegisterLayout, bottom_values, *, tol: float = NORM_TOL) -> StateVector:
    """``|0>_top |0...0>_medium |values>_bottom``, zero-padding ``values``."""
    values = np.asarray(bottom_values, dtype=complex).reshape(-1)
    if values.size > 2**layout.n_bottom:
        raise ValidationError(
            f"{values.size} values do not fit in {layout.n_bottom} bottom qubits"
        )
    norm = float(np.linalg.norm(values))
    if abs(norm - 1.0) > tol:
        raise NormalizationError(norm)
    amps = np.zeros(2**layout.total, dtype=complex)
    amps[: values.size] = values
    return StateVector(layout, amps)


def apply_hadamard_block(s: StateVector, qubits: Sequence[int]) -> StateVector:
    return s.apply_hadamard(qubits)


def apply_controlled_unitary(s: StateVector, control: int, u) -> StateVector:
    return s.apply_controlled_unitary(control, u)


def apply_inverse_qft(s: StateVector, qubits: Sequence[int]) -> StateVector:
    return s.apply_inverse_qft(qubits)


def apply_multiplexed_rotation(s: StateVector, controls, target, angle_of) -> StateVector:
    return s.apply_multiplexed_rotation(controls, target, angle_of)


def marginal_probabilities(s: StateVector, qubits: Sequence[int]) -> np.ndarray:
    return s.marginal_probabilities(qubits)


def project(s: StateVector, qubits: Sequence[int], outcome: int) -> tuple[StateVector, float]:
    return s.project(qubits, outcome)


def sample(s: StateVector, qubits: Sequence[int], shots: int, seed: int) -> dict[int, int]:
    return s.sample(qubits, shots, seed)

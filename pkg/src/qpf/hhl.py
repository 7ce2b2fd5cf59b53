"""HHL with imperfect phase estimation.

Pipeline: phase estimation on ``n_accur + n_redund`` medium qubits, a
rotation of the top qubit keyed on the leading ``n_accur`` medium bits,
inverse phase estimation, then post-selection of ``top = 1`` followed by
``medium = 0...0``.

Two engines produce the same numbers:

* ``"circuit"`` runs the full statevector (capped by ``QPF_MAX_QUBITS``);
* ``"fast"`` uses the branch structure. For eigenbranch j let ``P_j(v)`` be
  the probability that phase estimation reports accuracy value v. The
  medium=0 amplitude after uncomputation is ``p_j * sum_v P_j(v) * f(v)``
  with ``f(v) = C / (v 2^-n_accur)``, and the top=1 probability is
  ``sum_j p_j^2 sum_v P_j(v) f(v)^2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import qpe
from .dcpf import ScaledDcSystem
from .errors import DegeneratePostSelectionError, InsufficientAccuracyError, ValidationError
from .linalg import SpectralDecomposition, lu_solve, pad_decomposition
from .statevector import (
    RegisterLayout,
    bottom_qubits_for,
    init_with_amplitudes,
    max_qubits,
    sample_distribution,
)

log = logging.getLogger(__name__)

MIN_POSTSELECT = 1e-12
ZERO_BIN_TOL = 1e-6


@dataclass(frozen=True)
class HhlConfig:
    n_accur: int
    n_redund: int
    mode: str = "exact"
    shots: int = 100_000
    seed: int = 0
    engine: str = "auto"
    rotation_constant: float | None = None

    def __post_init__(self):
        if self.n_accur < 1:
            raise ValidationError(f"n_accur must be >= 1, got {self.n_accur}")
        if self.n_redund < 2:
            raise ValidationError(f"n_redund must be >= 2, got {self.n_redund}")
        if self.mode not in ("exact", "sampled"):
            raise ValidationError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        if self.engine not in ("auto", "circuit", "fast"):
            raise ValidationError(f"engine must be auto, circuit or fast, got {self.engine!r}")
        if self.mode == "sampled" and self.shots < 1:
            raise ValidationError("sampled mode needs shots >= 1")
        c = self.rotation_constant
        if c is not None and not 0.0 < c <= 2.0**-self.n_accur:
            raise ValidationError(f"rotation constant must lie in (0, 2^-n_accur], got {c}")

    @property
    def constant(self) -> float:
        return 2.0**-self.n_accur if self.rotation_constant is None else self.rotation_constant

    def qubits(self, n_bottom: int) -> int:
        return 1 + self.n_accur + self.n_redund + n_bottom


@dataclass
class HhlResult:
    normalized_solution: np.ndarray
    postselect_prob_top: float
    postselect_prob_medium: float
    n_e_exp: float
    n_e_theory: float
    engine: str
    qubit_total: int
    qubit_medium: int
    zero_bin_hits: int = 0
    zero_bin_mass: float = 0.0
    simulator_assisted_signs: bool = False
    shots: int = 0
    counts: dict = field(default_factory=dict)


def relative_error(estimate, reference) -> float:
    """Euclidean ``||estimate - reference|| / ||reference||``."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    denom = float(np.linalg.norm(ref))
    if denom == 0.0:
        raise ValidationError("reference vector is zero")
    return float(np.linalg.norm(est - ref) / denom)


def truncated_eigenvalues(eigenvalues: np.ndarray, bits: int) -> np.ndarray:
    return np.floor(np.asarray(eigenvalues) * 2**bits) / 2**bits


def theoretical_solution(sd: SpectralDecomposition, n_accur: int) -> np.ndarray:
    """Normalized ``sum_j p_j u_j / floor_bits(lambda_j)`` (truncation error only)."""
    if sd.projections is None:
        raise ValidationError("spectral decomposition needs a bound right-hand side")
    lt = truncated_eigenvalues(sd.eigenvalues, n_accur)
    zero = np.flatnonzero(lt <= 0)
    if zero.size:
        raise InsufficientAccuracyError(int(zero[0]), n_accur)
    x = sd.eigenvectors @ (sd.projections / lt)
    return x / np.linalg.norm(x)


def rotation_angles(n_accur: int, constant: float) -> np.ndarray:
    """``2 asin(C / lambda~)`` per accuracy value; the zero bin gets angle 0."""
    v = np.arange(2**n_accur, dtype=float)
    angles = np.zeros_like(v)
    nz = v > 0
    angles[nz] = 2.0 * np.arcsin(np.minimum(1.0, constant * 2**n_accur / v[nz]))
    return angles


def _inverse_weights(n_accur: int, constant: float) -> np.ndarray:
    v = np.arange(2**n_accur, dtype=float)
    f = np.zeros_like(v)
    f[1:] = constant * 2**n_accur / v[1:]
    return f


def _pick_engine(cfg: HhlConfig, n_bottom: int) -> str:
    if cfg.engine != "auto":
        return cfg.engine
    return "circuit" if cfg.qubits(n_bottom) <= min(max_qubits(), 20) else "fast"


def _run_circuit(sys: ScaledDcSystem, cfg: HhlConfig, nb: int):
    layout = RegisterLayout(1, cfg.n_accur, cfg.n_redund, nb)
    layout.check_cap()
    sd = pad_decomposition(sys.spectral, 2**nb)
    us = qpe.controlled_powers(sd, layout.n_medium)
    state = init_with_amplitudes(layout, sys.p)
    qpe.run_qpe_circuit(state, sd, unitaries=us)
    zero_mass = state.marginal_probabilities(layout.accuracy)[0]
    state.apply_multiplexed_rotation(layout.accuracy, layout.top[0], rotation_angles(cfg.n_accur, cfg.constant))
    qpe.run_inverse_qpe_circuit(state, sd, unitaries=us)
    p_top = float(state.marginal_probabilities(layout.top)[1])
    if p_top < MIN_POSTSELECT:
        raise DegeneratePostSelectionError(f"P(top=1) = {p_top:.3e}")
    state.project(layout.top, 1)
    p_med = float(state.marginal_probabilities(layout.medium)[0])
    if p_med < MIN_POSTSELECT:
        raise DegeneratePostSelectionError(f"P(medium=0 | top=1) = {p_med:.3e}")
    state.project(layout.medium, 0)
    amps = state.bottom_amplitudes()[: sys.n]
    if np.max(np.abs(amps.imag)) > 1e-8:
        log.warning("post-selected amplitudes carry an imaginary part of %.2e", np.max(np.abs(amps.imag)))
    return amps.real, p_top, p_med, float(zero_mass)


def _run_fast(sys: ScaledDcSystem, cfg: HhlConfig):
    sd = sys.spectral
    qpe.check_unit_interval(sd.eigenvalues)
    m = cfg.n_accur + cfg.n_redund
    f = _inverse_weights(cfg.n_accur, cfg.constant)
    g = np.empty(sd.n)
    h = np.empty(sd.n)
    c = sd.projections
    zero_mass = 0.0
    for j, lam in enumerate(sd.eigenvalues):
        bins = qpe.kernel_bin_masses(lam, m, cfg.n_accur)
        g[j] = bins @ f
        h[j] = bins @ f**2
        zero_mass += c[j] ** 2 * bins[0]
    p_top = float(np.sum(c**2 * h))
    if p_top < MIN_POSTSELECT:
        raise DegeneratePostSelectionError(f"P(top=1) = {p_top:.3e}")
    vec = sd.eigenvectors @ (c * g)
    p_med = float(vec @ vec) / p_top
    if p_med < MIN_POSTSELECT:
        raise DegeneratePostSelectionError(f"P(medium=0 | top=1) = {p_med:.3e}")
    return vec / math.sqrt(p_top * p_med), p_top, p_med, float(zero_mass)


def solve_hhl(sys: ScaledDcSystem, cfg: HhlConfig) -> HhlResult:
    """Run HHL on a rescaled system and score it against the classical solve."""
    nb = bottom_qubits_for(sys.n)
    engine = _pick_engine(cfg, nb)
    if engine == "circuit":
        amps, p_top, p_med, zero_mass = _run_circuit(sys, cfg, nb)
    else:
        amps, p_top, p_med, zero_mass = _run_fast(sys, cfg)
    zero_hits = int(zero_mass > ZERO_BIN_TOL)
    if zero_hits:
        log.warning("accuracy value 0 has probability %.2e; its rotation angle is 0", zero_mass)

    solution = amps / np.linalg.norm(amps)
    counts: dict = {}
    if cfg.mode == "sampled":
        counts = sample_distribution(solution**2, cfg.shots, cfg.seed)
        mags = np.sqrt(np.array([counts.get(q, 0) for q in range(sys.n)]) / cfg.shots)
        solution = np.sign(solution) * mags
        solution = solution / np.linalg.norm(solution)

    reference = lu_solve(sys.b_scaled, sys.p)
    reference = reference / np.linalg.norm(reference)
    theory = theoretical_solution(sys.spectral, cfg.n_accur)
    return HhlResult(
        normalized_solution=solution,
        postselect_prob_top=p_top,
        postselect_prob_medium=p_med,
        n_e_exp=relative_error(solution, reference),
        n_e_theory=relative_error(theory, reference),
        engine=engine,
        qubit_total=cfg.qubits(nb),
        qubit_medium=cfg.n_accur + cfg.n_redund,
        zero_bin_hits=zero_hits,
        zero_bin_mass=zero_mass,
        simulator_assisted_signs=cfg.mode == "sampled",
        shots=cfg.shots if cfg.mode == "sampled" else 0,
        counts=counts,
    )

"""Hybrid single/multiple phase-estimation solvers (HSPEA and HMPEA).

Both algorithms measure eigenvalue bits instead of inverting them on the
device. A run produces an outcome table ``P[s, q]``: the probability that the
concatenated accuracy bits read ``s`` (``m_prec`` bits) and the bottom
register reads component ``q``. Everything downstream (branch claiming,
eigenvector magnitudes, sign calibration, solution assembly) works from that
table, whether it is exact or estimated from shots.

Module ``i`` (0-based) uses the unitary ``exp(2 pi i B')^(2^(i n_accur))``,
so its accuracy bits estimate eigenvalue bits ``i*n_accur+1 .. (i+1)*n_accur``.
Between modules only the medium register is reset; the bottom register is
carried over, which keeps outcomes of different modules correlated through
the eigenbranch they came from. Branches also interfere in the per-component
entries of the table because the bottom register is read in the
computational basis; both engines account for this.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import qpe
from .dcpf import ScaledDcSystem
from .errors import (
    BranchCollisionError,
    CalibrationError,
    InsufficientAccuracyError,
    ValidationError,
)
from .linalg import SpectralDecomposition, pad_decomposition
from .statevector import RegisterLayout, bottom_qubits_for, init_with_amplitudes

DEFAULT_TAU_SIGN = 0.05
PRUNE_TOL = 1e-15
MAX_SIGN_SEARCH = 16


@dataclass(frozen=True)
class HybridConfig:
    m_prec: int
    n_accur: int
    n_redund: int
    mode: str = "exact"
    shots: int = 100_000
    seed: int = 0
    engine: str = "fast"
    tau_sign: float = DEFAULT_TAU_SIGN

    def __post_init__(self):
        if self.m_prec < 1 or self.n_accur < 1:
            raise ValidationError("m_prec and n_accur must be >= 1")
        if self.n_redund < 2:
            raise ValidationError(f"n_redund must be >= 2, got {self.n_redund}")
        if self.mode not in ("exact", "sampled"):
            raise ValidationError(f"mode must be 'exact' or 'sampled', got {self.mode!r}")
        if self.engine not in ("fast", "circuit"):
            raise ValidationError(f"engine must be 'fast' or 'circuit', got {self.engine!r}")
        if self.mode == "sampled" and self.shots < 1:
            raise ValidationError("sampled mode needs shots >= 1")

    @property
    def n_module(self) -> int:
        return qpe.n_modules(self.m_prec, self.n_accur)

    def qubits(self, n_bottom: int) -> int:
        return self.n_accur + self.n_redund + n_bottom


@dataclass
class BranchStats:
    bits: str
    joint_probability: float
    magnitudes: np.ndarray
    product_magnitudes: np.ndarray

    @property
    def value(self) -> int:
        return int(self.bits, 2)

    def eigenvalue(self) -> float:
        return self.value / 2 ** len(self.bits)


@dataclass
class HybridStatistics:
    config: HybridConfig
    n: int
    branches: list[BranchStats]
    leakage: float
    divergence_log: dict[tuple[int, int], int]
    table: np.ndarray = field(repr=False)
    signed_products: np.ndarray | None = None
    ambiguous_rows: list[int] = field(default_factory=list)
    sign_residuals: np.ndarray | None = None

    @property
    def n_modules_run(self) -> int:
        return self.config.n_module

    @property
    def joint_probabilities(self) -> np.ndarray:
        return np.array([b.joint_probability for b in self.branches])

    @property
    def bit_strings(self) -> list[str]:
        return [b.bits for b in self.branches]


@dataclass
class HybridResult:
    theta: np.ndarray
    n_e_exp: float
    n_e_theory: float
    stats: HybridStatistics
    qubit_total: int
    qubit_medium: int


# -- outcome tables ---------------------------------------------------------


def check_branch_separation(sd: SpectralDecomposition, bits: int) -> None:
    """Raise if two weighted eigenvalues share their leading ``bits`` bits."""
    seen: dict[int, int] = {}
    clash = []
    for j, lam in enumerate(sd.eigenvalues):
        if sd.projections is not None and sd.projections[j] == 0:
            continue
        t = qpe.truncate(lam, bits)
        if t in seen:
            clash.append(qpe.bit_string(t, bits))
        seen[t] = j
    if clash:
        raise BranchCollisionError(sorted(set(clash)))


def _truncate_rows(table: np.ndarray, total_bits: int, m_prec: int) -> np.ndarray:
    drop = total_bits - m_prec
    if drop == 0:
        return table
    return table.reshape(2**m_prec, 2**drop, -1).sum(axis=1)


def module_bin_masses(sd: SpectralDecomposition, cfg: HybridConfig) -> np.ndarray:
    """``masses[j, i, a]``: probability that module i reports ``a`` on branch j."""
    m = cfg.n_accur + cfg.n_redund
    out = np.empty((sd.n, cfg.n_module, 2**cfg.n_accur))
    for j, lam in enumerate(sd.eigenvalues):
        for i in range(cfg.n_module):
            phase = qpe.module_phase(lam, 2 ** (i * cfg.n_accur))
            out[j, i] = qpe.kernel_bin_masses(phase, m, cfg.n_accur)
    return out


def module_bin_overlaps(sd: SpectralDecomposition, cfg: HybridConfig) -> np.ndarray:
    """``G[i, j, l, a]``: branch-overlap of module i's outcome amplitudes on bin a."""
    m = cfg.n_accur + cfg.n_redund
    return np.stack(
        [
            qpe.kernel_bin_overlaps(
                [qpe.module_phase(lam, 2 ** (i * cfg.n_accur)) for lam in sd.eigenvalues], m, cfg.n_accur
            )
            for i in range(cfg.n_module)
        ]
    )


def outcome_table_fast(sys: ScaledDcSystem, cfg: HybridConfig) -> np.ndarray:
    """Exact ``P[s, q]`` from the branch structure, without a statevector.

    With ``c`` the projections and ``G`` the per-module overlaps::

        P[s, q] = sum_{j,l} c_j c_l u_jq u_lq prod_i G[i, j, l, a_i(s)]

    The diagonal terms are the per-branch kernel products; the off-diagonal
    ones are the interference left over because the bottom register is read
    in the computational basis rather than the eigenbasis.
    """
    sd = sys.spectral
    qpe.check_unit_interval(sd.eigenvalues)
    overlaps = module_bin_overlaps(sd, cfg)
    c = sd.projections
    u = sd.eigenvectors
    total_bits = cfg.n_module * cfg.n_accur
    table = np.zeros((2**total_bits, sd.n))
    for j in range(sd.n):
        for l in range(j, sd.n):
            acc = np.ones(1, dtype=complex)
            for i in range(cfg.n_module):
                acc = np.kron(acc, overlaps[i, j, l])
            weight = c[j] * c[l] * u[:, j] * u[:, l]
            factor = 1.0 if j == l else 2.0
            table += factor * np.outer(acc.real, weight)
    return _truncate_rows(table, total_bits, cfg.m_prec)


def outcome_table_circuit(sys: ScaledDcSystem, cfg: HybridConfig, prune_tol: float = PRUNE_TOL) -> np.ndarray:
    """Exact ``P[s, q]`` from statevector phase-estimation modules.

    The bottom register after each module is a mixed state per observed
    prefix; each prefix keeps its (unnormalized) density matrix, which is
    diagonalized and fed through the next module one pure component at a
    time. Prefixes lighter than ``prune_tol`` are dropped.
    """
    nb = bottom_qubits_for(sys.n)
    layout = RegisterLayout(0, cfg.n_accur, cfg.n_redund, nb)
    layout.check_cap()
    sd = pad_decomposition(sys.spectral, 2**nb)
    qpe.check_unit_interval(sys.spectral.eigenvalues)
    pvec = np.zeros(2**nb)
    pvec[: sys.n] = sys.p
    prefixes: dict[int, np.ndarray] = {0: np.outer(pvec, pvec).astype(complex)}
    for i in range(cfg.n_module):
        us = qpe.controlled_powers(sd, layout.n_medium, 2 ** (i * cfg.n_accur))
        nxt: dict[int, np.ndarray] = {}
        for key, rho in prefixes.items():
            w, vecs = np.linalg.eigh(rho)
            for wk, vk in zip(w, vecs.T):
                if wk <= prune_tol * 1e-3:
                    continue
                state = init_with_amplitudes(layout, vk / np.linalg.norm(vk))
                qpe.run_qpe_circuit(state, sd, unitaries=us)
                amps = state.amplitudes.reshape(2**cfg.n_accur, 2**cfg.n_redund, 2**nb)
                for a in range(2**cfg.n_accur):
                    blk = amps[a]
                    contrib = wk * (blk.T @ blk.conj())
                    k = (key << cfg.n_accur) | a
                    if k in nxt:
                        nxt[k] += contrib
                    else:
                        nxt[k] = contrib
        prefixes = {k: r for k, r in nxt.items() if np.real(np.trace(r)) > prune_tol}
    total_bits = cfg.n_module * cfg.n_accur
    table = np.zeros((2**total_bits, 2**nb))
    for k, rho in prefixes.items():
        table[k] = np.real(np.diag(rho))
    return _truncate_rows(table, total_bits, cfg.m_prec)[:, : sys.n]


def sample_table(sys: ScaledDcSystem, cfg: HybridConfig) -> np.ndarray:
    """Shot-estimated ``P[s, q]``.

    Each shot draws the module outcomes in order, every one conditioned on
    the outcomes before it, and the bottom component last. All draws come
    from one PCG64 stream seeded by ``cfg.seed``; the conditionals are read
    off the exact joint table of the chosen engine.
    """
    total_bits = cfg.n_module * cfg.n_accur
    full = HybridConfig(total_bits, cfg.n_accur, cfg.n_redund, engine=cfg.engine)
    exact = outcome_table_circuit(sys, full) if cfg.engine == "circuit" else outcome_table_fast(sys, full)
    joint = np.clip(exact, 0, None)
    joint = joint / joint.sum()
    rng = np.random.default_rng(cfg.seed)
    value = np.zeros(cfg.shots, dtype=np.int64)
    for i in range(1, cfg.n_module + 1):
        bits = i * cfg.n_accur
        marg = joint.reshape(2**bits, -1).sum(axis=1).reshape(-1, 2**cfg.n_accur)
        value = (value << cfg.n_accur) | _draw_conditional(rng, marg, value)
    comp = _draw_conditional(rng, joint, value)
    value >>= total_bits - cfg.m_prec
    counts = np.zeros((2**cfg.m_prec, joint.shape[1]))
    np.add.at(counts, (value, comp), 1)
    return counts / cfg.shots


def _draw_conditional(rng: np.random.Generator, table: np.ndarray, prefix: np.ndarray) -> np.ndarray:
    """One column index per shot, drawn from the row ``table[prefix]`` renormalized."""
    out = np.empty_like(prefix)
    for key in np.unique(prefix):
        sel = np.flatnonzero(prefix == key)
        row = table[key]
        out[sel] = rng.choice(table.shape[1], size=sel.size, p=row / row.sum())
    return out


# -- statistics ---------------------------------------------------------------


def claim_branches(table: np.ndarray, cfg: HybridConfig, n_branches: int) -> list[int]:
    """Greedy branch claiming by descending mass.

    Stops after ``n_branches`` strings or once the claimed mass reaches
    ``1 - 2 * eps * n_module``, whichever comes first.
    """
    marg = table.sum(axis=1)
    target = 1.0 - 2.0 * qpe.failure_bound_single(cfg.n_redund) * cfg.n_module
    order = sorted(np.flatnonzero(marg > 0), key=lambda s: (-marg[s], s))
    claimed: list[int] = []
    mass = 0.0
    for s in order:
        if len(claimed) >= n_branches or mass >= target:
            break
        claimed.append(int(s))
        mass += marg[s]
    return claimed


def divergence_module(a: str, b: str, n_accur: int) -> int:
    """1-based module index where two bit strings first differ (0 if equal)."""
    for i in range(0, len(a), n_accur):
        if a[i : i + n_accur] != b[i : i + n_accur]:
            return i // n_accur + 1
    return 0


def statistics_from_table(table: np.ndarray, cfg: HybridConfig, n: int) -> HybridStatistics:
    claimed = claim_branches(table, cfg, n)
    branches = []
    for s in claimed:
        row = table[s]
        joint = float(row.sum())
        branches.append(
            BranchStats(
                bits=qpe.bit_string(s, cfg.m_prec),
                joint_probability=joint,
                magnitudes=np.sqrt(np.clip(row, 0, None) / joint),
                product_magnitudes=np.sqrt(np.clip(row, 0, None)),
            )
        )
    # report branches in descending eigenvalue order
    branches.sort(key=lambda b: -b.value)
    divergence = {
        (x, y): divergence_module(branches[x].bits, branches[y].bits, cfg.n_accur)
        for x, y in itertools.combinations(range(len(branches)), 2)
    }
    leakage = float(1.0 - sum(b.joint_probability for b in branches))
    return HybridStatistics(cfg, n, branches, leakage, divergence, table)


def calibrate_signs(stats: HybridStatistics, p_vec, tau: float | None = None) -> np.ndarray:
    """Recover the signs of ``p_j u_jq`` from ``sum_j p_j u_jq = (C_p P)_q``.

    Every sign pattern of each component row is tried; the pattern with the
    smallest residual wins provided it is within ``tau``. Rows where a
    different passing pattern would change a product are flagged in
    ``stats.ambiguous_rows``. The signed matrix (branches x components) is
    stored on ``stats`` and returned.
    """
    tau = stats.config.tau_sign if tau is None else tau
    p_vec = np.asarray(p_vec, dtype=float)
    mags = np.array([b.product_magnitudes for b in stats.branches])
    nbr = len(stats.branches)
    if nbr > MAX_SIGN_SEARCH:
        raise ValidationError(f"sign search over {nbr} branches is too large")
    patterns = np.array(list(itertools.product((1.0, -1.0), repeat=nbr)))
    signed = np.zeros_like(mags)
    residuals = np.zeros(len(p_vec))
    ambiguous = []
    for q in range(len(p_vec)):
        sums = patterns @ mags[:, q]
        res = np.abs(sums - p_vec[q])
        best = int(np.argmin(res))
        if res[best] > tau:
            raise CalibrationError(q, float(res[best]), tau)
        products = patterns * mags[:, q]
        passing = np.flatnonzero(res <= tau)
        distinct = {tuple(np.round(products[k], 15)) for k in passing}
        if len(distinct) > 1:
            ambiguous.append(q)
        signed[:, q] = products[best]
        residuals[q] = res[best]
    stats.signed_products = signed
    stats.ambiguous_rows = ambiguous
    stats.sign_residuals = residuals
    return signed


def assemble_solution(stats: HybridStatistics, scale_exponent: int, c_p: float = 1.0) -> np.ndarray:
    """Physical angles ``2^-s / C_p * sum_j (p_j u_j) / lambda~_j``."""
    if stats.signed_products is None:
        raise ValidationError("signs have not been calibrated")
    theta = np.zeros(stats.signed_products.shape[1])
    for j, br in enumerate(stats.branches):
        lam = br.eigenvalue()
        if lam <= 0:
            raise InsufficientAccuracyError(j, len(br.bits))
        theta += stats.signed_products[j] / lam
    return theta * 2.0**-scale_exponent / c_p


def hybrid_theory_error(sd: SpectralDecomposition, m_prec: int, reference, scale: float = 1.0) -> float:
    """Relative error of ``scale * sum_j p_j u_j / floor_m(lambda_j)`` against ``reference``.

    ``scale`` converts the solution of the decomposed system into the units
    of ``reference`` (``2^-s / C_p`` for a rescaled power-flow system).
    """
    lt = np.floor(sd.eigenvalues * 2**m_prec) / 2**m_prec
    zero = np.flatnonzero(lt <= 0)
    if zero.size:
        raise InsufficientAccuracyError(int(zero[0]), m_prec)
    approx = scale * (sd.eigenvectors @ (sd.projections / lt))
    ref = np.asarray(reference, dtype=float)
    return float(np.linalg.norm(approx - ref) / np.linalg.norm(ref))


# -- drivers ----------------------------------------------------------------


def _collect(sys: ScaledDcSystem, cfg: HybridConfig) -> HybridStatistics:
    check_branch_separation(sys.spectral, cfg.m_prec)
    if cfg.mode == "sampled":
        table = sample_table(sys, cfg)
    elif cfg.engine == "circuit":
        table = outcome_table_circuit(sys, cfg)
    else:
        table = outcome_table_fast(sys, cfg)
    stats = statistics_from_table(table, cfg, sys.n)
    calibrate_signs(stats, sys.p)
    return stats


def run_hspea(sys: ScaledDcSystem, cfg: HybridConfig) -> HybridStatistics:
    """One phase estimation; accuracy and bottom registers measured jointly."""
    if cfg.m_prec != cfg.n_accur:
        raise ValidationError(
            f"HSPEA runs a single module: m_prec ({cfg.m_prec}) must equal n_accur ({cfg.n_accur})"
        )
    return _collect(sys, cfg)


def run_hmpea(sys: ScaledDcSystem, cfg: HybridConfig) -> HybridStatistics:
    """``ceil(m_prec / n_accur)`` chained modules, bottom register measured last."""
    return _collect(sys, cfg)


def solve_hybrid(sys: ScaledDcSystem, cfg: HybridConfig) -> HybridResult:
    stats = run_hspea(sys, cfg) if cfg.n_module == 1 else run_hmpea(sys, cfg)
    theta = assemble_solution(stats, sys.scale_exponent, sys.c_p)
    reference = sys.reference_theta()
    n_e_exp = float(np.linalg.norm(theta - reference) / np.linalg.norm(reference))
    n_e_theory = hybrid_theory_error(
        sys.spectral, cfg.m_prec, reference, 2.0**-sys.scale_exponent / sys.c_p
    )
    nb = bottom_qubits_for(sys.n)
    return HybridResult(theta, n_e_exp, n_e_theory, stats, cfg.qubits(nb), cfg.n_accur + cfg.n_redund)


# -- lemma check ----------------------------------------------------------------


@dataclass
class LemmaReport:
    expected: np.ndarray
    measured: np.ndarray
    bins: list[str]
    max_deviation: float
    leakage: float
    bound: float
    within_bound: bool
    window_mass: np.ndarray
    window_ok: bool


def lemma_check(sys: ScaledDcSystem, n_accur: int, n_redund: int) -> LemmaReport:
    """Compare measured accuracy-bin masses with ``(C_p p_j)^2``.

    ``within_bound`` applies the per-module failure bound directly to each
    floor-truncated bin. ``window_ok`` checks the guarantee that bound
    actually carries: each branch lands within one accuracy step of its
    floor-truncated value with probability at least ``1 - eps``.
    """
    sd = sys.spectral
    check_branch_separation(sd, n_accur)
    m = n_accur + n_redund
    eps = qpe.failure_bound_single(n_redund)
    weights = sd.projections**2
    per_branch = np.stack([qpe.kernel_bin_masses(lam, m, n_accur) for lam in sd.eigenvalues])
    agg = weights @ per_branch
    idx = [qpe.truncate(lam, n_accur) for lam in sd.eigenvalues]
    measured = agg[idx]
    deviation = float(np.max(np.abs(measured - weights)))
    size = 2**n_accur
    window = np.array(
        [per_branch[j, sorted({(b - 1) % size, b, (b + 1) % size})].sum() for j, b in enumerate(idx)]
    )
    return LemmaReport(
        expected=weights,
        measured=measured,
        bins=[qpe.bit_string(b, n_accur) for b in idx],
        max_deviation=deviation,
        leakage=float(1.0 - measured.sum()),
        bound=eps,
        within_bound=deviation <= eps + 1e-10,
        window_mass=window,
        window_ok=bool(np.all(window >= 1.0 - eps - 1e-12)),
    )

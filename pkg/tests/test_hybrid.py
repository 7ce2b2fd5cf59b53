from __future__ import annotations

import numpy as np
import pytest

from qpf import dcpf, hybrid, qpe
from qpf.errors import BranchCollisionError, CalibrationError, InsufficientAccuracyError, ValidationError
from qpf.hybrid import HybridConfig

TABLE_JOINT = [0.3681, 0.3001, 0.2114, 0.0921]
TABLE_MAGNITUDES = np.array(
    [
        [0.7444, 0.1296, 0.0497, 0.6531],
        [0.0298, 0.6986, 0.6973, 0.1579],
        [0.5356, 0.3226, 0.4458, 0.6406],
        [0.3976, 0.6253, 0.5593, 0.3716],
    ]
)
STRINGS = ["101110000", "011011011", "000111011", "000010110"]


def tv(a, b):
    return 0.5 * float(np.abs(a - b).sum())


class TestTables:
    @pytest.mark.parametrize("m_prec,na,nr", [(9, 3, 7), (9, 1, 7), (9, 9, 3), (6, 2, 4), (8, 4, 3), (5, 2, 2)])
    def test_fast_matches_circuit(self, scaled5, m_prec, na, nr):
        cfg = HybridConfig(m_prec, na, nr)
        assert tv(hybrid.outcome_table_fast(scaled5, cfg), hybrid.outcome_table_circuit(scaled5, cfg)) <= 1e-10

    def test_random_systems(self):
        for seed in range(4):
            r = np.random.default_rng(seed)
            n = int(r.integers(2, 5))
            a = r.normal(size=(n, n))
            s = dcpf.scale_system(dcpf.DcSystem(a @ a.T + n * np.eye(n), r.normal(size=n)))
            cfg = HybridConfig(6, 3, 3)
            assert tv(hybrid.outcome_table_fast(s, cfg), hybrid.outcome_table_circuit(s, cfg)) <= 1e-10

    def test_row_sums_are_branch_mixtures(self, scaled5):
        # interference cancels once the bottom register is summed over
        cfg = HybridConfig(6, 2, 4)
        sd = scaled5.spectral
        masses = hybrid.module_bin_masses(sd, cfg)
        mix = np.zeros(2**6)
        for j in range(sd.n):
            mix += sd.projections[j] ** 2 * np.kron(np.kron(masses[j, 0], masses[j, 1]), masses[j, 2])
        assert np.allclose(hybrid.outcome_table_fast(scaled5, cfg).sum(axis=1), mix, atol=1e-14)

    def test_truncation_when_modules_overshoot(self, scaled5):
        cfg = HybridConfig(8, 3, 5)
        assert cfg.n_module == 3
        assert hybrid.outcome_table_fast(scaled5, cfg).shape == (2**8, 4)

    def test_sampled_table(self, scaled5):
        cfg = HybridConfig(9, 3, 7, mode="sampled", shots=50_000, seed=2)
        t1 = hybrid.sample_table(scaled5, cfg)
        t2 = hybrid.sample_table(scaled5, cfg)
        assert np.array_equal(t1, t2)
        assert t1.sum() == pytest.approx(1.0)
        exact = hybrid.outcome_table_fast(scaled5, HybridConfig(9, 3, 7))
        assert tv(t1, exact) < 0.02


class TestStatistics:
    def test_table_layout_supplement(self, scaled5):
        # three modules of three bits, the layout behind the reference table
        r = hybrid.solve_hybrid(scaled5, HybridConfig(9, 3, 7))
        st = r.stats
        assert st.bit_strings == STRINGS
        assert np.allclose(st.joint_probabilities, TABLE_JOINT, atol=0.01)
        assert st.leakage == pytest.approx(0.028, abs=0.01)
        mags = np.array([b.magnitudes for b in st.branches])
        assert np.allclose(mags, TABLE_MAGNITUDES, atol=0.02)
        assert st.divergence_log[(0, 1)] == 1
        assert st.divergence_log[(2, 3)] == 2

    def test_signs_recovered(self, scaled5):
        st = hybrid.solve_hybrid(scaled5, HybridConfig(9, 1, 7)).stats
        sd = scaled5.spectral
        exact = (sd.eigenvectors * sd.projections).T[::-1]
        big = np.abs(exact) > 0.02
        assert np.array_equal(np.sign(st.signed_products[big]), np.sign(exact[big]))
        assert np.all(st.sign_residuals <= 0.05)
        assert np.allclose(st.signed_products.sum(axis=0), scaled5.p, atol=0.05)

    def test_module_count(self):
        for m, na in [(9, 1), (9, 3), (9, 4), (16, 5)]:
            assert HybridConfig(m, na, 7).n_module == -(-m // na)

    def test_claim_stops_at_n(self, scaled5):
        cfg = HybridConfig(9, 3, 7)
        table = hybrid.outcome_table_fast(scaled5, cfg)
        assert len(hybrid.claim_branches(table, cfg, 2)) == 2
        assert len(hybrid.claim_branches(table, cfg, 10)) >= 4

    def test_divergence_module(self):
        assert hybrid.divergence_module("101110000", "101110001", 3) == 3
        assert hybrid.divergence_module("101", "101", 1) == 0

    def test_hspea_requires_single_module(self, scaled5):
        with pytest.raises(ValidationError):
            hybrid.run_hspea(scaled5, HybridConfig(9, 3, 7))

    def test_collision(self, scaled5):
        with pytest.raises(BranchCollisionError):
            hybrid.solve_hybrid(scaled5, HybridConfig(2, 1, 7))

    def test_calibration_failure(self, scaled5):
        with pytest.raises(CalibrationError) as info:
            hybrid.solve_hybrid(scaled5, HybridConfig(9, 3, 7, tau_sign=1e-6))
        assert info.value.tolerance == 1e-6

    def test_assemble_requires_signs(self, scaled5):
        cfg = HybridConfig(9, 3, 7)
        st = hybrid.statistics_from_table(hybrid.outcome_table_fast(scaled5, cfg), cfg, 4)
        with pytest.raises(ValidationError):
            hybrid.assemble_solution(st, 9)

    def test_theory_error(self, scaled5):
        ref = scaled5.reference_theta()
        e = hybrid.hybrid_theory_error(scaled5.spectral, 9, ref, 2.0**-9 / scaled5.c_p)
        assert e == pytest.approx(0.0285, abs=1e-3)
        with pytest.raises(InsufficientAccuracyError):
            hybrid.hybrid_theory_error(scaled5.spectral, 3, ref)


class TestLemma:
    def test_window_guarantee(self, scaled5):
        for na, nr in [(4, 7), (5, 7), (9, 3)]:
            rep = hybrid.lemma_check(scaled5, na, nr)
            assert rep.window_ok
            assert rep.bins == [qpe.bit_string(qpe.truncate(v, na), na) for v in scaled5.spectral.eigenvalues]

    def test_floor_bin_alone_can_miss_bound(self, scaled5):
        # the largest eigenvalue sits close to a bin edge at 16 bits
        rep = hybrid.lemma_check(scaled5, 9, 7)
        assert not rep.within_bound
        assert rep.max_deviation > rep.bound

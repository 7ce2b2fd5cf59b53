from __future__ import annotations

import numpy as np
import pytest

from qpf import dcpf
from qpf.errors import GridFormatError, SingularMatrixError, ValidationError
from qpf.linalg import lu_solve


def grid_text(buses, branches):
    lines = ["buses:"]
    lines += [f"  - {{id: {i}, type: {t}, p: {p}}}" for i, t, p in buses]
    lines.append("branches:" if branches else "branches: []")
    lines += [f"  - {{from: {a}, to: {b}, x: {x}}}" for a, b, x in branches]
    return "\n".join(lines) + "\n"


class TestLoadGrid:
    def test_bundled_grid(self):
        g = dcpf.load_grid(dcpf.ieee5_grid_path())
        assert len(g.buses) == 5
        assert g.slack.id == 5
        assert g.name == "ieee-5bus"

    def test_bundled_grid_reproduces_fixture(self, ieee5):
        d = dcpf.build_b_matrix(dcpf.load_grid(dcpf.ieee5_grid_path()))
        assert np.allclose(d.b, ieee5.b, atol=1e-4)
        assert np.allclose(d.p, [-0.1113, -0.2623, 0.3169, 0.9046])
        assert d.bus_order == (1, 2, 3, 4)

    def test_two_slacks(self):
        text = grid_text([(1, "slack", 0), (2, "slack", 0)], [(1, 2, 0.5)])
        with pytest.raises(GridFormatError, match="exactly one slack"):
            dcpf.load_grid(text)

    def test_empty_branches_disconnected(self):
        with pytest.raises(GridFormatError, match="not connected"):
            dcpf.load_grid(grid_text([(1, "pq", 0.1), (2, "slack", -0.1)], []))

    def test_nonpositive_reactance_reports_line(self):
        text = grid_text([(1, "pq", 0.1), (2, "slack", -0.1)], [(1, 2, -0.5)])
        with pytest.raises(GridFormatError) as info:
            dcpf.load_grid(text)
        assert info.value.line == 5
        assert info.value.field == "x"
        assert "line 5" in str(info.value)

    def test_unknown_key(self):
        text = "buses:\n  - {id: 1, type: slack, p: 0, q: 1}\nbranches: []\n"
        with pytest.raises(GridFormatError, match="unknown key") as info:
            dcpf.load_grid(text)
        assert info.value.field == "q"

    def test_duplicate_id_and_unknown_bus(self):
        with pytest.raises(GridFormatError, match="duplicate"):
            dcpf.load_grid(grid_text([(1, "pq", 0), (1, "slack", 0)], []))
        with pytest.raises(GridFormatError, match="unknown bus"):
            dcpf.load_grid(grid_text([(1, "pq", 0), (2, "slack", 0)], [(1, 3, 0.1)]))

    def test_bad_values(self):
        with pytest.raises(GridFormatError, match="bus type"):
            dcpf.load_grid(grid_text([(1, "load", 0), (2, "slack", 0)], [(1, 2, 0.1)]))
        with pytest.raises(GridFormatError, match="invalid value"):
            dcpf.load_grid(grid_text([(1, "pq", "abc"), (2, "slack", 0)], [(1, 2, 0.1)]))
        with pytest.raises(GridFormatError):
            dcpf.load_grid("buses: [\n")


class TestBuild:
    def test_two_bus(self):
        d = dcpf.build_b_matrix(dcpf.load_grid(grid_text([(1, "pq", 0.3), (2, "slack", -0.3)], [(1, 2, 0.5)])))
        assert np.allclose(d.b, [[1 / 0.5]])
        assert np.allclose(d.p, [0.3])

    def test_star(self):
        text = grid_text([(0, "slack", 0), (1, "pq", 0), (2, "pq", 0), (3, "pq", 0)], [(0, 1, 1), (0, 2, 1), (0, 3, 1)])
        d = dcpf.build_b_matrix(dcpf.load_grid(text))
        assert np.allclose(d.b, np.eye(3))

    def test_assembly_conservation(self, rng):
        for _ in range(20):
            n = int(rng.integers(3, 8))
            buses = [(i, "slack" if i == 0 else "pq", 0.0) for i in range(n)]
            branches = [(int(rng.integers(0, i)), i, float(rng.uniform(0.01, 1))) for i in range(1, n)]
            branches += [(0, i, 0.2) for i in range(1, n) if rng.random() < 0.2]
            d = dcpf.build_b_matrix(dcpf.load_grid(grid_text(buses, branches)))
            off = d.b - np.diag(np.diag(d.b))
            assert np.all(off <= 0)
            assert np.all(np.diag(d.b) >= -off.sum(axis=1) - 1e-12)


class TestMatrixFixture:
    def test_bundled(self, ieee5):
        assert ieee5.b.shape == (4, 4)
        assert ieee5.b[0, 0] == pytest.approx(224.7319)

    def test_errors(self):
        with pytest.raises(GridFormatError, match="expected 2 values"):
            dcpf.load_matrix_system("1 0\n0 1 2\n1 1\n")
        with pytest.raises(GridFormatError, match="non-numeric"):
            dcpf.load_matrix_system("1 x\n0 1\n1 1\n")
        with pytest.raises(ValidationError, match="symmetric"):
            dcpf.load_matrix_system("1 2\n0 1\n1 1\n")


class TestScaling:
    def test_five_bus(self, ieee5):
        s = dcpf.scale_system(ieee5)
        assert s.scale_exponent == 9
        assert s.c_p == pytest.approx(1.0, abs=1e-4)
        lam = s.spectral.eigenvalues
        assert np.all((lam > 0) & (lam < 1))
        assert lam.max() == pytest.approx(0.71877, abs=1e-4)

    def test_small_matrix_keeps_scale(self):
        s = dcpf.scale_system(dcpf.DcSystem(np.diag([0.5, 0.5]), np.array([1.0, 0.0])))
        assert s.scale_exponent == 0
        assert np.allclose(s.b_scaled, np.diag([0.5, 0.5]))

    def test_power_of_two_bound(self):
        # a Gershgorin bound that is exactly 2^s still needs one more halving
        s = dcpf.scale_system(dcpf.DcSystem(np.diag([4.0, 1.0]), np.array([1.0, 1.0])))
        assert s.scale_exponent == 3
        assert s.spectral.eigenvalues.max() < 1

    def test_not_positive_definite(self):
        with pytest.raises(dcpf.NotPositiveDefiniteError):
            dcpf.scale_system(dcpf.DcSystem(np.diag([1.0, -1.0]), np.array([1.0, 1.0])))

    def test_round_trip(self, rng):
        for _ in range(10):
            a = rng.normal(size=(5, 5))
            d = dcpf.DcSystem(a @ a.T + 5 * np.eye(5) * rng.uniform(1, 100), rng.normal(size=5))
            s = dcpf.scale_system(d)
            assert np.allclose(s.reference_theta(), lu_solve(d.b, d.p), rtol=1e-10, atol=0)
            assert np.allclose(lu_solve(d.b, d.p), 2.0**-s.scale_exponent * lu_solve(s.b_scaled, d.p), rtol=1e-10)


class TestClassical:
    def test_five_bus(self, ieee5):
        theta, normalized = dcpf.classical_reference(ieee5)
        assert np.allclose(theta, [0.0082, 0.0043, 0.0057, 0.0115], atol=5e-5)
        assert np.allclose(normalized, [0.5173, 0.2740, 0.3595, 0.7267], atol=2e-4)

    def test_trivial(self):
        theta, normalized = dcpf.classical_reference(dcpf.DcSystem(2 * np.eye(2), np.array([1.0, 1.0])))
        assert np.allclose(theta, [0.5, 0.5])
        assert np.allclose(normalized, [2**-0.5, 2**-0.5])

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            dcpf.classical_reference(dcpf.DcSystem(np.zeros((2, 2)), np.array([1.0, 1.0])))

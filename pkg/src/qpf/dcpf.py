"""DC power flow front end.

Grid files are YAML documents::

    buses:
      - {id: 1, type: pq, p: -0.1113}
      - {id: 5, type: slack, p: 0.8479}
    branches:
      - {from: 1, to: 5, x: 0.0304}

All quantities are per-unit. Unknown keys are rejected and every error
carries the line number of the offending node.

Matrix fixtures are plain text: ``N`` rows of the reduced susceptance matrix
followed by one row holding the injection vector, space-separated, ``#``
comments allowed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import GridFormatError, ValidationError
from .linalg import SpectralDecomposition, as_symmetric, eigh, gershgorin_bound, lu_solve

BUS_TYPES = ("slack", "pq", "pv")
_TOP_KEYS = {"name", "buses", "branches"}
_BUS_KEYS = {"id", "type", "p"}
_BRANCH_KEYS = {"from", "to", "x"}


class NotPositiveDefiniteError(ValidationError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int | str
    type: str
    p: float


@dataclass(frozen=True)
class Branch:
    from_bus: int | str
    to_bus: int | str
    x: float


@dataclass(frozen=True)
class GridModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    name: str = ""

    @property
    def slack(self) -> Bus:
        return next(b for b in self.buses if b.type == "slack")


@dataclass(frozen=True)
class DcSystem:
    b: np.ndarray
    p: np.ndarray
    bus_order: tuple = ()

    @property
    def n(self) -> int:
        return len(self.p)


@dataclass(frozen=True)
class ScaledDcSystem:
    """The system handed to every solver: ``b_scaled = B * 2**-s``, ``p = c_p * P``."""

    b_scaled: np.ndarray
    p: np.ndarray
    scale_exponent: int
    c_p: float
    bus_order: tuple = field(default=(), compare=False)

    @property
    def n(self) -> int:
        return len(self.p)

    @cached_property
    def spectral(self) -> SpectralDecomposition:
        return eigh(self.b_scaled).with_rhs(self.p)

    def to_physical(self, theta_scaled: np.ndarray) -> np.ndarray:
        """Map a solution of ``b_scaled x = p`` back to angles of ``B theta = P``."""
        return np.asarray(theta_scaled) * 2.0**-self.scale_exponent / self.c_p

    def reference_theta(self) -> np.ndarray:
        return self.to_physical(lu_solve(self.b_scaled, self.p))


# -- loading ---------------------------------------------------------------


def _line(node) -> int:
    return node.start_mark.line + 1


def _scalar(node, fieldname: str, kind):
    if not isinstance(node, yaml.ScalarNode):
        raise GridFormatError(f"expected a scalar, got a {type(node).__name__}", _line(node), fieldname)
    raw = node.value
    try:
        if kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
        if kind is str:
            return str(raw)
        # bus identifiers: integers when they look like one, else strings
        try:
            return int(raw)
        except ValueError:
            if raw == "":
                raise
            return raw
    except ValueError:
        raise GridFormatError(f"invalid value {raw!r}", _line(node), fieldname) from None


def _mapping(node, keys: set[str], required: set[str], where: str) -> dict:
    if not isinstance(node, yaml.MappingNode):
        raise GridFormatError(f"{where} must be a mapping", _line(node))
    out = {}
    for k, v in node.value:
        key = k.value if isinstance(k, yaml.ScalarNode) else None
        if key not in keys:
            raise GridFormatError(f"unknown key in {where}", _line(k), str(key))
        if key in out:
            raise GridFormatError(f"duplicate key in {where}", _line(k), key)
        out[key] = v
    missing = required - out.keys()
    if missing:
        raise GridFormatError(f"{where} is missing {sorted(missing)}", _line(node), sorted(missing)[0])
    return out


def _sequence(node, fieldname: str):
    if not isinstance(node, yaml.SequenceNode):
        raise GridFormatError("expected a list", _line(node), fieldname)
    return node.value


def load_grid(source: str | Path) -> GridModel:
    """Parse and validate a grid document (path or YAML text)."""
    if isinstance(source, Path) or ("\n" not in source and Path(source).is_file()):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise GridFormatError(f"malformed YAML: {exc}", mark.line + 1 if mark else None) from None
    if root is None:
        raise GridFormatError("empty grid document", 1)
    top = _mapping(root, _TOP_KEYS, {"buses", "branches"}, "grid document")

    buses: list[Bus] = []
    seen: dict = {}
    for node in _sequence(top["buses"], "buses"):
        f = _mapping(node, _BUS_KEYS, _BUS_KEYS, "bus")
        bus_id = _scalar(f["id"], "id", int)
        btype = _scalar(f["type"], "type", str).lower()
        if btype not in BUS_TYPES:
            raise GridFormatError(f"bus type must be one of {BUS_TYPES}", _line(f["type"]), "type")
        if bus_id in seen:
            raise GridFormatError(f"duplicate bus id {bus_id!r}", _line(f["id"]), "id")
        seen[bus_id] = _line(node)
        buses.append(Bus(bus_id, btype, _scalar(f["p"], "p", float)))

    slacks = [b for b in buses if b.type == "slack"]
    if len(slacks) != 1:
        raise GridFormatError(
            f"exactly one slack bus required, found {len(slacks)}", _line(top["buses"]), "type"
        )

    branches: list[Branch] = []
    for node in _sequence(top["branches"], "branches"):
        f = _mapping(node, _BRANCH_KEYS, _BRANCH_KEYS, "branch")
        a = _scalar(f["from"], "from", int)
        b = _scalar(f["to"], "to", int)
        for key, ref in (("from", a), ("to", b)):
            if ref not in seen:
                raise GridFormatError(f"unknown bus {ref!r}", _line(f[key]), key)
        if a == b:
            raise GridFormatError("branch connects a bus to itself", _line(node), "to")
        x = _scalar(f["x"], "x", float)
        if x <= 0:
            raise GridFormatError(f"reactance must be positive, got {x}", _line(f["x"]), "x")
        branches.append(Branch(a, b, x))

    name = _scalar(top["name"], "name", str) if "name" in top else ""
    grid = GridModel(tuple(buses), tuple(branches), name)
    _check_connected(grid, _line(top["branches"]))
    return grid


def _check_connected(grid: GridModel, line: int | None = None) -> None:
    adj: dict = {b.id: set() for b in grid.buses}
    for br in grid.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    start = grid.slack.id
    stack, reached = [start], {start}
    while stack:
        for nxt in adj[stack.pop()] - reached:
            reached.add(nxt)
            stack.append(nxt)
    isolated = [b.id for b in grid.buses if b.id not in reached]
    if isolated:
        raise GridFormatError(f"buses {isolated} are not connected to the slack bus", line, "branches")


def build_b_matrix(g: GridModel) -> DcSystem:
    """Susceptance matrix with the slack row and column removed."""
    _check_connected(g)
    order = tuple(b.id for b in g.buses if b.type != "slack")
    index = {bid: i for i, bid in enumerate(order)}
    n = len(order)
    b = np.zeros((n, n))
    for br in g.branches:
        y = 1.0 / br.x
        i, j = index.get(br.from_bus), index.get(br.to_bus)
        if i is not None:
            b[i, i] += y
        if j is not None:
            b[j, j] += y
        if i is not None and j is not None:
            b[i, j] -= y
            b[j, i] -= y
    p = np.array([bus.p for bus in g.buses if bus.type != "slack"])
    return DcSystem(b, p, order)


def load_matrix_system(source: str | Path) -> DcSystem:
    """Read a matrix fixture (path or text)."""
    path = Path(source)
    text = path.read_text(encoding="utf-8") if ("\n" not in str(source) and path.is_file()) else str(source)
    rows: list[tuple[int, list[float]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append((lineno, [float(tok) for tok in line.split()]))
        except ValueError:
            raise GridFormatError(f"non-numeric entry in {line!r}", lineno) from None
    if len(rows) < 2:
        raise GridFormatError("fixture needs at least one matrix row and the vector row")
    n = len(rows) - 1
    for lineno, vals in rows:
        if len(vals) != n:
            raise GridFormatError(f"expected {n} values, got {len(vals)}", lineno)
    b = as_symmetric([vals for _, vals in rows[:-1]])
    return DcSystem(b, np.array(rows[-1][1]), tuple(range(1, n + 1)))


def scale_system(d: DcSystem) -> ScaledDcSystem:
    """Rescale ``B`` by a power of two so its spectrum sits inside (0, 1)."""
    b = as_symmetric(d.b)
    sd = eigh(b)
    if sd.eigenvalues[0] <= 0:
        raise NotPositiveDefiniteError(
            f"B is not positive definite (smallest eigenvalue {sd.eigenvalues[0]:.4g})"
        )
    bound = gershgorin_bound(b)
    s = max(0, math.ceil(math.log2(bound)))
    if bound / 2.0**s >= 1.0:
        s += 1
    norm = float(np.linalg.norm(d.p))
    if norm == 0.0:
        raise ValidationError("injection vector is zero")
    c_p = 1.0 / norm
    return ScaledDcSystem(b * 2.0**-s, np.asarray(d.p, dtype=float) * c_p, s, c_p, d.bus_order)


def classical_reference(d: DcSystem) -> tuple[np.ndarray, np.ndarray]:
    """Angles from an LU solve, and the same vector normalized to unit length."""
    theta = lu_solve(d.b, d.p)
    return theta, theta / np.linalg.norm(theta)


def _data_path(name: str) -> Path:
    return Path(str(resources.files("qpf") / "data" / name))


def ieee5_grid_path() -> Path:
    return _data_path("ieee5.yaml")


def ieee5_matrix_path() -> Path:
    return _data_path("ieee5_matrix.txt")


def ieee5_system() -> DcSystem:
    """The canonical 5-bus system (matrix fixture, the ground truth)."""
    return load_matrix_system(ieee5_matrix_path())

"""Grounded network graph: construction, Kron reduction and structural edits.

Node numbering is 1-based throughout: converter nodes ``1..m``, interior
nodes ``m+1..n`` and the infinite bus (the ground of the small-signal model)
``n+1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

OMEGA0 = 100 * math.pi


class NetworkError(ValueError):
    """Invalid network description or an operation that would produce one."""


def _key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class NetworkSpec:
    n_converter: int
    n_interior: int
    edges: tuple[tuple[int, int, float], ...]
    tau: float = 0.0
    omega0: float = OMEGA0

    def __post_init__(self):
        if self.n_converter < 1:
            raise NetworkError("at least one converter node is required")
        if self.n_interior < 0:
            raise NetworkError("negative interior node count")
        if self.tau < 0 or not math.isfinite(self.tau):
            raise NetworkError(f"tau must be finite and >= 0, got {self.tau}")
        if self.omega0 <= 0:
            raise NetworkError(f"omega0 must be > 0, got {self.omega0}")
        ground = self.infinite_bus_id
        seen: set[tuple[int, int]] = set()
        normalized = []
        for i, j, b in self.edges:
            i, j, b = int(i), int(j), float(b)
            self._check_edge(i, j, b, ground)
            k = _key(i, j)
            if k in seen:
                raise NetworkError(f"duplicate edge ({k[0]},{k[1]})")
            seen.add(k)
            normalized.append((k[0], k[1], b))
        if not normalized:
            raise NetworkError("empty edge list")
        normalized.sort()
        object.__setattr__(self, "edges", tuple(normalized))
        if not self._grounded_connected():
            raise NetworkError("network is not connected to the infinite bus")

    @staticmethod
    def _check_edge(i: int, j: int, b: float, ground: int):
        if i == j:
            raise NetworkError(f"self-edge ({i},{i})")
        for node in (i, j):
            if not 1 <= node <= ground:
                raise NetworkError(f"node {node} outside 1..{ground}")
        if not (b > 0 and math.isfinite(b)):
            raise NetworkError(f"susceptance of ({i},{j}) must be > 0, got {b}")

    @property
    def n(self) -> int:
        return self.n_converter + self.n_interior

    @property
    def infinite_bus_id(self) -> int:
        return self.n + 1

    def susceptance(self, i: int, j: int) -> float:
        k = _key(i, j)
        for a, b, w in self.edges:
            if (a, b) == k:
                return w
        return 0.0

    def has_edge(self, i: int, j: int) -> bool:
        return self.susceptance(i, j) > 0

    def is_converter(self, i: int) -> bool:
        return 1 <= i <= self.n_converter

    def is_interior(self, i: int) -> bool:
        return self.n_converter < i <= self.n

    def line(self) -> "LineDynamics":
        return LineDynamics(tau=self.tau, omega0=self.omega0)

    def _grounded_connected(self) -> bool:
        size = self.n + 1
        rows = [i - 1 for i, _, _ in self.edges]
        cols = [j - 1 for _, j, _ in self.edges]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
        count, _ = connected_components(graph, directed=False)
        return count == 1


@dataclass(frozen=True)
class GroundedLaplacian:
    Q: np.ndarray
    m: int

    @property
    def n(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class KronReduced:
    Q_red: np.ndarray
    Q_ac: np.ndarray
    interior_solve: object = field(repr=False)
    m: int = 0
    n: int = 0

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``Q4 x = rhs``."""
        if self.interior_solve is None:
            raise NetworkError("network has no interior nodes")
        return sla.cho_solve(self.interior_solve, rhs)


@dataclass(frozen=True)
class LineDynamics:
    tau: float = 0.0
    omega0: float = OMEGA0

    def F(self, s: complex) -> np.ndarray:
        return eval_F(self, s)


def build_grounded_laplacian(spec: NetworkSpec) -> GroundedLaplacian:
    n = spec.n
    ground = spec.infinite_bus_id
    Q = np.zeros((n, n))
    for i, j, b in spec.edges:
        if j == ground:
            Q[i - 1, i - 1] += b
            continue
        Q[i - 1, i - 1] += b
        Q[j - 1, j - 1] += b
        Q[i - 1, j - 1] -= b
        Q[j - 1, i - 1] -= b
    return GroundedLaplacian(Q=Q, m=spec.n_converter)


def partition(gl: GroundedLaplacian):
    m, n = gl.m, gl.n
    if not 1 <= m <= n:
        raise NetworkError(f"partition size {m} outside 1..{n}")
    Q = gl.Q
    return Q[:m, :m], Q[:m, m:], Q[m:, :m], Q[m:, m:]


def kron_reduce(gl: GroundedLaplacian) -> KronReduced:
    Q1, Q2, Q3, Q4 = partition(gl)
    m, n = gl.m, gl.n
    if Q4.size == 0:
        return KronReduced(Q_red=Q1.copy(), Q_ac=np.zeros((m, 0)), interior_solve=None, m=m, n=n)
    try:
        factor = sla.cho_factor(Q4, lower=False)
    except np.linalg.LinAlgError as exc:
        raise NetworkError("interior network floating: Q4 is singular") from exc
    X = sla.cho_solve(factor, Q3)  # Q4^-1 Q3
    Q_red = Q1 - Q2 @ X
    Q_red = 0.5 * (Q_red + Q_red.T)
    Q_ac = -X.T  # -Q2 Q4^-1, using Q3 = Q2^T
    return KronReduced(Q_red=Q_red, Q_ac=Q_ac, interior_solve=factor, m=m, n=n)


def reduce_network(spec: NetworkSpec) -> KronReduced:
    return kron_reduce(build_grounded_laplacian(spec))


def effective_resistance_interior(kr: KronReduced, i: int, j: int) -> float:
    """Effective resistance between interior nodes ``i`` and ``j`` in the
    interior network (grounded through the eliminated boundary)."""
    for node in (i, j):
        if not kr.m < node <= kr.n:
            raise NetworkError(f"node {node} is not interior (expected {kr.m + 1}..{kr.n})")
    if i == j:
        raise NetworkError("effective resistance needs two distinct nodes")
    w = np.zeros(kr.n - kr.m)
    w[i - kr.m - 1] = 1.0
    w[j - kr.m - 1] = -1.0
    return float(w @ kr.solve_interior(w))


def set_susceptance(spec: NetworkSpec, i: int, j: int, B: float) -> NetworkSpec:
    """Return a copy with ``B_ij`` set to ``B`` (``B == 0`` removes the edge)."""
    if i == j:
        raise NetworkError("self-edge")
    if B < 0:
        raise NetworkError(f"negative susceptance {B} for ({i},{j})")
    k = _key(i, j)
    edges = [e for e in spec.edges if (e[0], e[1]) != k]
    if B > 0:
        edges.append((k[0], k[1], float(B)))
    return replace(spec, edges=tuple(edges))


def apply_perturbation(spec: NetworkSpec, i: int, j: int, delta_B: float) -> NetworkSpec:
    if delta_B == 0:
        return spec
    new_B = spec.susceptance(i, j) + delta_B
    if new_B < 0:
        raise NetworkError(f"perturbation leaves ({i},{j}) with negative susceptance {new_B}")
    return set_susceptance(spec, i, j, new_B)


RELOCATION_MODES = ("merge", "tie", "replace")

RELOCATION_NOTES = {
    "merge": (
        "converter terminal placed on the target bus; the converter's former bus stays "
        "in the grid as an interior node carrying its old lines"
    ),
    "tie": (
        "converter tied to the target bus through a single line; the former bus stays "
        "in the grid as an interior node carrying its old lines"
    ),
    "replace": (
        "all lines of the converter are removed and replaced by a single tie to the target bus"
    ),
}


def relocate_converter(
    spec: NetworkSpec,
    conv_id: int,
    new_attach_node: int,
    tie_B: float | None = None,
    mode: str = "merge",
) -> NetworkSpec:
    """Move converter ``conv_id`` to interior bus ``new_attach_node``.

    ``mode="merge"`` (default) puts the converter terminal on the target bus,
    which then stops being an interior node; the old bus is kept as a new
    interior node. ``"tie"`` keeps the old bus and adds a single line
    ``(conv_id, new_attach_node, tie_B)``. ``"replace"`` drops every line of
    the converter and adds that single line. For the last two, ``tie_B``
    defaults to the sum of the converter's previous line susceptances.

    Interior nodes are renumbered compactly in their original order; a kept
    old bus becomes the last interior node. The infinite bus stays ``n+1``.
    """
    if mode not in RELOCATION_MODES:
        raise NetworkError(f"unknown relocation mode {mode!r}; use one of {RELOCATION_MODES}")
    if not spec.is_converter(conv_id):
        raise NetworkError(f"node {conv_id} is not a converter")
    if not spec.is_interior(new_attach_node):
        raise NetworkError(f"node {new_attach_node} is not an interior node")
    ground = spec.infinite_bus_id
    own = [(a, b, w) for a, b, w in spec.edges if conv_id in (a, b)]
    if tie_B is None:
        tie_B = sum(w for _, _, w in own)
    if mode != "merge" and tie_B <= 0:
        raise NetworkError("tie susceptance must be > 0")

    m = spec.n_converter
    interior = [k for k in range(m + 1, spec.n + 1) if not (mode == "merge" and k == new_attach_node)]
    keep_old = mode in ("merge", "tie")
    new_n = m + len(interior) + (1 if keep_old else 0)
    new_ground = new_n + 1
    old_bus = new_n if keep_old else None
    index = {k: i for k, i in zip(interior, range(m + 1, m + 1 + len(interior)))}
    index.update({k: k for k in range(1, m + 1)})
    index[ground] = new_ground
    if mode == "merge":
        index[new_attach_node] = conv_id

    edges: dict[tuple[int, int], float] = {}

    def add(a: int, b: int, w: float):
        if a == b:
            return
        k = _key(a, b)
        edges[k] = edges.get(k, 0.0) + w

    for a, b, w in spec.edges:
        if conv_id in (a, b):
            if keep_old:
                other = b if a == conv_id else a
                add(old_bus, index[other], w)
            continue
        add(index[a], index[b], w)
    if mode in ("tie", "replace"):
        add(conv_id, index[new_attach_node], tie_B)
    try:
        return NetworkSpec(
            n_converter=m,
            n_interior=new_n - m,
            edges=tuple((a, b, w) for (a, b), w in edges.items()),
            tau=spec.tau,
            omega0=spec.omega0,
        )
    except NetworkError as exc:
        raise NetworkError(f"relocation rejected: {exc}") from exc


def eval_F(line: LineDynamics, s: complex) -> np.ndarray:
    """2x2 line transfer matrix F(s) of a unit-susceptance line."""
    a = s + line.tau
    den = a * a / line.omega0 + line.omega0
    if den == 0:
        raise ZeroDivisionError(f"s = {s} is a pole of F(s)")
    w = line.omega0
    return np.array([[a, w], [-w, a]], dtype=complex) / den


# ---------------------------------------------------------------- file format


def _fmt(x: float) -> str:
    return repr(float(x))


def format_network(spec: NetworkSpec) -> str:
    head = f"[nodes] m={spec.n_converter} interior={spec.n_interior}"
    if spec.tau != 0.0:
        head += f" tau={_fmt(spec.tau)}"
    if spec.omega0 != OMEGA0:
        head += f" omega0={_fmt(spec.omega0)}"
    lines = [head, "[edges]"]
    lines += [f"{i},{j},{_fmt(b)}" for i, j, b in spec.edges]
    return "\n".join(lines) + "\n"


class NetworkFileError(NetworkError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def parse_network(text: str) -> NetworkSpec:
    header: dict[str, str] | None = None
    edges: list[tuple[int, int, float]] = []
    section = None
    last = 0
    header_line = 1
    seen: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        last = lineno
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[nodes]"):
            section = "nodes"
            header = {}
            header_line = lineno
            for tok in line[len("[nodes]"):].split():
                key, sep, val = tok.partition("=")
                if not sep:
                    raise NetworkFileError(lineno, f"expected key=value, got {tok!r}")
                header[key] = val
            continue
        if line == "[edges]":
            if header is None:
                raise NetworkFileError(lineno, "[edges] before [nodes]")
            section = "edges"
            continue
        if section != "edges":
            raise NetworkFileError(lineno, f"unexpected content {line!r}")
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise NetworkFileError(lineno, f"expected 'i,j,B', got {line!r}")
        try:
            i, j, b = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise NetworkFileError(lineno, f"bad edge record {line!r}") from None
        k = _key(i, j)
        if k in seen:
            raise NetworkFileError(lineno, f"duplicate edge ({k[0]},{k[1]}), first given on line {seen[k]}")
        seen[k] = lineno
        ground = _header_ground(header, header_line)
        try:
            NetworkSpec._check_edge(i, j, b, ground)
        except NetworkError as exc:
            raise NetworkFileError(lineno, str(exc)) from None
        edges.append((i, j, b))
    if header is None:
        raise NetworkFileError(last or 1, "missing [nodes] header")
    m, interior, tau, omega0 = _parse_header(header, header_line)
    try:
        return NetworkSpec(n_converter=m, n_interior=interior, edges=tuple(edges), tau=tau, omega0=omega0)
    except NetworkError as exc:
        raise NetworkFileError(last, str(exc)) from None


def _parse_header(header: dict, lineno: int):
    unknown = set(header) - {"m", "interior", "tau", "omega0"}
    if unknown:
        raise NetworkFileError(lineno, f"unknown header keys {sorted(unknown)}")
    try:
        return int(header["m"]), int(header["interior"]), float(header.get("tau", 0.0)), float(header.get("omega0", OMEGA0))
    except KeyError as exc:
        raise NetworkFileError(lineno, f"[nodes] header lacks {exc.args[0]}") from None
    except ValueError as exc:
        raise NetworkFileError(lineno, f"bad [nodes] header: {exc}") from None


def _header_ground(header: dict, lineno: int) -> int:
    m, interior, _, _ = _parse_header(header, lineno)
    return m + interior + 1


def read_network(path) -> NetworkSpec:
    with open(path) as fh:
        return parse_network(fh.read())


def write_network(spec: NetworkSpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_network(spec))



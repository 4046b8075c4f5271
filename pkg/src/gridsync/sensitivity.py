"""First-order sensitivity of the smallest reduced-network eigenvalue to line changes.

Every admissible perturbation adds ``dB * w w^T`` to the grounded Laplacian,
where ``w = e_i - e_j`` (or ``e_i`` for a tie to the infinite bus). After
reduction that becomes ``dB * a a^T`` with ``a = w_conv + Q_ac w_int``, so
``d lambda_1 / dB = (u_1 . a)^2``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .converter import ConverterModel
from .modal import ModalDecomposition, decompose, mode_report
from .netgraph import KronReduced, NetworkError, NetworkSpec, reduce_network, set_susceptance
from .parallel import ordered_map

EDGE_CLASSES = ("interior", "converter", "converter-ground", "interior-ground", "converter-interior")
LAMBDA_REL_STEP = 1e-3


class SensitivityError(ValueError):
    pass


def _require_simple(decomp: ModalDecomposition):
    if not decomp.lambda1_is_simple():
        raise SensitivityError("lambda_1 is not simple; its sensitivity is undefined")


def dlambda1_general(decomp: ModalDecomposition, dQred) -> float:
    _require_simple(decomp)
    dQ = np.asarray(dQred, dtype=float)
    return float(decomp.V[0] @ dQ @ decomp.U[:, 0])


def _node_vector(kr: KronReduced, node: int) -> np.ndarray:
    """Reduced-coordinate image of the unit vector of ``node``."""
    m, n = kr.m, kr.n
    if 1 <= node <= m:
        e = np.zeros(m)
        e[node - 1] = 1.0
        return e
    if m < node <= n:
        return kr.Q_ac[:, node - m - 1].copy()
    if node == n + 1:
        return np.zeros(m)
    raise SensitivityError(f"node {node} outside 1..{n + 1}")


def edge_class(m: int, n: int, i: int, j: int) -> str:
    i, j = sorted((i, j))
    ground = n + 1
    conv = lambda k: 1 <= k <= m
    inter = lambda k: m < k <= n
    if i == j or not (1 <= i and j <= ground):
        raise SensitivityError(f"invalid node pair ({i},{j})")
    if conv(i) and conv(j):
        return "converter"
    if inter(i) and inter(j):
        return "interior"
    if conv(i) and j == ground:
        return "converter-ground"
    if inter(i) and j == ground:
        return "interior-ground"
    return "converter-interior"


def dQred_edge(kr: KronReduced, i: int, j: int) -> np.ndarray:
    """d Q_red / d B_ij for any node pair (j may be the infinite bus)."""
    if i == j:
        raise SensitivityError("i == j is not an edge")
    a = _node_vector(kr, i) - _node_vector(kr, j)
    return np.outer(a, a)


def dQred_interior(kr: KronReduced, i: int, j: int) -> np.ndarray:
    if edge_class(kr.m, kr.n, i, j) != "interior":
        raise SensitivityError(f"({i},{j}) is not an interior-interior pair")
    return dQred_edge(kr, i, j)


def dQred_interior_selfloop(kr: KronReduced, i: int) -> np.ndarray:
    if not kr.m < i <= kr.n:
        raise SensitivityError(f"node {i} is not interior")
    return dQred_edge(kr, i, kr.n + 1)


def dQred_converter(kr: KronReduced, i: int, j: int) -> np.ndarray:
    cls = edge_class(kr.m, kr.n, i, j)
    if not 1 <= i <= kr.m or cls not in ("converter", "converter-ground"):
        raise SensitivityError(f"({i},{j}) is not a converter-converter or converter-ground pair")
    return dQred_edge(kr, i, j)


def participation(decomp: ModalDecomposition) -> np.ndarray:
    """Participation of each converter in mode 1 (sums to one)."""
    _require_simple(decomp)
    return decomp.V[0] * decomp.U[:, 0]


def lambda1(spec: NetworkSpec) -> float:
    return float(np.linalg.eigvalsh(reduce_network(spec).Q_red)[0])


# ---------------------------------------------------------------- matrices


@dataclass(frozen=True)
class SensitivityMatrix:
    M: np.ndarray
    ids: tuple
    node_class: str

    def to_csv(self, fmt=repr) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.M.ndim == 1:
            w.writerow(["node", "dlambda1_dB"])
            for k, v in zip(self.ids, self.M):
                w.writerow([k, fmt(float(v))])
        else:
            w.writerow(["node"] + list(self.ids))
            for k, row in zip(self.ids, self.M):
                w.writerow([k] + [fmt(float(v)) for v in row])
        return buf.getvalue()

    def entry(self, i: int, j: int | None = None) -> float:
        a = self.ids.index(i)
        if j is None:
            return float(self.M[a])
        return float(self.M[a, self.ids.index(j)])


def _projections(kr: KronReduced, decomp: ModalDecomposition):
    _require_simple(decomp)
    u = decomp.U[:, 0]
    return u, kr.Q_ac.T @ u


def sensitivity_matrix(spec: NetworkSpec, node_class: str = "interior") -> SensitivityMatrix:
    """``interior`` / ``converter``: pairwise matrix with zero diagonal.
    ``converter-ground`` / ``interior-ground``: self-loop vector."""
    kr = reduce_network(spec)
    u, a = _projections(kr, decompose(kr.Q_red))
    m, n = kr.m, kr.n
    if node_class == "interior":
        M, ids = (a[:, None] - a[None, :]) ** 2, tuple(range(m + 1, n + 1))
    elif node_class == "converter":
        M, ids = (u[:, None] - u[None, :]) ** 2, tuple(range(1, m + 1))
    elif node_class == "converter-ground":
        return SensitivityMatrix(u**2, tuple(range(1, m + 1)), node_class)
    elif node_class == "interior-ground":
        return SensitivityMatrix(a**2, tuple(range(m + 1, n + 1)), node_class)
    else:
        raise SensitivityError(f"unknown class {node_class!r}; use interior, converter, converter-ground or interior-ground")
    np.fill_diagonal(M, 0.0)
    return SensitivityMatrix(M, ids, node_class)


def candidate_pairs(spec: NetworkSpec, node_class: str | None = None):
    m, n = spec.n_converter, spec.n
    for i in range(1, n + 1):
        for j in range(i + 1, n + 2):
            cls = edge_class(m, n, i, j)
            if node_class in (None, "all", cls):
                yield i, j, cls


def rank_reinforcements(spec: NetworkSpec, class_filter: str | None = None, existing_only: bool = False) -> list[dict]:
    if class_filter not in (None, "all") + EDGE_CLASSES:
        raise SensitivityError(f"unknown class {class_filter!r}")
    kr = reduce_network(spec)
    u, _ = _projections(kr, decompose(kr.Q_red))
    vec = {k: _node_vector(kr, k) @ u for k in range(1, spec.n + 1)}
    vec[spec.n + 1] = 0.0
    out = []
    for i, j, cls in candidate_pairs(spec, class_filter):
        exists = spec.has_edge(i, j)
        if existing_only and not exists:
            continue
        out.append({"i": i, "j": j, "class": cls, "dlambda1_dB": float((vec[i] - vec[j]) ** 2), "exists": exists})
    out.sort(key=lambda r: (-r["dlambda1_dB"], r["i"], r["j"]))
    return out


def ranking_json(records) -> str:
    return json.dumps(records, indent=1)


# ---------------------------------------------------------------- margins, curves


def dlambda1_dB(spec: NetworkSpec, i: int, j: int) -> float:
    kr = reduce_network(spec)
    return dlambda1_general(decompose(kr.Q_red), dQred_edge(kr, i, j))


def margin_slope(model: ConverterModel, lam: float, line) -> float:
    h = LAMBDA_REL_STEP * lam
    lo = mode_report(model, lam - h, line)
    hi = mode_report(model, lam + h, line)
    if not (lo.stable and hi.stable):
        raise SensitivityError("margin slope straddles the stability boundary")
    return (hi.margin - lo.margin) / (2 * h)


def margin_sensitivity(spec: NetworkSpec, model: ConverterModel, i: int, j: int) -> float:
    """d(margin)/dB_ij through the chain (d margin / d lambda_1)(d lambda_1 / dB_ij)."""
    lam = lambda1(spec)
    line = spec.line()
    if not mode_report(model, lam, line).stable:
        raise SensitivityError("baseline is unstable; margin sensitivity is undefined")
    dl = dlambda1_dB(spec, i, j)
    if dl == 0:
        return 0.0
    return margin_slope(model, lam, line) * dl


def lambda1_curve(spec: NetworkSpec, i: int, j: int, B_values) -> list[tuple[float, float]]:
    Bs = [float(b) for b in B_values]
    if any(b < 0 for b in Bs):
        raise SensitivityError("susceptance values must be >= 0")
    return list(zip(Bs, ordered_map(lambda b: lambda1(set_susceptance(spec, i, j, b)), Bs)))


def susceptance_for_lambda1(spec: NetworkSpec, i: int, j: int, target: float, lo: float = 1e-6, hi: float | None = None) -> float:
    """Value of B_ij at which lambda_1 crosses ``target`` on the exact curve."""
    hi = hi if hi is not None else max(10 * spec.susceptance(i, j), 1.0)
    f = lambda b: lambda1(set_susceptance(spec, i, j, b)) - target
    try:
        flo, fhi = f(lo), f(hi)
    except NetworkError as exc:
        raise SensitivityError(str(exc)) from None
    if flo * fhi > 0:
        raise SensitivityError(f"lambda_1 does not cross {target} for B_({i},{j}) in [{lo}, {hi}]")
    return float(brentq(f, lo, hi, xtol=1e-10, rtol=1e-14))

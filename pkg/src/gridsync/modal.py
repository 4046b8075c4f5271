"""Modal decoupling of the reduced network and per-mode stability analysis.

Mode indices ``k`` are 1-based: mode 1 belongs to the smallest eigenvalue of
Q_red and decides the stability margin of the whole system.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .converter import ConverterModel, ConverterParams, StateSpace, converter_model
from .netgraph import LineDynamics
from .parallel import ordered_map
from .tfmatrix import RationalFunction, TransferMatrix2

MARGIN_GRID = (1e-1, 1e5, 400)


class ModalError(ValueError):
    pass


class NoCriticalValue(ModalError):
    pass


@dataclass(frozen=True)
class ModalDecomposition:
    lambdas: np.ndarray
    U: np.ndarray
    V: np.ndarray

    @property
    def m(self) -> int:
        return len(self.lambdas)

    def lam(self, k: int) -> float:
        if not 1 <= k <= self.m:
            raise ModalError(f"mode index {k} outside 1..{self.m}")
        return float(self.lambdas[k - 1])

    def lambda1_is_simple(self, rtol: float = 1e-9) -> bool:
        if self.m == 1:
            return True
        l = self.lambdas
        return (l[1] - l[0]) > rtol * max(abs(l[1]), 1.0)


def decompose(Q_red) -> ModalDecomposition:
    Q = np.asarray(Q_red, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] == 0:
        raise ModalError("Q_red must be a non-empty square matrix")
    if not np.all(np.isfinite(Q)):
        raise ModalError("Q_red has non-finite entries")
    scale = max(np.max(np.abs(Q)), 1.0)
    if np.max(np.abs(Q - Q.T)) > 1e-9 * scale:
        raise ModalError("Q_red is not symmetric")
    lam, U = np.linalg.eigh((Q + Q.T) / 2)
    if lam[0] <= 0:
        raise ModalError(f"Q_red is not positive definite (smallest eigenvalue {lam[0]:.3g})")
    # deterministic signs: largest-magnitude component of each vector positive
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[idx, np.arange(U.shape[1])])
    return ModalDecomposition(lambdas=lam, U=U, V=U.T.copy())


# ---------------------------------------------------------------- open loop


def inverse_line(lam: float, line: LineDynamics) -> TransferMatrix2:
    """(lam F(s))^-1, a polynomial matrix."""
    if not lam > 0:
        raise ModalError(f"mode eigenvalue must be > 0, got {lam}")
    g = 1.0 / (lam * line.omega0)
    a = RationalFunction.from_coeffs([line.tau * g, g])
    return TransferMatrix2([[a, -line.omega0 * g], [line.omega0 * g, a]])


def open_loop(Y_C: TransferMatrix2, lam: float, line: LineDynamics) -> TransferMatrix2:
    return Y_C @ inverse_line(lam, line)


def modal_open_loop(k: int, decomp: ModalDecomposition, Y_C: TransferMatrix2, line: LineDynamics) -> TransferMatrix2:
    """Open-loop matrix of mode k: a converter facing the infinite bus through lam_k F(s)."""
    return open_loop(Y_C, decomp.lam(k), line)


def open_loop_response(Y_C: TransferMatrix2, lam: float, line: LineDynamics, omega) -> np.ndarray:
    """T(jw) evaluated directly, avoiding the symbolic product."""
    s = 1j * np.asarray(omega, dtype=float)
    Y = Y_C(s)
    a = (s + line.tau) / (lam * line.omega0)
    b = 1.0 / lam
    Finv = np.empty(s.shape + (2, 2), dtype=complex)
    Finv[..., 0, 0] = a
    Finv[..., 1, 1] = a
    Finv[..., 0, 1] = -b
    Finv[..., 1, 0] = b
    return Y @ Finv


# ---------------------------------------------------------------- poles


def constrained_spectrum(Af, Bf, Cf, return_matrix: bool = False):
    """Spectrum of x' = Af x + Bf u subject to Cf x = 0.

    Series inductances on both sides of the interface make the constraint
    index 2: u follows from differentiating it, and the flow is restricted
    to ker Cf where it is invariant.
    """
    Acl = Af - Bf @ np.linalg.solve(Cf @ Bf, Cf @ Af)
    N = sla.null_space(Cf)
    Ar = N.T @ Acl @ N
    if return_matrix:
        return Ar, N, Acl
    return np.linalg.eigvals(Ar)


def closed_loop_poles(ss: StateSpace, lam: float, line: LineDynamics) -> np.ndarray:
    """Poles of the converter tied to the infinite bus through lam F(s)."""
    Al = np.array([[-line.tau, line.omega0], [-line.omega0, -line.tau]])
    Af = sla.block_diag(ss.A, Al)
    Bf = np.vstack([ss.B, lam * line.omega0 * np.eye(2)])
    Cf = np.hstack([ss.C, np.eye(2)])
    p = constrained_spectrum(Af, Bf, Cf)
    return p[np.lexsort((p.imag, p.real))]


def mode_poles(k: int, decomp: ModalDecomposition, converter_ss: StateSpace, line: LineDynamics) -> np.ndarray:
    return closed_loop_poles(converter_ss, decomp.lam(k), line)


def is_stable(model: ConverterModel, lam: float, line: LineDynamics) -> bool:
    return bool(np.max(closed_loop_poles(model.ss, lam, line).real) < 0)


# ---------------------------------------------------------------- margins


@dataclass
class ModeReport:
    k: int
    lambda_k: float
    poles: np.ndarray
    margin: float
    stable: bool
    peak_omega: float | None = None
    flag: str = ""

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda": self.lambda_k,
            "margin": self.margin,
            "stable": self.stable,
            "peak_omega": self.peak_omega,
            "flag": self.flag,
            "poles": [[float(z.real), float(z.imag)] for z in self.poles],
        }


def _sigma_min(Y_C, lam, line, omega):
    T = open_loop_response(Y_C, lam, line, omega)
    M = np.eye(2) + T
    return np.linalg.svd(M, compute_uv=False)[..., -1]


def margin_at(model: ConverterModel, lam: float, line: LineDynamics, grid=MARGIN_GRID):
    """(margin, peak frequency): 1 / sup_w sigma_max((I + T(jw))^-1) = inf_w sigma_min(I + T(jw))."""
    lo, hi, n = grid
    lw = np.linspace(math.log10(lo), math.log10(hi), max(int(n), 400))
    sig = _sigma_min(model.Y_C, lam, line, 10**lw)
    i = int(np.argmin(sig))
    best, best_lw = float(sig[i]), float(lw[i])
    if 0 < i < len(lw) - 1:
        f = lambda x: float(_sigma_min(model.Y_C, lam, line, np.array([10**x]))[0])
        r = minimize_scalar(f, bracket=(lw[i - 1], lw[i], lw[i + 1]), method="golden", tol=1e-6)
        if r.fun < best:
            best, best_lw = float(r.fun), float(r.x)
    return best, 10**best_lw


def mode_report(model: ConverterModel, lam: float, line: LineDynamics, k: int = 1) -> ModeReport:
    poles = closed_loop_poles(model.ss, lam, line)
    if np.max(poles.real) >= 0:
        return ModeReport(k, lam, poles, 0.0, False, None, "unstable")
    margin, w = margin_at(model, lam, line)
    return ModeReport(k, lam, poles, margin, True, w)


def mode_margin(k: int, decomp: ModalDecomposition, model: ConverterModel, line: LineDynamics) -> float:
    return mode_report(model, decomp.lam(k), line, k).margin


def nyquist_unstable_count(model: ConverterModel, lam: float, line: LineDynamics) -> int:
    """Closed-loop RHP pole count from the winding of det(I + T(jw)).

    det(I + T) tends to a nonzero constant at infinity and is conjugate
    symmetric, so the winding over the whole axis is twice the phase change
    over w in [0, inf).
    """
    p_open = int(np.sum(model.ss.poles().real > 0))
    w = np.concatenate([[0.0], np.logspace(-4, 8, 6000)])

    def det(wv):
        M = np.eye(2) + open_loop_response(model.Y_C, lam, line, wv)
        return np.linalg.det(M)

    d = det(w)
    for _ in range(30):
        jump = np.abs(np.angle(d[1:] / d[:-1]))
        bad = np.nonzero(jump > 0.2)[0]
        if bad.size == 0:
            break
        mid = 0.5 * (w[bad] + w[bad + 1])
        w = np.insert(w, bad + 1, mid)
        d = np.insert(d, bad + 1, det(mid))
    dphase = float(np.sum(np.angle(d[1:] / d[:-1])))
    winding = 2 * dphase / (2 * math.pi)
    return int(round(p_open - winding))


def critical_lambda(model: ConverterModel, line: LineDynamics, lo: float = 1e-3, hi: float = 1e3, tol: float = 1e-4) -> float:
    """Smallest mode eigenvalue that keeps the converter stable (bisection on the pole test)."""
    s_lo, s_hi = is_stable(model, lo, line), is_stable(model, hi, line)
    if s_lo == s_hi:
        raise NoCriticalValue(f"no critical value in range [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_stable(model, mid, line) == s_hi:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class StabilityResult:
    stable: bool
    reports: list = field(default_factory=list)

    @property
    def dominant(self) -> ModeReport:
        return self.reports[0]


def system_stable(decomp: ModalDecomposition, model: ConverterModel, line: LineDynamics) -> StabilityResult:
    ks = range(1, decomp.m + 1)
    reports = ordered_map(lambda k: mode_report(model, decomp.lam(k), line, k), ks)
    return StabilityResult(all(r.stable for r in reports), reports)


def margin_surface(params: ConverterParams, omega_BW_grid, lambda_grid, line: LineDynamics | None = None, U_mag: float = 1.0) -> np.ndarray:
    """Margins on a (bandwidth x lambda) grid, PLL gains regenerated per bandwidth."""
    line = line or LineDynamics(omega0=params.omega0)
    bws = [float(b) for b in omega_BW_grid]
    lams = [float(l) for l in lambda_grid]
    models = [converter_model(params.with_bandwidth(b), U_mag) for b in bws]
    cells = [(i, lam) for i in range(len(bws)) for lam in lams]
    out = ordered_map(lambda c: mode_report(models[c[0]], c[1], line).margin, cells)
    return np.array(out, dtype=float).reshape(len(bws), len(lams))


# ---------------------------------------------------------------- export


def modes_csv(reports, fmt=repr) -> str:
    """One row per pole: mode, lambda, margin, stable, pole_re, pole_im."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mode", "lambda", "margin", "stable", "pole_re", "pole_im"])
    for r in reports:
        for z in r.poles:
            w.writerow([r.k, fmt(r.lambda_k), fmt(r.margin), int(r.stable), fmt(float(z.real)), fmt(float(z.imag))])
    return buf.getvalue()

"""Full linearized multi-converter model and fixed-step time simulation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .converter import ConverterParams, converter_model
from .modal import constrained_spectrum
from .netgraph import NetworkSpec, reduce_network

MAX_DT = 1e-4
STIFFNESS_LIMIT = 0.1


class SysdynError(ValueError):
    pass


@dataclass(frozen=True)
class FullSystemModel:
    """m identical converters coupled through the reduced network.

    State: the m converter blocks followed by 2m network states ``w`` with
    ``w' = omega0 U' - (tau + omega0 J) w`` and network current
    ``(Q_red kron I2) w``. The interface constraint ``G x = d`` (network
    current equals converter current plus external injection ``d``) is
    enforced by restricting the flow to ``ker G``.
    """

    spec: NetworkSpec
    params: ConverterParams
    Q_red: np.ndarray
    Af: np.ndarray
    Bf: np.ndarray
    G: np.ndarray
    A_red: np.ndarray
    N: np.ndarray
    A_cl: np.ndarray
    C_PE: np.ndarray
    injection: np.ndarray
    n_conv_states: int

    @property
    def m(self) -> int:
        return self.Q_red.shape[0]

    @property
    def order(self) -> int:
        return self.A_red.shape[0]

    def eigenvalues(self) -> np.ndarray:
        p = np.linalg.eigvals(self.A_red)
        return p[np.lexsort((p.imag, p.real))]

    def steady_state(self, d: np.ndarray) -> np.ndarray:
        n = self.Af.shape[0]
        M = np.vstack([self.A_cl, self.G])
        rhs = np.concatenate([np.zeros(n), d])
        x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        return x

    def terminal_voltage(self, x: np.ndarray) -> np.ndarray:
        """U' eliminated from the differentiated interface constraint."""
        return -np.linalg.solve(self.G @ self.Bf, self.G @ self.Af @ x)


def assemble_full_model(spec: NetworkSpec, params, U_mag: float = 1.0) -> FullSystemModel:
    if not isinstance(params, ConverterParams):
        plist = list(params)
        if len(plist) != spec.n_converter:
            raise SysdynError(f"expected {spec.n_converter} converter parameter sets, got {len(plist)}")
        if any(p != plist[0] for p in plist):
            raise SysdynError(
                "heterogeneous converter parameters: modal decoupling needs identical converters "
                "(same admittance matrices) on every node"
            )
        params = plist[0]
    if params.omega0 != spec.omega0:
        raise SysdynError("converter and network nominal frequencies differ")
    cm = converter_model(params, U_mag)
    ss = cm.ss
    Q = reduce_network(spec).Q_red
    m = Q.shape[0]
    nc = ss.order
    I2 = np.eye(2)
    Al = np.array([[-spec.tau, spec.omega0], [-spec.omega0, -spec.tau]])
    Af = sla.block_diag(np.kron(np.eye(m), ss.A), np.kron(np.eye(m), Al))
    Bf = np.vstack([np.kron(np.eye(m), ss.B), spec.omega0 * np.eye(2 * m)])
    G = np.hstack([np.kron(np.eye(m), ss.C), np.kron(Q, I2)])
    A_red, N, A_cl = constrained_spectrum(Af, Bf, G, return_matrix=True)
    C_PE = np.hstack([np.kron(np.eye(m), ss.C_PE[None, :]), np.zeros((m, 2 * m))])
    inj = np.tile(cm.op.grid_current_global(), m)
    return FullSystemModel(spec, params, Q, Af, Bf, G, A_red, N, A_cl, C_PE, inj, nc)


def eigenvalues(model: FullSystemModel) -> np.ndarray:
    return model.eigenvalues()


@dataclass
class Trajectory:
    t: np.ndarray
    P_E: np.ndarray          # (len(t), m) active-power deviations
    I_grid: np.ndarray       # (len(t), m, 2) grid-current deviations, global frame
    U_term: np.ndarray       # (len(t), m, 2) terminal-voltage deviations, global frame
    dt: float

    def to_csv(self, fmt=repr) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        m = self.P_E.shape[1]
        w.writerow(["t"] + [f"P_E_{i + 1}" for i in range(m)])
        for k in range(len(self.t)):
            w.writerow([fmt(float(self.t[k]))] + [fmt(float(v)) for v in self.P_E[k]])
        return buf.getvalue()

    def peak(self) -> float:
        return float(np.max(np.abs(self.P_E)))


def simulate_perturbation(
    model_before: FullSystemModel,
    model_after: FullSystemModel,
    horizon_s: float,
    dt_s: float = 1e-5,
    scale: float = 1.0,
    record_every: int = 10,
) -> Trajectory:
    """Response of the post-change model started from the pre-change equilibrium.

    Both models carry the equilibrium grid currents as a constant injection;
    the initial deviation is the difference between their steady states,
    projected onto the constraint surface of the post-change model.
    Deviations are reported relative to the pre-change equilibrium.
    """
    if model_before.Af.shape != model_after.Af.shape:
        raise SysdynError("models have different state dimensions")
    if not (0 < dt_s <= MAX_DT):
        raise SysdynError(f"dt must be in (0, {MAX_DT}] s, got {dt_s}")
    if horizon_s <= 0:
        raise SysdynError("horizon must be > 0")
    A = model_after.A_red
    lam_max = float(np.max(np.abs(np.linalg.eigvals(A))))
    if lam_max * dt_s > STIFFNESS_LIMIT:
        raise SysdynError(
            f"dt = {dt_s:g} s too large for the fastest mode (|lambda| = {lam_max:.4g}); need dt <= {STIFFNESS_LIMIT / lam_max:.3g}"
        )
    d = scale * model_after.injection
    x_before = model_before.steady_state(d)
    x_after = model_after.steady_state(d)
    N = model_after.N
    z = N.T @ (x_before - x_after)

    # classical RK4 on a linear system is exactly the 4th-order Taylor map
    hA = dt_s * A
    Phi = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, 5):
        term = term @ hA / k
        Phi = Phi + term

    steps = int(math.ceil(horizon_s / dt_s - 1e-9))
    n_rec = steps // record_every + 1
    Z = np.empty((n_rec, len(z)))
    Z[0] = z
    r = 1
    for k in range(1, steps + 1):
        z = Phi @ z
        if k % record_every == 0:
            Z[r] = z
            r += 1
    Z = Z[:r]
    X = x_after[None, :] + Z @ N.T - x_before[None, :]
    m = model_after.m
    nc = model_after.n_conv_states
    P = X @ model_after.C_PE.T
    I = np.stack([X[:, i * nc + 12:i * nc + 14] for i in range(m)], axis=1)
    Ub = model_after.terminal_voltage(x_before)
    U = np.array([model_after.terminal_voltage(x_after + N @ zz) for zz in Z]) - Ub
    t = np.arange(r) * record_every * dt_s
    return Trajectory(t, P, I, U.reshape(r, m, 2), dt_s)


def dominant_mode_damping(model_or_poles) -> tuple[float, float]:
    """(frequency in Hz, damping ratio) of the complex pair with the largest real part."""
    poles = model_or_poles.eigenvalues() if isinstance(model_or_poles, FullSystemModel) else np.asarray(model_or_poles)
    cplx = poles[np.abs(poles.imag) > 1e-9 * np.maximum(np.abs(poles), 1.0)]
    if cplx.size == 0:
        raise SysdynError("no oscillatory mode: the spectrum is purely real")
    p = cplx[np.argmax(cplx.real)]
    return float(abs(p.imag) / (2 * math.pi)), float(-p.real / abs(p))

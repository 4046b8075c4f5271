"""PLL-based grid-following converter: equilibrium, admittance and state model.

Frames: the controller dq frame is locked by the PLL at angle ``delta0``
ahead of the global (infinite-bus) frame. Small-signal quantities of the
global frame carry a prime (``V'``, ``I'``, ``U'``). Filter values are p.u.
reactances, so inductance and capacitance in seconds are ``L/omega0`` and
``C/omega0``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache

import numpy as np

from .netgraph import OMEGA0
from .tfmatrix import RationalFunction, TransferMatrix2

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])

PARAM_KEYS = (
    "L_F", "C_F", "L_g", "K_VF", "T_VF", "K_CCP", "K_CCI", "K_PCP", "K_PCI",
    "K_QCP", "K_QCI", "K_PLLP", "K_PLLI", "P_ref", "Q_ref",
)
_GAIN_KEYS = ("K_CCP", "K_CCI", "K_PCP", "K_PCI", "K_QCP", "K_QCI", "K_PLLP", "K_PLLI")


class ConverterError(ValueError):
    pass


class ConverterFileError(ConverterError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class OperatingPointError(ConverterError):
    """Newton iteration for the equilibrium did not converge."""


def rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class ConverterParams:
    L_F: float = 0.05
    C_F: float = 0.05
    L_g: float = 0.05
    K_VF: float = 1.0
    T_VF: float = 0.01
    K_CCP: float = 0.3
    K_CCI: float = 10.0
    K_PCP: float = 0.5
    K_PCI: float = 40.0
    K_QCP: float = 0.5
    K_QCI: float = 40.0
    K_PLLP: float = 34.36
    K_PLLI: float = 590.17
    P_ref: float = 1.0
    Q_ref: float = 0.0
    omega0: float = OMEGA0

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not math.isfinite(v):
                raise ConverterError(f"{f.name} must be finite")
            object.__setattr__(self, f.name, v)
        # L_g = 0 and C_F = 0 are allowed as limiting cases of the LCL filter
        for k in ("L_F", "T_VF"):
            if getattr(self, k) <= 0:
                raise ConverterError(f"{k} must be > 0")
        for k in ("C_F", "L_g"):
            if getattr(self, k) < 0:
                raise ConverterError(f"{k} must be >= 0")
        for k in _GAIN_KEYS:
            if getattr(self, k) < 0:
                raise ConverterError(f"{k} must be >= 0")
        if self.omega0 <= 0:
            raise ConverterError("omega0 must be > 0")

    def with_bandwidth(self, omega_BW: float) -> "ConverterParams":
        kp, ki = pll_gains_from_bandwidth(omega_BW)
        return replace(self, K_PLLP=kp, K_PLLI=ki)

    def with_(self, **kw) -> "ConverterParams":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)


def pll_gains_from_bandwidth(omega_BW: float) -> tuple[float, float]:
    """PI gains giving a PLL tracking loop of damping 1/sqrt(2) and -3 dB bandwidth ``omega_BW``."""
    if omega_BW < 0 or not math.isfinite(omega_BW):
        raise ConverterError(f"bandwidth must be finite and >= 0, got {omega_BW}")
    ki = omega_BW**2 / (2 + math.sqrt(5))
    return math.sqrt(2 * ki), ki


def pll_tracking_tf(K_PLLP: float, K_PLLI: float, s: complex) -> complex:
    """Decoupled PLL tracking response (Kp s + Ki)/(s^2 + Kp s + Ki)."""
    return (K_PLLP * s + K_PLLI) / (s * s + K_PLLP * s + K_PLLI)


def pll_damping(K_PLLP: float, K_PLLI: float) -> float:
    return K_PLLP / (2 * math.sqrt(K_PLLI))


# ---------------------------------------------------------------- file I/O


def parse_converter(text: str, base: ConverterParams | None = None) -> ConverterParams:
    """Parse ``key = value`` lines. ``omega_BW`` may replace the two PLL gains."""
    base = base or ConverterParams()
    values: dict[str, float] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConverterFileError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in PARAM_KEYS and key not in ("omega_BW", "omega0"):
            raise ConverterFileError(lineno, f"unknown key {key!r}")
        if key in values:
            raise ConverterFileError(lineno, f"duplicate key {key!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise ConverterFileError(lineno, f"bad number {val!r} for {key}") from None
        lines[key] = lineno
    if "omega_BW" in values:
        clash = [k for k in ("K_PLLP", "K_PLLI") if k in values]
        if clash:
            raise ConverterFileError(lines["omega_BW"], f"omega_BW conflicts with {', '.join(clash)}")
        try:
            values["K_PLLP"], values["K_PLLI"] = pll_gains_from_bandwidth(values.pop("omega_BW"))
        except ConverterError as exc:
            raise ConverterFileError(lines["omega_BW"], str(exc)) from None
    try:
        return replace(base, **values)
    except ConverterError as exc:
        bad = next((k for k in values if k in str(exc)), None)
        raise ConverterFileError(lines.get(bad, 0), str(exc)) from None


def format_converter(p: ConverterParams) -> str:
    out = [f"{k} = {getattr(p, k)!r}" for k in PARAM_KEYS]
    if p.omega0 != OMEGA0:
        out.append(f"omega0 = {p.omega0!r}")
    return "\n".join(out) + "\n"


def read_converter(path) -> ConverterParams:
    with open(path) as fh:
        return parse_converter(fh.read())


def write_converter(p: ConverterParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_converter(p))


# ---------------------------------------------------------------- equilibrium


@dataclass(frozen=True)
class OperatingPoint:
    """Equilibrium in the controller frame; ``delta0`` is its angle over the global frame."""

    V_d0: float
    V_q0: float
    I_Cd0: float
    I_Cq0: float
    delta0: float
    U_d0: float
    U_q0: float
    I_d0: float
    I_q0: float
    U_mag: float = 1.0
    iterations: int = 0
    residual: float = 0.0

    def power(self) -> tuple[float, float]:
        P = self.V_d0 * self.I_Cd0 + self.V_q0 * self.I_Cq0
        Q = self.V_q0 * self.I_Cd0 - self.V_d0 * self.I_Cq0
        return P, Q

    def grid_current_global(self) -> np.ndarray:
        """Equilibrium grid-side current in the global frame."""
        return rot(self.delta0) @ np.array([self.I_d0, self.I_q0])


def _op_residual(p: ConverterParams, U: float, x: np.ndarray):
    Vd, d, Icd, Icq = x
    e = complex(math.cos(d), math.sin(d))
    core = Vd * (1 - p.L_g * p.C_F) + p.L_g * Icq - 1j * p.L_g * Icd
    r = e * core - U
    F = np.array([Vd * Icd - p.P_ref, -Vd * Icq - p.Q_ref, r.real, r.imag])
    dr = [e * (1 - p.L_g * p.C_F), 1j * e * core, -1j * p.L_g * e, p.L_g * e]
    Jm = np.array([
        [Icd, 0.0, Vd, 0.0],
        [-Icq, 0.0, 0.0, -Vd],
        [z.real for z in dr],
        [z.imag for z in dr],
    ])
    return F, Jm


def solve_operating_point(p: ConverterParams, U_mag: float = 1.0, tol: float = 1e-12, max_iter: int = 50) -> OperatingPoint:
    if not U_mag > 0:
        raise OperatingPointError(f"U_mag must be > 0, got {U_mag}")
    x = np.array([U_mag, 0.0, p.P_ref / U_mag, -p.Q_ref / U_mag])
    for it in range(1, max_iter + 1):
        F, Jm = _op_residual(p, U_mag, x)
        try:
            x = x - np.linalg.solve(Jm, F)
        except np.linalg.LinAlgError:
            raise OperatingPointError("singular Jacobian in equilibrium iteration") from None
        res = float(np.max(np.abs(_op_residual(p, U_mag, x)[0])))
        if not np.all(np.isfinite(x)):
            break
        if res < tol:
            Vd, d, Icd, Icq = (float(v) for v in x)
            if Vd <= 0:
                break
            Id, Iq = Icd, Icq - p.C_F * Vd
            Uc = np.array([Vd + p.L_g * Iq, -p.L_g * Id])
            return OperatingPoint(
                V_d0=Vd, V_q0=0.0, I_Cd0=Icd, I_Cq0=Icq, delta0=d,
                U_d0=float(Uc[0]), U_q0=float(Uc[1]), I_d0=Id, I_q0=Iq,
                U_mag=U_mag, iterations=it, residual=res,
            )
    raise OperatingPointError(
        f"infeasible operating point: no convergence for P_ref={p.P_ref}, Q_ref={p.Q_ref}, U_mag={U_mag}"
    )


# ---------------------------------------------------------------- admittances

_S = RationalFunction.s()


def _K(x) -> RationalFunction:
    return RationalFunction.constant(x)


def _blocks(p: ConverterParams):
    LF = p.L_F / p.omega0
    PIcc = _K(p.K_CCP) + _K(p.K_CCI) / _S
    fvf = _K(p.K_VF) / (_K(p.T_VF) * _S + 1)
    GI = PIcc / (_S * LF + PIcc)
    YVF = (1 - fvf) / (_S * LF + PIcc)
    PIpc = _K(p.K_PCP) + _K(p.K_PCI) / _S
    PIqc = _K(p.K_QCP) + _K(p.K_QCI) / _S
    return GI, YVF, PIpc, PIqc


def inner_admittance(p: ConverterParams, op: OperatingPoint) -> TransferMatrix2:
    """Converter-side admittance in the controller frame (PLL frozen)."""
    return _inner(p, op.V_d0, op.I_Cd0, op.I_Cq0)


@lru_cache(maxsize=64)
def _inner(p, Vd0, Icd0, Icq0) -> TransferMatrix2:
    GI, YVF, PIpc, PIqc = _blocks(p)
    gp, gq = GI * PIpc, GI * PIqc
    Y11 = (gp * Icd0 + YVF) / (1 + gp * Vd0)
    Y12 = gp * Icq0 / (1 + gp * Vd0)
    Y21 = gq * Icq0 / (1 + gq * Vd0)
    Y22 = (-gq * Icd0 + YVF) / (1 + gq * Vd0)
    return TransferMatrix2([[Y11, Y12], [Y21, Y22]])


def f_pll(p: ConverterParams) -> RationalFunction:
    return (_K(p.K_PLLP) + _K(p.K_PLLI) / _S) / _S


@lru_cache(maxsize=64)
def _pll_corrected(p, Vd0, Icd0, Icq0) -> TransferMatrix2:
    Y = _inner(p, Vd0, Icd0, Icq0)
    f = f_pll(p)
    den = 1 + f * Vd0
    return TransferMatrix2([
        [Y[0, 0], (Y[0, 1] + f * Icq0) / den],
        [Y[1, 0], (Y[1, 1] - f * Icd0) / den],
    ])


def _rotate(Y: TransferMatrix2, angle: float) -> TransferMatrix2:
    if angle == 0:
        return Y
    return TransferMatrix2.rotation(angle) @ Y @ TransferMatrix2.rotation(-angle)


def global_admittance(p: ConverterParams, op: OperatingPoint) -> TransferMatrix2:
    """Converter-side admittance in the global frame, PLL dynamics included."""
    return _rotate(_pll_corrected(p, op.V_d0, op.I_Cd0, op.I_Cq0), op.delta0)


def capacitor_admittance(p: ConverterParams) -> TransferMatrix2:
    C = p.C_F / p.omega0
    return TransferMatrix2.lift(_S * C, C * p.omega0)


def grid_impedance(p: ConverterParams) -> TransferMatrix2:
    L = p.L_g / p.omega0
    return TransferMatrix2.lift(_S * L, L * p.omega0)


@lru_cache(maxsize=64)
def _yc_unrotated(p, Vd0, Icd0, Icq0) -> TransferMatrix2:
    inner = capacitor_admittance(p) + _pll_corrected(p, Vd0, Icd0, Icq0)
    if p.L_g == 0:
        return inner
    return (inner.inv() + grid_impedance(p)).inv()


def full_admittance_YC(p: ConverterParams, op: OperatingPoint, rotate: bool = True) -> TransferMatrix2:
    """Terminal admittance Y_C(s) mapping dU' to -dI' in the global frame.

    Capacitor and grid-inductor lifts commute with frame rotations, so the
    whole network is assembled at zero angle and rotated once at the end.
    """
    Y = _yc_unrotated(p, op.V_d0, op.I_Cd0, op.I_Cq0)
    return _rotate(Y, op.delta0) if rotate else Y


# ---------------------------------------------------------------- state model

STATE_NAMES = (
    "I_Cd", "I_Cq", "x_ccd", "x_ccq", "x_pc", "x_qc", "v_fd", "v_fq",
    "theta", "x_pll", "V'_d", "V'_q", "I'_d", "I'_q",
)


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    state_names: tuple = STATE_NAMES
    C_PE: np.ndarray | None = None

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def __call__(self, s: complex) -> np.ndarray:
        n = self.order
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D

    def freqresp(self, omega) -> np.ndarray:
        return np.array([self(1j * w) for w in np.ravel(omega)])

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)


def state_space_realization(p: ConverterParams, op: OperatingPoint) -> StateSpace:
    """14-state linear model, input dU' (global), output -dI' (global).

    States: converter current and controller integrators in the controller
    frame, PLL angle and integrator, capacitor voltage and grid current in
    the global frame. ``C_PE`` maps the state to the active-power deviation.
    """
    Vd0, Icd0, Icq0, d0 = op.V_d0, op.I_Cd0, op.I_Cq0, op.delta0
    w0 = p.omega0
    LF, CF, Lg = p.L_F / w0, p.C_F / w0, p.L_g / w0
    nx = 14
    A = np.zeros((nx, nx))
    B = np.zeros((nx, 2))
    C = np.zeros((2, nx))
    Rp = rot(d0)
    Rm = Rp.T

    # controller-frame voltage and current as rows over the state
    dV = np.zeros((2, nx))
    dV[:, 10:12] = Rm
    dV[1, 8] = -Vd0
    dIc = np.zeros((2, nx))
    dIc[:, 0:2] = np.eye(2)
    dPE = Vd0 * dIc[0] + Icd0 * dV[0] + Icq0 * dV[1]
    dQE = Icd0 * dV[1] - Vd0 * dIc[1] - Icq0 * dV[0]

    Iref = np.zeros((2, nx))
    Iref[0] = -p.K_PCP * dPE
    Iref[0, 4] += p.K_PCI
    Iref[1] = p.K_QCP * dQE
    Iref[1, 5] += p.K_QCI
    A[4] = -dPE
    A[5] = dQE
    err = Iref - dIc
    A[2:4] = err
    ucc = p.K_CCP * err
    ucc[:, 2:4] += p.K_CCI * np.eye(2)
    vf = np.zeros((2, nx))
    vf[:, 6:8] = np.eye(2)
    A[0:2] = (ucc - dV + vf) / LF
    A[6:8] = (-vf + p.K_VF * dV) / p.T_VF
    A[8] = p.K_PLLP * dV[1]
    A[8, 9] += p.K_PLLI
    A[9] = dV[1]

    # the converter current seen in the global frame picks up the angle deviation
    Icg = np.zeros((2, nx))
    Icg[:, 0:2] = Rp
    Icg[:, 8] = Rp @ np.array([-Icq0, Icd0])
    Vg = np.zeros((2, nx))
    Vg[:, 10:12] = np.eye(2)
    Ig = np.zeros((2, nx))
    Ig[:, 12:14] = np.eye(2)
    if CF == 0 or Lg == 0:
        raise ConverterError("state model needs C_F > 0 and L_g > 0")
    A[10:12] = (Icg - Ig - p.C_F * J2 @ Vg) / CF
    A[12:14] = (Vg - p.L_g * J2 @ Ig) / Lg
    B[12:14] = -np.eye(2) / Lg
    C[:, 12:14] = -np.eye(2)
    return StateSpace(A=A, B=B, C=C, D=np.zeros((2, 2)), C_PE=dPE)


@dataclass(frozen=True)
class ConverterModel:
    """Everything the stability analyses need about one converter design."""

    params: ConverterParams
    op: OperatingPoint
    ss: StateSpace
    Y_C: TransferMatrix2


@lru_cache(maxsize=32)
def converter_model(p: ConverterParams, U_mag: float = 1.0) -> ConverterModel:
    op = solve_operating_point(p, U_mag)
    return ConverterModel(p, op, state_space_realization(p, op), full_admittance_YC(p, op))

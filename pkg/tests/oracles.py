"""Independent reference computations used by several test modules."""
import math

import numpy as np
from scipy.optimize import fsolve

from gridsync.converter import rot

W0 = 100 * math.pi


def phasor_oracle(p, U):
    def res(x):
        Vd, d = x
        Ic = (p.P_ref - 1j * p.Q_ref) / Vd * np.exp(1j * d)
        V = Vd * np.exp(1j * d)
        r = V - U - 1j * p.L_g * (Ic - 1j * p.C_F * V)
        return [r.real, r.imag]

    Vd, d = fsolve(res, [U, 0.0], xtol=1e-14)
    return Vd, d, p.P_ref / Vd, -p.Q_ref / Vd


def direct_YC(p, op, s):
    """Complex-number assembly of the terminal admittance, no rational arithmetic."""
    LF, CF, Lg = p.L_F / W0, p.C_F / W0, p.L_g / W0
    pic = p.K_CCP + p.K_CCI / s
    gi = pic / (s * LF + pic)
    yvf = (1 - p.K_VF / (p.T_VF * s + 1)) / (s * LF + pic)
    pp = p.K_PCP + p.K_PCI / s
    pq = p.K_QCP + p.K_QCI / s
    Vd, Id, Iq = op.V_d0, op.I_Cd0, op.I_Cq0
    f = (p.K_PLLP + p.K_PLLI / s) / s
    Y11 = (gi * pp * Id + yvf) / (1 + gi * pp * Vd)
    Y12 = gi * pp * Iq / (1 + gi * pp * Vd)
    Y21 = gi * pq * Iq / (1 + gi * pq * Vd)
    Y22 = (-gi * pq * Id + yvf) / (1 + gi * pq * Vd)
    M = np.array([[Y11, (Y12 + f * Iq) / (1 + f * Vd)], [Y21, (Y22 - f * Id) / (1 + f * Vd)]])
    R = rot(op.delta0)
    Yp = R @ M @ R.T
    lift = lambda a, b: np.array([[a, -b], [b, a]])
    Ycl = lift(s * CF, CF * W0)
    Zg = lift(s * Lg, Lg * W0)
    return np.linalg.inv(np.linalg.inv(Ycl + Yp) + Zg)



def laplacian_oracle(spec, extra=()):
    """Grounded Laplacian assembled from the raw edge list; ``extra`` weights may be negative."""
    n = spec.n_converter + spec.n_interior
    ground = n + 1
    L = np.zeros((n, n))
    for i, j, b in list(spec.edges) + list(extra):
        for a, c in ((i, j), (j, i)):
            if a != ground:
                L[a - 1, a - 1] += b
                if c != ground:
                    L[a - 1, c - 1] -= b
    return L


def float_lambda1(spec, extra=()):
    L = laplacian_oracle(spec, extra)
    m = spec.n_converter
    Q = L[:m, :m] - L[:m, m:] @ np.linalg.solve(L[m:, m:], L[m:, :m])
    return np.linalg.eigvalsh(Q)[0]


def mp_lambda1(spec, extra=(), dps=40):
    """lambda_1 of the reduced network in extended precision.

    Interior nodes are eliminated by plain Gaussian elimination on mpf lists;
    the float eigenpair is then polished by Rayleigh-quotient iteration.
    """
    import mpmath as mp

    with mp.workdps(dps):
        n = spec.n_converter + spec.n_interior
        ground = n + 1
        L = [[mp.mpf(0)] * n for _ in range(n)]
        for i, j, b in list(spec.edges) + list(extra):
            b = mp.mpf(b)
            for a, c in ((i, j), (j, i)):
                if a != ground:
                    L[a - 1][a - 1] += b
                    if c != ground:
                        L[a - 1][c - 1] -= b
        m = spec.n_converter
        for k in range(n - 1, m - 1, -1):  # eliminate interior nodes one by one
            piv = L[k][k]
            row = L[k]
            for r in range(k):
                f = L[r][k] / piv
                if f:
                    Lr = L[r]
                    for c in range(k):
                        Lr[c] -= f * row[c]
        Q = mp.matrix([row[:m] for row in L[:m]])
        Qf = np.array([[float(x) for x in row[:m]] for row in L[:m]])
        w, V = np.linalg.eigh(Qf)
        x = mp.matrix([mp.mpf(v) for v in V[:, 0]])
        lam = mp.mpf(w[0])
        for _ in range(3):
            try:
                y = mp.lu_solve(Q - lam * mp.eye(m), x)
            except ZeroDivisionError:  # converged to working precision
                break
            x = y / mp.norm(y)
            lam = (x.T * Q * x)[0]
        return lam


def central_difference(spec, i, j, rel=1e-5):
    """Central difference of lambda_1 in B_ij.

    Negative weights on the extra edge keep the stencil central for absent
    lines. Float64 with h = 1e-3 when its round-off floor is far below the
    result, otherwise 40-digit arithmetic with h = 1e-12.
    """
    h = 1e-3
    d = (float_lambda1(spec, [(i, j, h)]) - float_lambda1(spec, [(i, j, -h)])) / (2 * h)
    L = laplacian_oracle(spec)
    floor = 10 * np.finfo(float).eps * np.abs(L).sum(axis=1).max() / h
    if abs(d) * rel > floor:
        return d
    import mpmath as mp

    with mp.workdps(40):
        hp = mp.mpf("1e-12")
        return float((mp_lambda1(spec, [(i, j, hp)]) - mp_lambda1(spec, [(i, j, -hp)])) / (2 * hp))

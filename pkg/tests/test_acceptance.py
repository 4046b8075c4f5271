"""Acceptance criteria, one check per criterion.

Each check returns ``(ok, detail)``. Under pytest every criterion prints a
PASS/FAIL line (also collected in the terminal summary); run as a script
(``python3 tests/test_acceptance.py``) it prints the same lines and exits
non-zero if any criterion fails.
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES, CONV_A, NET39  # noqa: E402
from oracles import central_difference  # noqa: E402

from gridsync.converter import converter_model, pll_damping, pll_gains_from_bandwidth, read_converter  # noqa: E402
from gridsync.modal import closed_loop_poles, critical_lambda, decompose, mode_report  # noqa: E402
from gridsync.netgraph import NetworkSpec, read_network, reduce_network, relocate_converter, set_susceptance  # noqa: E402
from gridsync.sensitivity import (  # noqa: E402
    candidate_pairs, dlambda1_dB, lambda1, lambda1_curve, participation, susceptance_for_lambda1,
)
from gridsync.sysdyn import assemble_full_model, dominant_mode_damping  # noqa: E402

REF_SPECTRUM = [3.3118, 21.2484, 25.0226, 36.0841, 51.3565, 53.7490, 61.6484, 70.9915, 77.3948]
REF_PARTICIPATION = [0.1269, 0.1270, 0.1214, 0.0908, 0.0978, 0.0387, 0.1313, 0.1329, 0.1332]


def _spec():
    return read_network(NET39)


def _params():
    return read_converter(CONV_A)


def _worst(pairs):
    """pairs of (label, got, want) -> (worst abs error, label)."""
    return max((abs(g - w), lbl) for lbl, g, w in pairs)


def check_1():
    lams = decompose(reduce_network(_spec()).Q_red).lambdas
    err, k = _worst([(f"lambda_{k + 1}", g, w) for k, (g, w) in enumerate(zip(lams, REF_SPECTRUM))])
    return err <= 1e-3, f"max |err| = {err:.2e} at {k}"


def check_2():
    p = _params()
    line = _spec().line()
    out = []
    for bw, want, tol in ((50.0, 2.25, 0.05), (150.0, 2.9, 0.1)):
        lc = critical_lambda(converter_model(p.with_bandwidth(bw)), line)
        out.append((abs(lc - want) <= tol, f"omega_BW={bw:g}: lambda_C={lc:.4f} (want {want}+-{tol})"))
    return all(o for o, _ in out), "; ".join(d for _, d in out)


def check_3():
    s = _spec()
    want = [("M(10,32)", 10, 32, 0.0387), ("M(32,33)", 32, 33, 0.0087), ("d/dB(32,39)", 32, 39, 0.0257),
             ("M(6,9)", 6, 9, 0.0283)]
    rows = [(lbl, dlambda1_dB(s, i, j), w) for lbl, i, j, w in want]
    p = participation(decompose(reduce_network(s).Q_red))
    rows += [(f"p_{i + 1}", p[i], REF_PARTICIPATION[i]) for i in range(9)]
    err, lbl = _worst(rows)
    return err <= 1e-3, f"13 values, max |err| = {err:.2e} at {lbl}"


def check_4():
    s = _spec()
    cases = [((32, 33), 95.24, 3.6014), ((17, 18), 91.82, 3.3172), ((32, 39), 122.54, 4.3311),
             ((1, 39), 50.0, 6.6073), ((4, 39), 50.0, 5.3073), ((6, 9), 50.0, 3.7393)]
    rows = [(f"B{i},{j}={b:g}", lambda1_curve(s, i, j, [b])[0][1], w) for (i, j), b, w in cases]
    err, lbl = _worst(rows)
    thr = susceptance_for_lambda1(s, 32, 39, 2.25)
    ok = err <= 1e-3 and abs(thr - 30.95) <= 0.05
    return ok, f"endpoints max |err| = {err:.2e} at {lbl}; threshold B32,39 = {thr:.4f} (want 30.95+-0.05)"


def check_5():
    moved = relocate_converter(_spec(), 9, 30, mode="merge")
    lam = lambda1(moved)
    return abs(lam - 3.5514) <= 1e-3, f"lambda_1 = {lam:.5f} (relocation mode 'merge')"


def check_6():
    s = _spec()
    worst, where, n, classes = 0.0, None, 0, set()
    for i, j, cls in candidate_pairs(s):
        a = dlambda1_dB(s, i, j)
        ref = central_difference(s, i, j)
        e = abs(a - ref) / abs(ref) if ref else abs(a)
        n += 1
        classes.add(cls)
        if e > worst:
            worst, where = e, (i, j)
    return worst < 1e-4, f"{n} pairs over {len(classes)} classes, max rel err = {worst:.2e} at {where}"


def _hausdorff(a, b):
    D = np.abs(a[:, None] - b[None, :])
    return max(D.min(axis=1).max(), D.min(axis=0).max())


def _random_network(rng):
    m, n_int = int(rng.integers(1, 5)), int(rng.integers(0, 5))
    ground = m + n_int + 1
    edges = {(k, k + 1): None for k in range(1, ground)}  # a path keeps it connected
    for _ in range(int(rng.integers(0, 6))):
        i, j = sorted(rng.choice(np.arange(1, ground + 1), 2, replace=False))
        edges[(int(i), int(j))] = None
    return NetworkSpec(m, n_int, tuple((i, j, float(rng.uniform(5, 80))) for i, j in edges))


def check_7():
    p = _params()
    cm = converter_model(p)
    specs = [_spec()] + [_random_network(np.random.default_rng(seed)) for seed in range(6)]
    worst = 0.0
    for s in specs:
        ev = assemble_full_model(s, p).eigenvalues()
        lams = decompose(reduce_network(s).Q_red).lambdas
        union = np.concatenate([closed_loop_poles(cm.ss, lam, s.line()) for lam in lams])
        worst = max(worst, _hausdorff(ev, union))
    return worst <= 1e-6, f"{len(specs)} networks, max Hausdorff distance = {worst:.2e}"


def check_8():
    kp, ki = pll_gains_from_bandwidth(50.0)
    zeta = pll_damping(kp, ki)
    ok = round(kp, 2) == 34.36 and round(ki, 2) == 590.17 and abs(zeta - 1 / math.sqrt(2)) <= 1e-12
    return ok, f"K_PLLP = {kp:.4f}, K_PLLI = {ki:.4f}, zeta - 1/sqrt2 = {zeta - 1 / math.sqrt(2):.1e}"


def check_9():
    s, p = _spec(), _params()
    zs = {}
    for b in (61.27, 50.0, 40.0, 30.0):
        model = assemble_full_model(set_susceptance(s, 32, 39, b), p)
        zs[b] = (dominant_mode_damping(model)[1], float(np.max(model.eigenvalues().real)))
    ordered = zs[61.27][0] > zs[50.0][0] > zs[40.0][0]
    rhp = zs[30.0][1] > 0
    detail = ", ".join(f"B={b:g}: zeta={z:.4f}" for b, (z, _) in zs.items()) + f"; max Re at B=30: {zs[30.0][1]:.3g}"
    return ordered and rhp, detail


def check_10():
    s, p = _spec(), _params()
    cm = converter_model(p)
    line = s.line()
    lc = critical_lambda(cm, line)
    lams = np.linspace(lc, 10.0, 41)
    margins = np.array([mode_report(cm, lam, line).margin for lam in lams])
    drops = np.diff(margins)
    sens = [dlambda1_dB(s, i, j) for i, j, _ in candidate_pairs(s)]
    ok = drops.min() >= -1e-9 and min(sens) >= 0
    return ok, f"margin {margins[0]:.3g}..{margins[-1]:.3g}, min step {drops.min():.2e}; min sensitivity {min(sens):.2e}"


CHECKS = [
    (1, "spectrum of the reduced 39-bus network", check_1),
    (2, "critical eigenvalue at two PLL bandwidths", check_2),
    (3, "sensitivity fixtures and participation factors", check_3),
    (4, "lambda_1 curve endpoints and instability threshold", check_4),
    (5, "converter relocation", check_5),
    (6, "analytic sensitivities vs central differences", check_6),
    (7, "full-system poles equal the union of modal poles", check_7),
    (8, "PLL retuning relation", check_8),
    (9, "damping ordering as the 32-39 tie weakens", check_9),
    (10, "monotonic margin and nonnegative sensitivities", check_10),
]


def line_for(num, title, fn):
    ok, detail = fn()
    return ok, f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title}: {detail}"


@pytest.mark.parametrize("num, title, fn", CHECKS, ids=[f"criterion_{c[0]}" for c in CHECKS])
def test_criterion(num, title, fn):
    ok, text = line_for(num, title, fn)
    ACCEPTANCE_LINES.append(text)
    print(text)
    assert ok, text


if __name__ == "__main__":
    results = [line_for(*c) for c in CHECKS]
    for _, text in results:
        print(text)
    sys.exit(0 if all(ok for ok, _ in results) else 1)

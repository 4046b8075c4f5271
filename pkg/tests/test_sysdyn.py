import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsync.modal import closed_loop_poles, decompose
from gridsync.netgraph import NetworkSpec, set_susceptance
from gridsync.sysdyn import (
    MAX_DT, SysdynError, assemble_full_model, dominant_mode_damping, simulate_perturbation,
)


def hausdorff(a, b):
    D = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    return max(D.min(axis=1).max(), D.min(axis=0).max())


@pytest.fixture(scope="module")
def full39(spec39, params):
    return assemble_full_model(spec39, params)


@pytest.fixture(scope="module")
def weak39(spec39, params):
    return assemble_full_model(set_susceptance(spec39, 32, 39, 50.0), params)


def test_dimensions(full39):
    # 14 converter states per node, 2 network states per node, 2 constraints per node
    assert full39.Af.shape == (9 * 16, 9 * 16)
    assert full39.order == 9 * 14
    assert full39.G.shape == (18, 144)


def test_single_converter_matches_mode(params, model):
    s = NetworkSpec(1, 0, ((1, 2, 4.0),))
    full = assemble_full_model(s, params)
    ref = closed_loop_poles(model.ss, 4.0, s.line())
    assert hausdorff(full.eigenvalues(), ref) < 1e-8


def test_full_spectrum_is_union_of_modes(full39, spec39, model, line):
    from gridsync.netgraph import reduce_network

    lams = decompose(reduce_network(spec39).Q_red).lambdas
    union = np.concatenate([closed_loop_poles(model.ss, lam, line) for lam in lams])
    ev = full39.eigenvalues()
    assert len(ev) == len(union)
    assert hausdorff(ev, union) < 1e-7 * np.max(np.abs(ev))


def test_baseline_stable(full39):
    assert np.max(full39.eigenvalues().real) < 0


def test_steady_state_satisfies_constraint(full39):
    x = full39.steady_state(full39.injection)
    assert np.allclose(full39.G @ x, full39.injection, atol=1e-10)
    assert np.allclose(full39.A_cl @ x, 0, atol=1e-9)


def test_heterogeneous_rejected(spec39, params):
    other = params.with_bandwidth(150.0)
    with pytest.raises(SysdynError, match="heterogeneous"):
        assemble_full_model(spec39, [params] * 8 + [other])
    with pytest.raises(SysdynError, match="expected 9"):
        assemble_full_model(spec39, [params] * 3)
    assert assemble_full_model(spec39, [params] * 9).order == 126


def test_frequency_mismatch_rejected(spec39, params):
    with pytest.raises(SysdynError, match="frequencies"):
        assemble_full_model(spec39, params.with_(omega0=2 * np.pi * 60))


# ---------------------------------------------------------------- damping


def test_damping_formula():
    f, z = dominant_mode_damping(np.array([-1 + 10j, -1 - 10j, -5.0, -20 + 3j, -20 - 3j]))
    assert z == pytest.approx(1 / np.sqrt(101), rel=1e-12)
    assert f == pytest.approx(10 / (2 * np.pi))
    with pytest.raises(SysdynError):
        dominant_mode_damping(np.array([-1.0, -2.0]))


def test_damping_decreases_as_tie_weakens(spec39, params, full39, weak39):
    zs = [dominant_mode_damping(full39)[1], dominant_mode_damping(weak39)[1]]
    for b in (40.0, 30.0):
        zs.append(dominant_mode_damping(assemble_full_model(set_susceptance(spec39, 32, 39, b), params))[1])
    assert all(a > b for a, b in zip(zs, zs[1:]))
    assert zs[-1] < 0 < zs[-2]


# ---------------------------------------------------------------- time simulation


def test_dt_validation(full39):
    with pytest.raises(SysdynError, match="dt must be"):
        simulate_perturbation(full39, full39, 0.01, dt_s=2 * MAX_DT)
    with pytest.raises(SysdynError, match="too large"):
        simulate_perturbation(full39, full39, 0.01, dt_s=MAX_DT)
    with pytest.raises(SysdynError, match="horizon"):
        simulate_perturbation(full39, full39, 0.0)


def test_no_change_no_motion(full39):
    tr = simulate_perturbation(full39, full39, 0.01)
    assert tr.peak() < 1e-10
    assert np.max(np.abs(tr.I_grid)) < 1e-10 and np.max(np.abs(tr.U_term)) < 1e-10


def test_trajectory_shape_and_csv(full39, weak39):
    tr = simulate_perturbation(full39, weak39, 0.002, record_every=5)
    assert len(tr.t) == 41 and tr.P_E.shape == (41, 9) and tr.I_grid.shape == (41, 9, 2)
    assert tr.t[-1] == pytest.approx(0.002)
    rows = tr.to_csv().splitlines()
    assert rows[0] == "t," + ",".join(f"P_E_{i}" for i in range(1, 10)) and len(rows) == 42
    assert tr.peak() == 0.0 or np.allclose(tr.P_E[0], 0, atol=1e-12)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.2, 3.0))
def test_linear_in_injection(full39, weak39, k):
    a = simulate_perturbation(full39, weak39, 0.003)
    b = simulate_perturbation(full39, weak39, 0.003, scale=k)
    assert np.allclose(b.P_E, k * a.P_E, rtol=1e-8, atol=1e-12)


def test_weakened_tie_response_decays(full39, weak39):
    tr = simulate_perturbation(full39, weak39, 0.4, record_every=50)
    n = len(tr.t)
    early = np.max(np.abs(tr.P_E[: n // 4]))
    late = np.max(np.abs(tr.P_E[-n // 8:] - tr.P_E[-1]))
    assert early > 1e-4 and late < 0.2 * early


def test_unstable_tie_response_grows(spec39, params, full39):
    bad = assemble_full_model(set_susceptance(spec39, 32, 39, 30.0), params)
    tr = simulate_perturbation(full39, bad, 0.6, record_every=100)
    n = len(tr.t)
    assert np.max(np.abs(tr.P_E[-n // 6:])) > 3 * np.max(np.abs(tr.P_E[: n // 6]))

"""Analysis pipelines behind the HTTP endpoints and the CLI.

Inputs are config file contents, outputs are the pydantic models of
``schemas``; nothing here touches the filesystem.
"""
from __future__ import annotations

import hashlib
import math
import os
from datetime import datetime, timezone

import numpy as np

from . import modal, sensitivity, sysdyn
from .converter import ConverterError, converter_model, parse_converter
from .netgraph import (
    RELOCATION_NOTES, NetworkError, format_network, parse_network, reduce_network,
    relocate_converter, set_susceptance,
)
from .schemas import (
    AnalysisReport, AnalyzeRequest, SensRecord, SensRequest, SensResponse, SimulateRequest,
    SimulateResponse, SurfaceRequest, SurfaceResponse, WhatIfRequest, WhatIfResponse,
)
from .tfmatrix import PoleError

INPUT_ERRORS = (
    NetworkError, ConverterError, modal.ModalError, sensitivity.SensitivityError,
    sysdyn.SysdynError, PoleError, ValueError,
)


class ServiceError(ValueError):
    pass


def sig6(x: float) -> float:
    return float(f"{x:.6g}") if math.isfinite(x) else x


def fmt6(x: float) -> str:
    return f"{x:.6g}"


def _formatter(precision: str):
    return repr if precision == "full" else fmt6


def _round(obj, precision: str):
    if precision == "full":
        return obj
    if isinstance(obj, float):
        return sig6(obj)
    if isinstance(obj, dict):
        return {k: _round(v, precision) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return type(obj)(_round(v, precision) for v in obj)
    return obj


def fingerprint(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


def timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def _guard(fn):
    def wrapped(*a, **kw):
        try:
            return fn(*a, **kw)
        except ServiceError:
            raise
        except INPUT_ERRORS as exc:
            raise ServiceError(str(exc)) from exc
        except np.linalg.LinAlgError as exc:
            raise ServiceError(f"linear algebra failure: {exc}") from exc

    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


def _load(network: str, converter: str | None):
    spec = parse_network(network)
    params = parse_converter(converter) if converter is not None else None
    if params is not None and params.omega0 != spec.omega0:
        raise ServiceError("converter omega0 differs from the network omega0")
    return spec, params


def _report(spec, params, net_text, conv_text, U_mag=1.0, precision="6") -> AnalysisReport:
    cm = converter_model(params, U_mag)
    line = spec.line()
    decomp = modal.decompose(reduce_network(spec).Q_red)
    res = modal.system_stable(decomp, cm, line)
    note = ""
    try:
        lam_c = modal.critical_lambda(cm, line)
    except modal.NoCriticalValue as exc:
        lam_c, note = None, str(exc)
    op = cm.op
    raw = {
        "schema": 1,
        "lambdas": [float(x) for x in decomp.lambdas],
        "lambda_1": float(decomp.lambdas[0]),
        "lambda_C": lam_c,
        "lambda_C_note": note,
        "stable": res.stable,
        "verdict": "stable" if res.stable else "unstable",
        "dominant_margin": float(res.dominant.margin),
        "modes": [
            {
                "k": r.k,
                "lambda": float(r.lambda_k),
                "margin": float(r.margin),
                "stable": r.stable,
                "peak_omega": r.peak_omega,
                "poles": [(float(z.real), float(z.imag)) for z in r.poles],
            }
            for r in res.reports
        ],
        "operating_point": {
            k: float(getattr(op, k))
            for k in ("V_d0", "V_q0", "I_Cd0", "I_Cq0", "delta0", "U_d0", "U_q0", "I_d0", "I_q0", "U_mag")
        },
        "timestamp": timestamp(),
        "fingerprints": {"network": fingerprint(net_text), "converter": fingerprint(conv_text)},
    }
    return AnalysisReport.model_validate(_round(raw, precision))


@_guard
def analyze(req: AnalyzeRequest) -> AnalysisReport:
    spec, params = _load(req.network, req.converter)
    return _report(spec, params, req.network, req.converter, req.U_mag, req.precision)


@_guard
def sens(req: SensRequest) -> SensResponse:
    spec, params = _load(req.network, req.converter)
    lam1 = sensitivity.lambda1(spec)
    fmt = _formatter(req.precision)
    if req.format == "csv" and req.node_class in ("interior", "converter", "converter-ground", "interior-ground"):
        M = sensitivity.sensitivity_matrix(spec, req.node_class)
        return SensResponse(lambda_1=_round(lam1, req.precision), csv=M.to_csv(fmt))
    recs = sensitivity.rank_reinforcements(spec, req.node_class, req.existing_only)
    if params is not None:
        cm = converter_model(params)
        slope = sensitivity.margin_slope(cm, lam1, spec.line())
        for r in recs:
            r["dmargin_dB"] = slope * r["dlambda1_dB"]
    recs = _round(recs, req.precision)
    if req.format == "csv":
        cols = ["i", "j", "class", "dlambda1_dB", "exists"] + (["dmargin_dB"] if params is not None else [])
        rows = [",".join(cols)]
        for r in recs:
            rows.append(",".join(
                fmt(r[c]) if isinstance(r[c], float) else str(r[c]).lower() if isinstance(r[c], bool) else str(r[c])
                for c in cols
            ))
        return SensResponse(lambda_1=_round(lam1, req.precision), csv="\n".join(rows) + "\n")
    return SensResponse(lambda_1=_round(lam1, req.precision), records=[SensRecord.model_validate(r) for r in recs])


@_guard
def whatif(req: WhatIfRequest) -> WhatIfResponse:
    spec, params = _load(req.network, req.converter)
    mode = note = None
    if req.edge is not None:
        i, j = req.edge
        after = set_susceptance(spec, i, j, req.to)
        change = f"B({i},{j}): {spec.susceptance(i, j)!r} -> {float(req.to)!r}"
    else:
        c, node = req.move
        after = relocate_converter(spec, c, node, tie_B=req.tie_b, mode=req.mode)
        mode, note = req.mode, RELOCATION_NOTES[req.mode]
        change = f"converter {c} moved to node {node}"
    after_text = format_network(after)
    return WhatIfResponse(
        change=change,
        relocation_mode=mode,
        relocation_note=note,
        before=_report(spec, params, req.network, req.converter, precision=req.precision),
        after=_report(after, params, after_text, req.converter, precision=req.precision),
        network_after=after_text,
    )


@_guard
def simulate(req: SimulateRequest) -> SimulateResponse:
    spec, params = _load(req.network, req.converter)
    i, j = req.edge
    before = sysdyn.assemble_full_model(spec, params)
    after = sysdyn.assemble_full_model(set_susceptance(spec, i, j, req.to), params)
    tr = sysdyn.simulate_perturbation(before, after, req.horizon, req.dt, record_every=req.record_every)

    def damp(m):
        try:
            return _round(tuple(sysdyn.dominant_mode_damping(m)), req.precision)
        except sysdyn.SysdynError:
            return None

    return SimulateResponse(
        stable_after=bool(np.max(after.eigenvalues().real) < 0),
        damping_before=damp(before),
        damping_after=damp(after),
        csv=tr.to_csv(_formatter(req.precision)),
    )


@_guard
def surface(req: SurfaceRequest) -> SurfaceResponse:
    params = parse_converter(req.converter)
    b0, b1, nb = req.bw_range
    l0, l1, nl = req.lambda_range
    if nb < 1 or nl < 1:
        raise ServiceError("grid sizes must be >= 1")
    bws = np.linspace(b0, b1, int(nb))
    lams = np.linspace(l0, l1, int(nl))
    from .netgraph import LineDynamics

    S = modal.margin_surface(params, bws, lams, LineDynamics(tau=req.tau, omega0=params.omega0))
    fmt = _formatter(req.precision)
    rows = ["omega_BW,lambda,margin"]
    for a, bw in enumerate(bws):
        for b, lam in enumerate(lams):
            rows.append(f"{fmt(float(bw))},{fmt(float(lam))},{fmt(float(S[a, b]))}")
    return SurfaceResponse(csv="\n".join(rows) + "\n")

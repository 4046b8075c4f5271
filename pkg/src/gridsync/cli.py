"""Command-line client.

Runs the analysis in-process by default; with ``--url`` (or GRIDSYNC_URL)
the same request is sent to a running ``gridsync serve`` instance.
Exit codes: 0 stable, 2 unstable, 1 error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_STABLE, EXIT_ERROR, EXIT_UNSTABLE = 0, 1, 2


class CliError(Exception):
    pass


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'i,j', got {text!r}") from None
    return a, b


def _range(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, n = text.split(",")
        return float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi,n', got {text!r}") from None


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None


def _dispatch(endpoint: str, payload: dict, url: str | None) -> dict:
    if url:
        import httpx

        try:
            r = httpx.post(url.rstrip("/") + endpoint, json=payload, timeout=600)
        except httpx.HTTPError as exc:
            raise CliError(f"cannot reach {url}: {exc}") from None
        if r.status_code != 200:
            try:
                detail = r.json().get("detail")
            except ValueError:
                detail = r.text
            raise CliError(str(detail))
        return r.json()

    from . import schemas, service

    table = {
        "/analyze": (schemas.AnalyzeRequest, service.analyze),
        "/sensitivity": (schemas.SensRequest, service.sens),
        "/whatif": (schemas.WhatIfRequest, service.whatif),
        "/simulate": (schemas.SimulateRequest, service.simulate),
        "/surface": (schemas.SurfaceRequest, service.surface),
    }
    model, fn = table[endpoint]
    try:
        req = model.model_validate(payload)
        return fn(req).model_dump(mode="json", by_alias=True, exclude_none=endpoint == "/sensitivity")
    except service.ServiceError as exc:
        raise CliError(str(exc)) from None
    except ValueError as exc:  # pydantic validation
        raise CliError(str(exc)) from None


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def cmd_analyze(a) -> int:
    payload = {"network": _read(a.network), "converter": _read(a.converter), "U_mag": a.u_mag, "precision": a.precision}
    rep = _dispatch("/analyze", payload, a.url)
    _emit(_dumps(rep), a.out)
    return EXIT_STABLE if rep["stable"] else EXIT_UNSTABLE


def cmd_sens(a) -> int:
    payload = {
        "network": _read(a.network),
        "converter": _read(a.converter) if a.converter else None,
        "class": a.node_class,
        "existing_only": a.existing_only,
        "format": a.format,
        "precision": a.precision,
    }
    res = _dispatch("/sensitivity", payload, a.url)
    if a.top and res.get("records"):
        res["records"] = res["records"][: a.top]
    _emit(res["csv"] if a.format == "csv" else _dumps(res["records"]), a.out)
    return EXIT_STABLE


def cmd_whatif(a) -> int:
    if (a.edge is None) == (a.move is None):
        raise CliError("give exactly one of --edge/--to or --move")
    if a.edge is not None and a.to is None:
        raise CliError("--edge needs --to")
    payload = {
        "network": _read(a.network),
        "converter": _read(a.converter),
        "edge": a.edge,
        "to": a.to,
        "move": a.move,
        "mode": a.mode,
        "tie_b": a.tie_b,
        "precision": a.precision,
    }
    res = _dispatch("/whatif", payload, a.url)
    if a.network_out:
        with open(a.network_out, "w") as fh:
            fh.write(res["network_after"])
    summary = {
        "schema": res["schema"],
        "change": res["change"],
        "relocation_mode": res["relocation_mode"],
        "relocation_note": res["relocation_note"],
        "lambda_1": {"before": res["before"]["lambda_1"], "after": res["after"]["lambda_1"]},
        "stable": {"before": res["before"]["stable"], "after": res["after"]["stable"]},
        "dominant_margin": {"before": res["before"]["dominant_margin"], "after": res["after"]["dominant_margin"]},
        "before": res["before"],
        "after": res["after"],
    }
    _emit(_dumps(summary), a.out)
    return EXIT_STABLE if res["after"]["stable"] else EXIT_UNSTABLE


def cmd_simulate(a) -> int:
    payload = {
        "network": _read(a.network),
        "converter": _read(a.converter),
        "edge": a.edge,
        "to": a.to,
        "horizon": a.horizon,
        "dt": a.dt,
        "record_every": a.record_every,
        "precision": a.precision,
    }
    res = _dispatch("/simulate", payload, a.url)
    _emit(res["csv"], a.out)
    for tag in ("before", "after"):
        d = res[f"damping_{tag}"]
        if d is not None:
            print(f"dominant mode {tag}: {d[0]} Hz, damping ratio {d[1]}", file=sys.stderr)
    return EXIT_STABLE if res["stable_after"] else EXIT_UNSTABLE


def cmd_surface(a) -> int:
    payload = {
        "converter": _read(a.converter),
        "bw_range": a.bw_range,
        "lambda_range": a.lambda_range,
        "precision": a.precision,
    }
    if a.network:
        from .netgraph import parse_network

        payload["tau"] = parse_network(_read(a.network)).tau
    res = _dispatch("/surface", payload, a.url)
    _emit(res["csv"], a.out)
    return EXIT_STABLE


def cmd_serve(a) -> int:
    import uvicorn

    uvicorn.run("gridsync.api:app", host=a.host, port=a.port, log_level="warning")
    return EXIT_STABLE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridsync", description="PLL-synchronization stability of converter networks")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, converter_required=True, network=True):
        if network:
            sp.add_argument("network", help="network file ([nodes]/[edges] format)")
        if converter_required:
            sp.add_argument("converter", help="converter parameter file (key = value)")
        sp.add_argument("--precision", choices=["6", "full"], default="6", help="significant digits of numeric output")
        sp.add_argument("--out", "-o", help="write output to this file instead of stdout")
        sp.add_argument("--url", default=os.environ.get("GRIDSYNC_URL"), help="send the request to a running service")

    sp = sub.add_parser("analyze", help="full stability report")
    common(sp)
    sp.add_argument("--u-mag", type=float, default=1.0, help="infinite-bus voltage magnitude (p.u.)")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("sens", help="rank line reinforcements by d lambda_1 / dB")
    common(sp, converter_required=False)
    sp.add_argument("converter", nargs="?", help="optional converter file; adds margin sensitivities")
    sp.add_argument("--class", dest="node_class", default="all",
                    choices=["all", "interior", "converter", "converter-ground", "interior-ground", "converter-interior"])
    sp.add_argument("--existing-only", action="store_true", help="only lines present in the network")
    sp.add_argument("--format", choices=["json", "csv"], default="json")
    sp.add_argument("--top", type=int, default=0, help="keep only the first N records (json)")
    sp.set_defaults(func=cmd_sens)

    sp = sub.add_parser("whatif", help="before/after report for one network change")
    common(sp)
    sp.add_argument("--edge", type=_pair, help="line i,j to change")
    sp.add_argument("--to", type=float, help="new susceptance (0 removes the line)")
    sp.add_argument("--move", type=_pair, help="conv,node: relocate a converter")
    sp.add_argument("--mode", default="merge", choices=["merge", "tie", "replace"], help="relocation reading")
    sp.add_argument("--tie-b", type=float, help="tie susceptance for --mode tie/replace")
    sp.add_argument("--network-out", help="write the modified network file here")
    sp.set_defaults(func=cmd_whatif)

    sp = sub.add_parser("simulate", help="linearized response to a line change (CSV of P_E)")
    common(sp)
    sp.add_argument("--edge", type=_pair, required=True)
    sp.add_argument("--to", type=float, required=True)
    sp.add_argument("--horizon", type=float, default=1.0, help="seconds")
    sp.add_argument("--dt", type=float, default=1e-5, help="RK4 step, seconds")
    sp.add_argument("--record-every", type=int, default=10, help="keep every Nth step")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("surface", help="margin over PLL bandwidth and lambda grids")
    common(sp, converter_required=False, network=False)
    sp.add_argument("network", nargs="?", help="optional network file (only tau is used)")
    sp.add_argument("converter")
    sp.add_argument("--bw-range", type=_range, default=(50.0, 150.0, 5), help="lo,hi,n in rad/s")
    sp.add_argument("--lambda-range", type=_range, default=(2.0, 6.0, 9), help="lo,hi,n")
    sp.set_defaults(func=cmd_surface)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

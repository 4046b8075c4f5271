"""HTTP front end of the analysis service."""
from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import __version__, service
from .schemas import (
    AnalysisReport, AnalyzeRequest, SensRequest, SensResponse, SimulateRequest, SimulateResponse,
    SurfaceRequest, SurfaceResponse, WhatIfRequest, WhatIfResponse,
)

app = FastAPI(title="gridsync", version=__version__)


def _call(fn, req):
    try:
        return fn(req)
    except service.ServiceError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/analyze", response_model=AnalysisReport, response_model_by_alias=True)
def analyze(req: AnalyzeRequest):
    return _call(service.analyze, req)


@app.post("/sensitivity", response_model=SensResponse, response_model_by_alias=True, response_model_exclude_none=True)
def sensitivity(req: SensRequest):
    return _call(service.sens, req)


@app.post("/whatif", response_model=WhatIfResponse, response_model_by_alias=True)
def whatif(req: WhatIfRequest):
    return _call(service.whatif, req)


@app.post("/simulate", response_model=SimulateResponse, response_model_by_alias=True)
def simulate(req: SimulateRequest):
    return _call(service.simulate, req)


@app.post("/surface", response_model=SurfaceResponse, response_model_by_alias=True)
def surface(req: SurfaceRequest):
    return _call(service.surface, req)

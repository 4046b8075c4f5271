"""Request and response models shared by the HTTP service and the CLI."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

SCHEMA_VERSION = 1
Precision = Literal["6", "full"]


class Fingerprints(BaseModel):
    network: str
    converter: Optional[str] = None


class ModeOut(BaseModel):
    k: int
    lam: float = Field(alias="lambda")
    margin: float
    stable: bool
    peak_omega: Optional[float] = None
    poles: list[tuple[float, float]]

    model_config = {"populate_by_name": True}


class AnalysisReport(BaseModel):
    schema_: int = Field(SCHEMA_VERSION, alias="schema")
    lambdas: list[float]
    lambda_1: float
    lambda_C: Optional[float]
    lambda_C_note: str = ""
    stable: bool
    verdict: Literal["stable", "unstable"]
    dominant_margin: float
    modes: list[ModeOut]
    operating_point: dict[str, float]
    timestamp: str
    fingerprints: Fingerprints

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def _verdict_matches(self):
        if (self.verdict == "stable") != self.stable:
            raise ValueError("verdict does not match the stability flag")
        return self


class AnalyzeRequest(BaseModel):
    network: str
    converter: str
    U_mag: float = 1.0
    precision: Precision = "6"


class SensRequest(BaseModel):
    network: str
    converter: Optional[str] = None
    node_class: str = Field("all", alias="class")
    existing_only: bool = False
    format: Literal["json", "csv"] = "json"
    precision: Precision = "6"

    model_config = {"populate_by_name": True}


class SensRecord(BaseModel):
    i: int
    j: int
    class_: str = Field(alias="class")
    dlambda1_dB: float
    exists: bool
    dmargin_dB: Optional[float] = None

    model_config = {"populate_by_name": True}


class SensResponse(BaseModel):
    schema_: int = Field(SCHEMA_VERSION, alias="schema")
    lambda_1: float
    records: list[SensRecord] = []
    csv: Optional[str] = None

    model_config = {"populate_by_name": True}


class WhatIfRequest(BaseModel):
    network: str
    converter: str
    edge: Optional[tuple[int, int]] = None
    to: Optional[float] = None
    move: Optional[tuple[int, int]] = None
    mode: str = "merge"
    tie_b: Optional[float] = None
    precision: Precision = "6"

    @model_validator(mode="after")
    def _one_change(self):
        if (self.edge is None) == (self.move is None):
            raise ValueError("give exactly one of edge/to or move")
        if self.edge is not None and self.to is None:
            raise ValueError("edge needs a target susceptance 'to'")
        return self


class WhatIfResponse(BaseModel):
    schema_: int = Field(SCHEMA_VERSION, alias="schema")
    change: str
    relocation_mode: Optional[str] = None
    relocation_note: Optional[str] = None
    before: AnalysisReport
    after: AnalysisReport
    network_after: str

    model_config = {"populate_by_name": True}


class SimulateRequest(BaseModel):
    network: str
    converter: str
    edge: tuple[int, int]
    to: float
    horizon: float = 1.0
    dt: float = 1e-5
    record_every: int = Field(10, ge=1)
    precision: Precision = "6"


class SimulateResponse(BaseModel):
    schema_: int = Field(SCHEMA_VERSION, alias="schema")
    stable_after: bool
    damping_before: Optional[tuple[float, float]]
    damping_after: Optional[tuple[float, float]]
    csv: str

    model_config = {"populate_by_name": True}


class SurfaceRequest(BaseModel):
    converter: str
    bw_range: tuple[float, float, int] = (50.0, 150.0, 5)
    lambda_range: tuple[float, float, int] = (2.0, 6.0, 9)
    tau: float = 0.0
    precision: Precision = "6"


class SurfaceResponse(BaseModel):
    schema_: int = Field(SCHEMA_VERSION, alias="schema")
    csv: str

    model_config = {"populate_by_name": True}

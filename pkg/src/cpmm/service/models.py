"""Pydantic request/response models for the market service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class RunRequest(BaseModel):
    scenario: dict[str, Any] | None = None  # canonical scenario document
    scenario_name: str | None = None  # bundled name when no document given
    seed: int | None = None
    full_protocol: bool = False
    include_series: bool = False


class SeriesPayload(BaseModel):
    price: list[float]
    abs_error: list[float]
    welfare: list[float]
    cumulative_regret: list[float]


class RunResponse(BaseModel):
    scenario: str
    seed: int
    summary: dict[str, Any]
    buyer_utilities: dict[str, float]
    seller_profits: dict[str, float]
    series: SeriesPayload | None = None
    metrics_table: str | None = None


class ExperimentRequest(BaseModel):
    scenario: dict[str, Any] | None = None
    scenario_name: str | None = None
    seed: int | None = None


class ExperimentResponse(BaseModel):
    name: str
    passed: bool
    report: dict[str, Any]


class FixtureResultModel(BaseModel):
    name: str
    ok: bool
    detail: str = ""


class FixturesResponse(BaseModel):
    ok: bool
    results: list[FixtureResultModel]


class CertificateModel(BaseModel):
    serial: str
    issuer: str
    buyer: str
    seller: str
    capability: str
    payment: str
    buyer_signature: str
    seller_signature: str


class DemoResponse(BaseModel):
    transcript: list[str]
    certificate: CertificateModel
    audit_entries: int
    escrow_conserved: bool


class QuoteRequest(BaseModel):
    capability: str = "nlp.translation.v2"
    quality_request: dict[str, str] = Field(
        default_factory=lambda: {"latency": "100ms", "accuracy": "95%"}
    )


class DeliverResponse(BaseModel):
    invoice: str
    settled: bool
    failed_step: int | None = None
    reason: str | None = None
    penalty_fraction: float = 0.0
    escrow_state: str | None = None
    attestation: dict[str, Any] | None = None
    result: str | None = None


class RegistryEntryModel(BaseModel):
    agent_id: str
    capability_id: str
    spec_text: str = ""
    quality_region: list[list[float]] = Field(default_factory=lambda: [[0.0, 1.0], [0.0, 1.0]])
    attributes: list[dict[str, Any]] = Field(default_factory=list)
    disclosure: float = 1.0
    endpoint: str = ""


class DiscoverRequest(BaseModel):
    capability_id: str
    min_quality: dict[str, float] = Field(default_factory=dict)
    max_base_price: float | None = None
    required_methods: list[str] = Field(default_factory=list)


class DiscoverResponse(BaseModel):
    agent_ids: list[str]

"""FastAPI service wrapping the market stack.

Endpoints cover the four operator commands (run, experiment, verify-fixtures,
demo), an agent registry, and a live X402/H402 payment flow: /market/quote
answers 402 with the challenge headers, and /market/deliver accepts H402
payment headers, executes the simulated service, attests quality, runs the
five-step verification and settles through the escrow rail.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
from typing import Any

from fastapi import FastAPI, HTTPException, Request, Response

from .. import __version__
from ..canonical import canonical_bytes
from ..demo import run_demo
from ..economics import CapabilitySpec, Dimension, DimensionRegistry, QualityVector
from ..escrow import EscrowEvent, EscrowManager
from ..experiments import EXPERIMENT_NAMES, run_experiment
from ..fixtures import ATTESTER_KEY, TRUST_ROOT_KEY, attester_chain, reference_proposal, verify_fixtures
from ..market import metrics_table, run_market
from ..money import Money
from ..payloads import QualityMeasurement, make_attestation, sla_hash
from ..registry import Attribute, DiscoveryQuery, Registry, RegistryEntry, RegistryError
from ..scenario import ScenarioError, scenario_from_record
from ..scenarios_bundled import bundled_scenario
from ..x402 import (
    H402PaymentHeaders,
    H402Wire,
    SettlementInstruction,
    SpentRegistry,
    WireError,
    X402Challenge,
    encode_402,
    verify_payment,
)
from .models import (
    CertificateModel,
    DeliverResponse,
    DemoResponse,
    DiscoverRequest,
    DiscoverResponse,
    ExperimentRequest,
    ExperimentResponse,
    FixtureResultModel,
    FixturesResponse,
    HealthResponse,
    QuoteRequest,
    RegistryEntryModel,
    RunRequest,
    RunResponse,
    SeriesPayload,
)

SERVICE_DIMS = DimensionRegistry((
    Dimension("latency", "ms", higher_is_better=False, cap=200.0),
    Dimension("accuracy", "%", higher_is_better=True, cap=100.0),
))


def _stringify_keys(value):
    if isinstance(value, dict):
        return {str(k): _stringify_keys(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_stringify_keys(v) for v in value]
    return value


def report_record(report) -> dict[str, Any]:
    return _stringify_keys(dataclasses.asdict(report))


class PaymentGate:
    """Server-side x402 rail state: open challenges, escrow, replay guards."""

    def __init__(self):
        self.proposal = reference_proposal()
        self.rules = self.proposal.service_level_agreement.rules()
        self.sla_hash = sla_hash(self.rules)
        self.escrow = EscrowManager()
        self.spent = SpentRegistry()
        self.challenges: dict[str, X402Challenge] = {}
        self._invoice_counter = itertools.count(1)
        self._attestation_counter = itertools.count(1)

    def issue_challenge(self, quality_request: dict[str, str]) -> tuple[str, X402Challenge]:
        invoice = f"invoice-{next(self._invoice_counter):06d}"
        q = QualityVector(tuple(
            SERVICE_DIMS.dims[i].normalize(_parse_threshold(quality_request, SERVICE_DIMS.dims[i]))
            for i in range(len(SERVICE_DIMS))
        ))
        from ..payloads import price_quote

        amount = price_quote(self.proposal, q, 1, SERVICE_DIMS)
        if amount.minor <= 0:
            amount = Money(1, amount.currency, amount.precision)
        challenge = X402Challenge(
            amount=amount,
            methods=("H402",),
            payment_address=f"H402://payment.endpoint/invoice/{invoice}",
            sla_vector=tuple(sorted(quality_request.items())),
            refund_policy="automatic",
            economic_proposal_b64=_b64(canonical_bytes(self.proposal.to_record())),
            negotiation_token=f"negotiate-{invoice}",
        )
        self.challenges[invoice] = challenge
        return invoice, challenge

    def deliver(self, headers: H402PaymentHeaders, simulate: dict[str, str]) -> DeliverResponse:
        challenge = self.challenges.get(headers.invoice)
        if challenge is None:
            raise HTTPException(status_code=404, detail=f"unknown invoice {headers.invoice!r}")
        self.spent.spend(headers.payment_key, headers.invoice)

        measurements = (
            QualityMeasurement("latency", simulate.get("latency", "85ms"),
                               "client_side_timing", "±5ms"),
            QualityMeasurement("accuracy", simulate.get("accuracy", "97.3%"),
                               "reference_comparison", "±1.2%"),
        )
        attestation = make_attestation(
            f"att-{next(self._attestation_counter):06d}", headers.invoice,
            "2025-07-27T00:59:43Z", measurements, self.rules,
            "attester:sim-tee-1", ATTESTER_KEY, attester_chain(),
        )
        result = verify_payment(
            headers, attestation, self.rules, self.sla_hash,
            TRUST_ROOT_KEY.public_b64, SERVICE_DIMS, payee="service:provider",
        )
        acct = self.escrow.open(f"payer:{headers.payment_key[:12]}", "service:provider",
                                headers.amount, instruction_id=headers.invoice)
        self.escrow.fund(acct.account_id, headers.amount)
        if result.ok:
            acct = self.escrow.apply(acct.account_id, EscrowEvent("verify_pass"))
        elif result.failed_step == 3 and 0.0 < result.penalty_fraction < 1.0:
            acct = self.escrow.apply(
                acct.account_id, EscrowEvent("verify_fail", result.penalty_fraction)
            )
        else:
            acct = self.escrow.apply(acct.account_id, EscrowEvent("verify_fail", 1.0))
        return DeliverResponse(
            invoice=headers.invoice,
            settled=result.ok or result.failed_step == 3,
            failed_step=result.failed_step,
            reason=result.reason,
            penalty_fraction=result.penalty_fraction,
            escrow_state=acct.state,
            attestation=attestation.to_record(),
            result="service delivered" if result.ok or result.failed_step == 3 else None,
        )


def _parse_threshold(quality_request: dict[str, str], dim: Dimension) -> float:
    from ..payloads import parse_measured

    raw = quality_request.get(dim.name)
    if raw is None:
        return dim.cap / 2
    return parse_measured(raw)[0]


def _b64(data: bytes) -> str:
    import base64

    return base64.b64encode(data).decode("ascii")


def _resolve_scenario(doc: dict | None, name: str | None):
    if doc is not None:
        return scenario_from_record(doc)
    return bundled_scenario(name or "default")


def create_app() -> FastAPI:
    app = FastAPI(title="cpmm market service", version=__version__)
    app.state.registry = Registry()
    app.state.gate = PaymentGate()

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/runs", response_model=RunResponse)
    def runs(request: RunRequest):
        try:
            config = _resolve_scenario(request.scenario, request.scenario_name)
        except (ScenarioError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if request.seed is not None:
            config = config.with_seed(request.seed)
        if request.full_protocol:
            config = dataclasses.replace(config, full_protocol=True, collect_outcomes=True)
        metrics = run_market(config)
        series = None
        table = None
        if request.include_series:
            series = SeriesPayload(
                price=metrics.prices, abs_error=metrics.errors,
                welfare=metrics.welfare, cumulative_regret=metrics.regret,
            )
            table = metrics_table(metrics)
        return RunResponse(
            scenario=config.name,
            seed=config.seed,
            summary=metrics.summary_record(),
            buyer_utilities=metrics.buyer_utilities,
            seller_profits=metrics.seller_profits,
            series=series,
            metrics_table=table,
        )

    @app.post("/experiments/{name}", response_model=ExperimentResponse)
    def experiments(name: str, request: ExperimentRequest):
        if name not in EXPERIMENT_NAMES:
            raise HTTPException(status_code=422, detail=f"unknown experiment {name!r}")
        try:
            config = _resolve_scenario(request.scenario, request.scenario_name)
        except (ScenarioError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if request.seed is not None:
            config = config.with_seed(request.seed)
        report = run_experiment(name, config)
        return ExperimentResponse(name=name, passed=bool(report.passed), report=report_record(report))

    @app.post("/fixtures/verify", response_model=FixturesResponse)
    def fixtures_verify():
        results = verify_fixtures()
        return FixturesResponse(
            ok=all(r.ok for r in results),
            results=[FixtureResultModel(name=r.name, ok=r.ok, detail=r.detail) for r in results],
        )

    @app.post("/demo", response_model=DemoResponse)
    def demo():
        result = run_demo()
        return DemoResponse(
            transcript=result.transcript,
            certificate=CertificateModel(**result.certificate.to_record()),
            audit_entries=result.audit_entries,
            escrow_conserved=result.escrow_conserved,
        )

    # --- x402 payment flow ---

    @app.post("/market/quote")
    def market_quote(request: QuoteRequest):
        invoice, challenge = app.state.gate.issue_challenge(request.quality_request)
        headers = {name: value for name, value in encode_402(challenge)}
        body = json.dumps({"detail": "payment required", "invoice": invoice}).encode()
        return Response(
            content=body, status_code=402, media_type="application/json", headers=headers
        )

    @app.post("/market/deliver", response_model=DeliverResponse)
    async def market_deliver(request: Request):
        lower_to_canonical = {name.lower(): name for name in (
            "H402-Payment-Key", "H402-Payment-Amount", "H402-Payment-Currency",
            "H402-Payment-Invoice", "H402-Payment-Signature", "H402-Payment-Timestamp",
            "H402-Quality-Request", "H402-SLA-Acceptance",
        )}
        raw = [
            (lower_to_canonical[name.lower()], value)
            for name, value in request.headers.items()
            if name.lower() in lower_to_canonical
        ]
        try:
            headers = H402PaymentHeaders.from_wire(H402Wire.parse(raw))
        except WireError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        body = {}
        if await request.body():
            body = await request.json()
        try:
            return app.state.gate.deliver(headers, body.get("simulate", {}))
        except WireError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    # --- registry ---

    @app.post("/registry/agents")
    def register_agent(entry: RegistryEntryModel):
        try:
            app.state.registry.register(RegistryEntry(
                entry.agent_id,
                CapabilitySpec(entry.capability_id, entry.spec_text,
                               tuple(tuple(b) for b in entry.quality_region)),
                tuple(Attribute(a["name"], a["value"], int(a["sensitivity"]))
                      for a in entry.attributes),
                entry.disclosure,
                endpoint=entry.endpoint,
            ))
        except RegistryError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"registered": entry.agent_id}

    @app.get("/registry/agents")
    def list_agents():
        return {"agents": [e.agent_id for e in app.state.registry.entries]}

    @app.post("/registry/discover", response_model=DiscoverResponse)
    def discover(request: DiscoverRequest):
        query = DiscoveryQuery(
            request.capability_id, dict(request.min_quality),
            request.max_base_price, tuple(request.required_methods),
        )
        return DiscoverResponse(agent_ids=[e.agent_id for e in app.state.registry.discover(query)])

    @app.get("/registry/snapshot")
    def snapshot():
        return Response(content=app.state.registry.export_snapshot(),
                        media_type="application/json")

    return app


app = create_app()

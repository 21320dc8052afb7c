"""Payload record serialization, commitment, SLA and pricing tests."""

import dataclasses
import random

import pytest

from cpmm.canonical import CanonicalError, canonical_bytes, normalize_timestamp
from cpmm.economics import Dimension, DimensionRegistry, QualityVector
from cpmm.keys import SigningKey
from cpmm.money import Money
from cpmm.payloads import (
    AttestationSource,
    Certificate,
    EconomicProposal,
    PayloadError,
    Penalty,
    PricingModel,
    QualityAdjustment,
    QualityAttestation,
    QualityMeasurement,
    QualityMultiplier,
    SlaCompliance,
    SlaRule,
    VolumeDiscount,
    canonical_serialize,
    commit,
    compute_final_amount,
    evaluate_sla,
    make_attestation,
    measurements_hash,
    price_quote,
    sla_hash,
    validate_chain,
    verify_attestation,
    verify_commitment,
)

from record_gen import rand_attestation, rand_ep, rand_instruction

DIMS = DimensionRegistry((
    Dimension("latency", "ms", higher_is_better=False, cap=200.0),
    Dimension("accuracy", "%", higher_is_better=True, cap=100.0),
))


def shuffle_keys(value, rng):
    """Rebuild a JSON-shaped value with randomized dict insertion order."""
    if isinstance(value, dict):
        items = list(value.items())
        rng.shuffle(items)
        return {k: shuffle_keys(v, rng) for k, v in items}
    if isinstance(value, list):
        return [shuffle_keys(v, rng) for v in value]
    return value


class TestCanonicalSerialize:
    def test_insertion_order_invariance(self):
        record = {"b": 1, "a": {"y": [1, 2], "x": "s"}}
        permuted = {"a": {"x": "s", "y": [1, 2]}, "b": 1}
        assert canonical_bytes(record) == canonical_bytes(permuted)

    def test_precision_padding(self):
        assert Money(1, "USD", 3).format() == "0.001"
        assert Money(1000, "USD", 3).format() == "1.000"

    def test_nan_rejected(self):
        with pytest.raises(CanonicalError):
            canonical_bytes({"x": float("nan")})

    def test_timestamp_normalization(self):
        assert normalize_timestamp("2025-01-15T12:00:00+01:00") == "2025-01-15T11:00:00Z"
        assert normalize_timestamp("2025-01-15T12:00:00Z") == "2025-01-15T12:00:00Z"

    def test_record_permutation_fuzz(self):
        rng = random.Random(99)
        for i in range(300):
            record = rand_ep(random.Random(1000 + i), signed=False).to_record()
            assert canonical_bytes(record) == canonical_bytes(shuffle_keys(record, rng))


class TestRoundTrip:
    def test_ep_round_trip_fuzz(self):
        for i in range(170):
            ep = rand_ep(random.Random(i))
            assert EconomicProposal.from_record(ep.to_record()) == ep

    def test_instruction_round_trip_fuzz(self):
        for i in range(170):
            instr = rand_instruction(random.Random(i))
            assert type(instr).from_record(instr.to_record()) == instr

    def test_attestation_round_trip_fuzz(self):
        for i in range(170):
            att = rand_attestation(random.Random(i))
            assert QualityAttestation.from_record(att.to_record()) == att

    def test_unknown_field_rejected(self):
        record = rand_ep(random.Random(5)).to_record()
        record["surprise"] = 1
        with pytest.raises(PayloadError):
            EconomicProposal.from_record(record)

    def test_missing_field_rejected(self):
        record = rand_ep(random.Random(5)).to_record()
        del record["pricing_model"]
        with pytest.raises(PayloadError):
            EconomicProposal.from_record(record)


class TestCommitment:
    def test_commit_verify_round_trip(self):
        ep = rand_ep(random.Random(1), signed=False)
        signed = ep.committed(SigningKey.from_seed("seller-1"))
        assert verify_commitment(signed)

    def test_any_field_mutation_fails(self):
        ep = rand_ep(random.Random(2), signed=False).committed(SigningKey.from_seed("k"))
        mutated = dataclasses.replace(ep, nanda_capability_hash="0" * 64)
        assert not verify_commitment(mutated)

    def test_wrong_public_key_fails(self):
        ep = rand_ep(random.Random(3), signed=False)
        commitment = commit(ep, SigningKey.from_seed("right"))
        forged = dataclasses.replace(
            commitment, public_key=SigningKey.from_seed("wrong").public_b64
        )
        assert not verify_commitment(ep, forged)

    def test_logically_equal_records_same_hash(self):
        a = rand_ep(random.Random(4), signed=False)
        b = EconomicProposal.from_record(a.to_record())
        key = SigningKey.from_seed("k")
        assert commit(a, key).commitment_hash == commit(b, key).commitment_hash

    def test_commitment_binding_mutation_fuzz(self):
        key = SigningKey.from_seed("bind")
        seen = {}
        for i in range(60):
            ep = rand_ep(random.Random(7000 + i), signed=False)
            digest = commit(ep, key).commitment_hash
            assert digest not in seen or seen[digest] == ep.to_record()
            seen[digest] = ep.to_record()


class TestSlaGrammar:
    def test_paper_strings_round_trip(self):
        rule = SlaRule.parse("latency", "< 100ms", "5% price reduction per 10ms over")
        assert rule.emit_guarantee() == "< 100ms"
        assert rule.emit_penalty() == "5% price reduction per 10ms over"
        rule2 = SlaRule.parse("accuracy", "> 95%", "full refund if < 90%")
        assert rule2.emit_guarantee() == "> 95%"
        assert rule2.emit_penalty() == "full refund if < 90%"

    def test_fixed_percent_form(self):
        rule = SlaRule.parse("latency", "<= 50ms", "7% price reduction")
        assert rule.penalty.kind == "fixed_percent"
        assert rule.emit_penalty() == "7% price reduction"

    def test_garbage_rejected(self):
        with pytest.raises(PayloadError):
            SlaRule.parse("latency", "about 100ms", "5% off")


def att_with(*measurements):
    return QualityAttestation(
        "1.0", "att-1", "svc-1", "2025-01-15T12:00:00Z",
        tuple(QualityMeasurement(d, v, "client_side_timing", "±1ms") for d, v in measurements),
        SlaCompliance(True), AttestationSource(attester_id="att"),
    )


class TestEvaluateSla:
    LATENCY_RULE = SlaRule.parse("latency", "< 100ms", "5% price reduction per 10ms over")
    ACCURACY_RULE = SlaRule.parse("accuracy", "> 95%", "full refund if < 90%")

    def test_within_guarantee_compliant(self):
        report = evaluate_sla([self.LATENCY_RULE], att_with(("latency", "85ms")))
        assert report.compliant and report.penalty_fraction == 0.0

    def test_overage_steps_by_ceil(self):
        report = evaluate_sla([self.LATENCY_RULE], att_with(("latency", "120ms")))
        assert report.penalty_fraction == pytest.approx(0.10)
        assert report.violated_rules == ("latency",)

    def test_partial_step_rounds_up(self):
        report = evaluate_sla([self.LATENCY_RULE], att_with(("latency", "101ms")))
        assert report.penalty_fraction == pytest.approx(0.05)

    def test_full_refund_below(self):
        report = evaluate_sla([self.ACCURACY_RULE], att_with(("accuracy", "89%")))
        assert report.penalty_fraction == 1.0

    def test_violated_but_above_refund_floor(self):
        report = evaluate_sla([self.ACCURACY_RULE], att_with(("accuracy", "93%")))
        assert not report.compliant or report.penalty_fraction == 0.0
        assert report.violated_rules == ("accuracy",)
        assert report.penalty_fraction == 0.0  # breached but above the refund floor

    def test_penalties_sum_and_clamp(self):
        rules = [
            SlaRule.parse("latency", "< 100ms", "40% price reduction per 10ms over"),
            SlaRule.parse("accuracy", "> 95%", "full refund if < 90%"),
        ]
        report = evaluate_sla(rules, att_with(("latency", "130ms"), ("accuracy", "80%")))
        assert report.penalty_fraction == 1.0

    def test_missing_dimension_errors(self):
        with pytest.raises(PayloadError):
            evaluate_sla([self.LATENCY_RULE], att_with(("accuracy", "99%")))

    def test_monotonicity_in_overage(self):
        # worsening the measured value never decreases the penalty
        last = -1.0
        for ms in range(80, 220, 5):
            report = evaluate_sla([self.LATENCY_RULE], att_with(("latency", f"{ms}ms")))
            assert report.penalty_fraction >= last - 1e-12
            last = report.penalty_fraction


def plain_ep(base_minor=100, precision=2, multipliers=(), discounts=()):
    ep = rand_ep(random.Random(0), signed=False)
    return dataclasses.replace(
        ep,
        pricing_model=PricingModel("dynamic_quality_based", Money(base_minor, "USD", precision),
                                   tuple(multipliers), tuple(discounts)),
    )


class TestPriceQuote:
    def test_identity_pricing(self):
        ep = plain_ep()
        assert price_quote(ep, QualityVector.of(0.5, 0.5), 1, DIMS) == Money(100, "USD", 2)

    def test_linear_multiplier_hand_case(self):
        ep = plain_ep(multipliers=[QualityMultiplier("accuracy", "linear", {"slope": 2.0, "intercept": 0.0})])
        quote = price_quote(ep, QualityVector.of(0.0, 0.5), 1, DIMS)
        assert quote == Money(100, "USD", 2)

    def test_volume_discount_from_threshold(self):
        ep = plain_ep(discounts=[VolumeDiscount(100, 0.05)])
        assert price_quote(ep, QualityVector.of(0.5, 0.5), 150, DIMS) == Money(95, "USD", 2)
        assert price_quote(ep, QualityVector.of(0.5, 0.5), 99, DIMS) == Money(100, "USD", 2)

    def test_exponential_multiplier(self):
        # base 1.0, exponent -0.5 at q=1: 2^-0.5
        ep = plain_ep(base_minor=1000, precision=3,
                      multipliers=[QualityMultiplier("latency", "exponential", {"base": 1.0, "exponent": -0.5})])
        quote = price_quote(ep, QualityVector.of(1.0, 0.5), 1, DIMS)
        assert quote.minor == round(1000 * 2 ** -0.5)

    def test_monotone_in_quality_with_nonneg_slopes(self):
        ep = plain_ep(multipliers=[QualityMultiplier("accuracy", "linear", {"slope": 1.5, "intercept": 0.2})])
        quotes = [
            price_quote(ep, QualityVector.of(0.5, q / 10), 1, DIMS).minor for q in range(11)
        ]
        assert quotes == sorted(quotes)


class TestFinalAmount:
    def test_paper_adjustment_case(self):
        instr = rand_instruction(random.Random(1))
        instr = dataclasses.replace(
            instr,
            base_amount=Money(1000, "USD", 3),
            quality_adjustments=(QualityAdjustment("latency", "85ms", "+0.15"),),
        )
        assert compute_final_amount(instr) == Money(1150, "USD", 3)

    def test_no_adjustments(self):
        instr = dataclasses.replace(
            rand_instruction(random.Random(2)), base_amount=Money(777, "USD", 2),
            quality_adjustments=(),
        )
        assert compute_final_amount(instr) == Money(777, "USD", 2)

    def test_floor_at_zero(self):
        instr = dataclasses.replace(
            rand_instruction(random.Random(3)),
            base_amount=Money(100, "USD", 2),
            quality_adjustments=(QualityAdjustment("latency", "300ms", "-9.00"),),
        )
        assert compute_final_amount(instr) == Money(0, "USD", 2)

    def test_precision_mismatch_rejected(self):
        instr = dataclasses.replace(
            rand_instruction(random.Random(4)),
            base_amount=Money(100, "USD", 2),
            quality_adjustments=(QualityAdjustment("latency", "85ms", "+0.155"),),
        )
        with pytest.raises(PayloadError):
            compute_final_amount(instr)


class TestAttestation:
    ROOT = SigningKey.from_seed("trust-root")
    INTERMEDIATE = SigningKey.from_seed("intermediate")
    LEAF = SigningKey.from_seed("leaf-attester")

    def chain(self):
        root_cert = Certificate.issue("root", self.ROOT, "root", self.ROOT)
        mid_cert = Certificate.issue("mid", self.INTERMEDIATE, "root", self.ROOT)
        leaf_cert = Certificate.issue("leaf", self.LEAF, "mid", self.INTERMEDIATE)
        return (leaf_cert.encode(), mid_cert.encode(), root_cert.encode())

    def test_make_and_verify(self):
        att = make_attestation(
            "att-1", "svc-1", "2025-01-15T12:00:00Z",
            (QualityMeasurement("latency", "85ms", "client_side_timing", "±5ms"),),
            [SlaRule.parse("latency", "< 100ms", "5% price reduction per 10ms over")],
            "leaf", self.LEAF, self.chain(),
        )
        assert att.sla_compliance.overall_compliance
        assert verify_attestation(att, self.ROOT.public_b64)

    def test_tampered_measurement_fails(self):
        att = make_attestation(
            "att-1", "svc-1", "2025-01-15T12:00:00Z",
            (QualityMeasurement("latency", "85ms", "client_side_timing", "±5ms"),),
            [], "leaf", self.LEAF, self.chain(),
        )
        tampered = dataclasses.replace(
            att,
            quality_measurements=(QualityMeasurement("latency", "20ms", "client_side_timing", "±5ms"),),
        )
        assert not verify_attestation(tampered, self.ROOT.public_b64)

    def test_broken_chain_fails(self):
        rogue_root = SigningKey.from_seed("rogue")
        rogue_chain = (
            Certificate.issue("leaf", self.LEAF, "rogue", rogue_root).encode(),
            Certificate.issue("rogue", rogue_root, "rogue", rogue_root).encode(),
        )
        att = make_attestation(
            "att-1", "svc-1", "2025-01-15T12:00:00Z",
            (QualityMeasurement("latency", "85ms", "client_side_timing", "±5ms"),),
            [], "leaf", self.LEAF, rogue_chain,
        )
        assert not verify_attestation(att, self.ROOT.public_b64)

    def test_chain_depth_limit(self):
        assert validate_chain(("a",) * 4, self.ROOT.public_b64) is None

    def test_sla_hash_stable(self):
        rules = [SlaRule.parse("latency", "< 100ms", "5% price reduction per 10ms over")]
        assert sla_hash(rules) == sla_hash(list(rules))
        assert len(sla_hash(rules)) == 64

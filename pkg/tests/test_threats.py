"""Threat registry: legality map, injector effects, stealth, user model."""

import random

import pytest

from agvsim.cavstack import Layer
from agvsim.domain import (
    Authority,
    ContextSummary,
    DEFAULT_ADMISSION,
    RoadClass,
    Role,
    ThreatId,
    UserRequest,
    VehicleFeedback,
)
from agvsim.pipeline import AgentTuning, MemoryStore, SPEED_CAP_KEY
from agvsim.threats import (
    PipelineState,
    SimulatedUserState,
    Surface,
    ThreatInjection,
    ToolOutput,
    USER_ATTENTION_BUDGET,
    apply,
    confirm_urgency,
    delta_footprint,
    legal_surfaces,
    to_layer_perturbations,
    validate_injection,
)


def summary(limit: float = 90.0) -> ContextSummary:
    return ContextSummary(speed_limit_kph=limit, road_class=RoadClass.HIGHWAY)


def make_state(urgency: str = "Routine") -> PipelineState:
    return PipelineState(
        memory=MemoryStore(),
        request=UserRequest(urgency_tag=urgency, destination="commute"),
        pa_context=summary(),
        dsa_context=summary(),
        feedback=VehicleFeedback(speed_kph=72.0),
        tool_output=ToolOutput(),
        user=SimulatedUserState(rng=random.Random(1)),
        tuning=AgentTuning(),
    )


def injection(threat: ThreatId, surface: Surface, payload: dict, window=(0, 9),
              persistent=False, layer=None) -> ThreatInjection:
    inj = ThreatInjection(
        threat=threat, surface=surface, payload=payload, window=window,
        persistent=persistent, layer=layer,
    )
    validate_injection(inj)
    return inj


class TestLegalityMap:
    # per-threat legal surfaces; the registry rejects everything else at load
    EXPECTED = {
        ThreatId.T1: {Surface.PA_MEMORY},
        ThreatId.T2: {Surface.TOOL_OUTPUT},
        ThreatId.T3: {Surface.INTER_AGENT_MSG},
        ThreatId.T4: {Surface.PA_INPUT, Surface.LAYER},
        ThreatId.T5: {Surface.PA_INPUT},
        ThreatId.T6: {Surface.PA_INPUT},
        ThreatId.T7: {Surface.DSA_WEIGHTS},
        ThreatId.T8: {Surface.LOGS},
        ThreatId.T9: {Surface.IDENTITY_FIELD},
        ThreatId.T10: {Surface.USER_CHANNEL},
        ThreatId.T11: {Surface.TOOL_OUTPUT},
        ThreatId.T12: {Surface.INTER_AGENT_MSG},
        ThreatId.T13: {Surface.AGENT_POLICY},
        ThreatId.T14: {Surface.USER_CHANNEL},
        ThreatId.T15: {Surface.USER_CHANNEL},
        ThreatId.X_PERCEPTION: {Surface.LAYER},
        ThreatId.X_V2X: {Surface.LAYER},
        ThreatId.X_COMPUTE: {Surface.LAYER},
        ThreatId.X_CONTROL_FEEDBACK: {Surface.LAYER},
    }

    @pytest.mark.parametrize("threat", list(ThreatId))
    def test_legal_surfaces(self, threat):
        assert legal_surfaces(threat) == self.EXPECTED[threat]

    def test_illegal_pair_rejected_at_load(self):
        with pytest.raises(ValueError, match="may not target"):
            validate_injection(
                ThreatInjection(ThreatId.T1, Surface.TOOL_OUTPUT, {"value_kph": 45.0})
            )

    def test_cross_layer_threat_layer_is_implied(self):
        inj = injection(
            ThreatId.X_V2X, Surface.LAYER,
            {"transforms": [{"field": "speed_limit_kph", "op": "Set", "value": 40.0}]},
        )
        assert to_layer_perturbations(inj)[0].layer is Layer.V2X

    def test_conflicting_layer_tag_rejected(self):
        with pytest.raises(ValueError, match="bound to layer"):
            validate_injection(
                ThreatInjection(
                    ThreatId.X_V2X, Surface.LAYER,
                    {"transforms": [{"field": "speed_limit_kph", "op": "Set", "value": 40.0}]},
                    layer=Layer.PERCEPTION,
                )
            )

    def test_bad_payload_rejected(self):
        with pytest.raises(ValueError):
            validate_injection(ThreatInjection(ThreatId.T1, Surface.PA_MEMORY, {"value_kph": -5}))
        with pytest.raises(ValueError):
            validate_injection(ThreatInjection(ThreatId.T7, Surface.DSA_WEIGHTS, {"speed_weight": 2.0}))
        with pytest.raises(ValueError):
            validate_injection(
                ThreatInjection(ThreatId.T13, Surface.AGENT_POLICY, {"agent": "DSA", "policy": "nope"})
            )


class TestApplyEffects:
    def test_t1_memory_poisoning_inserts_cap_45(self):
        state = make_state()
        inj = injection(ThreatId.T1, Surface.PA_MEMORY, {"value_kph": 45.0}, window=(0, 0))
        record = apply(inj, state, 0)
        assert not record.warning
        assert record.before_digest != record.after_digest
        assert state.memory.speed_caps() == [(SPEED_CAP_KEY, 45.0)]

    def test_t1_is_idempotent_within_a_store(self):
        state = make_state()
        inj = injection(ThreatId.T1, Surface.PA_MEMORY, {"value_kph": 45.0}, window=(0, 5))
        apply(inj, state, 0)
        second = apply(inj, state, 1)
        assert second.before_digest == second.after_digest
        assert len(state.memory.entries) == 1

    def test_t4_multiplies_completeness(self):
        state = make_state()
        inj = injection(ThreatId.T4, Surface.PA_INPUT, {"completeness_factor": 0.5})
        apply(inj, state, 0)
        assert state.pa_context.completeness == 0.5

    def test_t6_rewrites_request(self):
        state = make_state(urgency="Urgent")
        inj = injection(ThreatId.T6, Surface.PA_INPUT, {"urgency_tag": "Routine", "destination": "mall"})
        apply(inj, state, 0)
        assert state.request.urgency_tag == "Routine"
        assert state.request.destination == "mall"

    def test_t9_spoofed_envelope_mismatch_flag(self):
        state = make_state()
        inj = injection(ThreatId.T9, Surface.IDENTITY_FIELD, {"claimed": "User", "target": "user"})
        apply(inj, state, 0)
        forged = state.envelopes[-1]
        assert forged.sender is Role.EXTERNAL
        assert forged.claimed_sender is Role.USER
        assert forged.spoofed

    def test_t9_context_patch_rides_on_forged_identity(self):
        state = make_state()
        inj = injection(
            ThreatId.T9, Surface.IDENTITY_FIELD,
            {"claimed": "CavStack", "target": "context", "context_patch": {"speed_limit_kph": 60.0}},
        )
        apply(inj, state, 0)
        env = state.envelopes[-1]
        assert env.authority is Authority.CONTEXT_ONLY
        assert env.payload == {"speed_limit_kph": 60.0}

    def test_t3_grants_context_authority(self):
        state = make_state()
        assert Role.PERSONAL_AGENT not in DEFAULT_ADMISSION[Authority.CONTEXT_ONLY]
        inj = injection(
            ThreatId.T3, Surface.INTER_AGENT_MSG,
            {"grant_role": "PersonalAgent", "context_patch": {"speed_limit_kph": 55.0}},
        )
        apply(inj, state, 0)
        assert Role.PERSONAL_AGENT in state.admission[Authority.CONTEXT_ONLY]
        assert not state.envelopes[-1].spoofed  # the identity is honest, the grant is wrong

    def test_t11_mutates_exactly_one_tuning_field(self):
        state = make_state()
        defaults = AgentTuning()
        inj = injection(
            ThreatId.T11, Surface.TOOL_OUTPUT,
            {"config_field": "dsa_hazard_confidence_min", "config_value": 2.0},
        )
        apply(inj, state, 0)
        assert state.tuning.dsa_hazard_confidence_min == 2.0
        for name in defaults.field_names():
            if name != "dsa_hazard_confidence_min":
                assert getattr(state.tuning, name) == getattr(defaults, name)

    def test_t12_external_target_without_envelope_warns(self):
        state = make_state()
        inj = injection(
            ThreatId.T12, Surface.INTER_AGENT_MSG,
            {"target": "external", "edits": [{"field": "closures", "op": "InjectRecord", "value": "R7"}]},
        )
        record = apply(inj, state, 0)
        assert record.warning

    def test_t12_context_target_edits_summary(self):
        state = make_state()
        inj = injection(
            ThreatId.T12, Surface.INTER_AGENT_MSG,
            {"target": "context", "edits": [{"field": "speed_limit_kph", "op": "Set", "value": 60.0}]},
        )
        apply(inj, state, 0)
        assert state.dsa_context.speed_limit_kph == 60.0

    def test_t13_swaps_policy(self):
        state = make_state()
        inj = injection(ThreatId.T13, Surface.AGENT_POLICY, {"agent": "DSA", "policy": "rogue-crawl"})
        apply(inj, state, 0)
        assert state.dsa_policy == "rogue-crawl"
        assert state.pa_policy == "default"

    def test_out_of_window_application_is_warning_noop(self):
        state = make_state()
        inj = injection(ThreatId.T1, Surface.PA_MEMORY, {"value_kph": 45.0}, window=(5, 9))
        record = apply(inj, state, 0)
        assert record.warning
        assert record.before_digest == record.after_digest
        assert state.memory.entries == ()

    def test_determinism_of_effect_records(self):
        records = []
        for _ in range(2):
            state = make_state()
            inj = injection(ThreatId.T1, Surface.PA_MEMORY, {"value_kph": 45.0}, window=(0, 0))
            records.append(apply(inj, state, 0))
        assert records[0] == records[1]


class TestSimulatedUser:
    def test_true_answer_within_budget(self):
        user = SimulatedUserState(rng=random.Random(0))
        assert confirm_urgency(user, "Urgent") == "Urgent"
        assert user.queries_asked == 1

    def test_noise_floods_degrade_to_default(self):
        user = SimulatedUserState(rng=random.Random(0), noise_queries=USER_ATTENTION_BUDGET)
        assert confirm_urgency(user, "Urgent") == "Routine"
        assert user.queries_asked == USER_ATTENTION_BUDGET + 1

    def test_noise_below_budget_is_harmless(self):
        user = SimulatedUserState(rng=random.Random(0), noise_queries=2)
        assert confirm_urgency(user, "Urgent") == "Urgent"

    def test_framing_bias_full_weight_always_adopts(self):
        user = SimulatedUserState(rng=random.Random(0), framing_bias=1.0, framing_answer="Routine")
        assert confirm_urgency(user, "Urgent") == "Routine"

    def test_framing_bias_is_seed_deterministic(self):
        answers_a = []
        answers_b = []
        for answers in (answers_a, answers_b):
            user = SimulatedUserState(rng=random.Random(99), framing_bias=0.5, framing_answer="Routine")
            for _ in range(20):
                user.reset_step()
                user.framing_bias = 0.5
                answers.append(confirm_urgency(user, "Urgent"))
        assert answers_a == answers_b
        assert set(answers_a) == {"Routine", "Urgent"}  # the draw actually varies


class TestFootprints:
    def test_every_threat_has_a_footprint(self):
        samples = {
            ThreatId.T1: injection(ThreatId.T1, Surface.PA_MEMORY, {"value_kph": 45.0}),
            ThreatId.T9: injection(ThreatId.T9, Surface.IDENTITY_FIELD, {"claimed": "CavStack", "target": "context"}),
            ThreatId.X_V2X: injection(
                ThreatId.X_V2X, Surface.LAYER,
                {"transforms": [{"field": "speed_limit_kph", "op": "Set", "value": 40.0}]},
            ),
        }
        for inj in samples.values():
            assert delta_footprint(inj)

    def test_neutral_t9_footprint_excludes_behavior(self):
        neutral = injection(ThreatId.T9, Surface.IDENTITY_FIELD, {"claimed": "CavStack", "target": "context"})
        assert "approved" not in delta_footprint(neutral)
        loaded = injection(
            ThreatId.T9, Surface.IDENTITY_FIELD,
            {"claimed": "CavStack", "target": "context", "context_patch": {"speed_limit_kph": 60.0}},
        )
        assert "approved" in delta_footprint(loaded)

import json

import pytest

from treetalk.env import Action, Agent
from treetalk.explain import (
    PART_A_MARKER,
    PART_B_MARKER,
    PART_C_MARKER,
    PART_D_MARKER,
    SAMPLE_LINE_PREFIX,
    Condition,
    EvidenceMismatch,
    PromptConfigError,
    SessionContext,
    SessionError,
    build_prompt,
    default_prompt_config,
    follow_up,
    load_prompt_config,
    open_session,
    sample_state_actions,
)
from treetalk.features import extract_features
from treetalk.llm import (
    EchoClient,
    MockScriptError,
    ModelConfig,
    ScriptedClient,
    TransportError,
    load_mock_script,
    make_client,
)
from treetalk.paths import extract_path
from treetalk.phrases import behavior_text, default_phrase_table, summarize_state


@pytest.fixture()
def medic_query(expert_trees, expert_trajs):
    """(condition-independent ingredients for one medic explanation query)"""
    tree = expert_trees[Agent.MEDIC]
    step = next(t for t in expert_trajs if t.agent is Agent.MEDIC and t.steps).steps[0]
    features = step.features
    path = extract_path(tree, features, Agent.MEDIC)
    return {
        "tree": tree,
        "state": step.state,
        "features": features,
        "path": path,
        "summary": summarize_state(step.state, Agent.MEDIC),
        "trajs": expert_trajs,
    }


def make_evidence(kind, q, k=5, seed=0):
    if kind == "br_path":
        return q["path"]
    if kind == "br_states":
        return sample_state_actions(q["trajs"], k, seed, role=Agent.MEDIC)
    return q["summary"]


def build(kind, q, k=5, seed=0):
    condition = Condition(kind, k=k, seed=seed)
    return build_prompt(condition, make_evidence(kind, q, k, seed), q["path"].action, Agent.MEDIC)


def test_parts_appear_in_order(medic_query):
    for kind in ("br_path", "br_states", "no_br"):
        text = build(kind, medic_query).serialized()
        positions = [text.index(m) for m in (PART_A_MARKER, PART_B_MARKER, PART_C_MARKER, PART_D_MARKER)]
        assert positions == sorted(positions)
        assert positions[0] == 0


def test_br_path_prompt_carries_the_rendered_rule(medic_query):
    bundle = build("br_path", medic_query)
    assert f"Behavior representation: {behavior_text(medic_query['path'])}" in bundle.part_d
    assert SAMPLE_LINE_PREFIX not in bundle.part_d
    assert "Current state:" not in bundle.part_d


def test_br_states_prompt_has_exactly_five_sample_lines(medic_query):
    bundle = build("br_states", medic_query)
    lines = [l for l in bundle.part_d.splitlines() if l.startswith(SAMPLE_LINE_PREFIX)]
    assert len(lines) == 5
    for i, line in enumerate(lines, start=1):
        assert line.startswith(f"Sample {i}: ")
        assert " -> action: " in line
    assert "Behavior representation:" not in bundle.part_d


def test_no_br_prompt_has_no_evidence_leakage(medic_query):
    text = build("no_br", medic_query).serialized()
    assert "Behavior representation:" not in text
    assert SAMPLE_LINE_PREFIX not in text
    assert "Current state: " in text
    # canonical clause phrases (the path vocabulary) stay out of no_br prompts
    table = default_phrase_table()
    for entry in table.features.values():
        for key in ("true", "false"):
            if key in entry:
                assert entry[key] not in text.lower()


def test_condition_scopes_part_b_and_examples(medic_query):
    cfg = default_prompt_config()
    bundles = {kind: build(kind, medic_query) for kind in ("br_path", "br_states", "no_br")}
    assert len({b.part_b for b in bundles.values()}) == 3
    for kind, bundle in bundles.items():
        assert bundle.part_b == f"{PART_B_MARKER}\n{cfg.br_format[kind]}"
        assert bundle.part_c.startswith(PART_C_MARKER)
        assert "Example 1:" in bundle.part_c and "Example 2:" in bundle.part_c


def test_prompt_is_deterministic(medic_query):
    a = build("br_states", medic_query, seed=3).serialized()
    b = build("br_states", medic_query, seed=3).serialized()
    assert a == b
    c = build("br_states", medic_query, seed=4).serialized()
    assert a != c  # different sample draw


def test_messages_split_system_and_user(medic_query):
    bundle = build("br_path", medic_query)
    messages = bundle.messages()
    assert [m["role"] for m in messages] == ["system", "user"]
    assert messages[0]["content"].startswith(PART_A_MARKER)
    assert PART_D_MARKER in messages[1]["content"]
    assert messages[1]["content"] == bundle.part_d


def test_question_names_the_role(medic_query):
    bundle = build("br_path", medic_query)
    assert bundle.part_d.rstrip().endswith("Why did the medic take this action?")


def test_evidence_type_mismatches_are_rejected(medic_query):
    q = medic_query
    with pytest.raises(EvidenceMismatch):
        build_prompt(Condition("br_path"), q["summary"], q["path"].action, Agent.MEDIC)
    with pytest.raises(EvidenceMismatch):
        build_prompt(Condition("br_states"), q["path"], q["path"].action, Agent.MEDIC)
    with pytest.raises(EvidenceMismatch, match="exactly 5"):
        samples = sample_state_actions(q["trajs"], 4, 0, role=Agent.MEDIC)
        build_prompt(Condition("br_states"), samples, q["path"].action, Agent.MEDIC)
    with pytest.raises(EvidenceMismatch):
        build_prompt(Condition("no_br"), q["path"], q["path"].action, Agent.MEDIC)


def test_condition_validation():
    with pytest.raises(ValueError):
        Condition("br_everything").validate()
    with pytest.raises(ValueError):
        Condition("br_states", k=0).validate()
    Condition("br_states", k=5, seed=11).validate()


def test_sample_state_actions_contract(expert_trajs):
    a = sample_state_actions(expert_trajs, 5, seed=1, role=Agent.ENGINEER)
    b = sample_state_actions(expert_trajs, 5, seed=1, role=Agent.ENGINEER)
    assert a == b
    assert len(a) == 5
    for summary, action in a:
        assert summary.startswith("The engineer is at row ")
        assert isinstance(action, Action)
    c = sample_state_actions(expert_trajs, 5, seed=2, role=Agent.ENGINEER)
    assert a != c
    with pytest.raises(ValueError, match="available"):
        sample_state_actions(expert_trajs[:1], 10**6, seed=0)


def session_for(q, kind="br_path", client=None):
    condition = Condition(kind)
    prompt = build_prompt(condition, make_evidence(kind, q), q["path"].action, Agent.MEDIC)
    context = SessionContext(
        agent=Agent.MEDIC,
        action=q["path"].action,
        condition=condition,
        features=q["features"],
        path=q["path"],
        tree=q["tree"],
        summary=q["summary"],
    )
    return open_session(prompt, client or EchoClient(), context)


def test_open_session_with_echo_replays_the_query(medic_query):
    session = session_for(medic_query)
    assert len(session.history) == 3
    assert [m["role"] for m in session.history] == ["system", "user", "assistant"]
    assert session.initial_explanation == session.history[1]["content"]
    assert PART_D_MARKER in session.initial_explanation


def test_follow_up_grows_history_by_two(medic_query):
    session = session_for(medic_query)
    reply, new_path, changed = follow_up(session, "Why not wait instead?")
    assert new_path is None and changed is False
    assert reply == "Why not wait instead?"  # echo returns the user turn
    assert len(session.history) == 5
    for i in range(10):
        follow_up(session, f"and question {i}?")
    assert len(session.history) == 25
    assert [m["role"] for m in session.history[1::2]][1:] == ["user"] * 11


def test_ten_follow_ups_reach_twenty_three_messages(medic_query):
    session = session_for(medic_query)
    for i in range(10):
        follow_up(session, f"clarification {i}")
    assert len(session.history) == 23


def test_follow_up_with_flips_embeds_surrogate_check(medic_query):
    session = session_for(medic_query)
    reply, new_path, changed = follow_up(
        session,
        "What if a victim were right here?",
        flips={"victim_in_room": 1, "dist_nearest_known_victim": 0},
    )
    assert new_path is not None
    assert new_path.action is Action.TRIAGE_VICTIM
    assert changed is (new_path.action is not medic_query["path"].action)
    user_turn = session.history[-2]["content"]
    assert user_turn.startswith("What if a victim were right here?")
    assert "[Surrogate check]" in user_turn
    assert "TriageVictim" in user_turn
    assert behavior_text(new_path) in user_turn
    # echo mock repeats the grounded block back
    assert "[Surrogate check]" in reply
    assert len(session.history) == 5


def test_follow_up_flips_validate(medic_query):
    session = session_for(medic_query)
    with pytest.raises(KeyError):
        follow_up(session, "", flips={"bogus": 1})
    with pytest.raises(ValueError):
        follow_up(session, "", flips={"victim_in_room": 7})
    assert len(session.history) == 3  # nothing appended on failure


class FailingClient:
    def complete(self, messages, cfg=ModelConfig()):
        raise TransportError("wire down")


def test_transport_errors_surface_as_session_errors(medic_query):
    with pytest.raises(SessionError) as info:
        session_for(medic_query, client=FailingClient())
    # the failed prompt rides along for diagnostics
    assert isinstance(info.value.prompt, list)
    assert info.value.prompt[0]["role"] == "system"

    session = session_for(medic_query)
    session.client = FailingClient()
    with pytest.raises(SessionError):
        follow_up(session, "still there?")
    assert len(session.history) == 3  # transcript untouched by the failure


def test_scripted_client_rules_and_default():
    client = ScriptedClient(
        rules=[
            {"contains": "TriageVictim", "response": "Treating the victim in reach."},
            {"contains": "why", "response": "Because the rule says so."},
        ]
    )
    assert (
        client.complete([{"role": "user", "content": "why TriageVictim"}])
        == "Treating the victim in reach."
    )
    assert client.complete([{"role": "user", "content": "why though"}]) == "Because the rule says so."
    assert client.complete([{"role": "user", "content": "hm"}]) == ScriptedClient.default


def test_scripted_session(medic_query):
    client = ScriptedClient(rules=[{"contains": "Action to explain", "response": "scripted answer"}])
    session = session_for(medic_query, client=client)
    assert session.initial_explanation == "scripted answer"
    reply, _, _ = follow_up(session, "anything else?")
    assert reply == ScriptedClient.default


def test_mock_script_loading(tmp_path):
    echo = tmp_path / "echo.json"
    echo.write_text(json.dumps({"mode": "echo"}))
    assert isinstance(load_mock_script(str(echo)), EchoClient)

    script = tmp_path / "script.json"
    script.write_text(
        json.dumps(
            {
                "mode": "script",
                "rules": [{"contains": "a", "response": "b"}],
                "default": "fallback",
            }
        )
    )
    client = load_mock_script(str(script))
    assert isinstance(client, ScriptedClient)
    assert client.default == "fallback"

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mode": "telepathy"}))
    with pytest.raises(MockScriptError):
        load_mock_script(str(bad))

    broken_rule = tmp_path / "rule.json"
    broken_rule.write_text(json.dumps({"mode": "script", "rules": [{"contains": "x"}]}))
    with pytest.raises(MockScriptError, match="response"):
        load_mock_script(str(broken_rule))


def test_make_client_specs(tmp_path):
    assert isinstance(make_client("echo"), EchoClient)
    echo = tmp_path / "echo.json"
    echo.write_text(json.dumps({"mode": "echo"}))
    assert isinstance(make_client(str(echo)), EchoClient)
    with pytest.raises(TransportError, match="base URL"):
        make_client("remote")


def test_prompt_config_validation(tmp_path):
    cfg = default_prompt_config()
    assert set(cfg.br_format) == {"br_path", "br_states", "no_br"}
    bad = tmp_path / "prompts.json"
    bad.write_text(json.dumps({"environment": "x", "question": "y", "br_format": {"br_path": "z"}}))
    with pytest.raises(PromptConfigError):
        load_prompt_config(str(bad))

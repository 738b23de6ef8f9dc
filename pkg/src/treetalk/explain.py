"""Four-part explanation prompts and interactive sessions.

A prompt is assembled from four parts in fixed order: (a) the environment
description, (b) a description of the behavior evidence format, (c)
in-context examples, (d) the query itself. Parts a-c come verbatim from a
versioned config file; only part d is generated per query.

Three evidence conditions exist for part d:
  * br_path   - the rendered decision path of the surrogate tree;
  * br_states - exactly k sampled state-action lines (prefix "Sample ");
  * no_br     - just the state summary and the action.
The conditions never mix: a br_path query carries no samples, a no_br
query carries neither samples nor path clauses.

Sessions wrap a chat transcript. Follow-ups may attach a structured
counterfactual; its tree-computed outcome is embedded into the user turn
before the model answers, so the reply is grounded in an actual
re-evaluation rather than the model's guess. Free text is never parsed
into feature flips.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence, Tuple, Union

from .env import Action, Agent
from .features import FeatureVector
from .llm import ModelConfig, TransportError
from .paths import CounterfactualQuery, DecisionPath, counterfactual
from .phrases import PhraseTable, behavior_text, default_phrase_table, summarize_state
from .policies import Trajectory
from .tree import DecisionTree

CONDITION_KINDS = ("br_path", "br_states", "no_br")

PART_A_MARKER = "## Environment"
PART_B_MARKER = "## Behavior evidence"
PART_C_MARKER = "## Examples"
PART_D_MARKER = "## Query"
SAMPLE_LINE_PREFIX = "Sample "


class PromptConfigError(ValueError):
    pass


class EvidenceMismatch(ValueError):
    """Evidence object does not fit the requested condition."""


class SessionError(RuntimeError):
    """Model call failed; carries the prompt messages for offline inspection."""

    def __init__(self, message: str, prompt: Sequence[dict]):
        super().__init__(message)
        self.prompt = list(prompt)


@dataclass(frozen=True)
class Condition:
    kind: str
    k: int = 5
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in CONDITION_KINDS:
            raise ValueError(f"unknown condition kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class PromptConfig:
    environment: str
    question: str
    br_format: dict  # condition kind -> text
    examples: dict  # condition kind -> role -> list of example dicts


def load_prompt_config(path: Optional[str] = None) -> PromptConfig:
    if path is None:
        raw = resources.files("treetalk.data").joinpath("prompts.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise PromptConfigError(f"prompt config is not valid JSON: {exc}") from exc
    for key in ("environment", "question", "br_format", "examples"):
        if key not in doc:
            raise PromptConfigError(f"prompt config missing '{key}'")
    for kind in CONDITION_KINDS:
        if kind not in doc["br_format"]:
            raise PromptConfigError(f"br_format missing text for '{kind}'")
        if kind not in doc["examples"]:
            raise PromptConfigError(f"examples missing '{kind}'")
    return PromptConfig(
        environment=doc["environment"],
        question=doc["question"],
        # keys starting with "_" are config-file commentary, not conditions
        br_format={k: v for k, v in doc["br_format"].items() if not k.startswith("_")},
        examples={k: v for k, v in doc["examples"].items() if not k.startswith("_")},
    )


_DEFAULT_PROMPTS: Optional[PromptConfig] = None


def default_prompt_config() -> PromptConfig:
    global _DEFAULT_PROMPTS
    if _DEFAULT_PROMPTS is None:
        _DEFAULT_PROMPTS = load_prompt_config()
    return _DEFAULT_PROMPTS


@dataclass
class PromptBundle:
    part_a: str
    part_b: str
    part_c: str
    part_d: str

    def serialized(self) -> str:
        return "\n\n".join((self.part_a, self.part_b, self.part_c, self.part_d))

    def messages(self) -> list:
        system = "\n\n".join((self.part_a, self.part_b, self.part_c))
        return [
            {"role": "system", "content": system},
            {"role": "user", "content": self.part_d},
        ]


def _render_example(kind: str, agent_role: str, ex: dict, index: int) -> str:
    lines = [f"Example {index}:", f"Agent: {agent_role}"]
    if kind == "br_states":
        for obs in ex["observations"]:
            lines.append(f"Observed: {obs}")
    elif kind == "no_br":
        lines.append(f"Current state: {ex['state']}")
    lines.append(f"Action: {ex['action']}")
    if kind == "br_path":
        lines.insert(2, f"Behavior representation: {ex['br']}")
    lines.append(f"Explanation: {ex['explanation']}")
    return "\n".join(lines)


def _render_part_c(cfg: PromptConfig, kind: str, agent: Agent) -> str:
    examples = cfg.examples[kind].get(agent.value, [])
    blocks = [
        _render_example(kind, agent.value, ex, i + 1) for i, ex in enumerate(examples)
    ]
    return "\n\n".join([PART_C_MARKER] + blocks)


# evidence types per condition: DecisionPath | list[(summary, Action)] | str
Evidence = Union[DecisionPath, Sequence[Tuple[str, Action]], str, None]


def build_prompt(
    condition: Condition,
    evidence: Evidence,
    action: Action,
    agent: Agent,
    prompt_cfg: Optional[PromptConfig] = None,
    table: Optional[PhraseTable] = None,
) -> PromptBundle:
    """Assemble the four parts; byte-identical for identical inputs."""
    condition.validate()
    agent = Agent(agent)
    action = Action(action)
    cfg = prompt_cfg or default_prompt_config()
    table = table or default_phrase_table()

    d_lines = [PART_D_MARKER, f"Agent: {agent.value}", f"Action to explain: {action.value}"]
    if condition.kind == "br_path":
        if not isinstance(evidence, DecisionPath):
            raise EvidenceMismatch("br_path needs a DecisionPath as evidence")
        d_lines.append(f"Behavior representation: {behavior_text(evidence, table)}")
    elif condition.kind == "br_states":
        if isinstance(evidence, (DecisionPath, str)) or evidence is None:
            raise EvidenceMismatch("br_states needs a list of (summary, action) samples")
        samples = list(evidence)
        if len(samples) != condition.k:
            raise EvidenceMismatch(f"br_states needs exactly {condition.k} samples, got {len(samples)}")
        d_lines.append("Observed state-action samples:")
        for i, (summary, sample_action) in enumerate(samples, start=1):
            d_lines.append(f"{SAMPLE_LINE_PREFIX}{i}: {summary} -> action: {Action(sample_action).value}")
    elif condition.kind == "no_br":
        if not isinstance(evidence, str):
            raise EvidenceMismatch("no_br needs the state summary string as evidence")
        d_lines.append(f"Current state: {evidence}")
    d_lines.append(cfg.question.format(role=agent.value))

    return PromptBundle(
        part_a=f"{PART_A_MARKER}\n{cfg.environment}",
        part_b=f"{PART_B_MARKER}\n{cfg.br_format[condition.kind]}",
        part_c=_render_part_c(cfg, condition.kind, agent),
        part_d="\n".join(d_lines),
    )


def sample_state_actions(
    trajectories: Sequence[Trajectory],
    k: int,
    seed: int,
    table: Optional[PhraseTable] = None,
    role: Optional[Agent] = None,
) -> list:
    """k uniform (state summary, action) samples, without replacement, seeded."""
    table = table or default_phrase_table()
    steps = []
    for traj in trajectories:
        if role is not None and traj.agent is not Agent(role):
            continue
        for s in traj.steps:
            if s.state is None:
                continue
            steps.append((s.state, traj.agent, s.action))
    if k > len(steps):
        raise ValueError(f"asked for {k} samples but only {len(steps)} steps available")
    rng = random.Random(seed)
    picked = rng.sample(range(len(steps)), k)
    return [(summarize_state(steps[i][0], steps[i][1], table), steps[i][2]) for i in picked]


@dataclass
class SessionContext:
    """Evidence frozen at session-open time; later episode steps don't touch it."""

    agent: Agent
    action: Action
    condition: Condition
    features: Optional[FeatureVector] = None
    path: Optional[DecisionPath] = None
    tree: Optional[DecisionTree] = None
    summary: Optional[str] = None
    br_text: Optional[str] = None
    samples: Optional[list] = None


_session_counter = itertools.count(1)


@dataclass
class ExplanationSession:
    session_id: str
    condition: Condition
    agent: Agent
    context: SessionContext
    client: object
    model: ModelConfig = ModelConfig()
    prompt: Optional[PromptBundle] = None
    history: list = field(default_factory=list)  # {"role": ..., "content": ...}

    @property
    def initial_explanation(self) -> str:
        for msg in self.history:
            if msg["role"] == "assistant":
                return msg["content"]
        return ""


def open_session(
    prompt: PromptBundle,
    client,
    context: SessionContext,
    model: ModelConfig = ModelConfig(),
    session_id: Optional[str] = None,
) -> ExplanationSession:
    """Send system+user from the bundle; the reply becomes turn one."""
    messages = prompt.messages()
    try:
        reply = client.complete(messages, model)
    except TransportError as exc:
        raise SessionError(f"could not open session: {exc}", messages) from exc
    session = ExplanationSession(
        session_id=session_id or f"s{next(_session_counter)}",
        condition=context.condition,
        agent=context.agent,
        context=context,
        client=client,
        model=model,
        prompt=prompt,
        history=messages + [{"role": "assistant", "content": reply}],
    )
    return session


def _counterfactual_block(
    session: ExplanationSession, flips: CounterfactualQuery, table: PhraseTable
) -> Tuple[str, DecisionPath, bool]:
    ctx = session.context
    if ctx.tree is None or ctx.features is None:
        raise SessionError("session has no tree/features to ground a counterfactual", session.history)
    new_path, changed = counterfactual(ctx.tree, ctx.features, flips)
    flips_text = ", ".join(f"{name}={int(v)}" for name, v in sorted(flips.items()))
    old_action = ctx.path.action.value if ctx.path is not None else ctx.action.value
    if changed:
        outcome = f"the predicted action changes from {old_action} to {new_path.action.value}"
    else:
        outcome = f"the predicted action stays {new_path.action.value}"
    block = (
        f"[Surrogate check] With {flips_text}, {outcome}. "
        f"Updated rule: {behavior_text(new_path, table)} "
        "Answer the question using this computed result."
    )
    return block, new_path, changed


def follow_up(
    session: ExplanationSession,
    user_text: str,
    flips: Optional[CounterfactualQuery] = None,
    table: Optional[PhraseTable] = None,
):
    """One clarification turn; history grows by exactly one user + one assistant.

    With flips attached, the surrogate tree is re-evaluated first and the
    outcome is embedded in the user turn, so the model (and the transcript)
    always sees the computed result. Returns (reply, new_path, changed)
    where the last two are None/False without flips.
    """
    table = table or default_phrase_table()
    new_path = None
    changed = False
    content = user_text
    if flips is not None:
        block, new_path, changed = _counterfactual_block(session, flips, table)
        content = f"{user_text}\n\n{block}" if user_text else block
    candidate = session.history + [{"role": "user", "content": content}]
    try:
        reply = session.client.complete(candidate, session.model)
    except TransportError as exc:
        # failed calls leave the transcript untouched
        raise SessionError(f"follow-up failed: {exc}", candidate) from exc
    session.history.append({"role": "user", "content": content})
    session.history.append({"role": "assistant", "content": reply})
    return reply, new_path, changed

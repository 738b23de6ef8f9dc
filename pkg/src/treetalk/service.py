"""HTTP service tying episodes, trees, and explanation sessions together.

In-memory, desk-scale: episodes and chat sessions live in dicts guarded by
per-object locks, trees are fitted lazily once per policy, and an optional
JSON-lines event log records every mutation for audit. Handlers are plain
sync functions so model calls run in the threadpool and never block
unrelated requests.
"""

from __future__ import annotations

import itertools
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .env import (
    ACTION_INDEX,
    Action,
    Agent,
    IllegalAction,
    OutOfTurn,
    ScenarioConfig,
    ScenarioError,
    WorldState,
    is_terminal,
    legal_actions,
    new_scenario,
    state_to_dict,
    step,
)
from .explain import (
    Condition,
    SessionContext,
    SessionError,
    build_prompt,
    default_prompt_config,
    follow_up,
    open_session,
    sample_state_actions,
)
from .features import extract_features
from .grounding import StudyGrid, frequency_csv, rows_csv, run_study, summary_text
from .llm import ModelConfig, make_client
from .paths import DecisionPath, extract_path
from .phrases import behavior_text, default_phrase_table, summarize_state
from .policies import PolicyKind, RolloutConfig, act, policy_pair, sample_rollouts
from .tree import TreeParams, build_dataset, fit_tree, tree_to_dict

AUTOSTEP_CAP = 500  # fixed_north never terminates, so until_terminal needs a bound


@dataclass(frozen=True)
class ServiceSettings:
    model: str = "echo"  # "echo" | "remote" | path to a mock script file
    base_url: Optional[str] = None
    model_name: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 512
    train_episodes: int = 80
    train_seed: int = 0
    max_steps: int = 200
    tree_params: TreeParams = TreeParams()
    event_log: Optional[str] = None
    static_dir: Optional[str] = None
    study: StudyGrid = StudyGrid()


# ----- request bodies -------------------------------------------------------


class ScenarioBody(BaseModel):
    seed: int = 0
    n_victims: int = 3
    n_rubble: int = 4
    p_hidden: float = 0.5
    start_engineer: Optional[List[int]] = None
    start_medic: Optional[List[int]] = None


class EpisodeCreate(BaseModel):
    policy: str = "expert"
    scenario: Optional[ScenarioBody] = None


class StepBody(BaseModel):
    agent: str
    action: str


class AutostepBody(BaseModel):
    steps: int = 1
    until_terminal: bool = False


class ConditionBody(BaseModel):
    kind: str = "br_path"
    k: int = 5
    seed: int = 0


class ExplanationCreate(BaseModel):
    episode_id: str
    agent: str
    condition: Optional[ConditionBody] = None


class ChatBody(BaseModel):
    message: str


class CounterfactualBody(BaseModel):
    flips: Dict[str, int]
    message: str = ""


# ----- in-memory records ----------------------------------------------------


@dataclass
class EpisodeHandle:
    episode_id: str
    policy_kind: PolicyKind
    config: ScenarioConfig
    state: WorldState
    lock: threading.Lock


@dataclass
class PolicyAssets:
    trajectories: list
    trees: dict  # Agent -> DecisionTree


@dataclass
class SessionRecord:
    session: object  # ExplanationSession
    episode_id: str
    timestep: int
    lock: threading.Lock


class ServiceState:
    """Everything mutable behind the app, with the locks that guard it."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.client = make_client(settings.model, base_url=settings.base_url, model=settings.model_name)
        self.model = ModelConfig(
            model=settings.model_name,
            temperature=settings.temperature,
            max_tokens=settings.max_tokens,
        )
        self.table = default_phrase_table()
        self.prompt_cfg = default_prompt_config()
        self.episodes: Dict[str, EpisodeHandle] = {}
        self.sessions: Dict[str, SessionRecord] = {}
        self._assets: Dict[PolicyKind, PolicyAssets] = {}
        self._assets_lock = threading.Lock()
        self._episode_seq = itertools.count(1)
        self._session_seq = itertools.count(1)
        self._seq_lock = threading.Lock()
        self._study = None
        self._study_lock = threading.Lock()
        self._log_lock = threading.Lock()

    def next_id(self, prefix: str) -> str:
        with self._seq_lock:
            seq = self._episode_seq if prefix == "e" else self._session_seq
            return f"{prefix}{next(seq)}"

    def assets_for(self, kind: PolicyKind) -> PolicyAssets:
        with self._assets_lock:
            assets = self._assets.get(kind)
            if assets is None:
                cfg = RolloutConfig(
                    num_rollouts=self.settings.train_episodes,
                    base_seed=self.settings.train_seed,
                    max_steps=self.settings.max_steps,
                )
                trajectories = sample_rollouts(policy_pair(kind.value), cfg)
                trees = {
                    role: fit_tree(
                        build_dataset(trajectories, role), self.settings.tree_params, role=role
                    )
                    for role in (Agent.ENGINEER, Agent.MEDIC)
                }
                assets = PolicyAssets(trajectories=trajectories, trees=trees)
                self._assets[kind] = assets
            return assets

    def study_result(self):
        with self._study_lock:
            if self._study is None:
                self._study = run_study(self.settings.study, self.client, self.prompt_cfg, self.table)
            return self._study

    def log(self, event: str, payload: dict) -> None:
        path = self.settings.event_log
        if not path:
            return
        record = {"ts": time.time(), "event": event, **payload}
        with self._log_lock:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")


# ----- wire helpers ---------------------------------------------------------


def path_to_dict(path: DecisionPath) -> dict:
    return {
        "agent": path.agent.value if path.agent else None,
        "action": path.action.value,
        "confidence": path.confidence,
        "predicates": [
            {"feature": p.feature, "op": p.op, "threshold": p.threshold} for p in path.predicates
        ],
    }


def _episode_payload(handle: EpisodeHandle, state: WorldState) -> dict:
    legal = sorted(legal_actions(state, state.whose_turn), key=ACTION_INDEX.__getitem__)
    return {
        "episode_id": handle.episode_id,
        "policy": handle.policy_kind.value,
        "state": state_to_dict(state),
        "terminal": is_terminal(state),
        "legal_actions": [a.value for a in legal],
    }


def _parse_enum(cls, raw: str, field: str):
    try:
        return cls(raw)
    except ValueError:
        valid = ", ".join(m.value for m in cls)
        raise HTTPException(status_code=422, detail=f"{field}: {raw!r} is not one of [{valid}]")


def _get_or_404(store: dict, key: str, what: str):
    obj = store.get(key)
    if obj is None:
        raise HTTPException(status_code=404, detail=f"{what} {key!r} not found")
    return obj


# ----- app factory ----------------------------------------------------------


def create_app(settings: Optional[ServiceSettings] = None) -> FastAPI:
    settings = settings or ServiceSettings()
    app = FastAPI(title="treetalk", version=__version__)
    state = ServiceState(settings)
    app.state.treetalk = state

    @app.get("/")
    def index():
        return {
            "service": "treetalk",
            "version": __version__,
            "endpoints": [
                "POST /episodes",
                "GET /episodes/{id}",
                "POST /episodes/{id}/step",
                "POST /episodes/{id}/autostep",
                "GET /trees/{role}",
                "POST /explanations",
                "POST /explanations/{id}/chat",
                "POST /explanations/{id}/counterfactual",
                "GET /study/reports",
            ],
        }

    @app.post("/episodes", status_code=201)
    def create_episode(body: EpisodeCreate):
        kind = _parse_enum(PolicyKind, body.policy, "policy")
        sc = body.scenario or ScenarioBody()
        kwargs = dict(
            seed=sc.seed, n_victims=sc.n_victims, n_rubble=sc.n_rubble, p_hidden=sc.p_hidden
        )
        if sc.start_engineer is not None:
            kwargs["start_engineer"] = tuple(sc.start_engineer)
        if sc.start_medic is not None:
            kwargs["start_medic"] = tuple(sc.start_medic)
        config = ScenarioConfig(**kwargs)
        try:
            world = new_scenario(config)
        except ScenarioError as exc:
            raise HTTPException(status_code=422, detail=f"scenario: {exc}")
        handle = EpisodeHandle(
            episode_id=state.next_id("e"),
            policy_kind=kind,
            config=config,
            state=world,
            lock=threading.Lock(),
        )
        state.episodes[handle.episode_id] = handle
        state.log("episode_created", {"episode_id": handle.episode_id, "policy": kind.value, "seed": config.seed})
        return _episode_payload(handle, world)

    @app.get("/episodes/{episode_id}")
    def get_episode(episode_id: str):
        handle = _get_or_404(state.episodes, episode_id, "episode")
        with handle.lock:
            return _episode_payload(handle, handle.state)

    @app.post("/episodes/{episode_id}/step")
    def step_episode(episode_id: str, body: StepBody):
        handle = _get_or_404(state.episodes, episode_id, "episode")
        agent = _parse_enum(Agent, body.agent, "agent")
        action = _parse_enum(Action, body.action, "action")
        with handle.lock:
            try:
                handle.state = step(handle.state, agent, action)
            except OutOfTurn as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except IllegalAction as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            payload = _episode_payload(handle, handle.state)
        state.log("step", {"episode_id": episode_id, "agent": agent.value, "action": action.value})
        payload["applied"] = {"agent": agent.value, "action": action.value}
        return payload

    @app.post("/episodes/{episode_id}/autostep")
    def autostep_episode(episode_id: str, body: AutostepBody):
        handle = _get_or_404(state.episodes, episode_id, "episode")
        if body.steps < 1 and not body.until_terminal:
            raise HTTPException(status_code=422, detail="steps: must be >= 1")
        budget = AUTOSTEP_CAP if body.until_terminal else min(body.steps, AUTOSTEP_CAP)
        engineer, medic = policy_pair(handle.policy_kind.value)
        applied = []
        with handle.lock:
            for _ in range(budget):
                if is_terminal(handle.state):
                    break
                agent = handle.state.whose_turn
                policy = engineer if agent is Agent.ENGINEER else medic
                action = act(policy, handle.state, agent)
                handle.state = step(handle.state, agent, action)
                applied.append({"agent": agent.value, "action": action.value})
            payload = _episode_payload(handle, handle.state)
        state.log("autostep", {"episode_id": episode_id, "n_applied": len(applied)})
        payload["applied"] = applied
        return payload

    @app.get("/trees/{role}")
    def get_tree(role: str, policy: str = "expert"):
        agent = _parse_enum(Agent, role, "role")
        kind = _parse_enum(PolicyKind, policy, "policy")
        assets = state.assets_for(kind)
        return tree_to_dict(assets.trees[agent])

    @app.post("/explanations", status_code=201)
    def create_explanation(body: ExplanationCreate):
        handle = _get_or_404(state.episodes, body.episode_id, "episode")
        agent = _parse_enum(Agent, body.agent, "agent")
        cb = body.condition or ConditionBody()
        condition = Condition(kind=cb.kind, k=cb.k, seed=cb.seed)
        try:
            condition.validate()
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=f"condition: {exc}")
        with handle.lock:
            snapshot = handle.state
        assets = state.assets_for(handle.policy_kind)
        features = extract_features(snapshot, agent)
        tree = assets.trees[agent]
        path = extract_path(tree, features, agent)
        summary = summarize_state(snapshot, agent, state.table)
        samples = None
        if condition.kind == "br_path":
            evidence = path
        elif condition.kind == "br_states":
            try:
                samples = sample_state_actions(
                    assets.trajectories, condition.k, condition.seed, state.table, role=agent
                )
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=f"condition: {exc}")
            evidence = samples
        else:
            evidence = summary
        prompt = build_prompt(condition, evidence, path.action, agent, state.prompt_cfg, state.table)
        context = SessionContext(
            agent=agent,
            action=path.action,
            condition=condition,
            features=features,
            path=path,
            tree=tree,
            summary=summary,
            br_text=behavior_text(path, state.table),
            samples=samples,
        )
        try:
            session = open_session(prompt, state.client, context, state.model, state.next_id("s"))
        except SessionError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        record = SessionRecord(
            session=session,
            episode_id=body.episode_id,
            timestep=snapshot.timestep,
            lock=threading.Lock(),
        )
        state.sessions[session.session_id] = record
        state.log(
            "explanation_created",
            {
                "session_id": session.session_id,
                "episode_id": body.episode_id,
                "agent": agent.value,
                "condition": condition.kind,
                "timestep": snapshot.timestep,
            },
        )
        return {
            "session_id": session.session_id,
            "episode_id": body.episode_id,
            "agent": agent.value,
            "timestep": snapshot.timestep,
            "condition": {"kind": condition.kind, "k": condition.k, "seed": condition.seed},
            "action": path.action.value,
            "confidence": path.confidence,
            "behavior_text": context.br_text,
            "state_summary": summary,
            "path": path_to_dict(path),
            "prompt": prompt.serialized(),
            "explanation": session.initial_explanation,
            "history": list(session.history),
        }

    @app.post("/explanations/{session_id}/chat")
    def chat(session_id: str, body: ChatBody):
        record = _get_or_404(state.sessions, session_id, "session")
        if not body.message.strip():
            raise HTTPException(status_code=422, detail="message: must not be empty")
        with record.lock:
            try:
                reply, _, _ = follow_up(record.session, body.message, table=state.table)
            except SessionError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            history = list(record.session.history)
        state.log("chat", {"session_id": session_id})
        return {"session_id": session_id, "reply": reply, "history": history, "history_length": len(history)}

    @app.post("/explanations/{session_id}/counterfactual")
    def counterfactual_turn(session_id: str, body: CounterfactualBody):
        record = _get_or_404(state.sessions, session_id, "session")
        if not body.flips:
            raise HTTPException(status_code=422, detail="flips: must name at least one feature")
        with record.lock:
            try:
                reply, new_path, changed = follow_up(
                    record.session, body.message, flips=body.flips, table=state.table
                )
            except KeyError as exc:
                raise HTTPException(status_code=422, detail=f"flips: {exc.args[0]}")
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=f"flips: {exc}")
            except SessionError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            history = list(record.session.history)
        state.log("counterfactual", {"session_id": session_id, "flips": dict(body.flips), "changed": changed})
        return {
            "session_id": session_id,
            "reply": reply,
            "changed": changed,
            "new_action": new_path.action.value,
            "new_path": path_to_dict(new_path),
            "behavior_text": behavior_text(new_path, state.table),
            "history": history,
            "history_length": len(history),
        }

    @app.get("/study/reports")
    def study_reports():
        result = state.study_result()
        aggregates = {
            f"{policy}/{condition}": agg for (policy, condition), agg in result.aggregates.items()
        }
        return {
            "summary": summary_text(result),
            "rows_csv": rows_csv(result),
            "frequency_csv": frequency_csv(result),
            "aggregates": aggregates,
        }

    if settings.static_dir and os.path.isdir(settings.static_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=settings.static_dir, html=True), name="ui")

    return app


def serve(settings: Optional[ServiceSettings] = None, host: str = "127.0.0.1", port: int = 8314) -> None:
    """Run the service under uvicorn until interrupted."""
    import uvicorn

    uvicorn.run(create_app(settings), host=host, port=port, log_level="info")

"""Scripted agent policies and the trajectory sampler.

Three policy regimes cover the behavior spectrum the explanation pipeline
is exercised on: a greedy goal-directed expert, a cautious variant that
insists on exploring every room before doing its job, and a degenerate
policy that just marches north. All are deterministic functions of
(state, agent), so recorded trajectories can be replayed and audited.

Trajectory batches serialize to newline-delimited JSON, one step per line
(episode, t, agent, features, action, state). The ``state`` field is
optional in the interchange format - external producers may omit it - but
it is required for replay audits, so the writer includes it by default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, Iterable, Optional, Sequence, Tuple, Union

from .env import (
    Action,
    Agent,
    ScenarioConfig,
    VictimState,
    WorldState,
    GRID_COLS,
    GRID_ROWS,
    is_terminal,
    new_scenario,
    state_from_dict,
    state_to_dict,
    step,
)
from .features import (
    DIR_EAST,
    DIR_NONE,
    DIR_NORTH,
    DIR_SOUTH,
    DIR_WEST,
    FeatureVector,
    extract_features,
    feature_vector_from_dict,
    first_step_direction,
)


class PolicyKind(str, Enum):
    EXPERT = "expert"
    EXPLORE_FIRST = "explore_first"
    FIXED_NORTH = "fixed_north"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    role: Agent


def policy_pair(kind: Union[PolicyKind, str]) -> Tuple[Policy, Policy]:
    """(engineer, medic) pair of the same policy kind."""
    kind = PolicyKind(kind)
    return Policy(kind, Agent.ENGINEER), Policy(kind, Agent.MEDIC)


_MOVE_FOR_DIR = {
    DIR_NORTH: Action.MOVE_NORTH,
    DIR_SOUTH: Action.MOVE_SOUTH,
    DIR_EAST: Action.MOVE_EAST,
    DIR_WEST: Action.MOVE_WEST,
}


def _cells_where(state: WorldState, want_victim=False, want_rubble=False, want_unexplored=False):
    cells = []
    for r in range(GRID_ROWS):
        for c in range(GRID_COLS):
            room = state.rooms[r * GRID_COLS + c]
            if want_victim and room.victim is VictimState.VISIBLE:
                cells.append((r, c))
            elif want_rubble and room.has_rubble:
                cells.append((r, c))
            elif want_unexplored and not room.explored:
                cells.append((r, c))
    return cells


def _expert_action(state: WorldState, agent: Agent) -> Action:
    pos = state.position(agent)
    room = state.room(*pos)
    if agent is Agent.ENGINEER and room.has_rubble:
        return Action.REMOVE_RUBBLE
    if agent is Agent.MEDIC and room.victim is VictimState.VISIBLE:
        return Action.TRIAGE_VICTIM

    if agent is Agent.MEDIC:
        targets = _cells_where(state, want_victim=True)
    else:
        targets = _cells_where(state, want_rubble=True)
    code = first_step_direction(pos, targets)
    if code != DIR_NONE:
        return _MOVE_FOR_DIR[code]

    code = first_step_direction(pos, _cells_where(state, want_unexplored=True))
    if code != DIR_NONE:
        return _MOVE_FOR_DIR[code]
    return Action.WAIT


def act(policy: Policy, state: WorldState, agent: Agent) -> Action:
    """Deterministic action choice; Wait is the universal fallback."""
    agent = Agent(agent)
    if agent is not policy.role:
        raise ValueError(f"policy is for the {policy.role.value}, asked to act as {agent.value}")

    if policy.kind is PolicyKind.FIXED_NORTH:
        row, _ = state.position(agent)
        return Action.MOVE_NORTH if row > 0 else Action.WAIT

    if policy.kind is PolicyKind.EXPLORE_FIRST:
        code = first_step_direction(state.position(agent), _cells_where(state, want_unexplored=True))
        if code != DIR_NONE:
            return _MOVE_FOR_DIR[code]
        return _expert_action(state, agent)

    return _expert_action(state, agent)


@dataclass
class TrajectoryStep:
    features: FeatureVector
    state: Optional[WorldState]
    action: Action


@dataclass
class Trajectory:
    episode_id: int
    agent: Agent
    steps: list = field(default_factory=list)


@dataclass(frozen=True)
class RolloutConfig:
    """Episode i of a batch runs on scenario seed base_seed + i.

    The scenario template's own seed field is ignored; everything else
    (victim/rubble counts, hidden probability, start rooms) applies to every
    episode in the batch.
    """

    num_rollouts: int
    base_seed: int = 0
    max_steps: int = 400
    scenario: ScenarioConfig = ScenarioConfig()

    def validate(self) -> None:
        if self.num_rollouts < 0:
            raise ValueError("num_rollouts must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        replace(self.scenario, seed=0).validate()


def sample_rollouts(pair: Tuple[Policy, Policy], cfg: RolloutConfig) -> list[Trajectory]:
    """Run num_rollouts episodes and return 2*N per-agent trajectories.

    Each agent's trajectory records (features, state, action) at every one
    of its turns, in temporal order; the recorded state is the one the
    action was chosen in. Output order is episode-major, engineer first.
    """
    cfg.validate()
    engineer_pol, medic_pol = pair
    if engineer_pol.role is not Agent.ENGINEER or medic_pol.role is not Agent.MEDIC:
        raise ValueError("pair must be (engineer policy, medic policy)")

    out: list[Trajectory] = []
    for i in range(cfg.num_rollouts):
        scen = replace(cfg.scenario, seed=cfg.base_seed + i)
        state = new_scenario(scen)
        trajs = {
            Agent.ENGINEER: Trajectory(episode_id=i, agent=Agent.ENGINEER),
            Agent.MEDIC: Trajectory(episode_id=i, agent=Agent.MEDIC),
        }
        for _ in range(cfg.max_steps):
            if is_terminal(state):
                break
            agent = state.whose_turn
            policy = engineer_pol if agent is Agent.ENGINEER else medic_pol
            action = act(policy, state, agent)
            trajs[agent].steps.append(TrajectoryStep(extract_features(state, agent), state, action))
            state = step(state, agent, action)
        out.append(trajs[Agent.ENGINEER])
        out.append(trajs[Agent.MEDIC])
    return out


# ---------------------------------------------------------------------------
# JSONL interchange


@dataclass
class StepRecord:
    episode: int
    t: int
    agent: Agent
    features: FeatureVector
    action: Action
    state: Optional[WorldState] = None


def iter_step_records(trajectories: Iterable[Trajectory]) -> Iterable[StepRecord]:
    for traj in trajectories:
        for s in traj.steps:
            t = s.state.timestep if s.state is not None else 0
            yield StepRecord(traj.episode_id, t, traj.agent, s.features, s.action, s.state)


def write_jsonl(trajectories: Sequence[Trajectory], fp: IO[str], include_states: bool = True) -> int:
    """Write one step per line; returns the number of lines written."""
    n = 0
    for rec in iter_step_records(trajectories):
        doc = {
            "episode": rec.episode,
            "t": rec.t,
            "agent": rec.agent.value,
            "features": rec.features.as_dict(),
            "action": rec.action.value,
        }
        if include_states and rec.state is not None:
            doc["state"] = state_to_dict(rec.state)
        fp.write(json.dumps(doc, separators=(",", ":")) + "\n")
        n += 1
    return n


def read_jsonl(fp: IO[str]) -> list[StepRecord]:
    records = []
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
            rec = StepRecord(
                episode=int(doc["episode"]),
                t=int(doc["t"]),
                agent=Agent(doc["agent"]),
                features=feature_vector_from_dict(doc["features"]),
                action=Action(doc["action"]),
                state=state_from_dict(doc["state"]) if "state" in doc else None,
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad trajectory record on line {lineno}: {exc}") from exc
        records.append(rec)
    return records


def trajectories_from_records(records: Sequence[StepRecord]) -> list[Trajectory]:
    """Group flat step records back into per-(episode, agent) trajectories."""
    order: list[tuple[int, Agent]] = []
    grouped: dict[tuple[int, Agent], Trajectory] = {}
    for rec in records:
        key = (rec.episode, rec.agent)
        if key not in grouped:
            grouped[key] = Trajectory(episode_id=rec.episode, agent=rec.agent)
            order.append(key)
        grouped[key].steps.append(TrajectoryStep(rec.features, rec.state, rec.action))
    return [grouped[k] for k in order]

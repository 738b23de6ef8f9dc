"""Deterministic two-agent search-and-rescue gridworld.

A 4x5 grid of rooms searched by an engineer (clears rubble) and a medic
(triages victims). Victims may start hidden under rubble; removing the
rubble makes them visible and triagable. Agents alternate turns in a fixed
round-robin order starting with the engineer, and exploration knowledge is
shared between them.

Every operation here is a pure function: ``step`` returns a fresh state and
never mutates its input, so states can be shared freely across threads.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

GRID_ROWS = 4
GRID_COLS = 5
N_ROOMS = GRID_ROWS * GRID_COLS


class Agent(str, Enum):
    ENGINEER = "engineer"
    MEDIC = "medic"


# engineer acts first each round
AGENT_ORDER = (Agent.ENGINEER, Agent.MEDIC)


class VictimState(str, Enum):
    NONE = "none"
    VISIBLE = "visible"
    HIDDEN = "hidden"


class Action(str, Enum):
    # declaration order doubles as the deterministic tie-break order
    MOVE_NORTH = "MoveNorth"
    MOVE_SOUTH = "MoveSouth"
    MOVE_EAST = "MoveEast"
    MOVE_WEST = "MoveWest"
    REMOVE_RUBBLE = "RemoveRubble"
    TRIAGE_VICTIM = "TriageVictim"
    WAIT = "Wait"


ACTION_ORDER = tuple(Action)
ACTION_INDEX = {a: i for i, a in enumerate(ACTION_ORDER)}

# row 0 is north, col 0 is west
MOVE_DELTAS = {
    Action.MOVE_NORTH: (-1, 0),
    Action.MOVE_SOUTH: (1, 0),
    Action.MOVE_EAST: (0, 1),
    Action.MOVE_WEST: (0, -1),
}

Coord = Tuple[int, int]


class ScenarioError(ValueError):
    """Raised for scenario configs that cannot be placed on the grid."""


class StepRejected(ValueError):
    """Base for step() rejections; the input state is left untouched."""


class IllegalAction(StepRejected):
    pass


class OutOfTurn(StepRejected):
    pass


def in_grid(row: int, col: int) -> bool:
    return 0 <= row < GRID_ROWS and 0 <= col < GRID_COLS


def room_index(row: int, col: int) -> int:
    return row * GRID_COLS + col


def all_coords() -> list[Coord]:
    return [(r, c) for r in range(GRID_ROWS) for c in range(GRID_COLS)]


@dataclass(frozen=True)
class Room:
    has_rubble: bool = False
    victim: VictimState = VictimState.NONE
    explored: bool = False


@dataclass(frozen=True)
class WorldState:
    """Full ground truth for one episode.

    rooms is a flat row-major tuple of N_ROOMS Room values; positions holds
    the (row, col) of each agent in AGENT_ORDER.
    """

    rooms: Tuple[Room, ...]
    positions: Tuple[Coord, Coord]
    rescued_count: int = 0
    timestep: int = 0
    whose_turn: Agent = Agent.ENGINEER

    def room(self, row: int, col: int) -> Room:
        if not in_grid(row, col):
            raise IndexError(f"room ({row},{col}) outside the {GRID_ROWS}x{GRID_COLS} grid")
        return self.rooms[room_index(row, col)]

    def position(self, agent: Agent) -> Coord:
        return self.positions[AGENT_ORDER.index(Agent(agent))]

    def count_victims(self, kind: VictimState) -> int:
        return sum(1 for r in self.rooms if r.victim is kind)

    @property
    def victims_total(self) -> int:
        # constant across an episode: rescued + still visible + still hidden
        return (
            self.rescued_count
            + self.count_victims(VictimState.VISIBLE)
            + self.count_victims(VictimState.HIDDEN)
        )

    def explored_count(self) -> int:
        return sum(1 for r in self.rooms if r.explored)

    def rubble_count(self) -> int:
        return sum(1 for r in self.rooms if r.has_rubble)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    n_victims: int = 3
    n_rubble: int = 4
    p_hidden: float = 0.5
    start_engineer: Coord = (3, 0)
    start_medic: Coord = (3, 4)

    def validate(self) -> None:
        if self.n_victims < 0 or self.n_rubble < 0:
            raise ScenarioError("n_victims and n_rubble must be non-negative")
        if self.n_victims + self.n_rubble > N_ROOMS:
            raise ScenarioError(
                f"n_victims + n_rubble = {self.n_victims + self.n_rubble} "
                f"exceeds the {N_ROOMS}-room grid"
            )
        if not 0.0 <= self.p_hidden <= 1.0:
            raise ScenarioError("p_hidden must be in [0, 1]")
        for name, pos in (("start_engineer", self.start_engineer), ("start_medic", self.start_medic)):
            if not in_grid(*pos):
                raise ScenarioError(f"{name} {pos} outside the grid")


def new_scenario(config: ScenarioConfig) -> WorldState:
    """Place rubble and victims pseudo-randomly from the config seed.

    A room may hold rubble, a victim, or both; a victim placed in a rubble
    room is hidden with probability p_hidden. Repeated calls with the same
    config produce identical states.
    """
    config.validate()
    rng = random.Random(config.seed)
    cells = all_coords()
    rubble_cells = set(rng.sample(cells, config.n_rubble))
    victim_cells = rng.sample(cells, config.n_victims)

    victims = {}
    for cell in victim_cells:
        if cell in rubble_cells and rng.random() < config.p_hidden:
            victims[cell] = VictimState.HIDDEN
        else:
            victims[cell] = VictimState.VISIBLE

    start = (tuple(config.start_engineer), tuple(config.start_medic))
    rooms = []
    for cell in cells:
        rooms.append(
            Room(
                has_rubble=cell in rubble_cells,
                victim=victims.get(cell, VictimState.NONE),
                explored=cell in start,
            )
        )
    return WorldState(rooms=tuple(rooms), positions=start)


def legal_actions(state: WorldState, agent: Agent) -> set[Action]:
    agent = Agent(agent)
    row, col = state.position(agent)
    room = state.room(row, col)
    acts = {Action.WAIT}
    for move, (dr, dc) in MOVE_DELTAS.items():
        if in_grid(row + dr, col + dc):
            acts.add(move)
    if agent is Agent.ENGINEER and room.has_rubble:
        acts.add(Action.REMOVE_RUBBLE)
    if agent is Agent.MEDIC and room.victim is VictimState.VISIBLE:
        acts.add(Action.TRIAGE_VICTIM)
    return acts


def _with_room(rooms: Tuple[Room, ...], idx: int, room: Room) -> Tuple[Room, ...]:
    return rooms[:idx] + (room,) + rooms[idx + 1 :]


def step(state: WorldState, agent: Agent, action: Action) -> WorldState:
    """Apply one agent action; rejected actions leave the state unchanged."""
    agent = Agent(agent)
    action = Action(action)
    if agent is not state.whose_turn:
        raise OutOfTurn(f"it is the {state.whose_turn.value}'s turn, not the {agent.value}'s")
    if action not in legal_actions(state, agent):
        raise IllegalAction(f"{action.value} is not legal for the {agent.value} here")

    row, col = state.position(agent)
    idx = room_index(row, col)
    rooms = state.rooms
    positions = state.positions
    rescued = state.rescued_count

    if action in MOVE_DELTAS:
        dr, dc = MOVE_DELTAS[action]
        dest = (row + dr, col + dc)
        dest_idx = room_index(*dest)
        dest_room = rooms[dest_idx]
        if not dest_room.explored:
            rooms = _with_room(rooms, dest_idx, replace(dest_room, explored=True))
        slot = AGENT_ORDER.index(agent)
        positions = tuple(dest if i == slot else p for i, p in enumerate(positions))
    elif action is Action.REMOVE_RUBBLE:
        room = rooms[idx]
        victim = VictimState.VISIBLE if room.victim is VictimState.HIDDEN else room.victim
        rooms = _with_room(rooms, idx, replace(room, has_rubble=False, victim=victim))
    elif action is Action.TRIAGE_VICTIM:
        room = rooms[idx]
        rooms = _with_room(rooms, idx, replace(room, victim=VictimState.NONE))
        rescued += 1
    # Wait changes nothing but the turn and the clock

    next_turn = Agent.MEDIC if agent is Agent.ENGINEER else Agent.ENGINEER
    return WorldState(
        rooms=rooms,
        positions=positions,  # type: ignore[arg-type]
        rescued_count=rescued,
        timestep=state.timestep + 1,
        whose_turn=next_turn,
    )


def is_terminal(state: WorldState) -> bool:
    return state.rescued_count == state.victims_total


# ---------------------------------------------------------------------------
# JSON serialization (stable field names; room array is row-major)


def state_to_dict(state: WorldState) -> dict:
    return {
        "grid": {"rows": GRID_ROWS, "cols": GRID_COLS},
        "rooms": [
            {"has_rubble": r.has_rubble, "victim": r.victim.value, "explored": r.explored}
            for r in state.rooms
        ],
        "positions": {
            agent.value: list(state.position(agent)) for agent in AGENT_ORDER
        },
        "rescued_count": state.rescued_count,
        "victims_total": state.victims_total,
        "timestep": state.timestep,
        "whose_turn": state.whose_turn.value,
    }


def state_from_dict(data: dict) -> WorldState:
    rooms = tuple(
        Room(
            has_rubble=bool(r["has_rubble"]),
            victim=VictimState(r["victim"]),
            explored=bool(r["explored"]),
        )
        for r in data["rooms"]
    )
    if len(rooms) != N_ROOMS:
        raise ValueError(f"expected {N_ROOMS} rooms, got {len(rooms)}")
    positions = tuple(tuple(data["positions"][a.value]) for a in AGENT_ORDER)
    return WorldState(
        rooms=rooms,
        positions=positions,  # type: ignore[arg-type]
        rescued_count=int(data["rescued_count"]),
        timestep=int(data["timestep"]),
        whose_turn=Agent(data["whose_turn"]),
    )


def config_to_dict(config: ScenarioConfig) -> dict:
    return {
        "seed": config.seed,
        "n_victims": config.n_victims,
        "n_rubble": config.n_rubble,
        "p_hidden": config.p_hidden,
        "start_engineer": list(config.start_engineer),
        "start_medic": list(config.start_medic),
    }


def config_from_dict(data: dict) -> ScenarioConfig:
    kwargs = {}
    for key in ("seed", "n_victims", "n_rubble"):
        if key in data:
            kwargs[key] = int(data[key])
    if "p_hidden" in data:
        kwargs["p_hidden"] = float(data["p_hidden"])
    for key in ("start_engineer", "start_medic"):
        if key in data:
            kwargs[key] = tuple(int(v) for v in data[key])
    return ScenarioConfig(**kwargs)

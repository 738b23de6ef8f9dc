"""Interpretable per-agent observation features.

Each feature is individually nameable so downstream decision-path text and
mention tallies can refer to it. The schema (names, order, domains) is
versioned; trees record the version they were fitted against.

Direction features hold the first step of a shortest route to the nearest
target. On this obstacle-free 4-connected grid the shortest-route distance
is the Manhattan distance, and scanning candidate neighbors in N,S,E,W
order reproduces a breadth-first search with that same tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from .env import Agent, Coord, VictimState, WorldState, GRID_COLS, GRID_ROWS, in_grid

FEATURE_SCHEMA_VERSION = 1

FEATURE_NAMES = (
    "victim_in_room",
    "rubble_in_room",
    "unexplored_north",
    "unexplored_south",
    "unexplored_east",
    "unexplored_west",
    "dist_nearest_known_victim",
    "dir_victim",
    "dir_rubble",
    "dir_unexplored",
    "all_rooms_explored",
)

NO_VICTIM_DIST = 99  # sentinel when no victim is known; keeps the feature numeric

DIR_NONE = 0
DIR_NORTH = 1
DIR_SOUTH = 2
DIR_EAST = 3
DIR_WEST = 4

DIR_WORDS = {DIR_NORTH: "north", DIR_SOUTH: "south", DIR_EAST: "east", DIR_WEST: "west"}

# neighbor scan order fixes every direction tie: north, south, east, west
_DIR_STEPS = (
    (DIR_NORTH, (-1, 0)),
    (DIR_SOUTH, (1, 0)),
    (DIR_EAST, (0, 1)),
    (DIR_WEST, (0, -1)),
)

# inclusive integer (lo, hi) per feature; used by counterfactual validation
# and by randomized equivalence tests
FEATURE_DOMAINS = {
    "victim_in_room": (0, 1),
    "rubble_in_room": (0, 1),
    "unexplored_north": (0, 1),
    "unexplored_south": (0, 1),
    "unexplored_east": (0, 1),
    "unexplored_west": (0, 1),
    "dist_nearest_known_victim": (0, NO_VICTIM_DIST),
    "dir_victim": (0, 4),
    "dir_rubble": (0, 4),
    "dir_unexplored": (0, 4),
    "all_rooms_explored": (0, 1),
}

BINARY_FEATURES = frozenset(name for name, dom in FEATURE_DOMAINS.items() if dom == (0, 1))


@dataclass(frozen=True)
class FeatureVector:
    victim_in_room: int
    rubble_in_room: int
    unexplored_north: int
    unexplored_south: int
    unexplored_east: int
    unexplored_west: int
    dist_nearest_known_victim: int
    dir_victim: int
    dir_rubble: int
    dir_unexplored: int
    all_rooms_explored: int

    def value(self, name: str) -> int:
        if name not in FEATURE_DOMAINS:
            raise KeyError(f"unknown feature '{name}'")
        return getattr(self, name)

    def to_list(self) -> list[int]:
        return [getattr(self, name) for name in FEATURE_NAMES]

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in FEATURE_NAMES}

    def with_values(self, flips: Mapping[str, int]) -> "FeatureVector":
        validate_feature_values(flips)
        return replace(self, **{k: int(v) for k, v in flips.items()})


def feature_vector_from_dict(data: Mapping[str, int]) -> FeatureVector:
    missing = [name for name in FEATURE_NAMES if name not in data]
    if missing:
        raise ValueError(f"feature dict missing {missing}")
    return FeatureVector(**{name: int(data[name]) for name in FEATURE_NAMES})


def validate_feature_values(values: Mapping[str, float]) -> None:
    """Reject unknown names and out-of-domain values (non-integral too)."""
    for name, value in values.items():
        if name not in FEATURE_DOMAINS:
            raise KeyError(f"unknown feature '{name}'")
        lo, hi = FEATURE_DOMAINS[name]
        if float(value) != int(value) or not lo <= int(value) <= hi:
            raise ValueError(f"{name}={value!r} outside domain [{lo}, {hi}]")


def manhattan(a: Coord, b: Coord) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def nearest_distance(pos: Coord, targets: Sequence[Coord]) -> Optional[int]:
    if not targets:
        return None
    return min(manhattan(pos, t) for t in targets)


def first_step_direction(pos: Coord, targets: Sequence[Coord]) -> int:
    """Direction code of the first move on a shortest path to the nearest target.

    Returns DIR_NONE when there is no target or the nearest one is the
    current room. Ties between equally short first steps resolve in
    N,S,E,W order.
    """
    best = nearest_distance(pos, targets)
    if best is None or best == 0:
        return DIR_NONE
    for code, (dr, dc) in _DIR_STEPS:
        nb = (pos[0] + dr, pos[1] + dc)
        if in_grid(*nb) and nearest_distance(nb, targets) == best - 1:
            return code
    raise AssertionError("unreachable: some neighbor always shortens the distance")


def _unexplored_along(state: WorldState, pos: Coord, dr: int, dc: int) -> int:
    # nearest-first ray scan in one cardinal direction
    row, col = pos[0] + dr, pos[1] + dc
    while in_grid(row, col):
        if not state.room(row, col).explored:
            return 1
        row, col = row + dr, col + dc
    return 0


def extract_features(state: WorldState, agent: Agent) -> FeatureVector:
    """Deterministic feature view of the world from one agent's room.

    Hidden victims are invisible here: only visible victims count for
    victim_in_room, dist_nearest_known_victim and dir_victim.
    """
    agent = Agent(agent)
    pos = state.position(agent)
    room = state.room(*pos)

    victims = []
    rubble = []
    unexplored = []
    for r in range(GRID_ROWS):
        for c in range(GRID_COLS):
            cell_room = state.rooms[r * GRID_COLS + c]
            if cell_room.victim is VictimState.VISIBLE:
                victims.append((r, c))
            if cell_room.has_rubble:
                rubble.append((r, c))
            if not cell_room.explored:
                unexplored.append((r, c))

    dist = nearest_distance(pos, victims)
    return FeatureVector(
        victim_in_room=int(room.victim is VictimState.VISIBLE),
        rubble_in_room=int(room.has_rubble),
        unexplored_north=_unexplored_along(state, pos, -1, 0),
        unexplored_south=_unexplored_along(state, pos, 1, 0),
        unexplored_east=_unexplored_along(state, pos, 0, 1),
        unexplored_west=_unexplored_along(state, pos, 0, -1),
        dist_nearest_known_victim=NO_VICTIM_DIST if dist is None else dist,
        dir_victim=first_step_direction(pos, victims),
        dir_rubble=first_step_direction(pos, rubble),
        dir_unexplored=first_step_direction(pos, unexplored),
        all_rooms_explored=int(not unexplored),
    )

"""Automated grounding scores for generated explanations.

Stands in for manual hallucination annotation at desk scale. An
explanation is scanned for feature mentions with a longest-match lexicon
(built from the same config as the phrase table); grounding precision is
the fraction of mentioned features that actually sit on the decision path
the explanation was given, and polarity flags record binary-feature claims
that contradict the ground-truth state. These scores proxy, not replicate,
human judgments; the summary output says so.

The study grid crosses the three policy regimes with the three prompt
conditions, ten states per cell, mirroring the 30-explanations-per-condition
design. Everything is reproducible from (grid seed, mock script).
"""

from __future__ import annotations

import csv
import io
import random
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .env import Agent, WorldState
from .explain import (
    Condition,
    PromptConfig,
    SessionContext,
    SessionError,
    build_prompt,
    default_prompt_config,
    open_session,
    sample_state_actions,
)
from .features import BINARY_FEATURES, extract_features
from .paths import DecisionPath, extract_path
from .phrases import PhraseTable, default_phrase_table, phrase_entries, summarize_state
from .policies import PolicyKind, RolloutConfig, Trajectory, policy_pair, sample_rollouts
from .tree import TreeParams, build_dataset, fit_tree

CONDITIONS_DEFAULT = ("br_path", "br_states", "no_br")
POLICIES_DEFAULT = ("expert", "explore_first", "fixed_north")


@dataclass(frozen=True)
class LexiconEntry:
    phrase: str  # lowercase surface form
    feature: str
    polarity: Optional[bool]  # True/False for binary claims, None for bare mentions


@dataclass
class FeatureLexicon:
    entries: list  # LexiconEntry, sorted longest phrase first

    @classmethod
    def from_table(cls, table: Optional[PhraseTable] = None) -> "FeatureLexicon":
        table = table or default_phrase_table()
        entries = [LexiconEntry(p, f, pol) for p, f, pol in phrase_entries(table)]
        entries.sort(key=lambda e: (-len(e.phrase), e.phrase))
        return cls(entries)


def scan_mentions(text: str, lexicon: FeatureLexicon) -> list:
    """All lexicon hits in reading order, longest match first at each spot.

    A match consumes its span, so a phrase embedded in a longer phrase of
    the same or another feature cannot double-report.
    """
    low = text.lower()
    hits = []
    i = 0
    n = len(low)
    while i < n:
        for entry in lexicon.entries:
            if low.startswith(entry.phrase, i):
                hits.append(entry)
                i += len(entry.phrase)
                break
        else:
            i += 1
    return hits


def extract_mentions(text: str, lexicon: FeatureLexicon) -> set:
    """Set of features the text mentions at least once."""
    return {hit.feature for hit in scan_mentions(text, lexicon)}


@dataclass
class GroundingRow:
    policy: str
    condition: str
    state_index: int
    agent: str
    action: str
    precision: float
    mentions: list  # sorted feature names
    path_features: list  # sorted feature names
    flags: list  # human-readable contradiction notes
    error: str = ""


def grounding_score(
    explanation: str,
    path: DecisionPath,
    truth: WorldState,
    agent: Agent,
    lexicon: Optional[FeatureLexicon] = None,
) -> GroundingRow:
    """Precision of feature mentions against the path, plus polarity flags.

    Precision is 1.0 when the text mentions no features at all. Flags are
    only raised for binary features, the ones with a checkable truth value.
    """
    lexicon = lexicon or FeatureLexicon.from_table()
    agent = Agent(agent)
    hits = scan_mentions(explanation, lexicon)
    mentions = {h.feature for h in hits}
    path_features = path.feature_set()
    precision = 1.0 if not mentions else len(mentions & path_features) / len(mentions)

    truth_fv = extract_features(truth, agent)
    flags = []
    seen = set()
    for hit in hits:
        if hit.polarity is None or hit.feature not in BINARY_FEATURES:
            continue
        actual = bool(truth_fv.value(hit.feature))
        key = (hit.feature, hit.polarity)
        if hit.polarity != actual and key not in seen:
            seen.add(key)
            flags.append(
                f"{hit.feature}: claimed {str(hit.polarity).lower()}, state says {str(actual).lower()}"
            )
    return GroundingRow(
        policy="",
        condition="",
        state_index=-1,
        agent=agent.value,
        action=path.action.value,
        precision=precision,
        mentions=sorted(mentions),
        path_features=sorted(path_features),
        flags=flags,
    )


@dataclass(frozen=True)
class StudyGrid:
    policies: tuple = POLICIES_DEFAULT
    conditions: tuple = CONDITIONS_DEFAULT
    states_per_cell: int = 10
    seed: int = 7
    train_episodes: int = 120
    eval_episodes: int = 30
    max_steps: int = 120
    samples_k: int = 5
    tree_params: TreeParams = TreeParams()

    def validate(self) -> None:
        for p in self.policies:
            PolicyKind(p)
        for c in self.conditions:
            Condition(c).validate()
        if self.states_per_cell < 1:
            raise ValueError("states_per_cell must be >= 1")


@dataclass
class StudyResult:
    rows: list  # GroundingRow in (policy, condition, state index) order
    aggregates: dict  # (policy, condition) -> {"n", "mean_precision", "flags"}
    feature_frequency: list  # (feature, count, in_prompt_examples) sorted
    grid: StudyGrid


def _role_steps(trajectories: Sequence[Trajectory], role: Agent) -> list:
    steps = []
    for traj in trajectories:
        if traj.agent is role:
            steps.extend((s.state, s.features) for s in traj.steps if s.state is not None)
    return steps


def _pick_cell_states(trajectories, per_cell: int, seed: int) -> list:
    """Alternating engineer/medic states drawn from held-out rollouts."""
    rng = random.Random(seed)
    pools = {
        Agent.ENGINEER: _role_steps(trajectories, Agent.ENGINEER),
        Agent.MEDIC: _role_steps(trajectories, Agent.MEDIC),
    }
    picked = {}
    for agent, pool in pools.items():
        want = (per_cell + (1 if agent is Agent.ENGINEER else 0)) // 2
        if want > len(pool):
            raise ValueError(f"not enough held-out {agent.value} steps ({len(pool)}) for the grid")
        picked[agent] = [pool[i] for i in rng.sample(range(len(pool)), want)]
    out = []
    for i in range(per_cell):
        agent = Agent.ENGINEER if i % 2 == 0 else Agent.MEDIC
        out.append((agent, *picked[agent][i // 2]))
    return out


def run_study(
    grid: StudyGrid,
    client,
    prompt_cfg: Optional[PromptConfig] = None,
    table: Optional[PhraseTable] = None,
) -> StudyResult:
    """Generate and score one explanation per (policy, condition, state).

    Session failures mark their row and the grid keeps going. Trees are
    fitted per (policy, role) from training rollouts; cell states come from
    separate held-out rollouts of the same policy.
    """
    grid.validate()
    table = table or default_phrase_table()
    prompt_cfg = prompt_cfg or default_prompt_config()
    lexicon = FeatureLexicon.from_table(table)

    rows = []
    freq: Counter = Counter()
    for p_i, policy_name in enumerate(grid.policies):
        pair = policy_pair(policy_name)
        train = sample_rollouts(
            pair,
            RolloutConfig(grid.train_episodes, base_seed=grid.seed + 1000 * (p_i + 1), max_steps=grid.max_steps),
        )
        held_out = sample_rollouts(
            pair,
            RolloutConfig(grid.eval_episodes, base_seed=grid.seed + 1000 * (p_i + 1) + 500_000, max_steps=grid.max_steps),
        )
        trees = {
            role: fit_tree(build_dataset(train, role), grid.tree_params, role=role)
            for role in (Agent.ENGINEER, Agent.MEDIC)
        }
        cell_states = _pick_cell_states(held_out, grid.states_per_cell, seed=grid.seed + 37 * p_i)

        for condition_kind in grid.conditions:
            for s_i, (agent, state, features) in enumerate(cell_states):
                tree = trees[agent]
                path = extract_path(tree, features, agent)
                condition = Condition(condition_kind, k=grid.samples_k, seed=grid.seed + 101 * s_i)
                try:
                    if condition_kind == "br_path":
                        evidence = path
                    elif condition_kind == "br_states":
                        evidence = sample_state_actions(
                            train, condition.k, condition.seed, table, role=agent
                        )
                    else:
                        evidence = summarize_state(state, agent, table)
                    prompt = build_prompt(condition, evidence, path.action, agent, prompt_cfg, table)
                    ctx = SessionContext(
                        agent=agent, action=path.action, condition=condition,
                        features=features, path=path, tree=tree,
                    )
                    session = open_session(prompt, client, ctx)
                    explanation = session.initial_explanation
                    row = grounding_score(explanation, path, state, agent, lexicon)
                    row.policy = policy_name
                    row.condition = condition_kind
                    row.state_index = s_i
                    freq.update(row.mentions)
                except (SessionError, ValueError) as exc:
                    row = GroundingRow(
                        policy=policy_name, condition=condition_kind, state_index=s_i,
                        agent=agent.value, action=path.action.value, precision=0.0,
                        mentions=[], path_features=sorted(path.feature_set()),
                        flags=[], error=str(exc),
                    )
                rows.append(row)

    aggregates = {}
    for row in rows:
        key = (row.policy, row.condition)
        agg = aggregates.setdefault(key, {"n": 0, "precision_sum": 0.0, "flags": 0, "errors": 0})
        agg["n"] += 1
        agg["precision_sum"] += row.precision
        agg["flags"] += len(row.flags)
        agg["errors"] += 1 if row.error else 0
    for agg in aggregates.values():
        agg["mean_precision"] = agg["precision_sum"] / agg["n"]
        del agg["precision_sum"]

    example_features = _example_features(prompt_cfg, lexicon)
    frequency = [
        (feature, count, feature in example_features)
        for feature, count in sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return StudyResult(rows=rows, aggregates=aggregates, feature_frequency=frequency, grid=grid)


def _example_features(cfg: PromptConfig, lexicon: FeatureLexicon) -> set:
    """Features whose phrases occur in the in-context example texts."""
    chunks = []
    for kind, by_role in cfg.examples.items():
        for role, examples in by_role.items():
            for ex in examples:
                chunks.extend(str(v) for v in ex.values() if isinstance(v, str))
                for obs in ex.get("observations", []) or []:
                    chunks.append(obs)
    return extract_mentions("\n".join(chunks), lexicon)


# ---------------------------------------------------------------------------
# Report output


ROWS_HEADER = [
    "policy", "condition", "state_index", "agent", "action",
    "precision", "n_mentions", "mentions", "path_features", "n_flags", "flags", "error",
]


def rows_csv(result: StudyResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROWS_HEADER)
    for r in result.rows:
        writer.writerow(
            [
                r.policy, r.condition, r.state_index, r.agent, r.action,
                f"{r.precision:.6f}", len(r.mentions), "|".join(r.mentions),
                "|".join(r.path_features), len(r.flags), "|".join(r.flags), r.error,
            ]
        )
    return buf.getvalue()


def frequency_csv(result: StudyResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "mentions", "in_prompt_examples"])
    for feature, count, flagged in result.feature_frequency:
        writer.writerow([feature, count, str(flagged).lower()])
    return buf.getvalue()


def summary_text(result: StudyResult) -> str:
    lines = []
    lines.append("Explanation grounding study")
    lines.append("===========================")
    grid = result.grid
    lines.append(
        f"grid: {len(grid.policies)} policies x {len(grid.conditions)} conditions "
        f"x {grid.states_per_cell} states, seed {grid.seed}"
    )
    lines.append("")
    lines.append(f"{'policy':<15}{'condition':<12}{'n':>4}{'mean_precision':>16}{'flags':>7}{'errors':>8}")
    for policy in grid.policies:
        for condition in grid.conditions:
            agg = result.aggregates.get((policy, condition))
            if agg is None:
                continue
            lines.append(
                f"{policy:<15}{condition:<12}{agg['n']:>4}{agg['mean_precision']:>16.4f}"
                f"{agg['flags']:>7}{agg['errors']:>8}"
            )
    lines.append("")
    lines.append("feature mention frequency (features used in prompt examples marked *):")
    if not result.feature_frequency:
        lines.append("  (no feature mentions)")
    for feature, count, flagged in result.feature_frequency:
        mark = " *" if flagged else ""
        lines.append(f"  {feature:<28}{count:>5}{mark}")
    lines.append("")
    lines.append(
        "note: precision and polarity flags are automated proxies computed against the"
    )
    lines.append(
        "surrogate's decision path and the ground-truth state; they stand in for, but do"
    )
    lines.append("not replicate, human hallucination annotation.")
    lines.append(
        "note: with the echo mock, no_br echoes the true current-state summary (zero"
    )
    lines.append(
        "polarity flags by construction) while br_states echoes other states' summaries,"
    )
    lines.append("so factual flags concentrate in br_states rows.")
    return "\n".join(lines) + "\n"


def write_reports(result: StudyResult, out_dir) -> dict:
    """Write rows/frequency CSVs and the text summary; returns path map."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "rows": os.path.join(out_dir, "study_rows.csv"),
        "frequency": os.path.join(out_dir, "feature_frequency.csv"),
        "summary": os.path.join(out_dir, "study_summary.txt"),
    }
    with open(paths["rows"], "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_csv(result))
    with open(paths["frequency"], "w", encoding="utf-8", newline="") as fh:
        fh.write(frequency_csv(result))
    with open(paths["summary"], "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_text(result))
    return paths

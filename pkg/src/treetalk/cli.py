"""Batch command line for the rollout → distill → explain → study pipeline.

Every subcommand is seeded and, in mock mode, fully deterministic: the same
arguments produce byte-identical output files. Module errors exit 2 with a
one-line message; replay exits 1 when the audit finds disagreements.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from .env import Agent, ScenarioConfig, ScenarioError, is_terminal, new_scenario, step
from .explain import (
    Condition,
    PromptConfigError,
    SessionContext,
    SessionError,
    build_prompt,
    open_session,
    sample_state_actions,
)
from .features import extract_features
from .grounding import StudyGrid, run_study, summary_text, write_reports
from .llm import MockScriptError, TransportError, make_client
from .paths import PathError, extract_path
from .phrases import LanguageConfigError, behavior_text, default_phrase_table, summarize_state
from .policies import (
    PolicyKind,
    RolloutConfig,
    act,
    policy_pair,
    read_jsonl,
    sample_rollouts,
    trajectories_from_records,
    write_jsonl,
)
from .tree import (
    TreeError,
    TreeParams,
    build_dataset,
    dataset_agreement,
    dataset_from_records,
    deserialize_tree,
    fit_tree,
    serialize_tree,
)

MODULE_ERRORS = (
    ScenarioError,
    TreeError,
    PathError,
    LanguageConfigError,
    PromptConfigError,
    MockScriptError,
    TransportError,
    SessionError,
    ValueError,
    OSError,
)


def _agent(raw: str) -> Agent:
    try:
        return Agent(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{raw!r} is not 'engineer' or 'medic'")


def _policy(raw: str) -> PolicyKind:
    try:
        return PolicyKind(raw)
    except ValueError:
        valid = ", ".join(k.value for k in PolicyKind)
        raise argparse.ArgumentTypeError(f"{raw!r} is not one of: {valid}")


# ----- subcommands ----------------------------------------------------------


def cmd_rollout(args) -> int:
    cfg = RolloutConfig(num_rollouts=args.n, base_seed=args.seed, max_steps=args.max_steps)
    trajectories = sample_rollouts(policy_pair(args.policy.value), cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        n = write_jsonl(trajectories, fh, include_states=not args.no_states)
    print(f"wrote {n} steps from {args.n} episodes of {args.policy.value} to {args.out}")
    return 0


def cmd_distill(args) -> int:
    with open(args.trajectories, "r", encoding="utf-8") as fh:
        records = read_jsonl(fh)
    data = dataset_from_records(records, args.role)
    params = TreeParams(max_depth=args.max_depth, min_samples_leaf=args.min_samples_leaf)
    tree = fit_tree(data, params, role=args.role)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_tree(tree))
    agreement = dataset_agreement(tree, data)
    report = "\n".join(
        [
            f"role: {args.role.value}",
            f"training steps: {len(data.rows)}",
            f"tree depth: {tree.depth()}",
            f"leaves: {tree.n_leaves()}",
            f"fidelity (agreement with recorded actions): {agreement:.6f}",
        ]
    )
    print(report)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report + "\n")
    print(f"wrote tree to {args.out}")
    return 0


def _advance(policy_kind: PolicyKind, scenario_seed: int, plies: int):
    state = new_scenario(ScenarioConfig(seed=scenario_seed))
    engineer, medic = policy_pair(policy_kind.value)
    for _ in range(plies):
        if is_terminal(state):
            break
        agent = state.whose_turn
        policy = engineer if agent is Agent.ENGINEER else medic
        state = step(state, agent, act(policy, state, agent))
    return state


def cmd_explain(args) -> int:
    table = default_phrase_table()
    state = _advance(args.policy, args.scenario_seed, args.advance)
    agent = args.role
    features = extract_features(state, agent)

    if args.tree:
        with open(args.tree, "r", encoding="utf-8") as fh:
            tree = deserialize_tree(fh.read())
    else:
        train = sample_rollouts(
            policy_pair(args.policy.value),
            RolloutConfig(args.train_episodes, base_seed=args.train_seed, max_steps=args.max_steps),
        )
        tree = fit_tree(build_dataset(train, agent), role=agent)

    path = extract_path(tree, features, agent)
    condition = Condition(kind=args.condition, k=args.k, seed=args.samples_seed)
    condition.validate()
    if args.condition == "br_path":
        evidence = path
    elif args.condition == "br_states":
        if args.tree:
            if not args.trajectories:
                raise ValueError("br_states with --tree needs --trajectories for sample evidence")
            with open(args.trajectories, "r", encoding="utf-8") as fh:
                train = trajectories_from_records(read_jsonl(fh))
        evidence = sample_state_actions(train, condition.k, condition.seed, table, role=agent)
    else:
        evidence = summarize_state(state, agent, table)

    prompt = build_prompt(condition, evidence, path.action, agent, table=table)
    explanation = None
    if args.mock:
        client = make_client(args.mock, base_url=args.base_url, model=args.model)
        context = SessionContext(
            agent=agent, action=path.action, condition=condition,
            features=features, path=path, tree=tree,
        )
        session = open_session(prompt, client, context)
        explanation = session.initial_explanation

    if args.json:
        doc = {
            "agent": agent.value,
            "condition": condition.kind,
            "action": path.action.value,
            "confidence": path.confidence,
            "behavior_text": behavior_text(path, table),
            "state_summary": summarize_state(state, agent, table),
            "prompt": prompt.serialized(),
            "explanation": explanation,
        }
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        parts = [prompt.serialized()]
        if explanation is not None:
            parts.append("--- explanation ---")
            parts.append(explanation)
        text = "\n\n".join(parts) + "\n"

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote explanation to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_study(args) -> int:
    grid = StudyGrid(
        policies=tuple(args.policies.split(",")),
        conditions=tuple(args.conditions.split(",")),
        states_per_cell=args.states_per_cell,
        seed=args.seed,
        train_episodes=args.train_episodes,
        eval_episodes=args.eval_episodes,
        max_steps=args.max_steps,
    )
    client = make_client(args.mock, base_url=args.base_url, model=args.model)
    result = run_study(grid, client)
    if args.out_dir:
        paths = write_reports(result, args.out_dir)
        for name, p in sorted(paths.items()):
            print(f"wrote {name}: {p}")
    else:
        sys.stdout.write(summary_text(result))
    return 0


def cmd_replay(args) -> int:
    with open(args.trajectories, "r", encoding="utf-8") as fh:
        records = read_jsonl(fh)
    print(f"records: {len(records)}")

    mismatches = 0
    checked = 0
    for i, rec in enumerate(records):
        if rec.state is None:
            continue
        checked += 1
        if extract_features(rec.state, rec.agent) != rec.features:
            mismatches += 1
            if mismatches <= 5:
                print(f"feature mismatch at record {i} (episode {rec.episode}, t {rec.t})")
    if checked:
        print(f"feature integrity: {checked - mismatches}/{checked} records consistent")
    else:
        print("feature integrity: no states stored, skipped")

    disagreements = 0
    if args.tree:
        with open(args.tree, "r", encoding="utf-8") as fh:
            tree = deserialize_tree(fh.read())
        data = dataset_from_records(records, args.role)
        if not data.rows:
            raise ValueError(f"no {args.role.value} records to audit")
        agreement = dataset_agreement(tree, data)
        disagreements = round((1.0 - agreement) * len(data.rows))
        print(f"{args.role.value} tree agreement: {agreement:.6f} over {len(data.rows)} steps")

    return 1 if (mismatches or disagreements) else 0


def cmd_serve(args) -> int:
    from .service import ServiceSettings, serve

    settings = ServiceSettings(
        model=args.mock,
        base_url=args.base_url,
        model_name=args.model,
        train_episodes=args.train_episodes,
        event_log=args.event_log,
        static_dir=args.static_dir,
    )
    serve(settings, host=args.host, port=args.port)
    return 0


# ----- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treetalk",
        description="Distill agent policies into decision trees and explain them in natural language.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rollout", help="run seeded episodes and write a trajectory file")
    p.add_argument("--policy", type=_policy, required=True)
    p.add_argument("--n", type=int, required=True, help="number of episodes")
    p.add_argument("--seed", type=int, default=0, help="base seed; episode i uses seed+i")
    p.add_argument("--max-steps", type=int, default=400)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--no-states", action="store_true", help="omit full states (smaller files)")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("distill", help="fit a decision tree from a trajectory file")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--role", type=_agent, required=True)
    p.add_argument("--out", required=True, help="output tree JSON path")
    p.add_argument("--report", help="also write the fidelity report here")
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--min-samples-leaf", type=int, default=5)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("explain", help="build a prompt (and run it against a mock or remote model)")
    p.add_argument("--policy", type=_policy, default=PolicyKind.EXPERT)
    p.add_argument("--role", type=_agent, required=True)
    p.add_argument("--condition", choices=["br_path", "br_states", "no_br"], default="br_path")
    p.add_argument("--scenario-seed", type=int, default=0)
    p.add_argument("--advance", type=int, default=0, help="plies to roll forward before querying")
    p.add_argument("--k", type=int, default=5, help="samples for br_states")
    p.add_argument("--samples-seed", type=int, default=0)
    p.add_argument("--tree", help="use this tree JSON instead of fitting one")
    p.add_argument("--trajectories", help="sample evidence source when --tree is given")
    p.add_argument("--train-episodes", type=int, default=80)
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=200)
    p.add_argument("--mock", help="echo | remote | path to a mock script; omit to print the prompt only")
    p.add_argument("--base-url", help="remote mode server base URL")
    p.add_argument("--model", default="mock")
    p.add_argument("--json", action="store_true", help="emit a JSON document instead of text")
    p.add_argument("--out", help="write output here instead of stdout")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("study", help="run the policies x conditions grounding grid")
    p.add_argument("--mock", default="echo", help="echo | remote | path to a mock script")
    p.add_argument("--base-url")
    p.add_argument("--model", default="mock")
    p.add_argument("--out-dir", help="write CSVs and summary here; omit to print the summary")
    p.add_argument("--policies", default="expert,explore_first,fixed_north")
    p.add_argument("--conditions", default="br_path,br_states,no_br")
    p.add_argument("--states-per-cell", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--train-episodes", type=int, default=120)
    p.add_argument("--eval-episodes", type=int, default=30)
    p.add_argument("--max-steps", type=int, default=120)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("replay", help="audit a trajectory file (and a tree against it)")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--tree", help="tree JSON to score against the recorded actions")
    p.add_argument("--role", type=_agent, default=Agent.ENGINEER)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8314)
    p.add_argument("--mock", default="echo", help="echo | remote | path to a mock script")
    p.add_argument("--base-url")
    p.add_argument("--model", default="mock")
    p.add_argument("--train-episodes", type=int, default=80)
    p.add_argument("--event-log", help="append-only JSONL audit log path")
    p.add_argument("--static-dir", help="serve these files under /ui")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MODULE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

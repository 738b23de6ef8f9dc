"""CART decision-tree surrogate fitted to observed state-action pairs.

The tree imitates a policy from its trajectories alone, which is what makes
the rest of the pipeline model-agnostic. The fit is deliberately written
from scratch rather than delegated to a library: every tie has a fixed,
documented resolution so fitted trees (and the decision paths read off
them) are bit-reproducible.

Determinism rules:
  * splits minimize the weighted Gini impurity of the two children;
  * candidate thresholds are midpoints between adjacent distinct observed
    values of a feature;
  * equal-impurity ties go to the lowest feature index, then the lowest
    threshold;
  * leaf labels are the majority action, ties broken by Action enum order;
  * recursion stops on purity, max_depth, or min_samples_leaf.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .env import ACTION_INDEX, ACTION_ORDER, Action, Agent, WorldState
from .features import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, FeatureVector, extract_features
from .policies import Policy, StepRecord, Trajectory, act

TREE_SCHEMA = "decision-tree/v1"


class TreeError(ValueError):
    pass


class TreeParseError(TreeError):
    """Malformed serialized tree; message names the offending node index."""


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 8
    min_samples_leaf: int = 5

    def validate(self) -> None:
        if self.max_depth < 1:
            raise TreeError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise TreeError("min_samples_leaf must be >= 1")


@dataclass
class LabeledDataset:
    rows: list  # of (FeatureVector, Action)
    schema_version: int = FEATURE_SCHEMA_VERSION

    def matrices(self) -> Tuple[np.ndarray, np.ndarray]:
        X = np.array([fv.to_list() for fv, _ in self.rows], dtype=np.float64)
        y = np.array([ACTION_INDEX[a] for _, a in self.rows], dtype=np.int64)
        return X, y


def build_dataset(trajectories: Sequence[Trajectory], role: Agent) -> LabeledDataset:
    """One labeled row per recorded step of the given role, order preserved."""
    role = Agent(role)
    rows = [
        (s.features, s.action)
        for traj in trajectories
        if traj.agent is role
        for s in traj.steps
    ]
    if not rows:
        raise TreeError(f"no {role.value} steps in the given trajectories")
    return LabeledDataset(rows)


def dataset_from_records(records: Sequence[StepRecord], role: Agent) -> LabeledDataset:
    role = Agent(role)
    rows = [(r.features, r.action) for r in records if r.agent is role]
    if not rows:
        raise TreeError(f"no {role.value} steps in the given records")
    return LabeledDataset(rows)


@dataclass
class SplitNode:
    feature: int  # index into feature_names
    threshold: float
    left: int  # child node index, samples with value <= threshold
    right: int  # child node index, samples with value > threshold


@dataclass
class LeafNode:
    action: Action
    distribution: dict  # Action -> fraction, nonzero entries in enum order
    samples: int


@dataclass
class DecisionTree:
    feature_names: Tuple[str, ...]
    params: TreeParams
    nodes: list  # SplitNode | LeafNode, preorder: children follow parents
    role: Optional[Agent] = None
    n_samples: int = 0
    schema_version: int = FEATURE_SCHEMA_VERSION

    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes if isinstance(n, LeafNode))

    def depth(self) -> int:
        def walk(idx: int) -> int:
            node = self.nodes[idx]
            if isinstance(node, LeafNode):
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(0)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> Optional[Tuple[float, int, float]]:
    """Lowest weighted-Gini (impurity, feature, threshold), or None.

    Scans features in index order and thresholds in ascending order with a
    strict < comparison, so exact impurity ties keep the earliest candidate.
    """
    n, d = X.shape
    n_classes = len(ACTION_ORDER)
    best: Optional[Tuple[float, int, float]] = None
    for f in range(d):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sy = y[order]
        if sv[0] == sv[-1]:
            continue
        # boundary i splits off sv[:i+1]; only distinct-value boundaries count
        boundaries = np.nonzero(sv[:-1] != sv[1:])[0]
        n_left = boundaries + 1
        n_right = n - n_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not ok.any():
            continue
        boundaries = boundaries[ok]
        n_left = n_left[ok].astype(np.float64)
        n_right = n_right[ok].astype(np.float64)

        cum = np.cumsum(sy[:, None] == np.arange(n_classes)[None, :], axis=0)
        left_counts = cum[boundaries].astype(np.float64)
        right_counts = cum[-1][None, :] - left_counts
        gini_left = 1.0 - (left_counts**2).sum(axis=1) / n_left**2
        gini_right = 1.0 - (right_counts**2).sum(axis=1) / n_right**2
        weighted = (n_left * gini_left + n_right * gini_right) / n

        j = int(np.argmin(weighted))  # first minimum -> lowest threshold
        if best is None or weighted[j] < best[0]:
            b = int(boundaries[j])
            threshold = (sv[b] + sv[b + 1]) / 2.0
            best = (float(weighted[j]), f, float(threshold))
    return best


def _majority(counts: np.ndarray) -> Action:
    # np.argmax returns the first maximum, i.e. the lowest action code
    return ACTION_ORDER[int(np.argmax(counts))]


def _distribution(counts: np.ndarray, n: int) -> dict:
    return {
        ACTION_ORDER[i]: counts[i] / n
        for i in range(len(ACTION_ORDER))
        if counts[i] > 0
    }


def fit_tree(data: LabeledDataset, params: TreeParams = TreeParams(), role: Optional[Agent] = None) -> DecisionTree:
    """Greedy CART fit; a pure function of (data, params)."""
    params.validate()
    if not data.rows:
        raise TreeError("cannot fit a tree on an empty dataset")
    X, y = data.matrices()
    n_classes = len(ACTION_ORDER)
    nodes: list = []

    def build(idx: np.ndarray, depth: int) -> int:
        sub_y = y[idx]
        counts = np.bincount(sub_y, minlength=n_classes)
        n = len(idx)
        pure = int(counts.max()) == n
        split = None
        if not pure and depth < params.max_depth and n >= 2 * params.min_samples_leaf:
            split = _best_split(X[idx], sub_y, params.min_samples_leaf)
        if split is None:
            nodes.append(LeafNode(_majority(counts), _distribution(counts, n), n))
            return len(nodes) - 1
        _, f, threshold = split
        pos = len(nodes)
        nodes.append(None)  # placeholder so children get higher indices
        go_left = X[idx, f] <= threshold
        left = build(idx[go_left], depth + 1)
        right = build(idx[~go_left], depth + 1)
        nodes[pos] = SplitNode(f, threshold, left, right)
        return pos

    build(np.arange(len(y)), 0)
    return DecisionTree(
        feature_names=tuple(FEATURE_NAMES),
        params=params,
        nodes=nodes,
        role=Agent(role) if role is not None else None,
        n_samples=len(y),
    )


def predict(tree: DecisionTree, features: FeatureVector) -> Action:
    """Descend root to leaf with <=/> tests and return the leaf action."""
    if tree.schema_version != FEATURE_SCHEMA_VERSION:
        raise TreeError(
            f"tree built for feature schema v{tree.schema_version}, "
            f"runtime is v{FEATURE_SCHEMA_VERSION}"
        )
    node = tree.nodes[0]
    while isinstance(node, SplitNode):
        value = features.value(tree.feature_names[node.feature])
        node = tree.nodes[node.left if value <= node.threshold else node.right]
    return node.action


def fidelity(tree: DecisionTree, policy: Policy, states: Sequence[WorldState]) -> float:
    """Agreement rate between tree predictions and the policy on states."""
    if not states:
        raise TreeError("fidelity needs at least one state")
    role = policy.role
    hits = sum(
        1
        for s in states
        if predict(tree, extract_features(s, role)) == act(policy, s, role)
    )
    return hits / len(states)


def dataset_agreement(tree: DecisionTree, data: LabeledDataset) -> float:
    """Fraction of dataset rows whose recorded action the tree reproduces."""
    if not data.rows:
        raise TreeError("empty dataset")
    hits = sum(1 for fv, a in data.rows if predict(tree, fv) == a)
    return hits / len(data.rows)


# ---------------------------------------------------------------------------
# JSON wire format


def tree_to_dict(tree: DecisionTree) -> dict:
    nodes = []
    for node in tree.nodes:
        if isinstance(node, SplitNode):
            nodes.append(
                {
                    "kind": "split",
                    "feature": tree.feature_names[node.feature],
                    "threshold": node.threshold,
                    "left": node.left,
                    "right": node.right,
                }
            )
        else:
            nodes.append(
                {
                    "kind": "leaf",
                    "action": node.action.value,
                    "distribution": {a.value: frac for a, frac in node.distribution.items()},
                    "samples": node.samples,
                }
            )
    return {
        "schema": TREE_SCHEMA,
        "feature_schema_version": tree.schema_version,
        "feature_names": list(tree.feature_names),
        "role": tree.role.value if tree.role is not None else None,
        "params": {"max_depth": tree.params.max_depth, "min_samples_leaf": tree.params.min_samples_leaf},
        "n_samples": tree.n_samples,
        "nodes": nodes,
    }


def serialize_tree(tree: DecisionTree) -> str:
    return json.dumps(tree_to_dict(tree), indent=2) + "\n"


def tree_from_dict(doc: dict) -> DecisionTree:
    if doc.get("schema") != TREE_SCHEMA:
        raise TreeParseError(f"unknown tree schema {doc.get('schema')!r}")
    feature_names = tuple(doc["feature_names"])
    known = set(FEATURE_NAMES)
    for name in feature_names:
        if name not in known:
            raise TreeParseError(f"feature_names contains unknown feature '{name}'")
    raw_nodes = doc["nodes"]
    if not raw_nodes:
        raise TreeParseError("node array is empty")
    nodes: list = []
    for i, raw in enumerate(raw_nodes):
        kind = raw.get("kind")
        if kind == "split":
            if raw["feature"] not in feature_names:
                raise TreeParseError(f"node {i}: unknown feature '{raw['feature']}'")
            left, right = int(raw["left"]), int(raw["right"])
            for child in (left, right):
                if not i < child < len(raw_nodes):
                    raise TreeParseError(f"node {i}: child index {child} out of order")
            nodes.append(SplitNode(feature_names.index(raw["feature"]), float(raw["threshold"]), left, right))
        elif kind == "leaf":
            try:
                action = Action(raw["action"])
                dist = {Action(a): float(v) for a, v in raw["distribution"].items()}
            except ValueError as exc:
                raise TreeParseError(f"node {i}: {exc}") from exc
            total = sum(dist.values())
            if dist and abs(total - 1.0) > 1e-6:
                raise TreeParseError(f"node {i}: leaf distribution sums to {total}")
            nodes.append(LeafNode(action, dist, int(raw["samples"])))
        else:
            raise TreeParseError(f"node {i}: unknown kind {kind!r}")
    params_doc = doc.get("params", {})
    params = TreeParams(
        max_depth=int(params_doc.get("max_depth", 8)),
        min_samples_leaf=int(params_doc.get("min_samples_leaf", 5)),
    )
    role = doc.get("role")
    return DecisionTree(
        feature_names=feature_names,
        params=params,
        nodes=nodes,
        role=Agent(role) if role else None,
        n_samples=int(doc.get("n_samples", 0)),
        schema_version=int(doc.get("feature_schema_version", FEATURE_SCHEMA_VERSION)),
    )


def deserialize_tree(text: str) -> DecisionTree:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeParseError(f"not valid JSON: {exc}") from exc
    return tree_from_dict(doc)

"""Decision paths: the per-state rule view of a fitted tree.

A path is the ordered list of (feature, <=/>, threshold) tests the tree
applied to one feature vector, plus the leaf action and its confidence.
This is the evidence unit the explanation prompt carries, the thing the
template renderer verbalizes, and what the counterfactual engine re-derives
after a feature flip.

Counterfactual questions are answered by the surrogate tree, not by the
original policy: the path describes the surrogate's reasoning, and the
honest claim after a flip is "the surrogate would now predict X".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

from .env import Action, Agent
from .features import FeatureVector, validate_feature_values
from .tree import DecisionTree, LeafNode, SplitNode

OP_LE = "<="
OP_GT = ">"


class PathError(ValueError):
    pass


class PathContradiction(PathError):
    """Empty per-feature interval; indicates a malformed tree."""


@dataclass(frozen=True)
class Predicate:
    feature: str
    op: str  # OP_LE or OP_GT
    threshold: float

    def holds(self, value: float) -> bool:
        return value <= self.threshold if self.op == OP_LE else value > self.threshold

    def __str__(self) -> str:
        return f"{self.feature} {self.op} {self.threshold:g}"


@dataclass
class DecisionPath:
    predicates: list  # of Predicate, in traversal order
    action: Action
    confidence: float  # majority fraction at the leaf
    agent: Optional[Agent] = None

    def satisfied_by(self, fv: FeatureVector) -> bool:
        return all(p.holds(fv.value(p.feature)) for p in self.predicates)

    def feature_set(self) -> set:
        return {p.feature for p in self.predicates}


@dataclass(frozen=True)
class FeatureBound:
    """Half-open interval (lower, upper] of allowed values for one feature."""

    lower: float = -math.inf
    upper: float = math.inf

    def holds(self, value: float) -> bool:
        return self.lower < value <= self.upper

    def pinned_binary(self) -> Optional[bool]:
        """True/False when the interval keeps exactly one of {0, 1}."""
        zero_ok = self.holds(0)
        one_ok = self.holds(1)
        if zero_ok == one_ok:
            return None
        return one_ok


@dataclass
class SimplifiedPath:
    """At most one consolidated constraint per feature, first-touch order."""

    bounds: dict = field(default_factory=dict)  # feature -> FeatureBound
    action: Optional[Action] = None
    confidence: float = 0.0
    agent: Optional[Agent] = None

    def satisfied_by(self, fv: FeatureVector) -> bool:
        return all(b.holds(fv.value(name)) for name, b in self.bounds.items())


def extract_path(tree: DecisionTree, features: FeatureVector, agent: Optional[Agent] = None) -> DecisionPath:
    """Record the branch taken at every internal node down to the leaf."""
    predicates = []
    node = tree.nodes[0]
    while isinstance(node, SplitNode):
        name = tree.feature_names[node.feature]
        value = features.value(name)
        if value <= node.threshold:
            predicates.append(Predicate(name, OP_LE, node.threshold))
            node = tree.nodes[node.left]
        else:
            predicates.append(Predicate(name, OP_GT, node.threshold))
            node = tree.nodes[node.right]
    assert isinstance(node, LeafNode)
    if agent is None:
        agent = tree.role
    return DecisionPath(
        predicates=predicates,
        action=node.action,
        confidence=node.distribution.get(node.action, 1.0),
        agent=agent,
    )


def simplify_path(path: DecisionPath) -> SimplifiedPath:
    """Intersect same-feature predicates into one interval each.

    (-inf, t] for "<= t" and (t, inf) for "> t"; the conjunction of the
    resulting bounds is logically equivalent to the raw predicate list.
    """
    bounds: dict = {}
    for p in path.predicates:
        b = bounds.get(p.feature, FeatureBound())
        if p.op == OP_LE:
            b = FeatureBound(b.lower, min(b.upper, p.threshold))
        elif p.op == OP_GT:
            b = FeatureBound(max(b.lower, p.threshold), b.upper)
        else:
            raise PathError(f"unknown predicate op {p.op!r}")
        if b.lower >= b.upper:
            raise PathContradiction(
                f"{p.feature} constrained to empty interval ({b.lower}, {b.upper}]"
            )
        bounds[p.feature] = b
    return SimplifiedPath(
        bounds=bounds,
        action=path.action,
        confidence=path.confidence,
        agent=path.agent,
    )


# A counterfactual query is just the set of feature flips to apply.
CounterfactualQuery = Mapping[str, int]


def counterfactual(
    tree: DecisionTree, features: FeatureVector, q: CounterfactualQuery
) -> Tuple[DecisionPath, bool]:
    """Apply flips, re-traverse, and report whether the action changed.

    Flip values must lie in the feature's domain (see FEATURE_DOMAINS);
    unknown features raise KeyError before anything is evaluated.
    """
    validate_feature_values(q)
    before = extract_path(tree, features)
    after = extract_path(tree, features.with_values(q))
    return after, after.action != before.action

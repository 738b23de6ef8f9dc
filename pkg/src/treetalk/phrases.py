"""Plain-language rendering of decision paths and world states.

One config file carries the whole language surface: per-feature phrase
entries used to verbalize path constraints, the per-role action phrases,
and the state-summary wording. The same entries double as the mention
lexicon the grounding evaluation scans explanations with, so renderer and
scorer can never drift apart.

Wording rules the config must keep to (validated at load):
  * every feature in the schema has an entry, every action has a phrase;
  * no phrase of one feature may contain a phrase of another feature
    (matching is longest-first, so same-feature containment is fine);
  * summary sentences use different surface forms than the canonical
    clause phrases, so a state summary never reads as a path predicate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .env import Action, Agent, WorldState
from .features import FEATURE_DOMAINS, FEATURE_NAMES, DIR_WORDS, extract_features
from .paths import DecisionPath, FeatureBound, PathError, simplify_path


class LanguageConfigError(ValueError):
    pass


@dataclass
class PhraseTable:
    actions: dict  # role value -> action value -> phrase
    features: dict  # feature name -> entry dict
    include_confidence: bool
    confidence_sentence: str
    no_rules_sentence: str


def _default_config_text() -> str:
    return resources.files("treetalk.data").joinpath("feature_language.json").read_text()


def load_phrase_table(path: Optional[str] = None) -> PhraseTable:
    if path is None:
        raw = _default_config_text()
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise LanguageConfigError(f"language config is not valid JSON: {exc}") from exc

    features = doc.get("features", {})
    missing = [n for n in FEATURE_NAMES if n not in features]
    if missing:
        raise LanguageConfigError(f"language config missing features {missing}")
    unknown = [n for n in features if n not in FEATURE_NAMES]
    if unknown:
        raise LanguageConfigError(f"language config has unknown features {unknown}")

    actions = doc.get("actions", {})
    for role in (Agent.ENGINEER, Agent.MEDIC):
        for action in Action:
            if action.value not in actions.get(role.value, {}):
                raise LanguageConfigError(f"no phrase for {role.value}/{action.value}")

    table = PhraseTable(
        actions=actions,
        features=features,
        include_confidence=bool(doc.get("include_confidence", True)),
        confidence_sentence=doc.get(
            "confidence_sentence", "The surrogate model is {pct}% confident in this rule."
        ),
        no_rules_sentence=doc.get(
            "no_rules_sentence", "The surrogate tree found no distinguishing rules for this action."
        ),
    )
    _validate_phrases(table)
    return table


def phrase_entries(table: PhraseTable):
    """All (phrase lowercase, feature, polarity) triples in the config.

    polarity is True/False for phrases that assert a binary feature's value
    and None for stems and none-phrases, which only signal a mention.
    """
    out = []
    for name in FEATURE_NAMES:
        entry = table.features[name]
        for key, polarity in (("true", True), ("false", False), ("summary_true", True), ("summary_false", False)):
            if key in entry:
                out.append((entry[key].lower(), name, polarity))
        if "none" in entry:
            out.append((entry["none"].lower(), name, None))
        for stem in entry.get("stems", []):
            out.append((stem.lower(), name, None))
        for syn in entry.get("synonyms", []):
            out.append((syn["text"].lower(), name, syn.get("polarity")))
    return out


def _validate_phrases(table: PhraseTable) -> None:
    entries = phrase_entries(table)
    seen: dict = {}
    for phrase, feature, _ in entries:
        if not phrase:
            raise LanguageConfigError(f"{feature} has an empty phrase")
        if phrase in seen and seen[phrase] != feature:
            raise LanguageConfigError(
                f"phrase {phrase!r} appears for both {seen[phrase]} and {feature}"
            )
        seen[phrase] = feature
    for a_phrase, a_feat, _ in entries:
        for b_phrase, b_feat, _ in entries:
            if a_feat != b_feat and a_phrase != b_phrase and a_phrase in b_phrase:
                raise LanguageConfigError(
                    f"{a_feat} phrase {a_phrase!r} is contained in {b_feat} phrase {b_phrase!r}; "
                    "matches would be ambiguous"
                )


_DEFAULT_TABLE: Optional[PhraseTable] = None


def default_phrase_table() -> PhraseTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = load_phrase_table()
    return _DEFAULT_TABLE


def action_phrase(table: PhraseTable, action: Action, agent: Agent) -> str:
    return table.actions[Agent(agent).value][Action(action).value]


def _rooms(n: int) -> str:
    return "1 room" if n == 1 else f"{n} rooms"


def _count_clause(entry: dict, bound: FeatureBound, domain) -> str:
    lo_dom, hi_dom = domain
    none_value = entry.get("none_value")
    subject = entry["subject"]
    # integer values allowed by the half-open interval (lower, upper]
    lo = lo_dom if bound.lower == -math.inf else max(lo_dom, int(math.floor(bound.lower)) + 1)
    hi = hi_dom if bound.upper == math.inf else min(hi_dom, int(math.floor(bound.upper)))
    if lo > hi:
        raise PathError(f"constraint on {entry['subject']} allows no value")
    if none_value is not None and lo >= none_value:
        return entry["none"]
    bounded_above = hi < (none_value if none_value is not None else hi_dom)
    bounded_below = lo > lo_dom
    if bounded_below and bounded_above:
        if lo == hi:
            return f"{subject} is exactly {_rooms(lo)} away"
        return f"{subject} is at least {_rooms(lo)} and fewer than {_rooms(hi + 1)} away"
    if bounded_above:
        return f"{subject} is fewer than {_rooms(hi + 1)} away"
    if bounded_below:
        return f"{subject} is at least {_rooms(lo)} away (or none is known)"
    return f"{subject} is any distance away"


def _direction_clause(entry: dict, bound: FeatureBound) -> str:
    codes = [c for c in range(5) if bound.holds(c)]
    if not codes:
        raise PathError(f"constraint on {entry['subject']} allows no direction")
    subject = entry["subject"]
    words = [DIR_WORDS[c] for c in codes if c != 0]
    if not words:
        return entry["none"]
    listed = " or ".join(words)
    if 0 in codes:
        return f"{entry['none']} or {subject} lies to the {listed}"
    return f"{subject} lies to the {listed}"


def render_clause(table: PhraseTable, feature: str, bound: FeatureBound) -> str:
    entry = table.features.get(feature)
    if entry is None:
        raise PathError(f"no phrase entry for feature '{feature}'")
    kind = entry.get("kind")
    if kind == "binary":
        pinned = bound.pinned_binary()
        if pinned is True:
            return entry["true"]
        if pinned is False:
            return entry["false"]
        # vacuous over {0,1}; only reachable with hand-built trees
        return f"{entry['true']} or {entry['false']}"
    if kind == "count":
        return _count_clause(entry, bound, FEATURE_DOMAINS[feature])
    if kind == "direction":
        return _direction_clause(entry, bound)
    raise PathError(f"feature '{feature}' has unknown kind {kind!r}")


def render_template(path: DecisionPath, table: Optional[PhraseTable] = None) -> str:
    """Baseline sentence straight from the decision path.

    One clause per simplified constraint, "because ... and ..." joining,
    action phrase first. Deterministic, so golden tests can pin bytes.
    """
    table = table or default_phrase_table()
    if path.agent is None:
        raise PathError("path has no agent; cannot choose action phrasing")
    simplified = simplify_path(path)
    head = action_phrase(table, path.action, path.agent)
    if not simplified.bounds:
        return f"{head}."
    clauses = [render_clause(table, name, b) for name, b in simplified.bounds.items()]
    return f"{head} because {' and '.join(clauses)}."


def behavior_text(path: DecisionPath, table: Optional[PhraseTable] = None) -> str:
    """Template sentence plus the confidence / no-rules tail used in prompts."""
    table = table or default_phrase_table()
    text = render_template(path, table)
    if not path.predicates:
        return f"{text} {table.no_rules_sentence}"
    if table.include_confidence:
        pct = int(round(path.confidence * 100))
        return f"{text} {table.confidence_sentence.format(pct=pct)}"
    return text


def _capitalize(sentence: str) -> str:
    return sentence[0].upper() + sentence[1:] if sentence else sentence


def summarize_state(state: WorldState, agent: Agent, table: Optional[PhraseTable] = None) -> str:
    """One-line state description from the agent's point of view.

    Uses the summary_* surface forms, which are lexicon synonyms distinct
    from the canonical clause phrases; mentions stay detectable without a
    summary ever reading as a path predicate.
    """
    table = table or default_phrase_table()
    agent = Agent(agent)
    fv = extract_features(state, agent)
    row, col = state.position(agent)
    parts = [f"The {agent.value} is at row {row}, column {col}."]
    for name in FEATURE_NAMES:
        entry = table.features[name]
        if "summary_true" not in entry:
            continue
        key = "summary_true" if fv.value(name) else "summary_false"
        parts.append(_capitalize(entry[key]) + ".")
    parts.append(f"{state.rescued_count} of {state.victims_total} victims rescued.")
    return " ".join(parts)

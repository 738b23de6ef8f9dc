"""Decision-tree surrogates that explain agent behavior in natural language.

Pipeline: roll out a scripted team policy in the search-and-rescue
gridworld, distill each role into a small decision tree, read off the
decision path for any queried state, and hand that path (or raw samples,
or nothing) to a language model as evidence for an explanation. Follow-up
questions stay grounded by re-evaluating the tree on counterfactual
feature values.
"""

__version__ = "0.1.0"

from .env import (
    Action,
    Agent,
    ScenarioConfig,
    WorldState,
    legal_actions,
    new_scenario,
    step,
)
from .explain import Condition, build_prompt, follow_up, open_session
from .features import FEATURE_NAMES, FeatureVector, extract_features
from .grounding import FeatureLexicon, StudyGrid, extract_mentions, grounding_score, run_study
from .llm import EchoClient, ModelConfig, RemoteClient, ScriptedClient
from .paths import DecisionPath, counterfactual, extract_path, simplify_path
from .phrases import behavior_text, render_template, summarize_state
from .policies import Policy, PolicyKind, RolloutConfig, policy_pair, sample_rollouts
from .tree import DecisionTree, TreeParams, build_dataset, fidelity, fit_tree, predict

__all__ = [
    "Action",
    "Agent",
    "Condition",
    "DecisionPath",
    "DecisionTree",
    "EchoClient",
    "FEATURE_NAMES",
    "FeatureLexicon",
    "FeatureVector",
    "ModelConfig",
    "Policy",
    "PolicyKind",
    "RemoteClient",
    "RolloutConfig",
    "ScenarioConfig",
    "ScriptedClient",
    "StudyGrid",
    "TreeParams",
    "WorldState",
    "behavior_text",
    "build_dataset",
    "build_prompt",
    "counterfactual",
    "extract_features",
    "extract_mentions",
    "extract_path",
    "fidelity",
    "fit_tree",
    "follow_up",
    "grounding_score",
    "legal_actions",
    "new_scenario",
    "open_session",
    "policy_pair",
    "predict",
    "render_template",
    "run_study",
    "sample_rollouts",
    "simplify_path",
    "step",
    "summarize_state",
    "__version__",
]

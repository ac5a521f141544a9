"""Differentially private trajectory synthesis with a noisy prefix tree and
a noisy m-order Markov model, plus utility metrics for the output."""

from .geo import STOP, BoundingBox, GeoPoint, GridSpec, RawTrajectory, calibrate
from .markov import build_fm, normalize, perturb
from .metrics import EvalConfig, MetricsReport, evaluate
from .pipeline import RunConfig, run
from .prefix_tree import build, enforce_consistency
from .privacy import NoiseSource, PrivacyBudget, level_budgets, split_budget
from .synthesis import SynthesisConfig, generate

__version__ = "0.1.0"

__all__ = [
    "STOP", "BoundingBox", "GeoPoint", "GridSpec", "RawTrajectory", "calibrate",
    "build_fm", "normalize", "perturb", "EvalConfig", "MetricsReport", "evaluate",
    "RunConfig", "run", "build", "enforce_consistency", "NoiseSource", "PrivacyBudget",
    "level_budgets", "split_budget", "SynthesisConfig", "generate",
]

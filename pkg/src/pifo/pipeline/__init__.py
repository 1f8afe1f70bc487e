"""End-to-end orchestration: experts, demonstrations, imitation, evaluation."""

from ..envs.demo_io import DemoSet, read_demos, write_demos
from .demos import record_demos
from .evaluate import EvalResult, Evaluation, evaluate, evaluate_policy, normalized_score
from .runs import MetricsRow, RunRecord, read_metrics
from .training import imitate, train_expert

__all__ = [
    "DemoSet", "EvalResult", "Evaluation", "MetricsRow", "RunRecord", "evaluate",
    "evaluate_policy", "imitate", "normalized_score", "read_demos", "read_metrics",
    "record_demos", "train_expert", "write_demos",
]

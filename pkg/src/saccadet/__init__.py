"""Weakly-supervised region detection with a learned sequential search.

Two trainable pieces: a linear region confidence function learned from
bag-labeled scenes by constrained multiple-instance optimization, and a
saccade-and-fixate search policy trained by policy gradients to localize
targets while scoring only a fraction of the candidate regions.
"""

from .geometry import Rect, RegionId, containment_fraction, fringe_set, intersection_area, iou, subregion_set
from .dataset import (
    Bag,
    Dataset,
    DatasetFormatError,
    GeneratorConfig,
    Region,
    SyntheticImage,
    generate,
    load,
    make_bags,
    save,
)
from .svm import LinearModel, SvmConfig, decision, train
from .mil import CmiConfig, CmiResult, cmi_svm_train, constraint_violations, mi_svm_train, mil_objective
from .agent import AgentState, Episode, PolicyParams, Saccade, Terminate, observe, reward, rollout, sample_step
from .reinforce import (
    EnumerableInstance,
    TrainConfig,
    episode_score_gradient,
    estimate_gradient,
    exact_objective_and_gradient,
    fd_check,
    train_policy,
)
from .metrics import Detection, EvalReport, MatchCriterion, classification_ap, cost_report, detection_ap, nms

__version__ = "0.1.0"

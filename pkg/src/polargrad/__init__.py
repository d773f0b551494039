"""Polarized policy gradients for cooperative multi-agent games.

Library layout: ``envs`` (enumerable games and oracles), ``policies``
(softmax / Gaussian actors), ``critics`` (double critics, targets, replay,
TD), ``polarization`` (the value transforms, marginals and clipping),
``learner`` (training loops and baselines), ``verify`` (numeric theorem
checks), ``cli`` (experiment harness). The feedforward critic runs on a
compiled kernel core when built, with a numpy fallback (``kernels.BACKEND``).
"""

from .envs import (
    DifferentialGame,
    JointAction,
    MatrixGame,
    TabularMDP,
    enumerate_joint_actions,
    max_of_two_quadratics,
    optimal_joint_action,
    qtran_matrix_game,
    step,
    value_iteration,
)
from .kernels import BACKEND
from .learner import TrainConfig, default_train_config, run
from .polarization import PolarizationParams
from .policies import ExplorationSchedule, GaussianPolicy, SoftmaxPolicy

__version__ = "0.1.0"

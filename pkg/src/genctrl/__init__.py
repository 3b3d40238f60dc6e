"""Controlled two-qubit multiparameter estimation: dynamics, Fisher information,
GRAPE and DDPG control, and exact shift generalization of optimized pulses."""

from .dynamics import Scenario, make_example1, make_example2, propagate, scenario_from_dict
from .fisher import evaluate, propagate_with_sensitivity
from .grape import GrapeConfig, grape_optimize
from .shift import decompose_shift, generalize, shift_pulse, transform_matrix

__version__ = "0.1.0"

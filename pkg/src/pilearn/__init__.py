"""Sublinear primal-dual policy learning for ergodic average-reward MDPs."""

from .exact import GroundTruth, NonErgodicError, solve_optimal
from .learner import LearnerConfig, LearnResult, run
from .mdp import MdpModel, ModelError, ParseError, read_model, write_model
from .sampling import SamplingOracle, WeightTree

__all__ = [
    "GroundTruth", "LearnResult", "LearnerConfig", "MdpModel", "ModelError", "NonErgodicError",
    "ParseError", "SamplingOracle", "WeightTree", "read_model", "run", "solve_optimal",
    "write_model",
]

"""Distributionally robust average-reward MDPs under KL and f_k divergence balls."""

from .amdp import (
    AdversarialPowerReport,
    AnchorParams,
    AvgRewardSolution,
    Method,
    anchored_amdp,
    check_adversarial_power,
    ground_truth_gain,
    reduce_to_dmdp,
)
from .bellman import DiscountedSolution, DiscountedSolveParams, evaluate_policy, solve_dr_dmdp
from .duals import Divergence, DualSolution, UncertaintySet, gamma, worst_case
from .ergodicity import (
    DoeblinCertificate,
    ErgodicityReport,
    diagnose_kernel,
    minorization_time,
    mixing_time,
    model_minorization_time,
    span_norm,
)
from .errors import (
    ConfigError,
    DramdpError,
    InsufficientData,
    MaxItersExceeded,
    NonErgodic,
    SupportTooLarge,
    TooManyPolicies,
)
from .experiment import ExperimentConfig, ExperimentRecord, RegressionFit, fit_loglog, run_experiment
from .instances import hard_mdp, random_mdp
from .model import EmpiricalKernel, MdpModel, sample_transitions

__version__ = "0.1.0"

"""Gaussian-process regression for sharp regression discontinuity designs."""

from .bayes import (MCMCConfig, PriorSpec, TauPosterior, mle_hyperparams, mle_tau, plugin_tau, sample_hyperparams,
                    tau_posterior)
from .dgps import DGP_NAMES, DgpSpec, all_dgps, generate_replication, get_dgp
from .errors import (CampaignFailure, EmptyArm, EmptySide, FactorizationFailure, GprddError, InsufficientSupport,
                     NonConvergence, OptimizationFailure, ParseError)
from .gp import KernelParams, MeanBasis, gp_conditional, gp_predict, marginal_loglik, marginal_loglik_grad
from .llr import LlrFit, LlrKernel, llr_arm_estimate, llr_tau, select_bandwidth_cv, select_bandwidth_ik
from .model import Arm, Assumption, ModelSpec, RddDataset, tau_conditional
from .sim import SimulationReport, gpr_cut_fit, run_campaign, second_derivative_profile, sliding_window_mle_ratio

__version__ = "0.1.0"

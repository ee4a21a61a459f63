"""Transmit covariance design for MIMO sensing-and-communication with a
Gaussian-mixture prior on the target angle."""
try:
    from importlib.metadata import version

    __version__ = version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

from .exceptions import (ConfigError, InfeasibleError, ISACError, LinAlgError, QuadratureError,
                         SolverError, UnboundedError)
from .model import (ANGLE_DOMAIN, GaussianMixture, SystemConfig, TargetEnvironment, UserGeometry,
                    gm_logpdf, gm_pdf, gm_sample, rician_channel, steering_rx, steering_rx_deriv,
                    steering_tx, steering_tx_deriv)
from .numerics import (RANK_TOL, QuadratureSpec, hermitian_evd, integrate_matrix, integrate_scalar,
                       psd_inv_sqrt, reduced_svd, water_filling)
from .fisher import (SensingMatrices, beampattern, compute_sensing_matrices, crb_expected,
                     crb_point, observation_fim, pcrb, pcrb_upper, rate)
from .optimal import (BarrierOptions, OptimalSolveResult, capacity_waterfilling, check_feasibility,
                      rank_diagnostics, solve_p3)
from .suboptimal import (DualPoint, EllipsoidOptions, SolveResult, build_q, inner_solution,
                         sensing_only_upper, solve_p4, solve_p4_miso)
from .benchmarks import (BenchmarkSpec, expected_crb_exact, expected_crb_inexact,
                         point_mass_matrices, solve_known_angle)
from .estimation import (EchoObservation, GridSpec, TrialBatch, gen_echo, gen_signals,
                         map_estimate, mle_estimate, monte_carlo_mse, profile_alpha)
from .config import ExperimentConfig, default_scenario, dump_config, load_config, loads_config
from .estimators import (KnownAngleDesign, MAPAngleEstimator, MLEAngleEstimator,
                         OptimalISACDesign, SuboptimalISACDesign)

__all__ = ["__version__",
           "ConfigError",
           "InfeasibleError",
           "ISACError",
           "LinAlgError",
           "QuadratureError",
           "SolverError",
           "UnboundedError",
           "ANGLE_DOMAIN",
           "GaussianMixture",
           "SystemConfig",
           "TargetEnvironment",
           "UserGeometry",
           "gm_logpdf",
           "gm_pdf",
           "gm_sample",
           "rician_channel",
           "steering_rx",
           "steering_rx_deriv",
           "steering_tx",
           "steering_tx_deriv",
           "RANK_TOL",
           "QuadratureSpec",
           "hermitian_evd",
           "integrate_matrix",
           "integrate_scalar",
           "psd_inv_sqrt",
           "reduced_svd",
           "water_filling",
           "SensingMatrices",
           "beampattern",
           "compute_sensing_matrices",
           "crb_expected",
           "crb_point",
           "observation_fim",
           "pcrb",
           "pcrb_upper",
           "rate",
           "BarrierOptions",
           "OptimalSolveResult",
           "capacity_waterfilling",
           "check_feasibility",
           "rank_diagnostics",
           "solve_p3",
           "DualPoint",
           "EllipsoidOptions",
           "SolveResult",
           "build_q",
           "inner_solution",
           "sensing_only_upper",
           "solve_p4",
           "solve_p4_miso",
           "BenchmarkSpec",
           "expected_crb_exact",
           "expected_crb_inexact",
           "point_mass_matrices",
           "solve_known_angle",
           "EchoObservation",
           "GridSpec",
           "TrialBatch",
           "gen_echo",
           "gen_signals",
           "map_estimate",
           "mle_estimate",
           "monte_carlo_mse",
           "profile_alpha",
           "ExperimentConfig",
           "default_scenario",
           "dump_config",
           "load_config",
           "loads_config",
           "KnownAngleDesign",
           "MAPAngleEstimator",
           "MLEAngleEstimator",
           "OptimalISACDesign",
           "SuboptimalISACDesign",
           ]

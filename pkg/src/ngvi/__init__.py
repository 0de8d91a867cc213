"""Natural-gradient Gaussian variational inference in square-root form."""

from .errors import (ConfigError, DimensionError, FactorizationError, FetchError,
                     IntegrationError, IntegrityError, NgviError, ParseError, PositivityError,
                     SplitError, StepSizeError, TheoryViolationError)
from .gaussian import (GaussianParams, MomentEstimates, NaturalState, elbo, from_natural,
                       gaussian_kl, neg_entropy, to_natural, tril_half_diag)
from .oracles import OracleConfig, ProblemSpec, expected_loss, inject_bias, moments
from .optimizers import (RunRecord, StepConfig, TheoryConstants, bwgd_step, gd_step,
                         permissible_step, run_optimizer, srvn_direction, srvn_step, vn_step)
from .flow import FlowConfig, FlowTrajectory, integrate_flow, lyapunov_report
from .theory import assemble_fim_inverse, build_vectorization, check_lemma1, check_pl, neumann_gap
from .data import DesignMatrix, fetch_dataset, load_dataset, parse_libsvm, split
from .harness import ExperimentConfig, compute_test_metrics, emit_plot_data, run_experiment
from .verify import verify_suite

__version__ = "0.1.0"

"""Online sketched Newton-Raphson for time-varying root finding and convex optimization."""
__version__ = "0.1.0"

from .affine import AffineConstraintSet, build_constraints, project_onto, reduce_field
from .algorithms import RunConfig, TrajectoryRecord, ogd_run, osnr_ec_run, osnr_run, run
from .errors import *  # noqa: F401,F403
from .matpower import PowerCase, fixture_path, load_case, parse_case
from .metrics import (BoundParameters, aggregate, b_variation, estimate_mu, path_variation,
                      regret_dynamic, regret_zero, round_oracle, theoretical_bound, violation)
from .problems import (OnlineVectorField, PenalizedOpf, QuadraticObjective, QuadraticRoot,
                       TargetTracking, opf_build)
from .sketch import SketchSelector, pinv_psd, sample_sketch, sketched_gram, snr_step

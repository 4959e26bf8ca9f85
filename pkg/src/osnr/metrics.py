"""Regret, constraint violation, path variation, bound overlays and aggregation."""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .affine import project_onto
from .errors import InvalidArgumentError, OracleFailure
from .problems import GRADIENT
from .sketch import SketchSelector, resolve_tau, sample_sketch, snr_step


@dataclass
class RegretReport:
    """A cumulative (or per-round) series with cross-seed statistics when aggregated."""

    series: np.ndarray
    final: float
    std: np.ndarray = None
    final_std: float = None
    runs: int = 1
    bound: float = None

    @property
    def mean(self):
        return self.series


def _report(values, bound=None):
    series = np.cumsum(np.asarray(values, dtype=float))
    return RegretReport(series=series, final=float(series[-1]) if series.size else 0.0,
                        bound=bound)


def _overlay(bound_params, V, use_c_hat):
    if bound_params is None:
        return None
    return theoretical_bound(bound_params, V, use_c_hat=use_c_hat)


def regret_zero(traj, bound_params=None, V=0.0, use_c_hat=False):
    """Prefix sums of the residual norms; ``bound`` is filled when ``bound_params`` is given."""
    return _report(traj.residual_norm, _overlay(bound_params, V, use_c_hat))


def regret_dynamic(traj, oracle_losses=None, bound_params=None, V=0.0, use_c_hat=False):
    oracle = traj.oracle_loss if oracle_losses is None else np.asarray(oracle_losses, dtype=float)
    if oracle is None:
        raise InvalidArgumentError("no oracle losses recorded or supplied")
    if len(oracle) != len(traj.loss):
        raise InvalidArgumentError(
            f"oracle series has length {len(oracle)}, trajectory has {len(traj.loss)} rounds")
    return _report(np.asarray(traj.loss) - oracle, _overlay(bound_params, V, use_c_hat))


def violation(traj):
    if traj.violation_norm is None:
        raise InvalidArgumentError("trajectory carries no constraint violations")
    return _report(traj.violation_norm)


def b_variation(traj):
    """Cumulative ``sum ||b_t - b_{t-1}||`` recorded alongside an OSNR-EC run."""
    if traj.b_delta_norm is None:
        raise InvalidArgumentError("trajectory carries no right-hand-side deltas")
    return _report(traj.b_delta_norm)


def path_variation(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < 1:
        raise InvalidArgumentError("need at least one point")
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


# -- bound overlay -------------------------------------------------------------

@dataclass(frozen=True)
class BoundParameters:
    mu: float
    L: float
    C: float
    C_hat: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise InvalidArgumentError(f"mu must lie in (0, 1), got {self.mu}")
        if not self.L > 0:
            raise InvalidArgumentError(f"L must be positive, got {self.L}")
        if self.C < 0 or self.C_hat < 0:
            raise InvalidArgumentError("C and C_hat must be non-negative")

    @classmethod
    def from_distances(cls, mu, L, dist0, dist1):
        """``C = sqrt(1 - mu) * ||x0 - x0*||`` and ``C_hat = ||x1 - x1*||``."""
        return cls(mu=mu, L=L, C=math.sqrt(1.0 - mu) * dist0, C_hat=dist1)


def theoretical_bound(bp, V, use_c_hat=False):
    """``L (V + C) / (1 - sqrt(1 - mu))``; ``use_c_hat`` swaps in ``C_hat``."""
    const = bp.C_hat if use_c_hat else bp.C
    return bp.L * (V + const) / (1.0 - math.sqrt(1.0 - bp.mu))


# -- round oracle ----------------------------------------------------------------

def _merit(problem, x):
    if problem.mode == GRADIENT:
        return problem.loss(x)
    r = problem.F(x)
    return 0.5 * float(r @ r)


def _line_search(merit, x, d, slope, f0, max_halvings=40):
    """Backtracking on ``x - s d``; falls back to the full step if nothing decreases."""
    s = 1.0
    for _ in range(max_halvings):
        try:
            f = merit(x - s * d)
        except ArithmeticError:
            f = math.inf
        if f <= f0 - 1e-4 * s * slope + 1e-12 * abs(f0):
            return x - s * d
        s *= 0.5
    return x - d


def round_oracle(problem, cs=None, b=None, x_start=None, tol=1e-10, max_iter=100):
    """Solve the frozen current round by full-sketch Newton steps.

    Unconstrained: iterate until ``||F(x)|| <= tol``. With a constraint set the
    iterate is first projected onto ``A x = b`` (``b`` defaults to
    ``problem.b``) and Newton steps are taken in the null space until the
    reduced gradient norm is ``<= tol``. ``max_iter`` caps the number of Newton
    steps. Returns ``(x*, g(x*))``.
    """
    n = problem.n
    x = np.zeros(n) if x_start is None else np.array(x_start, dtype=float)
    merit = lambda y: _merit(problem, y)  # noqa: E731
    if cs is not None:
        if problem.mode != GRADIENT:
            raise InvalidArgumentError("constrained oracle needs a gradient-field problem")
        b = problem.b if b is None else b
        x = project_onto(cs, x, b)
        M = cs.M
        if M.shape[1] == 0:
            return x, problem.loss(x)
        full = SketchSelector.full(M.shape[1])
        for it in range(max_iter + 1):
            g, grad, hess = problem.objective(x)
            Fr = M.T @ grad
            if np.linalg.norm(Fr) <= tol:
                return x, g
            if it == max_iter:
                break
            rep = snr_step(Fr, M.T @ hess @ M, full)
            d = M @ rep.direction
            x = _line_search(merit, x, d, float(Fr @ rep.direction), g)
        raise OracleFailure(f"constrained oracle did not reach tol={tol} in {max_iter} iterations")

    full = SketchSelector.full(problem.m)
    for it in range(max_iter + 1):
        F, DF = problem.evaluate(x)
        if np.linalg.norm(F) <= tol:
            return x, problem.loss(x)
        if it == max_iter:
            break
        rep = snr_step(F, DF, full)
        f0 = merit(x)
        if problem.mode == GRADIENT:
            slope = float(F @ rep.direction)
        else:
            slope = float((DF @ F) @ rep.direction)
        x = _line_search(merit, x, rep.direction, slope, f0)
    raise OracleFailure(f"oracle did not reach tol={tol} in {max_iter} iterations")


# -- strong quasar-convexity estimate -------------------------------------------

@dataclass
class MuEstimate:
    mu: float
    flagged: bool
    witness: np.ndarray
    ratios: np.ndarray
    violations: list = field(default_factory=list)


def _sketch_family(m, tau, rng, max_enum, mc_sketches):
    if math.comb(m, tau) <= max_enum:
        return [SketchSelector(np.array(c), m) for c in itertools.combinations(range(m), tau)]
    return [sample_sketch(m, tau, rng) for _ in range(mc_sketches)]


def mu_ratio(F_x, DF_x, F_star, x, x_star, sketches):
    """Largest ``mu`` for which the quasar-convexity inequality holds at ``x``.

    Expectations over sketches are averages over ``sketches`` (the full family
    when it was enumerated).
    """
    delta = x - x_star
    d_mean = np.zeros_like(x)
    f_x = f_star = 0.0
    for sel in sketches:
        rep = snr_step(F_x, DF_x, sel)
        d_mean += rep.direction
        f_x += rep.f_value
        f_star += snr_step(F_star, DF_x, sel).f_value
    k = len(sketches)
    d_mean /= k
    f_x /= k
    f_star /= k
    return 2.0 * (f_star - f_x + d_mean @ delta) / float(delta @ delta)


def estimate_mu(problem, x_star, rng, tau=None, rho=None, radius=1.0, samples=64,
                points=None, max_enum=5000, mc_sketches=2000):
    """Empirical quasar-convexity constant over points sampled in a ball around ``x_star``.

    The estimate is an upper bound on the true constant over the ball (it only
    sees finitely many points) and is meant for labelled bound overlays.
    """
    x_star = np.asarray(x_star, dtype=float)
    if tau is None and rho is None:
        rho = 1.0
    tau = resolve_tau(problem.m, tau, rho)
    sketches = _sketch_family(problem.m, tau, rng, max_enum, mc_sketches)
    if points is None:
        u = rng.standard_normal((samples, problem.n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = radius * rng.random(samples) ** (1.0 / problem.n)
        points = x_star + u * r[:, None]
    points = np.asarray(points, dtype=float)
    F_star = problem.F(x_star)
    ratios = np.empty(len(points))
    for i, x in enumerate(points):
        F_x, DF_x = problem.evaluate(x)
        ratios[i] = mu_ratio(F_x, DF_x, F_star, x, x_star, sketches)
    j = int(np.argmin(ratios))
    violations = [(points[i].copy(), float(ratios[i])) for i in np.flatnonzero(ratios <= 0)]
    flagged = ratios[j] <= 0
    mu = 0.0 if flagged else float(min(ratios[j], 1.0))
    return MuEstimate(mu=mu, flagged=bool(flagged), witness=points[j].copy(),
                      ratios=ratios, violations=violations)


# -- cross-seed aggregation -------------------------------------------------------

_METRICS = {
    "regret_zero": lambda tr: regret_zero(tr).series,
    "regret_dynamic": lambda tr: regret_dynamic(tr).series,
    "violation": lambda tr: violation(tr).series,
    "b_variation": lambda tr: b_variation(tr).series,
    "residual_norm": lambda tr: np.asarray(tr.residual_norm, dtype=float),
    "loss": lambda tr: np.asarray(tr.loss, dtype=float),
    "step_seconds": lambda tr: np.asarray(tr.step_seconds, dtype=float),
    "gram_rank": lambda tr: np.asarray(tr.gram_rank, dtype=float),
}


def aggregate(runs, metric="regret_zero"):
    """Per-round mean and unbiased standard deviation of ``metric`` across runs."""
    if not runs:
        raise InvalidArgumentError("nothing to aggregate")
    select = _METRICS[metric] if isinstance(metric, str) else metric
    lengths = {tr.T for tr in runs}
    if len(lengths) != 1:
        raise InvalidArgumentError(f"runs have different horizons: {sorted(lengths)}")
    data = np.vstack([select(tr) for tr in runs])
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros_like(mean)
    T = data.shape[1]
    return RegretReport(series=mean, final=float(mean[-1]) if T else 0.0, std=std,
                        final_std=float(std[-1]) if T else 0.0, runs=len(runs))

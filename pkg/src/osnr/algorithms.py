"""Online loops: OSNR, OSNR-EC, online gradient descent, and the ONM alias."""
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .affine import project_onto
from .errors import InvalidArgumentError, OsnrError, PreconditionError, RunAborted
from .problems import GRADIENT
from .sketch import resolve_tau, sample_sketch, snr_step
from .streams import derive_rng

log = logging.getLogger(__name__)

ALGORITHMS = ("osnr", "osnr_ec", "ogd", "onm")
FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class RunConfig:
    T: int
    tau: int = None
    rho: float = None
    seed: int = 0
    algorithm: str = "osnr"
    eta: float = None
    record_decisions: bool = False
    steps_per_round: int = 1
    rel_tol: float = 1e-12

    def __post_init__(self):
        if self.T < 0:
            raise InvalidArgumentError(f"T must be >= 0, got {self.T}")
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {self.algorithm!r}")
        if self.rho is not None and not 0 < self.rho <= 1:
            raise InvalidArgumentError(f"rho must lie in (0, 1], got {self.rho}")
        if self.tau is not None and self.tau < 1:
            raise InvalidArgumentError(f"tau must be >= 1, got {self.tau}")
        if self.eta is not None and not self.eta > 0:
            raise InvalidArgumentError(f"eta must be positive, got {self.eta}")
        if self.steps_per_round < 1:
            raise InvalidArgumentError("steps_per_round must be >= 1")

    def echo(self):
        return dataclasses.asdict(self)


@dataclass
class TrajectoryRecord:
    """Per-round measurements of one seeded run.

    ``step_seconds`` times the decision update only (sketch sampling, the
    sketched step and, for OSNR-EC, the projection), not the field evaluation.
    ``violation_norm``/``b_delta_norm`` are ``None`` for unconstrained runs and
    ``oracle_loss`` is ``None`` unless a round oracle was supplied.
    """

    loss: np.ndarray
    residual_norm: np.ndarray
    step_seconds: np.ndarray
    gram_rank: np.ndarray
    violation_norm: np.ndarray = None
    b_delta_norm: np.ndarray = None
    oracle_loss: np.ndarray = None
    decisions: np.ndarray = None
    seed: int = 0
    config: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def T(self):
        return len(self.residual_norm)


class _Recorder:
    def __init__(self, constrained, with_oracle, with_decisions):
        self.rows = {k: [] for k in ("loss", "residual_norm", "step_seconds", "gram_rank")}
        if constrained:
            self.rows["violation_norm"] = []
            self.rows["b_delta_norm"] = []
        if with_oracle:
            self.rows["oracle_loss"] = []
        if with_decisions:
            self.rows["decisions"] = []

    def add(self, **values):
        for k, v in values.items():
            if k in self.rows:
                self.rows[k].append(v)

    def finish(self, cfg, diagnostics):
        # truncate to the shortest column so an aborted round leaves no ragged tail
        T = min(len(v) for v in self.rows.values())
        arrays = {}
        for k, v in self.rows.items():
            if k == "decisions":
                arrays[k] = np.array(v[:T]).reshape(T, -1)
            elif k == "gram_rank":
                arrays[k] = np.array(v[:T], dtype=int)
            else:
                arrays[k] = np.array(v[:T], dtype=float)
        return TrajectoryRecord(seed=cfg.seed, config=cfg.echo(), diagnostics=diagnostics, **arrays)


def default_eta(T):
    return 1.0 / (15.0 * math.sqrt(max(T, 1)))


def resolve_onm(cfg, constrained=False):
    """ONM is OSNR (or OSNR-EC) with the full sketch."""
    if cfg.algorithm != "onm":
        return cfg
    return dataclasses.replace(cfg, algorithm="osnr_ec" if constrained else "osnr", tau=None, rho=1.0)


def _loss_and_residual(problem, x, F):
    if problem.mode == GRADIENT:
        return problem.loss(x), float(np.linalg.norm(F))
    return float(F @ F), float(np.linalg.norm(F))


def osnr_run(problem, cfg, x0, oracle=None):
    """Online sketched Newton-Raphson on a root-finding or gradient field.

    ``oracle``, if given, is called as ``oracle(problem)`` each round before the
    problem advances and must return the round-optimal loss.
    """
    cfg = resolve_onm(cfg)
    if cfg.algorithm != "osnr":
        raise InvalidArgumentError(f"osnr_run cannot execute algorithm {cfg.algorithm!r}")
    tau = resolve_tau(problem.m, cfg.tau, cfg.rho) if cfg.T else None
    rng = derive_rng(cfg.seed, "sketch")
    rec = _Recorder(False, oracle is not None, cfg.record_decisions)
    diag = {"tau": tau, "rank_deficient_steps": 0}
    x = np.array(x0, dtype=float)
    t = 0
    try:
        for t in range(1, cfg.T + 1):
            F, DF = problem.evaluate(x)
            loss, res = _loss_and_residual(problem, x, F)
            rec.add(loss=loss, residual_norm=res,
                    oracle_loss=oracle(problem) if oracle else None,
                    decisions=x.copy())
            elapsed, rank = 0.0, tau
            for k in range(cfg.steps_per_round):
                if k:
                    F, DF = problem.evaluate(x)
                start = time.perf_counter()
                sel = sample_sketch(problem.m, tau, rng)
                rep = snr_step(F, DF, sel, cfg.rel_tol)
                x = x - rep.direction
                elapsed += time.perf_counter() - start
                rank = min(rank, rep.gram_rank)
            if rank < tau:
                diag["rank_deficient_steps"] += 1
                log.debug("round %d: sketched Gram rank %d < tau %d", t, rank, tau)
            rec.add(step_seconds=elapsed, gram_rank=rank)
            problem.advance()
    except OsnrError as exc:
        diag.update(problem.diagnostics)
        raise _abort(t, exc, rec, cfg, diag) from exc
    diag.update(problem.diagnostics)
    return rec.finish(cfg, diag)


def _abort(t, exc, rec, cfg, diag):
    err = RunAborted(t, exc)
    err.record = rec.finish(cfg, diag)
    return err


def osnr_ec_run(problem, cs, cfg, x0, b_seq=None, oracle=None):
    """OSNR with time-varying equality constraints ``A x = b_t``.

    The right-hand sides come from ``b_seq`` (one per round) when given,
    otherwise from ``problem.b``. ``x0`` must satisfy the first revealed
    right-hand side, which also plays the role of ``b_{-1}``.
    """
    cfg = resolve_onm(cfg, constrained=True)
    if cfg.algorithm == "osnr":
        cfg = dataclasses.replace(cfg, algorithm="osnr_ec")
    if cfg.algorithm != "osnr_ec":
        raise InvalidArgumentError(f"osnr_ec_run cannot execute algorithm {cfg.algorithm!r}")
    if problem.mode != GRADIENT:
        raise InvalidArgumentError("OSNR-EC needs a gradient-field problem")
    nr = cs.reduced_dim
    tau = resolve_tau(nr, cfg.tau, cfg.rho) if (cfg.T and nr) else 0
    rng = derive_rng(cfg.seed, "sketch")
    M = cs.M

    def current_b(t):
        return np.asarray(b_seq[t - 1], dtype=float) if b_seq is not None else problem.b.copy()

    x = np.array(x0, dtype=float)
    b_prev = current_b(1) if cfg.T else None
    if cfg.T:
        gap = float(np.linalg.norm(cs.A @ x - b_prev))
        if gap > FEASIBILITY_TOL * (1.0 + float(np.linalg.norm(b_prev))):
            raise PreconditionError(f"x0 is infeasible for b_0: ||A x0 - b_0|| = {gap:.3e}")

    rec = _Recorder(True, oracle is not None, cfg.record_decisions)
    diag = {"tau": tau, "reduced_dim": nr, "rank_deficient_steps": 0}
    t = 0
    try:
        for t in range(1, cfg.T + 1):
            b = current_b(t)
            g, grad, _ = problem.objective(x)
            rec.add(loss=g, residual_norm=float(np.linalg.norm(M.T @ grad)),
                    violation_norm=float(np.linalg.norm(cs.A @ x - b)),
                    b_delta_norm=float(np.linalg.norm(b - b_prev)),
                    oracle_loss=oracle(problem) if oracle else None,
                    decisions=x.copy())
            start = time.perf_counter()
            anchor = project_onto(cs, x, b)
            elapsed = time.perf_counter() - start
            rank = tau
            for _ in range(cfg.steps_per_round if nr else 0):
                _, grad, hess = problem.objective(anchor)
                F_red = M.T @ grad
                DF_red = M.T @ hess @ M
                start = time.perf_counter()
                sel = sample_sketch(nr, tau, rng)
                rep = snr_step(F_red, DF_red, sel, cfg.rel_tol)
                anchor = anchor - M @ rep.direction
                elapsed += time.perf_counter() - start
                rank = min(rank, rep.gram_rank)
            x = anchor
            if rank < tau:
                diag["rank_deficient_steps"] += 1
                log.debug("round %d: reduced Gram rank %d < tau %d", t, rank, tau)
            rec.add(step_seconds=elapsed, gram_rank=rank)
            b_prev = b
            problem.advance()
    except OsnrError as exc:
        diag.update(problem.diagnostics)
        raise _abort(t, exc, rec, cfg, diag) from exc
    diag.update(problem.diagnostics)
    return rec.finish(cfg, diag)


def ogd_run(problem, cfg, x0, oracle=None):
    """Unprojected online gradient descent on the round loss."""
    if cfg.algorithm != "ogd":
        raise InvalidArgumentError(f"ogd_run cannot execute algorithm {cfg.algorithm!r}")
    eta = cfg.eta if cfg.eta is not None else default_eta(cfg.T)
    rec = _Recorder(False, oracle is not None, cfg.record_decisions)
    diag = {"eta": eta}
    x = np.array(x0, dtype=float)
    t = 0
    try:
        for t in range(1, cfg.T + 1):
            F, DF = problem.evaluate(x)
            loss, res = _loss_and_residual(problem, x, F)
            rec.add(loss=loss, residual_norm=res,
                    oracle_loss=oracle(problem) if oracle else None,
                    decisions=x.copy())
            start = time.perf_counter()
            grad = F if problem.mode == GRADIENT else 2.0 * (DF @ F)
            if not np.all(np.isfinite(grad)):
                raise RunAborted(t, "non-finite gradient")
            x = x - eta * grad
            rec.add(step_seconds=time.perf_counter() - start, gram_rank=0)
            problem.advance()
    except RunAborted as exc:
        exc.record = rec.finish(cfg, diag)
        raise
    except OsnrError as exc:
        raise _abort(t, exc, rec, cfg, diag) from exc
    diag.update(problem.diagnostics)
    return rec.finish(cfg, diag)


def run(problem, cfg, x0, cs=None, b_seq=None, oracle=None):
    """Dispatch on ``cfg.algorithm``."""
    cfg = resolve_onm(cfg, constrained=cs is not None)
    if cfg.algorithm == "osnr":
        return osnr_run(problem, cfg, x0, oracle=oracle)
    if cfg.algorithm == "osnr_ec":
        if cs is None:
            raise InvalidArgumentError("osnr_ec needs a constraint set")
        return osnr_ec_run(problem, cs, cfg, x0, b_seq=b_seq, oracle=oracle)
    return ogd_run(problem, cfg, x0, oracle=oracle)

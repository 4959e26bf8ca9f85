"""Seeded multi-run experiments, CSV/JSON result bundles and plot-ready tables.

A bundle directory holds ``runs/`` (one CSV per algorithm, sketch percentage
and seed), ``aggregate/`` (cross-seed mean and standard deviation per
algorithm and sketch percentage) and ``manifest.json``. CSV bodies depend
only on the configuration; wall-clock measurements live in the manifest.
"""
import configparser
import csv
import dataclasses
import io
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .affine import build_constraints, project_onto
from .algorithms import RunConfig, run
from .errors import InvalidArgumentError, OsnrError, RunAborted
from .matpower import fixture_path, load_case
from .metrics import aggregate, b_variation, regret_dynamic, regret_zero, round_oracle, violation
from .problems import ALPHA_RULES, PenalizedOpf, QuadraticRoot, TargetTracking, conditioned_spd
from .sketch import resolve_tau, sample_sketch, snr_step
from .streams import derive_rng

EXPERIMENTS = ("track", "opf", "root-demo")
QUANTITIES = ("regret", "violation", "steptime")
SKETCHED = ("osnr", "osnr_ec")
MANIFEST = "manifest.json"

_DEFAULTS = {
    "track": {"n": 20, "m": 18, "T": 1000, "runs": 20,
              "algorithms": ("osnr", "ogd"), "rhos": (0.05, 0.25, 1.0)},
    "opf": {"case": "case9", "T": 200, "runs": 50,
            "algorithms": ("osnr_ec",), "rhos": (0.05, 0.25, 1.0)},
    "root-demo": {"n": 12, "m": 12, "T": 200, "runs": 10,
                  "algorithms": ("osnr",), "rhos": (0.25, 1.0)},
}


def fmt(value):
    """17 significant digits, enough to round-trip a double."""
    return format(float(value), ".17g")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment. Fields left as ``None`` take the per-experiment default."""

    experiment: str = "track"
    n: int = None
    m: int = None
    case: str = None
    T: int = None
    algorithms: tuple = None
    rhos: tuple = None
    runs: int = None
    base_seed: int = 0
    eta: float = None
    alpha_rule: str = "paper"
    out: str = "results"
    record_decisions: bool = False
    jobs: int = 1
    drift: float = 1.0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidArgumentError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for key, value in _DEFAULTS[self.experiment].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))
        if self.T < 1:
            raise InvalidArgumentError(f"T must be >= 1, got {self.T}")
        if self.runs < 1:
            raise InvalidArgumentError(f"runs must be >= 1, got {self.runs}")
        if self.jobs < 1:
            raise InvalidArgumentError(f"jobs must be >= 1, got {self.jobs}")
        if not self.rhos:
            raise InvalidArgumentError("at least one sketch percentage is needed")
        for r in self.rhos:
            if not 0.0 < r <= 1.0:
                raise InvalidArgumentError(f"rho must lie in (0, 1], got {r}")
        if self.eta is not None and not self.eta > 0:
            raise InvalidArgumentError(f"eta must be positive, got {self.eta}")
        if self.alpha_rule not in ALPHA_RULES:
            raise InvalidArgumentError(f"alpha_rule must be one of {ALPHA_RULES}, got {self.alpha_rule!r}")
        allowed = ("osnr_ec",) if self.experiment == "opf" else ("osnr", "ogd", "onm")
        for a in self.algorithms:
            if a not in allowed:
                raise InvalidArgumentError(f"algorithm {a!r} is not available for {self.experiment}")
        if self.experiment != "opf" and (self.n is None or self.n < 1 or self.m < 1):
            raise InvalidArgumentError("n and m must be positive")
        if self.experiment == "root-demo" and self.n != self.m:
            raise InvalidArgumentError("root-demo needs a square field (n == m)")

    def groups(self):
        """``(algorithm, rho)`` pairs in output order; ``rho`` is ``None`` when unsketched."""
        out = []
        for a in self.algorithms:
            if a in SKETCHED:
                out.extend((a, r) for r in self.rhos)
            elif a == "onm":
                out.append(("onm", 1.0))
            else:
                out.append((a, None))
        return out

    def echo(self):
        d = dataclasses.asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["rhos"] = list(self.rhos)
        return d


# -- configuration files ---------------------------------------------------------

_INT_KEYS = ("n", "m", "T", "runs", "base_seed", "jobs")
_FLOAT_KEYS = ("eta", "drift")


def _split_list(text):
    return tuple(p for p in (s.strip() for s in text.replace(",", " ").split()) if p)


def read_config(path):
    """Read the ``[experiment]`` section of an INI file into keyword arguments."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
    if not parser.has_section("experiment"):
        raise InvalidArgumentError(f"{path}: missing [experiment] section")
    sec = parser["experiment"]
    kw = {}
    try:
        for raw_key, raw in sec.items():
            key = {"seed": "base_seed", "rho": "rhos", "t": "T", "alpha-rule": "alpha_rule",
                   "record-decisions": "record_decisions"}.get(raw_key, raw_key)
            if key in _INT_KEYS:
                kw[key] = int(raw)
            elif key in _FLOAT_KEYS:
                kw[key] = float(raw)
            elif key == "rhos":
                kw[key] = tuple(float(r) for r in _split_list(raw))
            elif key == "algorithms":
                kw[key] = _split_list(raw)
            elif key == "record_decisions":
                kw[key] = sec.getboolean(raw_key)
            elif key in ("experiment", "case", "alpha_rule", "out"):
                kw[key] = raw.strip()
            else:
                raise InvalidArgumentError(f"{path}: unknown key {key!r}")
    except ValueError as exc:
        if isinstance(exc, InvalidArgumentError):
            raise
        raise InvalidArgumentError(f"{path}: {exc}") from exc
    return kw


# -- single runs -------------------------------------------------------------------

def resolve_case(case):
    """A case file path, or the name of a bundled fixture such as ``"case9"``."""
    p = Path(case)
    if not (p.suffix == ".m" or p.exists()):
        p = fixture_path(case)
    if not p.is_file():
        raise InvalidArgumentError(f"case file not found: {case}")
    return load_case(p)


def _track_start(problem):
    # centroid of the sensors; full-sketch Newton from the origin can blow up
    return problem.sensors.mean(axis=0)


def execute(cfg, algorithm, rho, seed, case=None):
    """One seeded run. Returns ``(record, failure)``; ``failure`` is ``None`` on success."""
    rc = RunConfig(T=cfg.T, rho=rho, seed=seed, algorithm=algorithm, eta=cfg.eta,
                   record_decisions=cfg.record_decisions)
    cs = oracle = None
    if cfg.experiment == "track":
        problem = TargetTracking(cfg.n, cfg.m, seed)
        x0 = _track_start(problem)
        oracle = lambda p: 0.0  # noqa: E731  exact distances: every round has a zero
    elif cfg.experiment == "root-demo":
        Q = conditioned_spd(cfg.n, 10.0, seed)
        x_star = derive_rng(seed, "target").standard_normal(cfg.n)
        problem = QuadraticRoot(Q, x_star, drift=cfg.drift, seed=seed)
        x0 = np.zeros(cfg.n)
        oracle = lambda p: 0.0  # noqa: E731
    else:
        case = resolve_case(cfg.case) if case is None else case
        problem = PenalizedOpf(case, alpha_rule=cfg.alpha_rule, seed=seed)
        cs = build_constraints(problem.A)
        x0 = project_onto(cs, np.zeros(problem.n), problem.b)
        warm = {"x": x0}

        def oracle(p):
            x_opt, g_opt = round_oracle(p, cs, x_start=warm["x"])
            warm["x"] = x_opt
            return g_opt

    try:
        return run(problem, rc, x0, cs=cs, oracle=oracle), None
    except RunAborted as exc:
        return exc.record, {"round": exc.round_index, "error": str(exc.cause)}
    except OsnrError as exc:
        return None, {"round": 0, "error": str(exc)}


def _task(args):
    cfg, algorithm, rho, seed, case = args
    start = time.perf_counter()
    record, failure = execute(cfg, algorithm, rho, seed, case)
    return record, failure, time.perf_counter() - start


# -- persistence ----------------------------------------------------------------------

def group_label(algorithm, rho):
    return algorithm if rho is None else f"{algorithm}_rho{rho:g}"


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def run_columns(traj):
    """Deterministic per-round columns of one trajectory (no wall-times)."""
    cols = {
        "loss": traj.loss,
        "residual_norm": traj.residual_norm,
        "regret_zero": regret_zero(traj).series,
        "gram_rank": traj.gram_rank,
    }
    if traj.oracle_loss is not None:
        cols["oracle_loss"] = traj.oracle_loss
        cols["regret_dynamic"] = regret_dynamic(traj).series
    if traj.violation_norm is not None:
        cols["violation_norm"] = traj.violation_norm
        cols["b_delta_norm"] = traj.b_delta_norm
        cols["violation"] = violation(traj).series
        cols["b_variation"] = b_variation(traj).series
    if traj.decisions is not None:
        for j in range(traj.decisions.shape[1]):
            cols[f"x{j}"] = traj.decisions[:, j]
    return cols


def write_run_csv(path, traj):
    cols = run_columns(traj)
    header = ["round"] + list(cols)
    rows = []
    for t in range(traj.T):
        row = [str(t + 1)]
        for k, v in cols.items():
            row.append(str(int(v[t])) if k == "gram_rank" else fmt(v[t]))
        rows.append(row)
    _write_csv(path, header, rows)


_AGG_METRICS = ("regret_zero", "regret_dynamic", "violation", "b_variation", "residual_norm", "loss")


def write_aggregate_csv(path, records):
    first = records[0]
    metrics = [m for m in _AGG_METRICS
               if not (m == "regret_dynamic" and first.oracle_loss is None)
               and not (m in ("violation", "b_variation") and first.violation_norm is None)]
    reports = [aggregate(records, m) for m in metrics]
    header = ["round", "runs"]
    for m in metrics:
        header += [f"{m}_mean", f"{m}_std"]
    rows = []
    for t in range(first.T):
        row = [str(t + 1), str(len(records))]
        for rep in reports:
            row += [fmt(rep.series[t]), fmt(rep.std[t])]
        rows.append(row)
    _write_csv(path, header, rows)


def _versions():
    return {"osnr": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_experiment(cfg, out=None):
    """Execute every (algorithm, rho, seed) run of ``cfg`` and write the bundle.

    Run ``i`` uses seed ``base_seed + i`` for every algorithm. Failed runs are
    listed in the manifest with their round index; their partial trajectory is
    still written but left out of the aggregate. Returns the bundle directory.
    """
    root = Path(cfg.out if out is None else out)
    (root / "runs").mkdir(parents=True, exist_ok=True)
    (root / "aggregate").mkdir(parents=True, exist_ok=True)
    case = resolve_case(cfg.case) if cfg.experiment == "opf" else None

    tasks = [(cfg, a, r, cfg.base_seed + i, case)
             for a, r in cfg.groups() for i in range(cfg.runs)]
    started = time.perf_counter()
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]

    manifest = {"config": cfg.echo(), "versions": _versions(), "groups": [],
                "failures": [], "wall_seconds": {}}
    it = iter(zip(tasks, results))
    for algorithm, rho in cfg.groups():
        label = group_label(algorithm, rho)
        done, step_series = [], []
        runs_meta = []
        for _ in range(cfg.runs):
            (_, _, _, seed, _), (record, failure, wall) = next(it)
            name = f"{label}_seed{seed}.csv"
            manifest["wall_seconds"][name] = wall
            if record is not None:
                write_run_csv(root / "runs" / name, record)
                runs_meta.append(name)
            if failure is not None:
                manifest["failures"].append(
                    {"algorithm": algorithm, "rho": rho, "seed": seed, **failure})
            elif record is not None:
                done.append(record)
                step_series.append(record.step_seconds)
        entry = {"algorithm": algorithm, "rho": rho, "label": label, "runs": runs_meta,
                 "succeeded": len(done), "aggregate": None}
        if done:
            agg_name = f"{label}.csv"
            write_aggregate_csv(root / "aggregate" / agg_name, done)
            entry["aggregate"] = agg_name
            steps = np.vstack(step_series)
            entry["step_seconds_mean"] = steps.mean(axis=0).tolist()
            entry["step_seconds_std"] = (steps.std(axis=0, ddof=1) if len(done) > 1
                                         else np.zeros(steps.shape[1])).tolist()
        manifest["groups"].append(entry)
    manifest["total_wall_seconds"] = time.perf_counter() - started
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return root


def load_manifest(bundle):
    path = Path(bundle) / MANIFEST
    if not path.is_file():
        raise InvalidArgumentError(f"no result bundle at {bundle} (missing {MANIFEST})")
    return json.loads(path.read_text(encoding="utf-8"))


def read_aggregate(bundle, name):
    with open(Path(bundle) / "aggregate" / name, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


# -- plot data ----------------------------------------------------------------------

def emit_plotdata(bundle, quantity, out=None):
    """Long-format table ``round, algorithm, rho, mean, std`` for one quantity.

    ``regret`` uses dynamic regret when the bundle has round oracles with a
    nonzero optimum (the OPF experiment) and the residual-norm regret
    otherwise. Returns the CSV text and writes it to ``out`` when given.
    """
    if quantity not in QUANTITIES:
        raise InvalidArgumentError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    manifest = load_manifest(bundle)
    dynamic = manifest["config"]["experiment"] == "opf"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "algorithm", "rho", "mean", "std"])
    rows_written = 0
    for g in manifest["groups"]:
        if g["aggregate"] is None:
            continue
        rho = "" if g["rho"] is None else fmt(g["rho"])
        if quantity == "steptime":
            mean, std = g["step_seconds_mean"], g["step_seconds_std"]
            for t, (mu, sd) in enumerate(zip(mean, std), start=1):
                w.writerow([t, g["algorithm"], rho, fmt(mu), fmt(sd)])
                rows_written += 1
            continue
        rows = read_aggregate(bundle, g["aggregate"])
        key = {"regret": "regret_dynamic" if dynamic else "regret_zero",
               "violation": "violation"}[quantity]
        if rows and f"{key}_mean" not in rows[0]:
            continue
        for r in rows:
            w.writerow([r["round"], g["algorithm"], rho, r[f"{key}_mean"], r[f"{key}_std"]])
            rows_written += 1
    if not rows_written:
        w.writerow([f"# warning: bundle has no {quantity} data"])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text, encoding="utf-8", newline="")
    return text


# -- per-step cost probe ---------------------------------------------------------

def cost_probe(n=800, rhos=(0.1, 1.0), steps=50, seed=0):
    """Mean wall-time of one sketched step on a dense ``n x n`` linear field.

    Only sketch sampling and the step itself are timed.
    """
    rng = derive_rng(seed, "problem")
    DF = rng.standard_normal((n, n))
    x_star = rng.standard_normal(n)
    out = {"n": n, "m": n, "steps": steps, "seconds_per_step": {}}
    for rho in rhos:
        tau = resolve_tau(n, rho=rho)
        srng = derive_rng(seed, "sketch")
        x = np.zeros(n)
        total = 0.0
        for _ in range(steps):
            F = DF.T @ (x - x_star)
            start = time.perf_counter()
            sel = sample_sketch(n, tau, srng)
            x = x - snr_step(F, DF, sel).direction
            total += time.perf_counter() - start
        out["seconds_per_step"][fmt(rho)] = total / steps
    out["versions"] = _versions()
    out["platform"] = sys.platform
    return out

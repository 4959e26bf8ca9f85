"""Reader for a subset of the MATPOWER case-file format.

Only what the DC-OPF builder needs is kept: bus ids/types/demand, branch
endpoints/reactance/rating, generator bus and limits, and quadratic costs.
Other columns are skipped by their MATPOWER position. Out-of-service branches
and generators (status 0) are dropped together with their cost rows.
"""
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import (BaseMVAError, CaseParseError, DanglingBranchError,
                     DisconnectedNetworkError, DuplicateBusError,
                     GencostMismatchError, InvalidCaseError, ReferenceBusError,
                     UnsupportedCostError)

BUS_TYPES = {1: "pq", 2: "pv", 3: "ref"}
BUS_TYPE_CODES = {v: k for k, v in BUS_TYPES.items()}
SECTIONS = ("bus", "branch", "gen", "gencost")
# minimum column counts for the retained fields
MIN_COLUMNS = {"bus": 3, "branch": 6, "gen": 10, "gencost": 4}


@dataclass(frozen=True)
class Bus:
    id: int
    type: str
    pd: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float
    rate_a: float


@dataclass(frozen=True)
class Gen:
    bus: int
    p_min: float
    p_max: float


@dataclass(frozen=True)
class GenCost:
    a: float
    b: float


@dataclass(frozen=True)
class PowerCase:
    base_mva: float
    buses: tuple
    branches: tuple
    gens: tuple
    gencosts: tuple

    def summary(self):
        return {
            "base_mva": self.base_mva,
            "buses": len(self.buses),
            "branches": len(self.branches),
            "gens": len(self.gens),
            "total_demand_mw": sum(b.pd for b in self.buses),
        }


def fixture_path(name):
    """Path of a case bundled with the package, e.g. ``fixture_path("case9")``."""
    res = resources.files("osnr") / "fixtures" / f"{name}.m"
    return Path(str(res))


def load_case(path, validate=True):
    text = Path(path).read_text(encoding="utf-8")
    return parse_case(text, validate=validate)


_SCALAR_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^;\[]+?)\s*;?\s*$")
_MATRIX_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")


def _number(token, section, lineno):
    try:
        return float(token)
    except ValueError:
        raise CaseParseError(f"malformed numeric token {token!r}", section, lineno) from None


def _scan(text):
    """Collect ``mpc.X = value;`` scalars and ``mpc.X = [ ... ];`` matrices."""
    scalars, matrices = {}, {}
    current = None
    pending = []

    def flush_row(lineno):
        if pending:
            matrices[current].append((lineno, list(pending)))
            pending.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0]
        if current is None:
            m = _MATRIX_RE.match(line)
            if m:
                current = m.group(1)
                matrices[current] = []
                line = m.group(2)
            else:
                s = _SCALAR_RE.match(line)
                if s:
                    scalars[s.group(1)] = (lineno, s.group(2).strip())
                continue
        # inside a matrix: rows end at ';' or at a newline
        closing = "]" in line
        body = line.split("]", 1)[0]
        for piece in body.split(";"):
            tokens = piece.replace(",", " ").split()
            pending.extend(tokens)
            flush_row(lineno)
        if closing:
            current = None
    if current is not None:
        raise CaseParseError("unterminated matrix", current)
    return scalars, matrices


def parse_case(text, validate=True):
    scalars, matrices = _scan(text)
    if "baseMVA" not in scalars:
        raise CaseParseError("missing section baseMVA", "baseMVA")
    lineno, token = scalars["baseMVA"]
    base_mva = _number(token, "baseMVA", lineno)

    rows = {}
    for name in SECTIONS:
        if name not in matrices:
            raise CaseParseError(f"missing section {name}", name)
        parsed = []
        for lineno, tokens in matrices[name]:
            values = [_number(t, name, lineno) for t in tokens]
            if len(values) < MIN_COLUMNS[name]:
                raise CaseParseError(
                    f"row has {len(values)} columns, need at least {MIN_COLUMNS[name]}",
                    name, lineno)
            parsed.append((lineno, values))
        rows[name] = parsed

    buses = []
    for lineno, r in rows["bus"]:
        code = int(r[1])
        if code not in BUS_TYPES:
            raise CaseParseError(f"unsupported bus type {code}", "bus", lineno)
        buses.append(Bus(int(r[0]), BUS_TYPES[code], r[2]))

    branches = []
    for lineno, r in rows["branch"]:
        status = r[10] if len(r) > 10 else 1.0
        if status == 0:
            continue
        branches.append(Branch(int(r[0]), int(r[1]), r[3], r[5]))

    gen_rows = rows["gen"]
    cost_rows = rows["gencost"]
    # MATPOWER allows 2*ng cost rows (active then reactive); keep the active half
    if len(cost_rows) == 2 * len(gen_rows) and gen_rows:
        cost_rows = cost_rows[:len(gen_rows)]
    costs = [_parse_cost(lineno, r) for lineno, r in cost_rows]

    gens, gencosts = [], []
    for i, (lineno, r) in enumerate(gen_rows):
        if r[7] <= 0:
            continue
        gens.append(Gen(int(r[0]), r[9], r[8]))
        if i < len(costs):
            gencosts.append(costs[i])
    if len(costs) != len(gen_rows):
        # keep the mismatch visible to validation instead of silently aligning
        gencosts = costs

    case = PowerCase(base_mva, tuple(buses), tuple(branches), tuple(gens), tuple(gencosts))
    if validate:
        validate_case(case)
    return case


def _parse_cost(lineno, r):
    model, ncost = int(r[0]), int(r[3])
    if model != 2:
        raise UnsupportedCostError(f"cost model {model} is not polynomial", "gencost", lineno)
    if ncost > 3:
        raise UnsupportedCostError(
            f"polynomial cost of degree {ncost - 1} (only degree <= 2 supported)",
            "gencost", lineno)
    coeffs = r[4:4 + ncost]
    if len(coeffs) < ncost:
        raise CaseParseError(f"expected {ncost} cost coefficients", "gencost", lineno)
    coeffs = [0.0] * (3 - ncost) + list(coeffs)  # pad to (c2, c1, c0)
    return GenCost(a=coeffs[0], b=coeffs[1])


def validate_case(c):
    if not c.base_mva > 0:
        raise BaseMVAError(f"baseMVA must be positive, got {c.base_mva}")
    ids = [b.id for b in c.buses]
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateBusError(f"duplicate bus id {i}")
        seen.add(i)
    refs = [b.id for b in c.buses if b.type == "ref"]
    if len(refs) != 1:
        raise ReferenceBusError(f"expected exactly one reference bus, found {len(refs)}: {refs}")
    for br in c.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                raise DanglingBranchError(
                    f"branch {br.from_bus}-{br.to_bus} references missing bus {end}")
        if br.x == 0:
            raise InvalidCaseError(
                f"branch {br.from_bus}-{br.to_bus} has zero reactance (infinite susceptance)")
    for g in c.gens:
        if g.bus not in seen:
            raise DanglingBranchError(f"generator references missing bus {g.bus}")
    if len(c.gencosts) != len(c.gens):
        raise GencostMismatchError(
            f"{len(c.gencosts)} gencost rows for {len(c.gens)} generators")
    for g, cost in zip(c.gens, c.gencosts):
        if cost.a < 0:
            raise InvalidCaseError(f"generator at bus {g.bus} has concave cost (a={cost.a})")
    _check_connected(ids, c.branches)


def _check_connected(ids, branches):
    parent = {i: i for i in ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for br in branches:
        ra, rb = find(br.from_bus), find(br.to_bus)
        if ra != rb:
            parent[ra] = rb
    roots = {find(i) for i in ids}
    if len(roots) > 1:
        raise DisconnectedNetworkError(f"network has {len(roots)} islands")


def write_case(c, name="case"):
    """Minimal writer: retained fields plus neutral defaults for other columns."""
    out = [f"function mpc = {name}", "mpc.version = '2';", f"mpc.baseMVA = {c.base_mva!r};", ""]
    out.append("mpc.bus = [")
    for b in c.buses:
        out.append(f"\t{b.id}\t{BUS_TYPE_CODES[b.type]}\t{b.pd!r}\t0\t0\t0\t1\t1\t0\t0\t1\t1.1\t0.9;")
    out += ["];", "", "mpc.gen = ["]
    for g in c.gens:
        out.append(f"\t{g.bus}\t0\t0\t0\t0\t1\t{c.base_mva!r}\t1\t{g.p_max!r}\t{g.p_min!r};")
    out += ["];", "", "mpc.branch = ["]
    for br in c.branches:
        r = br.rate_a
        out.append(f"\t{br.from_bus}\t{br.to_bus}\t0\t{br.x!r}\t0\t{r!r}\t{r!r}\t{r!r}\t0\t0\t1\t-360\t360;")
    out += ["];", "", "mpc.gencost = ["]
    for cost in c.gencosts:
        out.append(f"\t2\t0\t0\t3\t{cost.a!r}\t{cost.b!r}\t0;")
    out += ["];", ""]
    return "\n".join(out)

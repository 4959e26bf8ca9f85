"""Online vector fields: the abstract interface and the concrete problem families.

A field ``F_t : R^n -> R^m`` is evaluated at the current round; ``advance``
moves it to the next round. ``DF`` always returns the *transposed* Jacobian,
shape ``(n, m)``. In ``"gradient"`` mode the field is ``F_t = grad g_t``, so
``m == n`` and ``DF`` is the (symmetric) Hessian.
"""
import abc

import numpy as np

from .errors import InvalidArgumentError, SaturationError
from .matpower import validate_case
from .streams import derive_rng

ROOT = "root"
GRADIENT = "gradient"

SINGULARITY_TOL = 1e-9
EXP_LIMIT = 700.0


class OnlineVectorField(abc.ABC):
    mode = ROOT

    def __init__(self, n, m):
        if n < 1 or m < 1:
            raise InvalidArgumentError(f"dimensions must be positive, got n={n}, m={m}")
        self.n = n
        self.m = m
        self.t = 1
        self.diagnostics = {"singularities": 0}

    @abc.abstractmethod
    def F(self, x):
        ...

    @abc.abstractmethod
    def DF(self, x):
        ...

    def evaluate(self, x):
        """``(F(x), DF(x))``; subclasses override when sharing work pays off."""
        return self.F(x), self.DF(x)

    def loss(self, x):
        """Round loss ``g_t(x)``; for root problems the sum of squared residuals."""
        r = self.F(x)
        return float(r @ r)

    def loss_grad(self, x):
        r, D = self.evaluate(x)
        return 2.0 * (D @ r)

    def oracle_point(self):
        """A known zero / minimizer of the current round, or ``None``."""
        return None

    @abc.abstractmethod
    def advance(self, rng=None):
        ...


class GradientField(OnlineVectorField):
    """Field ``F = grad g`` of a twice differentiable round objective."""

    mode = GRADIENT

    def __init__(self, n):
        super().__init__(n, n)

    @abc.abstractmethod
    def objective(self, x):
        """Return ``(g, grad, hess)`` at ``x``."""

    def F(self, x):
        return self.objective(x)[1]

    def DF(self, x):
        return self.objective(x)[2]

    def evaluate(self, x):
        _, grad, hess = self.objective(x)
        return grad, hess

    def loss(self, x):
        return self.objective(x)[0]

    def loss_grad(self, x):
        return self.objective(x)[1]


# -- synthetic fields ---------------------------------------------------------

class QuadraticRoot(OnlineVectorField):
    """``F_t(x) = Q (x - x*_t)`` with an optional random-walk drift of ``x*_t``.

    ``Q`` is ``(m, n)``; the drift step at round ``t`` is ``drift * N(0, I) / sqrt(t)``.
    """

    def __init__(self, Q, x_star, drift=0.0, seed=0):
        Q = np.array(Q, dtype=float, ndmin=2)
        super().__init__(Q.shape[1], Q.shape[0])
        self.Q = Q
        self.x_star = np.array(x_star, dtype=float)
        self.drift = float(drift)
        self.rng = derive_rng(seed, "problem")

    def F(self, x):
        return self.Q @ (x - self.x_star)

    def DF(self, x):
        return self.Q.T

    def oracle_point(self):
        return self.x_star.copy()

    def advance(self, rng=None):
        rng = self.rng if rng is None else rng
        if self.drift:
            self.x_star = self.x_star + self.drift * rng.standard_normal(self.n) / np.sqrt(self.t)
        self.t += 1


def conditioned_spd(n, cond, seed):
    """Random SPD matrix with eigenvalues spread geometrically over [1, cond]."""
    rng = derive_rng(seed, "spd")
    Qo, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.geomspace(1.0, cond, n)
    return (Qo * eig) @ Qo.T


class QuadraticObjective(GradientField):
    """Static ``g(x) = 0.5 x^T Q x + c^T x``."""

    def __init__(self, Q, c):
        Q = np.array(Q, dtype=float, ndmin=2)
        super().__init__(Q.shape[0])
        self.Q = 0.5 * (Q + Q.T)
        self.c = np.array(c, dtype=float)

    def objective(self, x):
        Qx = self.Q @ x
        return float(0.5 * x @ Qx + self.c @ x), Qx + self.c, self.Q

    def oracle_point(self):
        return np.linalg.solve(self.Q, -self.c)

    def advance(self, rng=None):
        self.t += 1


# -- target tracking ------------------------------------------------------------

class TargetTracking(OnlineVectorField):
    """Range-only localization of a moving target, in residual form.

    ``F_i(x) = ||x - a_i|| - d_i`` with exact distances ``d_i = ||y_t - a_i||``.
    The target moves as ``y_{t+1} = y_t + scale * N(0, I) / sqrt(t)``.
    """

    def __init__(self, n, m, seed, scale=20.0, sensor_scale=20.0):
        super().__init__(n, m)
        self.rng = derive_rng(seed, "problem")
        self.scale = float(scale)
        self.sensors = sensor_scale * self.rng.standard_normal((m, n))
        self.target = sensor_scale * self.rng.standard_normal(n)
        self.distances = self._distances(self.target)

    def _distances(self, y):
        return np.linalg.norm(y - self.sensors, axis=1)

    def evaluate(self, x):
        diff = x - self.sensors  # (m, n)
        r = np.linalg.norm(diff, axis=1)
        F = r - self.distances
        bad = r < SINGULARITY_TOL
        if bad.any():
            self.diagnostics["singularities"] += int(bad.sum())
            r = np.where(bad, 1.0, r)
            diff[bad] = 0.0
        return F, (diff / r[:, None]).T

    def F(self, x):
        return np.linalg.norm(x - self.sensors, axis=1) - self.distances

    def DF(self, x):
        return self.evaluate(x)[1]

    def oracle_point(self):
        return self.target.copy()

    def advance(self, rng=None):
        rng = self.rng if rng is None else rng
        step = self.scale * rng.standard_normal(self.n) / np.sqrt(self.t)
        self.target = self.target + step
        self.distances = self._distances(self.target)
        self.t += 1
        return step


# -- penalized DC optimal power flow -------------------------------------------

ALPHA_RULES = ("paper", "inverse-square")


class PenalizedOpf(GradientField):
    """DC-OPF with exponential line-flow penalties and equality constraints.

    Decision vector ``x = (p, P, theta)``: generator injections, line flows and
    bus angles, all in per unit of ``case.base_mva``. Demands are tracked in MW.
    Lines are oriented from the lower to the higher bus position; ``P > 0``
    flows in that direction.
    """

    def __init__(self, case, alpha_rule="paper", seed=0, demand_var=5.0, default_rating=1e3):
        validate_case(case)
        if alpha_rule not in ALPHA_RULES:
            raise InvalidArgumentError(f"alpha_rule must be one of {ALPHA_RULES}, got {alpha_rule!r}")
        self.case = case
        base = case.base_mva
        self.base = base
        pos = {b.id: i for i, b in enumerate(case.buses)}
        nb, nl, ng = len(case.buses), len(case.branches), len(case.gens)
        super().__init__(ng + nl + nb)
        self.p_slice = slice(0, ng)
        self.flow_slice = slice(ng, ng + nl)
        self.angle_slice = slice(ng + nl, ng + nl + nb)

        ends = []
        for br in case.branches:
            i, j = pos[br.from_bus], pos[br.to_bus]
            ends.append((min(i, j), max(i, j)))
        self.line_ends = np.array(ends, dtype=int).reshape(nl, 2)
        self.line_labels = [f"{case.buses[i].id}-{case.buses[j].id}" for i, j in ends]
        self.susceptance = np.array([1.0 / br.x for br in case.branches])
        rating = np.array([(br.rate_a if br.rate_a > 0 else default_rating) / base
                           for br in case.branches])
        self.rating = rating
        self.alpha = rating**2 if alpha_rule == "paper" else 1.0 / rating**2
        self.alpha_rule = alpha_rule

        self.gen_bus = np.array([pos[g.bus] for g in case.gens], dtype=int)
        self.cost_a = np.array([c.a for c in case.gencosts]) * base**2
        self.cost_b = np.array([c.b for c in case.gencosts]) * base

        self.demand = np.array([b.pd for b in case.buses], dtype=float)
        self.load_buses = np.flatnonzero(self.demand != 0)
        self.demand_var = float(demand_var)
        self.rng = derive_rng(seed, "problem")

        self.A = self._constraint_matrix()
        self.A.setflags(write=False)
        self.ref_bus = next(i for i, b in enumerate(case.buses) if b.type == "ref")
        self.b = self._rhs()

    @property
    def n_buses(self):
        return len(self.case.buses)

    @property
    def n_lines(self):
        return len(self.case.branches)

    @property
    def n_gens(self):
        return len(self.case.gens)

    @property
    def load_rows(self):
        """Rows of ``A``/``b`` carrying (negated) demands."""
        return self.load_buses

    def _constraint_matrix(self):
        nb, nl, ng = self.n_buses, self.n_lines, self.n_gens
        A = np.zeros((nb + nl + 1, self.n))
        fs, ts = self.flow_slice.start, self.angle_slice.start
        for l, (i, j) in enumerate(self.line_ends):
            # nodal balance: outgoing flow minus generation equals -demand
            A[i, fs + l] += 1.0
            A[j, fs + l] -= 1.0
            # flow definition: P_l - B_l (theta_i - theta_j) = 0
            A[nb + l, fs + l] = 1.0
            A[nb + l, ts + i] = -self.susceptance[l]
            A[nb + l, ts + j] = self.susceptance[l]
        for g, i in enumerate(self.gen_bus):
            A[i, g] -= 1.0
        ref = next(i for i, b in enumerate(self.case.buses) if b.type == "ref")
        A[nb + nl, ts + ref] = 1.0
        return A

    def _rhs(self):
        b = np.zeros(self.A.shape[0])
        b[:self.n_buses] = -self.demand / self.base
        return b

    def split(self, x):
        return x[self.p_slice], x[self.flow_slice], x[self.angle_slice]

    def objective(self, x):
        p, P, _ = self.split(np.asarray(x, dtype=float))
        expo = self.alpha * P * P
        over = np.flatnonzero(expo > EXP_LIMIT)
        if over.size:
            l = int(over[0])
            raise SaturationError(
                f"penalty exponent {expo[l]:.1f} > {EXP_LIMIT} on line {self.line_labels[l]}",
                line=self.line_labels[l])
        e = np.exp(expo)
        g = float(self.cost_a @ (p * p) + self.cost_b @ p + e.sum())
        grad = np.zeros(self.n)
        grad[self.p_slice] = 2.0 * self.cost_a * p + self.cost_b
        grad[self.flow_slice] = 2.0 * self.alpha * P * e
        diag = np.zeros(self.n)
        diag[self.p_slice] = 2.0 * self.cost_a
        diag[self.flow_slice] = 2.0 * self.alpha * e * (1.0 + 2.0 * self.alpha * P * P)
        return g, grad, np.diag(diag)

    def advance(self, rng=None):
        """Random-walk the load demands with variance ``demand_var / t``; returns the new ``b``."""
        rng = self.rng if rng is None else rng
        sd = np.sqrt(self.demand_var / self.t)
        self.demand[self.load_buses] += sd * rng.standard_normal(self.load_buses.size)
        self.b = self._rhs()
        self.t += 1
        return self.b.copy()


def opf_build(case, alpha_rule="paper", seed=0, **kwargs):
    """Build the penalized OPF problem; returns ``(problem, A, b_0)``."""
    prob = PenalizedOpf(case, alpha_rule=alpha_rule, seed=seed, **kwargs)
    return prob, prob.A, prob.b.copy()

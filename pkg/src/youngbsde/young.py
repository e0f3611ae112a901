"""Young integrals, Young ODEs, and the Young, product and composition estimates as checks."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import functions
from .errors import NumericalAbort, ValidationError
from .paths import DiscretePath, TimeGrid, merge_grids, pvar_norm, sup_norm


def young_constant(p, q):
    """Sewing constant ``1 / (1 - 2**(1 - theta))`` with ``theta = 1/p + 1/q``."""
    theta = 1.0 / p + 1.0 / q
    if theta <= 1.0:
        raise ValidationError(f"need 1/p + 1/q > 1, got {theta!r}")
    return 1.0 / (1.0 - 2.0 ** (1.0 - theta))


@dataclass(frozen=True)
class YoungIntegralResult:
    integral_path: DiscretePath
    qvar_of_integral: Optional[float] = None
    bound_rhs: Optional[float] = None

    @property
    def value(self):
        """Total integral over the whole horizon."""
        v = self.integral_path.end
        return float(v[0]) if v.shape == (1,) else v


def _contract(x, dy):
    """Apply integrand values ``x (n, k)`` to increments ``dy (n, e)``."""
    k, e = x.shape[1], dy.shape[1]
    if k == 1:
        return x * dy
    if k % e:
        raise ValidationError(
            f"integrand of dimension {k} cannot act on a {e}-dimensional integrator")
    return np.einsum("nij,nj->ni", x.reshape(len(x), k // e, e), dy)


def young_integral(X: DiscretePath, Y: DiscretePath, mode="exact-pl",
                   refinement=1, p=None, q=None) -> YoungIntegralResult:
    """Indefinite integral ``t -> int_0^t X dY`` on the union grid of X and Y.

    ``X`` of dimension 1 multiplies ``Y`` componentwise; otherwise ``X`` is a
    row-major ``(k/e) x e`` matrix acting on the ``e``-dimensional ``Y``.

    ``mode="exact-pl"`` is the exact Riemann-Stieltjes integral of two
    piecewise-linear paths (midpoint rule per cell).  ``mode="left-point"``
    takes left-point sums on the union grid refined ``refinement``-fold, the
    partition sums whose limit defines the Young integral.

    When ``p`` and ``q`` are given, the q-variation of the integral and the
    right-hand side of the Young estimate are filled in.
    """
    grid = merge_grids(X.grid, Y.grid)
    if mode == "exact-pl":
        x = X.on_grid(grid).values
        y = Y.on_grid(grid).values
        inc = _contract(0.5 * (x[:-1] + x[1:]), np.diff(y, axis=0))
        out_grid, stride = grid, 1
    elif mode == "left-point":
        fine = grid.refine(refinement)
        x = X.on_grid(fine).values
        y = Y.on_grid(fine).values
        inc = _contract(x[:-1], np.diff(y, axis=0))
        out_grid, stride = grid, int(refinement)
    else:
        raise ValidationError(f"unknown integration mode {mode!r}")
    cum = np.vstack([np.zeros((1, inc.shape[1])), np.cumsum(inc, axis=0)])
    path = DiscretePath(out_grid, cum[::stride], {"mode": mode,
                                                  "refinement": int(refinement)})
    if p is None or q is None:
        return YoungIntegralResult(path)
    return YoungIntegralResult(path, pvar_norm(path, q), _young_rhs(X, Y, p, q))


def _young_rhs(X, Y, p, q):
    return young_constant(p, q) * (float(np.linalg.norm(X.start)) + pvar_norm(X, p)) \
        * pvar_norm(Y, q)


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    satisfied: bool


def young_bound_report(X, Y, p, q) -> BoundReport:
    """Check ``||int X dY||_q <= C(p,q) (|X_0| + ||X||_p) ||Y||_q``."""
    young_constant(p, q)
    res = young_integral(X, Y, "exact-pl", p=p, q=q)
    return BoundReport(res.qvar_of_integral, res.bound_rhs,
                       res.qvar_of_integral <= res.bound_rhs)


def product_lemma_check(a, b, p) -> BoundReport:
    """``||ab||_p <= ||a||_p ||b||_inf + ||a||_inf ||b||_p`` for scalar paths."""
    if a.dim != 1 or b.dim != 1:
        raise ValidationError("product lemma applies to scalar paths")
    ab = a * b
    a, b = a.on_grid(ab.grid), b.on_grid(ab.grid)
    lhs = pvar_norm(ab, p)
    rhs = pvar_norm(a, p) * sup_norm(b) + sup_norm(a) * pvar_norm(b, p)
    return BoundReport(lhs, rhs, lhs <= rhs)


def composition_lemma_check(g, a, a_prime, p) -> BoundReport:
    """Difference estimate for ``g(a) - g(a')`` with ``c = max(|Dg|, |D^2 g|)``."""
    if not isinstance(g, functions.C2Function):
        raise ValidationError("g must carry derivative bounds (a C2Function)")
    if not (np.isfinite(g.dsup) and np.isfinite(g.d2sup)):
        raise ValidationError(f"{g.name} has no finite derivative bounds")
    if a.dim != 1 or a_prime.dim != 1:
        raise ValidationError("composition lemma applies to scalar paths")
    grid = merge_grids(a.grid, a_prime.grid)
    a, a_prime = a.on_grid(grid), a_prime.on_grid(grid)
    diff = a - a_prime
    ga = DiscretePath(grid, g(a.values) - g(a_prime.values))
    lhs = pvar_norm(ga, p)
    rhs = g.lemma_constant * (pvar_norm(diff, p)
                              + (pvar_norm(a, p) + pvar_norm(a_prime, p)) * sup_norm(diff))
    return BoundReport(lhs, rhs, lhs <= rhs)


# -- Young ODEs -------------------------------------------------------------

@dataclass(frozen=True)
class OdeSpec:
    """Scalar Young ODE ``dy = sum_i g_i(y) d eta^i + drift(t, y) dt``.

    ``fields`` is either a sequence of C2Function specs (one per channel of
    ``eta``) or a callable mapping an array of states to shape ``(..., e)``.
    With ``direction="backward"``, ``y0`` is the terminal value and the
    equation is read as ``y_t = y_T + int_t^T drift ds + int_t^T g(y) d eta``.
    """

    y0: float
    fields: object
    eta: DiscretePath
    direction: str = "forward"
    drift: Optional[Callable] = None

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ValidationError(f"direction must be forward|backward, not {self.direction!r}")

    def field_fn(self):
        if callable(self.fields) and not isinstance(self.fields, functions.C2Function):
            return self.fields
        fields = self.fields
        if isinstance(fields, (functions.C2Function, str, dict)):
            fields = [fields]
        if len(fields) != self.eta.dim:
            raise ValidationError(
                f"{len(fields)} vector fields for a {self.eta.dim}-channel driver")
        return functions.stack(fields)


@dataclass(frozen=True)
class OdeSolution:
    path: DiscretePath
    substeps: int
    richardson_gap: float
    fine_path: DiscretePath = field(repr=False, default=None)


def _euler(y0, g, drift, times, eta_vals):
    """Explicit Euler along given node times; returns the state at every node."""
    n = len(times)
    y = np.empty(n)
    y[0] = y0
    deta = np.diff(eta_vals, axis=0)
    dt = np.diff(times)
    for k in range(n - 1):
        step = float(np.dot(np.atleast_1d(g(np.array(y[k]))), deta[k]))
        if drift is not None:
            step += float(drift(times[k], y[k])) * dt[k]
        y[k + 1] = y[k] + step
        if not np.isfinite(y[k + 1]):
            raise NumericalAbort(f"Young ODE state became non-finite at fine step {k}")
    return y


def _ode_pass(spec, substeps):
    g = spec.field_fn()
    fine = spec.eta.grid.refine(substeps)
    eta = spec.eta.on_grid(fine).values
    T = fine.horizon
    if spec.direction == "forward":
        drift = spec.drift
        y = _euler(spec.y0, g, drift, fine.times, eta)
    else:
        tau = T - fine.times[::-1]
        drift = None
        if spec.drift is not None:
            drift = lambda s, v: spec.drift(T - s, v)  # noqa: E731
        y = _euler(spec.y0, g, drift, tau, -eta[::-1])[::-1]
    return DiscretePath(fine, y)


def ode_solve(spec: OdeSpec, substeps=1) -> OdeSolution:
    """Euler scheme on the driver's grid with every cell split ``substeps`` times.

    The run is repeated with ``2 * substeps`` and the largest difference at
    the driver's nodes is reported as ``richardson_gap``.
    """
    substeps = int(substeps)
    if substeps < 1:
        raise ValidationError("substeps must be >= 1")
    fine = _ode_pass(spec, substeps)
    finer = _ode_pass(spec, 2 * substeps)
    coarse = fine.values[::substeps]
    gap = float(np.max(np.abs(coarse - finer.values[::2 * substeps])))
    return OdeSolution(DiscretePath(spec.eta.grid, coarse, {"substeps": substeps}),
                       substeps, gap, fine)


# -- randomized inequality sweeps ------------------------------------------

def random_pl_path(rng, nodes, dim=1, horizon=1.0, scale=None):
    """Random piecewise-linear path on a random grid, for inequality sweeps."""
    cuts = np.sort(rng.uniform(0.0, horizon, size=nodes - 2))
    times = np.concatenate([[0.0], cuts, [horizon]])
    if np.any(np.diff(times) <= 0):
        times = np.linspace(0.0, horizon, nodes)
    scale = rng.lognormal(0.0, 1.0) if scale is None else scale
    kind = rng.integers(3)
    if kind == 0:    # random walk
        steps = rng.normal(0.0, scale, size=(nodes - 1, dim))
    elif kind == 1:  # biased walk, mostly monotone
        steps = np.abs(rng.normal(0.0, scale, size=(nodes - 1, dim))) * rng.choice([-1, 1])
        steps += rng.normal(0.0, 0.1 * scale, size=steps.shape)
    else:            # oscillation
        steps = scale * np.where(np.arange(nodes - 1) % 2, 1.0, -1.0)[:, None] \
            * rng.uniform(0.2, 1.0, size=(nodes - 1, dim))
    start = rng.normal(0.0, scale, size=(1, dim))
    values = np.vstack([start, start + np.cumsum(steps, axis=0)])
    return DiscretePath(TimeGrid(times), values)


@dataclass
class SweepSummary:
    trials: int
    violations: int
    worst_ratio: float
    reports: list = field(default_factory=list, repr=False)


def _summarise(reports):
    ratios = [r.lhs / r.rhs for r in reports if r.rhs > 0]
    return SweepSummary(len(reports), sum(not r.satisfied for r in reports),
                        max(ratios, default=0.0), reports)


def young_bound_sweep(pairs, p, q, seed=0, nodes=(3, 40)):
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(pairs):
        n1, n2 = rng.integers(nodes[0], nodes[1] + 1, size=2)
        reports.append(young_bound_report(random_pl_path(rng, n1),
                                          random_pl_path(rng, n2), p, q))
    return _summarise(reports)


def product_lemma_sweep(pairs, p, seed=0, nodes=(3, 40)):
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(pairs):
        n1, n2 = rng.integers(nodes[0], nodes[1] + 1, size=2)
        reports.append(product_lemma_check(random_pl_path(rng, n1),
                                           random_pl_path(rng, n2), p))
    return _summarise(reports)


def composition_lemma_sweep(pairs, g, p, seed=0, nodes=(3, 40)):
    rng = np.random.default_rng(seed)
    g = functions.from_config(g)
    reports = []
    for _ in range(pairs):
        n1, n2 = rng.integers(nodes[0], nodes[1] + 1, size=2)
        a = random_pl_path(rng, n1)
        if rng.random() < 0.5:
            # nearby pair: a small perturbation of a on its own grid
            a2 = random_pl_path(rng, n1, scale=0.1 * rng.lognormal())
            a_prime = a + a2
        else:
            a_prime = random_pl_path(rng, n2)
        reports.append(composition_lemma_check(g, a, a_prime, p))
    return _summarise(reports)

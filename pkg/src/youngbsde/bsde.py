"""Monte-Carlo solver for BSDEs with a pathwise Young drift.

The equation solved is

    Y_t = xi + int_t^T f(r, Y_r, Z_r) dr + int_t^T g(Y_r) d eta_r - int_t^T Z_r dW_r

with ``eta`` a deterministic path of finite q-variation, q < 2.  Conditional
expectations are least-squares projections on polynomials of the forward
state; the ``d eta`` integral uses left-point sums on the simulation grid.

All norm estimators below are finite-sample proxies for essential suprema:
they report maxima of fitted conditional expectations over the simulated
samples and grid times, and make no consistency claim.
"""

import dataclasses
import itertools
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import functions
from .errors import NumericalAbort, ValidationError
from .montecarlo import BrownianEnsemble, SdeSpec, euler_maruyama, identity_forward
from .paths import DiscretePath, TimeGrid, pvar_suffix, var_distance

_COND_LIMIT = 1e12


# -- conditional expectations ----------------------------------------------

@dataclass(frozen=True)
class RegressionSpec:
    """Polynomial least squares in the forward state.

    ``degree`` is the total degree of the monomial basis, ``ridge`` the
    Tikhonov weight on the (standardised, centred) non-constant columns and
    ``min_samples`` the minimum number of paths per basis function; the
    degree is lowered until the basis respects it.
    """

    degree: int = 3
    ridge: float = 1e-8
    min_samples: int = 10

    def __post_init__(self):
        if self.degree < 0:
            raise ValidationError("basis degree must be >= 0")
        if self.ridge < 0:
            raise ValidationError("ridge parameter must be >= 0")


def _basis_size(m, degree):
    return sum(len(list(itertools.combinations_with_replacement(range(m), k)))
               for k in range(1, degree + 1)) + 1


class Projector:
    """Least-squares projection onto polynomials of one time slice's states.

    The intercept is fitted without penalty (columns are centred), so
    constants are reproduced exactly and the fit is linear in the target.
    """

    def __init__(self, states, spec: RegressionSpec):
        x = np.asarray(states, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        M, m = x.shape
        self.notes = []
        degree = spec.degree
        while degree > 0 and _basis_size(m, degree) * spec.min_samples > M:
            degree -= 1
        if degree != spec.degree:
            self.notes.append(f"degree lowered to {degree} for {M} samples")
        self.degree = degree
        sd = x.std(axis=0)
        live = sd > 1e-12 * (1.0 + np.abs(x).max(axis=0))
        cols = []
        if degree > 0 and live.any():
            u = (x[:, live] - x[:, live].mean(axis=0)) / sd[live]
            k = u.shape[1]
            for deg in range(1, degree + 1):
                for combo in itertools.combinations_with_replacement(range(k), deg):
                    cols.append(np.prod(u[:, combo], axis=1))
        self.M = M
        if not cols:
            self.A = None
            self.condition = 1.0
            self.ridge = spec.ridge
            return
        A = np.column_stack(cols)
        A -= A.mean(axis=0)
        gram = A.T @ A / M
        self.condition = float(np.linalg.cond(gram))
        ridge = spec.ridge
        if not np.isfinite(self.condition) or self.condition > _COND_LIMIT:
            ridge = max(ridge, 1e-10 * float(np.trace(gram)) / len(gram))
            self.notes.append(
                f"ill-conditioned basis (cond={self.condition:.3g}); ridge raised to {ridge:.3g}")
        self.ridge = ridge
        self.A = A
        self._chol = np.linalg.cholesky(gram + ridge * np.eye(len(gram)))

    def fit(self, target):
        """Fitted conditional expectation of ``target`` (shape ``(M,)`` or ``(M, k)``)."""
        y = np.asarray(target, dtype=float)
        mean = y.mean(axis=0)
        if self.A is None:
            return np.broadcast_to(mean, y.shape).copy()
        rhs = self.A.T @ (y - mean) / self.M
        beta = np.linalg.solve(self._chol.T, np.linalg.solve(self._chol, rhs))
        return mean + self.A @ beta


# -- problem data ----------------------------------------------------------

@dataclass(frozen=True)
class Driver:
    """Generator ``f(t, y, z)``; vectorised over paths (``y (M,)``, ``z (M, d)``)."""

    fn: Callable
    lipschitz: float
    bound: float     # bound on |f(t, 0, 0)|
    name: str = "f"

    def __call__(self, t, y, z):
        return np.broadcast_to(self.fn(t, y, z), np.shape(y))

    @classmethod
    def zero(cls):
        return cls(lambda t, y, z: 0.0, 0.0, 0.0, "zero")

    @classmethod
    def linear(cls, a, c=0.0):
        """``a * y + c``."""
        a, c = float(a), float(c)
        return cls(lambda t, y, z: a * y + c, abs(a), abs(c), f"linear({a!r},{c!r})")

    @classmethod
    def affine(cls, a=0.0, b=0.0, c=0.0):
        """``a * y + b * sum(z) + c``."""
        a, b, c = float(a), float(b), float(c)
        return cls(lambda t, y, z: a * y + b * z.sum(axis=-1) + c,
                   max(abs(a), abs(b)), abs(c), f"affine({a!r},{b!r},{c!r})")

    @classmethod
    def smooth(cls, a=0.0, b=0.0, c=0.0):
        """``a * sin(y) + b * tanh(sum(z)) + c``: bounded and Lipschitz."""
        a, b, c = float(a), float(b), float(c)
        return cls(lambda t, y, z: a * np.sin(y) + b * np.tanh(z.sum(axis=-1)) + c,
                   max(abs(a), abs(b)), abs(c), f"smooth({a!r},{b!r},{c!r})")

    def shifted(self, c):
        """``f + c`` for a constant ``c``."""
        fn = self.fn
        return Driver(lambda t, y, z: fn(t, y, z) + c, self.lipschitz,
                      self.bound + abs(c), f"{self.name}+{c!r}")


@dataclass(frozen=True)
class BsdeProblem:
    """All inputs of the Young-drift BSDE.

    ``terminal`` maps forward states at the horizon, shape ``(M, m)``, to
    ``(M,)`` and is clamped to ``[-terminal_bound, terminal_bound]``.  With
    ``forward=None`` the forward state is the Brownian motion itself.
    ``fields`` holds one C2Function per channel of ``eta``.
    """

    terminal: Callable
    terminal_bound: float
    eta: Optional[DiscretePath] = None
    fields: Sequence = ()
    driver: Driver = field(default_factory=Driver.zero)
    forward: Optional[SdeSpec] = None

    def __post_init__(self):
        if not np.isfinite(self.terminal_bound) or self.terminal_bound < 0:
            raise ValidationError("terminal bound must be finite and non-negative")
        if not np.isfinite(self.driver.lipschitz):
            raise ValidationError("driver Lipschitz constant must be finite")
        fields = tuple(functions.from_config(g) for g in self.fields)
        object.__setattr__(self, "fields", fields)
        if self.eta is not None and len(fields) != self.eta.dim:
            raise ValidationError(
                f"{len(fields)} drift fields for a {self.eta.dim}-channel eta")
        for g in fields:
            if not np.isfinite(g.dsup):
                raise ValidationError(f"drift field {g.name} needs a finite |Dg| bound")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def xi(self, x_terminal):
        x = np.asarray(x_terminal, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        v = np.broadcast_to(np.asarray(self.terminal(x), dtype=float), x.shape[:1])
        return np.clip(v, -self.terminal_bound, self.terminal_bound)

    def g(self, y):
        if not self.fields:
            return np.zeros(np.shape(y) + (0,))
        return np.stack([np.broadcast_to(g(y), np.shape(y)) for g in self.fields], axis=-1)

    def eta_increments(self, grid):
        if self.eta is None or not self.fields:
            return np.zeros((len(grid) - 1, len(self.fields)))
        return np.diff(self.eta.on_grid(grid).values, axis=0)


@dataclass(frozen=True, eq=False)
class BsdeSolution:
    """Ensembles ``Y (M, nodes)``, ``Z (M, nodes, d)`` plus the data that made them.

    Entries before ``start`` repeat the values at ``start``.
    """

    grid: TimeGrid
    Y: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    dW: np.ndarray
    scheme: str
    seed: int
    start: int = 0
    y0_stderr: float = 0.0
    diagnostics: list = field(default_factory=list, repr=False)
    contraction: list = field(default_factory=list)

    @property
    def M(self):
        return self.Y.shape[0]

    @property
    def y0(self):
        """Value at the start node (averaged over paths, which agree there)."""
        return float(self.Y[:, self.start].mean())

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _forward_states(problem, ensemble, forward):
    if forward is not None:
        return forward.values
    if problem.forward is None:
        return identity_forward(ensemble).values
    return euler_maruyama(problem.forward, ensemble).values


def _check_cells(problem, grid, deta, start):
    dg = np.array([g.dsup for g in problem.fields]) if problem.fields else np.zeros(0)
    load = problem.driver.lipschitz * grid.steps + np.abs(deta) @ dg
    bad = np.nonzero(load[start:] >= 1.0)[0]
    if bad.size:
        i = int(bad[0]) + start
        raise ValidationError(
            f"cell {i} [{grid.times[i]!r}, {grid.times[i + 1]!r}] too coarse: "
            f"C_f*dt + |Dg|*|d eta| = {load[i]:.4g} >= 1")


def _payload(problem, sol_Y, sol_Z, grid, start):
    """Plain Monte-Carlo payload ``xi + sum f dt + sum g(Y) . d eta`` per path;
    its mean estimates ``Y_start``."""
    deta = problem.eta_increments(grid)
    total = sol_Y[:, -1].copy()
    for i in range(start, len(grid) - 1):
        total += problem.driver(grid.times[i], sol_Y[:, i], sol_Z[:, i]) * grid.steps[i]
        if deta.shape[1]:
            total += problem.g(sol_Y[:, i]) @ deta[i]
    return total


def _stderr(sample):
    return float(sample.std(ddof=1) / np.sqrt(len(sample))) if len(sample) > 1 else 0.0


def _finish(Y, Z, start):
    Y[:, :start] = Y[:, [start]]
    Z[:, :start] = 0.0
    Z[:, -1] = Z[:, -2]
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Z))):
        raise NumericalAbort("solution contains non-finite values")


def solve_backward(problem: BsdeProblem, ensemble: BrownianEnsemble,
                   regression=RegressionSpec(), inner_iters=3, forward=None,
                   start=0) -> BsdeSolution:
    """Backward induction with a per-cell fixed point for ``Y``.

    Per step ``i``: ``Z_i = E_i[(Y_{i+1} - E_i Y_{i+1}) dW_i] / dt_i``, then
    ``Y_i`` solves ``Y = E_i[Y_{i+1}] + f(t_i, Y, Z_i) dt_i + g(Y) . d eta_i``
    by ``inner_iters`` fixed-point sweeps from ``E_i[Y_{i+1}]``.
    """
    if inner_iters < 1:
        raise ValidationError("inner_iters must be >= 1")
    grid = ensemble.grid
    X = _forward_states(problem, ensemble, forward)
    dW = ensemble.increments
    deta = problem.eta_increments(grid)
    _check_cells(problem, grid, deta, start)
    M, n, d = ensemble.M, len(grid), ensemble.d
    Y = np.empty((M, n))
    Z = np.zeros((M, n, d))
    Y[:, -1] = problem.xi(X[:, -1])
    diagnostics = []
    f = problem.driver
    for i in range(n - 2, start - 1, -1):
        t, dt = grid.times[i], grid.steps[i]
        proj = Projector(X[:, i], regression)
        nxt = Y[:, i + 1]
        yhat = proj.fit(nxt)
        Z[:, i] = proj.fit((nxt - yhat)[:, None] * dW[:, i]) / dt
        y = yhat
        last = np.inf
        for k in range(inner_iters):
            new = yhat + f(t, y, Z[:, i]) * dt
            if deta.shape[1]:
                new = new + problem.g(y) @ deta[i]
            upd = float(np.max(np.abs(new - y)))
            y = new
            if k and upd > last and upd > 1e-12 * (1.0 + float(np.max(np.abs(y)))):
                raise NumericalAbort(f"inner fixed point diverging at step {i}")
            last = upd
        Y[:, i] = y
        if not np.all(np.isfinite(y)):
            raise NumericalAbort(f"non-finite Y at step {i}")
        diagnostics.append({"step": i, "condition": proj.condition,
                            "ridge": proj.ridge, "notes": proj.notes,
                            "inner_update": last})
    _finish(Y, Z, start)
    se = _stderr(_payload(problem, Y, Z, grid, start))
    return BsdeSolution(grid, Y, Z, X, dW, "backward", ensemble.seed, start, se,
                        diagnostics[::-1])


def solve_picard(problem: BsdeProblem, ensemble: BrownianEnsemble,
                 regression=RegressionSpec(), sweeps=5, forward=None, start=0,
                 initial=None) -> BsdeSolution:
    """Iterate the global map ``(Y, Z) -> (Y~, Z~)``.

    ``Y~_k`` is the projection of ``xi + sum_{i >= k} [f(t_i, Y_i, Z_i) dt_i
    + g(Y_i) . d eta_i]`` on slice ``k``; ``Z~`` comes from projecting the
    martingale increments of ``Y~`` times ``dW``.  The iteration starts from
    ``(0, 0)`` unless ``initial`` (a solution) is given.  The returned
    solution lists the sup-norm change of ``Y`` per sweep in ``contraction``.
    """
    if sweeps < 1:
        raise ValidationError("sweeps must be >= 1")
    grid = ensemble.grid
    X = _forward_states(problem, ensemble, forward)
    dW = ensemble.increments
    deta = problem.eta_increments(grid)
    _check_cells(problem, grid, deta, start)
    M, n, d = ensemble.M, len(grid), ensemble.d
    xi = problem.xi(X[:, -1])
    projs = {i: Projector(X[:, i], regression) for i in range(start, n - 1)}
    if initial is None:
        Y, Z = np.zeros((M, n)), np.zeros((M, n, d))
        Y[:, -1] = xi
    else:
        Y, Z = initial.Y.copy(), initial.Z.copy()
    changes = []
    f = problem.driver
    for _ in range(sweeps):
        incr = np.zeros((M, n - 1))
        for i in range(start, n - 1):
            incr[:, i] = f(grid.times[i], Y[:, i], Z[:, i]) * grid.steps[i]
            if deta.shape[1]:
                incr[:, i] += problem.g(Y[:, i]) @ deta[i]
        tails = xi[:, None] + np.cumsum(incr[:, ::-1], axis=1)[:, ::-1]
        Y_new = np.empty_like(Y)
        Z_new = np.zeros_like(Z)
        Y_new[:, -1] = xi
        for i in range(n - 2, start - 1, -1):
            Y_new[:, i] = projs[i].fit(tails[:, i])
        for i in range(start, n - 1):
            nxt = Y_new[:, i + 1]
            resid = nxt - projs[i].fit(nxt)
            Z_new[:, i] = projs[i].fit(resid[:, None] * dW[:, i]) / grid.steps[i]
        _finish(Y_new, Z_new, start)
        changes.append(float(np.max(np.abs(Y_new[:, start:] - Y[:, start:]))))
        Y, Z = Y_new, Z_new
    se = _stderr(_payload(problem, Y, Z, grid, start))
    diagnostics = [{"step": i, "condition": p.condition, "ridge": p.ridge,
                    "notes": p.notes} for i, p in sorted(projs.items())]
    return BsdeSolution(grid, Y, Z, X, dW, "picard", ensemble.seed, start, se,
                        diagnostics, changes)


def contraction_ratios(solution):
    c = solution.contraction
    return [b / a if a > 0 else 0.0 for a, b in zip(c[:-1], c[1:])]


# -- norm estimators -------------------------------------------------------

def _fitted_max_profile(solution, values, conditioning):
    out = []
    for i in range(solution.start, len(solution.grid) - 1):
        fitted = Projector(solution.X[:, i], conditioning).fit(values[:, i - solution.start])
        out.append(max(float(np.max(fitted)), 0.0))
    return np.array(out)


def bp_profile(solution, p, conditioning=RegressionSpec()):
    """Per grid time ``t_i``: max over samples of fitted ``E_i[||Y||_{p;[t_i,T]}^2]``."""
    if not p > 2:
        raise ValidationError(f"B_p norm needs p > 2, got {p!r}")
    tails = pvar_suffix(solution.Y[:, solution.start:], p)
    return _fitted_max_profile(solution, tails ** 2, conditioning)


def bp_norm_estimate(solution, p, conditioning=RegressionSpec()) -> float:
    """Finite-sample proxy for the B_p norm (biased; see module docstring)."""
    prof = bp_profile(solution, p, conditioning)
    return float(np.sqrt(prof.max())) + float(np.max(np.abs(solution.Y[:, -1])))


def bmo_profile(solution, conditioning=RegressionSpec()):
    """Per grid time: max over samples of fitted ``E_i[sum_{r >= i} |Z_r|^2 dt_r]``."""
    dt = solution.grid.steps
    z2 = (solution.Z[:, :-1, :] ** 2).sum(-1) * dt
    tails = np.cumsum(z2[:, ::-1], axis=1)[:, ::-1][:, solution.start:]
    return _fitted_max_profile(solution, tails, conditioning)


def bmo_norm_estimate(solution, conditioning=RegressionSpec()) -> float:
    return float(bmo_profile(solution, conditioning).max())


@dataclass(frozen=True)
class BdgReport:
    lhs: float
    rhs: float
    fitted_constant: float


def bdg_diagnostic(solution, p) -> BdgReport:
    """Compare ``E ||int Z dW||_p^2`` with ``E int |Z|^2 dt`` (reported only).

    ``fitted_constant`` is ``lhs / rhs``, NaN when both vanish.
    """
    if not p > 2:
        raise ValidationError(f"BDG diagnostic needs p > 2, got {p!r}")
    s = solution.start
    inc = np.einsum("mnd,mnd->mn", solution.Z[:, s:-1], solution.dW[:, s:])
    stoch = np.concatenate([np.zeros((solution.M, 1)), np.cumsum(inc, axis=1)], axis=1)
    lhs = float(np.mean(pvar_suffix(stoch, p)[:, 0] ** 2))
    rhs = float(np.mean(((solution.Z[:, s:-1] ** 2).sum(-1) * solution.grid.steps[s:]).sum(1)))
    if rhs == 0.0:
        return BdgReport(lhs, rhs, float("nan") if lhs == 0.0 else float("inf"))
    return BdgReport(lhs, rhs, lhs / rhs)


# -- solution-level diagnostics ---------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    violation_fraction: float
    max_violation: float
    pooled_stderr: float
    first: BsdeSolution = field(repr=False)
    second: BsdeSolution = field(repr=False)


def comparison_check(problem1, problem2, ensemble, eps=None, regression=RegressionSpec(),
                     inner_iters=3, forward=None) -> ComparisonReport:
    """Share of (path, time) pairs with ``Y1 > Y2 + eps``, and ``max(Y1 - Y2)``.

    ``eps=None`` means three pooled standard errors of the two ``Y_0``
    estimates.  The caller is responsible for ``xi1 <= xi2`` and ``f1 <= f2``.
    """
    s1 = solve_backward(problem1, ensemble, regression, inner_iters, forward)
    s2 = solve_backward(problem2, ensemble, regression, inner_iters, forward)
    pooled = float(np.hypot(s1.y0_stderr, s2.y0_stderr))
    eps = 3.0 * pooled if eps is None else float(eps)
    gap = s1.Y - s2.Y
    return ComparisonReport(float(np.mean(gap > eps)), float(np.max(gap)), pooled, s1, s2)


@dataclass(frozen=True)
class StabilityRow:
    level: int
    qvar_distance: float
    y0_gap: float
    bp_gap: float
    stderr: float


def stability_in_eta(problem, etas, q, ensemble, regression=RegressionSpec(),
                     p=2.5, inner_iters=3, forward=None):
    """Solutions along ``etas`` against the limit ``problem.eta``, common randomness."""
    if problem.eta is None:
        raise ValidationError("stability study needs the limit eta in the problem")
    if any(e.dim != problem.eta.dim for e in etas):
        raise ValidationError("all etas must share the limit's dimension")
    X = forward
    if X is None and problem.forward is not None:
        X = euler_maruyama(problem.forward, ensemble)
    limit = solve_backward(problem, ensemble, regression, inner_iters, X)
    rows = []
    for n, eta_n in enumerate(etas):
        sol = solve_backward(problem.replace(eta=eta_n), ensemble, regression,
                             inner_iters, X)
        diff = limit.replace(Y=sol.Y - limit.Y, Z=sol.Z - limit.Z)
        paired = _payload(problem.replace(eta=eta_n), sol.Y, sol.Z, sol.grid, 0) \
            - _payload(problem, limit.Y, limit.Z, limit.grid, 0)
        rows.append(StabilityRow(n, var_distance(eta_n, problem.eta, q),
                                 abs(sol.y0 - limit.y0), bp_norm_estimate(diff, p, regression),
                                 _stderr(paired)))
    return rows


@dataclass(frozen=True)
class LipschitzRecord:
    numerator: float
    denominator: float
    ratio: float
    consistent: bool
    stderr: float


def lipschitz_in_xi(problem, xi, xi_prime, ensemble, regression=RegressionSpec(),
                    bound=None, inner_iters=3, forward=None) -> LipschitzRecord:
    """``|Y_0 - Y'_0| / E[|xi - xi'|^2]^{1/2}`` with common randomness.

    ``0/0`` is reported as ratio 0; a zero denominator with a non-zero
    numerator is flagged ``consistent=False``.
    """
    bound = problem.terminal_bound if bound is None else float(bound)
    p1 = problem.replace(terminal=xi, terminal_bound=bound)
    p2 = problem.replace(terminal=xi_prime, terminal_bound=bound)
    X = forward
    if X is None and problem.forward is not None:
        X = euler_maruyama(problem.forward, ensemble)
    s1 = solve_backward(p1, ensemble, regression, inner_iters, X)
    s2 = solve_backward(p2, ensemble, regression, inner_iters, X)
    num = abs(s1.y0 - s2.y0)
    den = float(np.sqrt(np.mean((s1.Y[:, -1] - s2.Y[:, -1]) ** 2)))
    se = _stderr(_payload(p1, s1.Y, s1.Z, s1.grid, s1.start)
                 - _payload(p2, s2.Y, s2.Z, s2.grid, s2.start))
    if den == 0.0:
        return LipschitzRecord(num, den, 0.0 if num <= 1e-12 else float("inf"),
                               num <= 1e-12, se)
    return LipschitzRecord(num, den, num / den, True, se)


# -- export ----------------------------------------------------------------

def solution_summary(solution, p=2.5, conditioning=RegressionSpec()):
    """Summary record with the fixed export field names."""
    return {
        "y0": solution.y0,
        "bp_norm": bp_norm_estimate(solution, p, conditioning),
        "bmo_norm": bmo_norm_estimate(solution, conditioning),
        "scheme": solution.scheme,
        "seed": int(solution.seed),
        "steps": len(solution.grid) - 1,
        "paths": solution.M,
    }


def export_solution(solution, directory, p=2.5, slices=None):
    """Write ``slice_XXXX.csv`` files (sample, Y, Z1..Zd) and ``summary.json``."""
    os.makedirs(directory, exist_ok=True)
    slices = range(len(solution.grid)) if slices is None else slices
    written = []
    d = solution.Z.shape[2]
    header = "sample,Y," + ",".join(f"Z{k + 1}" for k in range(d)) + "\n"
    for i in slices:
        name = os.path.join(directory, f"slice_{i:04d}.csv")
        with open(name, "w") as fh:
            fh.write(header)
            for k in range(solution.M):
                fh.write(",".join([str(k), repr(float(solution.Y[k, i]))]
                                  + [repr(float(z)) for z in solution.Z[k, i]]) + "\n")
        written.append(name)
    summary = os.path.join(directory, "summary.json")
    with open(summary, "w") as fh:
        json.dump(solution_summary(solution, p), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(summary)
    return written

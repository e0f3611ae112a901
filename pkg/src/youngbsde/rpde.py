"""Semilinear parabolic PDEs with a Young drift term.

Two solvers are provided for

    d_t u + 1/2 sigma^2 u_xx + b u_x + f(t, u, sigma u_x) + g(u) . d eta/dt = 0,
    u(T, .) = h:

* :func:`feynman_kac_solve` sets ``u(s, x) = Y^{s,x}_s`` using the BSDE
  solver on forward paths started at ``(s, x)``; this also defines the
  solution for rough ``eta``.
* :func:`fd_reference_solve` is a one-dimensional theta scheme for
  piecewise-linear ``eta`` read as smooth (``d eta`` taken per time cell).
"""

import csv
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm

from . import functions
from .bsde import BsdeProblem, Driver, RegressionSpec, solve_backward
from .errors import ValidationError
from .montecarlo import SdeSpec, euler_maruyama, sample_brownian
from .paths import DiscretePath, TimeGrid, pvar_norm, var_distance
from .young import OdeSpec, ode_solve

BOUNDARY_MASS_TOL = 1e-6


@dataclass(frozen=True)
class PdeProblem:
    """Coefficients and data of the PDE.

    ``sigma`` and ``drift`` act on state arrays of shape ``(k, m)`` like the
    callables of :class:`~youngbsde.montecarlo.SdeSpec`; ``terminal`` maps
    ``(k, m)`` states to ``(k,)`` values bounded by ``terminal_bound``.
    ``sigma_max`` bounds ``|sigma|`` and sizes the truncation box of the
    finite-difference solver.
    """

    terminal: Callable
    terminal_bound: float
    sigma: Callable = lambda x: 1.0
    drift: Callable = lambda x: 0.0
    driver: Driver = field(default_factory=Driver.zero)
    fields: Sequence = ()
    eta: Optional[DiscretePath] = None
    terminal_lipschitz: float = np.inf
    sigma_max: float = 1.0
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fields",
                           tuple(functions.from_config(g) for g in self.fields))

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)

    def bsde(self, eta=None):
        eta = self.eta if eta is None else eta
        return BsdeProblem(self.terminal, self.terminal_bound, eta if self.fields else None,
                           self.fields, self.driver,
                           SdeSpec(self.drift, self.sigma, np.zeros(self.dim)))

    def h(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        v = np.broadcast_to(np.asarray(self.terminal(x), dtype=float), x.shape[:1])
        return np.clip(v, -self.terminal_bound, self.terminal_bound)


@dataclass(frozen=True, eq=False)
class PdeSolution:
    """``u[i, j]`` approximates ``u(times[i], xs[j])``."""

    times: np.ndarray
    xs: np.ndarray
    u: np.ndarray
    stderr: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def value(self, t, x):
        i = int(np.argmin(np.abs(self.times - t)))
        j = int(np.argmin(np.abs(self.xs - x)))
        if abs(self.times[i] - t) > 1e-9 or abs(self.xs[j] - x) > 1e-9:
            raise ValidationError(f"({t!r}, {x!r}) is not a node of this solution")
        return float(self.u[i, j])


# -- Monte Carlo -----------------------------------------------------------

def _fk_node(pde, problem, ensemble, regression, inner_iters, s_index, x):
    grid = ensemble.grid
    if s_index == len(grid) - 1:
        return float(pde.h(x)[0]), 0.0
    sde = problem.forward.at(np.atleast_1d(x), grid.times[s_index])
    fwd = euler_maruyama(sde, ensemble)
    sol = solve_backward(problem, ensemble, regression, inner_iters, fwd, start=s_index)
    return sol.y0, sol.y0_stderr


def feynman_kac_solve(pde: PdeProblem, grid: TimeGrid, times, xs, M=10000, seed=0,
                      regression=RegressionSpec(), inner_iters=3, workers=1,
                      eta=None, d=None) -> PdeSolution:
    """``u(s, x) = Y^{s,x}_s`` on every ``(s, x)`` in ``times x xs``.

    ``grid`` is the simulation grid; every entry of ``times`` must be one of
    its nodes.  One Brownian ensemble is shared by all nodes.  ``stderr``
    holds the Monte-Carlo standard error of each value.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    idx = [grid.index_of(t) for t in times]
    ensemble = sample_brownian(grid, M, pde.dim if d is None else d, seed, workers)
    problem = pde.bsde(eta)
    jobs = [(a, b) for a in range(len(times)) for b in range(len(xs))]

    def run(job):
        a, b = job
        return _fk_node(pde, problem, ensemble, regression, inner_iters, idx[a], xs[b])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    u = np.empty((len(times), len(xs)))
    se = np.empty_like(u)
    for (a, b), (val, err) in zip(jobs, results):
        u[a, b], se[a, b] = val, err
    return PdeSolution(times, xs, u, se, {"scheme": "feynman-kac", "seed": int(seed),
                                          "paths": int(M), "steps": len(grid) - 1})


# -- finite differences ----------------------------------------------------

def fd_box(lo, hi, sigma_max, horizon, dx):
    """Uniform grid of spacing ``dx`` through ``lo``, covering ``[lo, hi]`` plus
    ``6 sigma sqrt(T)`` on each side; probes on the ``lo + k dx`` lattice are nodes."""
    pad = int(np.ceil(6.0 * sigma_max * np.sqrt(horizon) / dx))
    inner = int(np.ceil((hi - lo) / dx - 1e-9))
    return lo + dx * np.arange(-pad, inner + pad + 1)


def boundary_mass(xs, probes, sigma_max, horizon):
    """Gaussian mass beyond the nearer box edge, seen from the worst probe."""
    probes = np.atleast_1d(probes)
    dist = np.minimum(probes - xs[0], xs[-1] - probes).min()
    if dist <= 0:
        return 1.0
    return float(2.0 * norm.sf(dist / (sigma_max * np.sqrt(horizon))))


def fd_reference_solve(pde: PdeProblem, tgrid: TimeGrid, xs, theta=1.0, eta=None,
                       inner_iters=3, probes=None, eta_weight=0.5) -> PdeSolution:
    """Backward theta scheme on a uniform space grid ``xs`` (``m = 1``).

    Diffusion and advection are weighted by ``theta`` (1 = implicit); the
    term ``f(t, u, sigma u_x) dt`` is implicit and ``g(u) . d eta`` mixes the
    two time levels with weight ``eta_weight`` on the new one (1/2 gives the
    trapezoid rule, second order in the increment).  Both are resolved by
    ``inner_iters`` fixed-point sweeps of the cell equation.  Edge
    nodes carry no diffusion: they follow ``du = -(f(t, u, 0) dt + g(u) d eta)``,
    so constant shifts of the solution are reproduced exactly.
    """
    if pde.dim != 1:
        raise ValidationError("finite-difference reference solver is one-dimensional")
    if not (0.0 <= theta <= 1.0 and 0.0 <= eta_weight <= 1.0):
        raise ValidationError("theta and eta_weight must lie in [0, 1]")
    xs = np.asarray(xs, dtype=float)
    dx = np.diff(xs)
    if len(xs) < 3 or np.ptp(dx) > 1e-9 * dx.mean():
        raise ValidationError("space grid must be uniform with at least 3 nodes")
    dx = float(dx.mean())
    dts = tgrid.steps
    if theta < 0.5:
        limit = dx * dx / ((1.0 - 2.0 * theta) * pde.sigma_max ** 2)
        if dts.max() > limit:
            raise ValidationError(
                f"CFL violated: dt={dts.max():.3g} exceeds {limit:.3g} for theta={theta}")
    T = tgrid.horizon
    probes = xs[len(xs) // 4: 3 * len(xs) // 4 + 1] if probes is None else probes
    mass = boundary_mass(xs, probes, pde.sigma_max, T)
    meta = {"scheme": "fd", "theta": float(theta), "eta_weight": float(eta_weight),
            "boundary_mass": mass}
    if mass > BOUNDARY_MASS_TOL:
        meta["boundary_warning"] = True
        warnings.warn(f"truncation box too small: boundary mass {mass:.3g} at probes")

    col = xs[:, None]
    sig = np.broadcast_to(np.asarray(pde.sigma(col), dtype=float).reshape(-1), xs.shape)
    b = np.broadcast_to(np.asarray(pde.drift(col), dtype=float).reshape(-1), xs.shape)
    lo = 0.5 * sig ** 2 / dx ** 2 - 0.5 * b / dx
    di = -sig ** 2 / dx ** 2
    up = 0.5 * sig ** 2 / dx ** 2 + 0.5 * b / dx
    lo[[0, -1]] = di[[0, -1]] = up[[0, -1]] = 0.0

    def apply_L(u):
        out = di * u
        out[1:] += lo[1:] * u[:-1]
        out[:-1] += up[:-1] * u[1:]
        return out

    eta = pde.eta if eta is None else eta
    if pde.fields and eta is not None:
        deta = np.diff(eta.on_grid(tgrid).values, axis=0)
    else:
        deta = np.zeros((len(tgrid) - 1, 0))
    gfun = functions.stack(pde.fields) if pde.fields else None

    def nonlinear(t, u, old, dt, dk):
        z = np.zeros_like(u)
        z[1:-1] = sig[1:-1] * (u[2:] - u[:-2]) / (2 * dx)
        out = pde.driver(t, u, z[:, None]) * dt
        if gfun is not None:
            out = out + (eta_weight * gfun(u) + (1.0 - eta_weight) * gfun(old)) @ dk
        return out

    n = len(tgrid)
    U = np.empty((n, len(xs)))
    U[-1] = pde.h(xs)
    for k in range(n - 2, -1, -1):
        dt, t = dts[k], tgrid.times[k]
        nxt = U[k + 1]
        base = nxt + (1.0 - theta) * dt * apply_L(nxt)
        ab = np.zeros((3, len(xs)))
        ab[0, 1:] = -theta * dt * up[:-1]
        ab[1] = 1.0 - theta * dt * di
        ab[2, :-1] = -theta * dt * lo[1:]
        cur = nxt
        for _ in range(inner_iters):
            rhs = base + nonlinear(t, cur, nxt, dt, deta[k])
            cur = solve_banded((1, 1), ab, rhs) if theta > 0 else rhs
        U[k] = cur
    return PdeSolution(tgrid.times.copy(), xs.copy(), U, None, meta)


# -- studies ---------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    qvar_distance: float
    cauchy_gap: float
    mc_gap: float


def rough_convergence_study(pde: PdeProblem, eta_levels, probes, tgrid: TimeGrid, xs,
                            mc_grid: TimeGrid, M=10000, seed=0, q=1.5,
                            regression=RegressionSpec(), theta=1.0, workers=1):
    """Finite-difference ``u^n`` per smoothed level against the Monte-Carlo
    rough limit (``pde.eta``) at ``probes`` = list of ``(t, x)`` nodes."""
    if len(eta_levels) < 3:
        raise ValidationError("convergence study needs at least 3 levels")
    probes = [(float(t), float(x)) for t, x in probes]
    fd_values = []
    for eta_n in eta_levels:
        sol = fd_reference_solve(pde, tgrid, xs, theta, eta=eta_n,
                                 probes=[x for _, x in probes])
        fd_values.append(np.array([sol.value(t, x) for t, x in probes]))
    mc = monte_carlo_at(pde, probes, mc_grid, M, seed, regression, workers)
    rows = []
    for n, vals in enumerate(fd_values):
        cauchy = float(np.max(np.abs(vals - fd_values[n + 1]))) \
            if n + 1 < len(fd_values) else float("nan")
        dist = var_distance(eta_levels[n], pde.eta, q) if pde.eta is not None else 0.0
        rows.append(ConvergenceRow(n, dist, cauchy, float(np.max(np.abs(vals - mc)))))
    return rows


def monte_carlo_at(pde, probes, grid, M=10000, seed=0, regression=RegressionSpec(),
                   workers=1, eta=None):
    """Feynman-Kac values at scattered ``(t, x)`` probes (shared ensemble)."""
    ensemble = sample_brownian(grid, M, pde.dim, seed, workers)
    problem = pde.bsde(eta)
    out = [_fk_node(pde, problem, ensemble, regression, 3, grid.index_of(t), x)[0]
           for t, x in probes]
    return np.array(out)


@dataclass(frozen=True)
class ModulusReport:
    spatial_constant: float
    temporal_constant: float
    spatial_ok: bool
    temporal_ok: bool


def modulus_check(solution: PdeSolution, probes, eta=None, q=1.5, K=None, K_time=None,
                  slack=1e-12):
    """Fit or verify the space and time moduli at index probes ``(i, j)``.

    Spatial ratios compare ``(i, j)`` with ``(i, j+1)`` against ``|x - x'|``;
    temporal ratios compare ``(i, j)`` with ``(i+1, j)`` against
    ``delta^{1/2} + delta + ||eta||_{q;[s, s+delta]}``.  Given constants are
    checked; missing ones are fitted as the largest observed ratio.
    """
    sp, tm = [], []
    for i, j in probes:
        if j + 1 < len(solution.xs):
            du = abs(solution.u[i, j + 1] - solution.u[i, j])
            sp.append(du / (solution.xs[j + 1] - solution.xs[j]))
        if i + 1 < len(solution.times):
            s, s2 = solution.times[i], solution.times[i + 1]
            delta = s2 - s
            scale = np.sqrt(delta) + delta
            if eta is not None:
                a, c = eta.grid.index_of(s, 1e-9), eta.grid.index_of(s2, 1e-9)
                scale += pvar_norm(eta, q, (a, c))
            tm.append(abs(solution.u[i + 1, j] - solution.u[i, j]) / scale)
    k_fit = max(sp, default=0.0)
    kt_fit = max(tm, default=0.0)
    return ModulusReport(k_fit if K is None else K, kt_fit if K_time is None else K_time,
                         K is None or k_fit <= K + slack,
                         K_time is None or kt_fit <= K_time + slack)


def barrier_bounds(pde: PdeProblem, grid: TimeGrid, substeps=4, eta=None):
    """Lower and upper Young-ODE barriers started from ``-/+ terminal_bound``.

    Each solves ``y_t = y_T + int_t^T f(s, y_s, 0) ds + int_t^T g(y_s) d eta_s``;
    their values bound ``u`` from below and above.
    """
    eta = pde.eta if eta is None else eta
    if not pde.fields or eta is None:
        fields, drive = [functions.zero()], DiscretePath(grid, np.zeros(len(grid)))
    else:
        fields, drive = list(pde.fields), eta.on_grid(grid)
    f = pde.driver

    def drift(t, y):
        return float(f(t, np.array([y]), np.zeros((1, 1)))[0])

    out = []
    for y_T in (-pde.terminal_bound, pde.terminal_bound):
        out.append(ode_solve(OdeSpec(y_T, fields, drive, "backward", drift), substeps).path)
    return out[0], out[1]


def pde_to_csv(solution: PdeSolution, directory, stem="u"):
    """``<stem>.csv`` (header ``t,<x_1>,...``; one row per time node) plus
    ``<stem>.json`` metadata."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{stem}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [repr(float(x)) for x in solution.xs])
        for t, row in zip(solution.times, solution.u):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    meta = os.path.join(directory, f"{stem}.json")
    with open(meta, "w") as fh:
        json.dump(solution.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [path, meta]


STUDY_HEADER = ("level", "qvar_distance", "cauchy_gap", "mc_gap")


def study_to_csv(rows, target):
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDY_HEADER)
        for r in rows:
            w.writerow([r.level] + [repr(float(v)) for v in
                                    (r.qvar_distance, r.cauchy_gap, r.mc_gap)])

"""Brownian ensembles and Euler-Maruyama simulation of the forward diffusion."""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _rng
from .errors import NumericalAbort, ValidationError
from .paths import DiscretePath, TimeGrid

_BROWNIAN_STREAM = _rng.stream_id("brownian")


@dataclass(frozen=True, eq=False)
class BrownianEnsemble:
    """``M`` Brownian paths on ``grid``: ``paths`` has shape ``(M, nodes, d)``."""

    grid: TimeGrid
    paths: np.ndarray
    seed: int

    @property
    def M(self):
        return self.paths.shape[0]

    @property
    def d(self):
        return self.paths.shape[2]

    @property
    def increments(self):
        return np.diff(self.paths, axis=1)

    def path(self, k):
        return DiscretePath(self.grid, self.paths[k])


def _chunks(total, workers):
    workers = max(1, int(workers))
    bounds = np.linspace(0, total, workers + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_chunks(fn, total, workers):
    chunks = _chunks(total, workers)
    if len(chunks) == 1:
        return [fn(*chunks[0])]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def sample_brownian(grid: TimeGrid, M, d=1, seed=0, workers=1) -> BrownianEnsemble:
    """Brownian increments keyed by ``(seed, path, node, coordinate)``.

    The variate for a given key does not depend on ``workers``.
    """
    M, d = int(M), int(d)
    if M < 1 or d < 1:
        raise ValidationError("need M >= 1 paths and dimension d >= 1")
    cells = len(grid) - 1
    sqrt_dt = np.sqrt(grid.steps)[None, :, None]

    def block(a, b):
        z = _rng.normals(seed, _BROWNIAN_STREAM, (b - a) * cells * d, start=a * cells * d)
        return z.reshape(b - a, cells, d)

    z = np.concatenate(_run_chunks(block, M, workers), axis=0)
    paths = np.zeros((M, cells + 1, d))
    np.cumsum(z * sqrt_dt, axis=1, out=paths[:, 1:, :])
    paths.setflags(write=False)
    return BrownianEnsemble(grid, paths, int(seed))


def _shaped(out, shape):
    out = np.asarray(out, dtype=float)
    if out.size == np.prod(shape) and out.shape != shape:
        return out.reshape(shape)
    return np.broadcast_to(out, shape)


@dataclass(frozen=True)
class SdeSpec:
    """``dX = b(X) dt + sigma(X) dW`` started at ``x0`` at time ``start_time``.

    ``drift`` maps states ``(M, m)`` to ``(M, m)`` and ``diffusion`` maps them
    to ``(M, m, d)``; scalar or lower-rank outputs are broadcast.
    """

    drift: Callable
    diffusion: Callable
    x0: object = 0.0
    start_time: float = 0.0
    lipschitz: Optional[float] = None

    @property
    def m(self):
        return np.atleast_1d(np.asarray(self.x0, dtype=float)).size

    def at(self, x0, start_time=None):
        """Same dynamics from another starting point."""
        return SdeSpec(self.drift, self.diffusion, x0,
                       self.start_time if start_time is None else start_time,
                       self.lipschitz)

    @classmethod
    def brownian(cls, x0=0.0, start_time=0.0, sigma=1.0):
        return cls(lambda x: 0.0, lambda x: sigma, x0, start_time, 0.0)


@dataclass(frozen=True, eq=False)
class ForwardEnsemble:
    """Simulated forward paths, ``values`` of shape ``(M, nodes, m)``."""

    grid: TimeGrid
    values: np.ndarray
    start_index: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def M(self):
        return self.values.shape[0]

    def path(self, k):
        return DiscretePath(self.grid, self.values[k])


def euler_maruyama(sde: SdeSpec, ensemble: BrownianEnsemble, workers=1) -> ForwardEnsemble:
    """Euler-Maruyama from the start node to the horizon; constant before it."""
    grid = ensemble.grid
    s = grid.index_of(sde.start_time)
    m, d, M = sde.m, ensemble.d, ensemble.M
    x0 = np.atleast_1d(np.asarray(sde.x0, dtype=float))
    dt = grid.steps
    dW = ensemble.increments

    def block(a, b):
        k = b - a
        out = np.empty((k, len(grid), m))
        out[:, :s + 1, :] = x0
        x = np.broadcast_to(x0, (k, m)).copy()
        for i in range(s, len(grid) - 1):
            drift = _shaped(sde.drift(x), (k, m))
            vol = _shaped(sde.diffusion(x), (k, m, d))
            x = x + drift * dt[i] + np.einsum("kij,kj->ki", vol, dW[a:b, i, :])
            bad = ~np.all(np.isfinite(x), axis=1)
            if bad.any():
                raise NumericalAbort(
                    f"forward state non-finite on path {a + int(np.argmax(bad))} at step {i}")
            out[:, i + 1, :] = x
        return out

    values = np.concatenate(_run_chunks(block, M, workers), axis=0)
    values.setflags(write=False)
    return ForwardEnsemble(grid, values, s, {"seed": ensemble.seed})


def identity_forward(ensemble: BrownianEnsemble) -> ForwardEnsemble:
    """The Brownian paths themselves as forward state."""
    return ForwardEnsemble(ensemble.grid, ensemble.paths, 0, {"seed": ensemble.seed})


def ensemble_to_csv(values, grid, target, start=0, stop=None):
    """Debug dump of samples ``start..stop-1``: rows ``sample,t,x1..xm``."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, :, None]
    stop = values.shape[0] if stop is None else stop
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "t"] + [f"x{k + 1}" for k in range(values.shape[2])])
        for k in range(start, stop):
            for t, row in zip(grid.times, values[k]):
                w.writerow([k, repr(float(t))] + [repr(float(v)) for v in row])

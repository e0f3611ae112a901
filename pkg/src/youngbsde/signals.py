"""Driving signals of finite q-variation (q < 2) and their smoothings.

Fractional Brownian motion with Hurst index ``H > 1/2`` is used as the
canonical rough driver: its sample paths have finite q-variation for every
``q > 1/H``.  Smooth approximations are box (moving-average) filters of the
piecewise-linear path, computed exactly from its antiderivative.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import ValidationError
from .paths import DiscretePath, TimeGrid, pvar_norm, var_distance

MAX_FBM_NODES = 4096
KINDS = ("sinusoid", "random-pl", "fbm", "mollified")


@dataclass(frozen=True)
class EtaSpec:
    """Recipe for a driving path; build instances with the classmethods."""

    kind: str
    dim: int = 1
    horizon: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown signal kind {self.kind!r}")
        if self.dim < 1:
            raise ValidationError("signal dimension must be >= 1")
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        p = self.params
        if self.kind == "sinusoid":
            for key in ("amplitudes", "frequencies", "phases"):
                arr = np.asarray(p[key], dtype=float)
                if arr.shape[:1] != (self.dim,) or not np.all(np.isfinite(arr)):
                    raise ValidationError(f"sinusoid {key} must be finite, one entry per channel")
        elif self.kind == "random-pl":
            if int(p["nodes"]) < 2:
                raise ValidationError("random-pl needs at least 2 nodes")
        elif self.kind == "fbm":
            if not 0.5 < p["hurst"] < 1.0:
                raise ValidationError(f"Hurst index must lie in (0.5, 1), got {p['hurst']!r}")
        elif self.kind == "mollified":
            if int(p["level"]) < 0:
                raise ValidationError("mollification level must be >= 0")
            if p["base"].dim != self.dim:
                raise ValidationError("mollified spec and base disagree on dimension")

    @classmethod
    def sinusoid(cls, amplitudes, frequencies, phases=None, horizon=1.0):
        """Channel ``c`` is ``sum_k A[c,k] sin(2 pi f[c,k] t + phi[c,k])``."""
        a = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        f = np.broadcast_to(np.asarray(frequencies, dtype=float), a.shape)
        ph = np.zeros_like(a) if phases is None else \
            np.broadcast_to(np.asarray(phases, dtype=float), a.shape)
        return cls("sinusoid", len(a), horizon,
                   {"amplitudes": a.tolist(), "frequencies": f.tolist(),
                    "phases": ph.tolist()})

    @classmethod
    def random_pl(cls, nodes, scale, seed, dim=1, horizon=1.0):
        return cls("random-pl", dim, horizon,
                   {"nodes": int(nodes), "scale": float(scale), "seed": int(seed)})

    @classmethod
    def fbm(cls, hurst, seed, dim=1, horizon=1.0, scale=1.0):
        return cls("fbm", dim, horizon,
                   {"hurst": float(hurst), "seed": int(seed), "scale": float(scale)})

    @classmethod
    def mollified(cls, base, level, width=None, ratio=2.0, extension="reflect"):
        width = base.horizon / 8 if width is None else float(width)
        return cls("mollified", base.dim, base.horizon,
                   {"base": base, "level": int(level), "width": width,
                    "ratio": float(ratio), "extension": extension})

    @classmethod
    def from_config(cls, cfg):
        cfg = dict(cfg)
        kind = cfg.pop("kind", None)
        horizon = float(cfg.pop("horizon", 1.0))
        try:
            if kind == "sinusoid":
                return cls.sinusoid(cfg.pop("amplitudes"), cfg.pop("frequencies"),
                                    cfg.pop("phases", None), horizon=horizon, **cfg)
            if kind == "random-pl":
                return cls.random_pl(horizon=horizon, **cfg)
            if kind == "fbm":
                return cls.fbm(horizon=horizon, **cfg)
            if kind == "mollified":
                base = cls.from_config(dict(cfg.pop("base"), horizon=horizon))
                return cls.mollified(base, **cfg)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad {kind} signal spec: {exc}") from None
        raise ValidationError(f"unknown signal kind {kind!r}")


@functools.lru_cache(maxsize=32)
def _fbm_factor(hurst, times_bytes):
    t = np.frombuffer(times_bytes, dtype=float)[1:]
    two_h = 2.0 * hurst
    cov = 0.5 * (t[:, None] ** two_h + t[None, :] ** two_h
                 - np.abs(t[:, None] - t[None, :]) ** two_h)
    jitter = 0.0
    scale = float(np.mean(np.diag(cov)))
    for attempt in range(8):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(len(t))), jitter
        except np.linalg.LinAlgError:
            jitter = scale * 10.0 ** (attempt - 14)
    raise ValidationError("fBm covariance is not positive definite even with jitter")


def fbm_covariance(s, t, hurst):
    two_h = 2.0 * hurst
    return 0.5 * (s ** two_h + t ** two_h - abs(t - s) ** two_h)


def _pl_antiderivative(times, values, s):
    """Exact integral from 0 to ``s`` of a piecewise-linear path, extended by
    constants outside ``[0, T]``.  ``values`` has shape (n, d)."""
    s = np.asarray(s, dtype=float)
    dt = np.diff(times)
    slope = np.diff(values, axis=0) / dt[:, None]
    cum = np.vstack([np.zeros((1, values.shape[1])),
                     np.cumsum(0.5 * (values[:-1] + values[1:]) * dt[:, None], axis=0)])
    k = np.clip(np.searchsorted(times, s, side="right") - 1, 0, len(times) - 2)
    u = np.clip(s, times[0], times[-1]) - times[k]
    out = cum[k] + values[k] * u[:, None] + 0.5 * slope[k] * (u ** 2)[:, None]
    below, above = s < times[0], s > times[-1]
    out[below] = values[0] * (s[below] - times[0])[:, None]
    out[above] = cum[-1] + values[-1] * (s[above] - times[-1])[:, None]
    return out


def _reflected_antiderivative(times, values, s):
    """Antiderivative of the path extended by point reflection through its
    endpoints (``v(-s) = 2 v(0) - v(s)``, ``v(T+s) = 2 v(T) - v(T-s)``);
    ``values`` must start at 0."""
    s = np.asarray(s, dtype=float)
    T = times[-1]
    out = _pl_antiderivative(times, values, np.clip(s, times[0], T))
    below, above = s < 0, s > T
    out[below] = _pl_antiderivative(times, values, -s[below])
    u = s[above] - T
    out[above] = 2.0 * values[-1] * u[:, None] + _pl_antiderivative(times, values, T - u)
    return out


EXTENSIONS = ("reflect", "constant")


def moving_average(path: DiscretePath, width: float, extension="reflect") -> DiscretePath:
    """Centred box average of width ``width`` evaluated at the path's nodes.

    Beyond its endpoints the path is extended by point reflection (default),
    which keeps both endpoint values and reproduces linear paths exactly, or
    by constants.  ``width == 0`` returns the path unchanged.
    """
    if width < 0:
        raise ValidationError("window width must be non-negative")
    if extension not in EXTENSIONS:
        raise ValidationError(f"unknown extension {extension!r}")
    if width == 0:
        return path
    if extension == "reflect" and width > 2.0 * path.grid.horizon:
        raise ValidationError("reflected averaging needs width <= 2 T")
    base = path.values[0]
    v = path.values - base
    t = path.times
    anti = _reflected_antiderivative if extension == "reflect" else _pl_antiderivative
    hi = anti(t, v, t + 0.5 * width)
    lo = anti(t, v, t - 0.5 * width)
    return DiscretePath(path.grid, base + (hi - lo) / width,
                        dict(path.meta, smoothing=float(width)))


def generate_eta(spec: EtaSpec, grid: TimeGrid) -> DiscretePath:
    """Deterministic sample of ``spec`` on ``grid``."""
    if abs(grid.horizon - spec.horizon) > 1e-12 * max(1.0, spec.horizon):
        raise ValidationError(
            f"grid horizon {grid.horizon!r} differs from signal horizon {spec.horizon!r}")
    t = grid.times
    p = spec.params
    meta = {"kind": spec.kind}
    if spec.kind == "sinusoid":
        a, f, ph = (np.asarray(p[k], dtype=float).reshape(spec.dim, -1)
                    for k in ("amplitudes", "frequencies", "phases"))
        vals = np.einsum("ck,ckn->nc", a,
                         np.sin(2 * math.pi * f[..., None] * t + ph[..., None]))
    elif spec.kind == "random-pl":
        knots = TimeGrid.uniform(spec.horizon, p["nodes"] - 1)
        cols = []
        for c in range(spec.dim):
            z = _rng.normals(p["seed"], _rng.stream_id("random-pl", c), p["nodes"] - 1)
            cols.append(np.concatenate([[0.0], np.cumsum(p["scale"] * z)]))
        vals = DiscretePath(knots, np.column_stack(cols)).at(t)
    elif spec.kind == "fbm":
        if len(t) > MAX_FBM_NODES:
            raise ValidationError(
                f"fBm sampling limited to {MAX_FBM_NODES} nodes, got {len(t)}")
        chol, jitter = _fbm_factor(p["hurst"], t.tobytes())
        cols = []
        for c in range(spec.dim):
            z = _rng.normals(p["seed"], _rng.stream_id("fbm", c), len(t) - 1)
            cols.append(np.concatenate([[0.0], chol @ z]))
        vals = p.get("scale", 1.0) * np.column_stack(cols)
        meta.update(hurst=p["hurst"], jitter=jitter)
    else:
        base = generate_eta(p["base"], grid)
        width = p["width"] / p["ratio"] ** p["level"]
        vals = moving_average(base, width, p.get("extension", "reflect")).values
        meta.update(level=p["level"], width=width)
    return DiscretePath(grid, vals, meta)


def approximation_sequence(eta: DiscretePath, q=None, levels=4, width=None,
                           ratio=2.0, method="average", extension="reflect"):
    """Smooth approximations ``eta^0, ..., eta^{levels-1}`` of ``eta``.

    ``method="average"`` uses box filters of width ``width / ratio**n``
    (default ``width = T/8``) with the given endpoint ``extension``.
    ``method="interpolate"`` instead keeps every ``2**(levels-1-n)``-th node
    and interpolates linearly, so the last level is ``eta`` itself.  ``q`` is
    accepted for symmetry with :func:`ladder_distances`; the construction does
    not depend on it.
    """
    levels = int(levels)
    if levels < 2:
        raise ValidationError("an approximation sequence needs at least 2 levels")
    if method == "average":
        width = eta.grid.horizon / 8 if width is None else float(width)
        return [moving_average(eta, width / ratio ** n, extension) for n in range(levels)]
    if method == "interpolate":
        out = []
        n_nodes = len(eta)
        for n in range(levels):
            stride = 2 ** (levels - 1 - n)
            idx = np.unique(np.append(np.arange(0, n_nodes, stride), n_nodes - 1))
            coarse = DiscretePath(TimeGrid(eta.times[idx]), eta.values[idx])
            out.append(coarse.on_grid(eta.grid))
        return out
    raise ValidationError(f"unknown approximation method {method!r}")


def ladder_distances(sequence, eta, q):
    """``var_distance(eta^n, eta, q)`` for every level."""
    return [var_distance(level, eta, q) for level in sequence]


@dataclass(frozen=True)
class ProfileRow:
    exponent: float
    norm: float
    dyadic: tuple   # norms on the skeletons keeping every 2**j-th node, j = 1, 2, ...


def qvar_profile(eta: DiscretePath, exponents, sublevels=4):
    """Variation norms of ``eta`` per exponent, plus coarse-skeleton norms."""
    rows = []
    for e in exponents:
        if e < 1:
            raise ValidationError("exponents must be >= 1")
        coarse = []
        for j in range(1, sublevels + 1):
            idx = np.unique(np.append(np.arange(0, len(eta), 2 ** j), len(eta) - 1))
            if len(idx) < 2:
                break
            sk = DiscretePath(TimeGrid(eta.times[idx]), eta.values[idx])
            coarse.append(pvar_norm(sk, e))
        rows.append(ProfileRow(float(e), pvar_norm(eta, e), tuple(coarse)))
    return rows

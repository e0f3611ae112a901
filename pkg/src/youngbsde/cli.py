"""Command-line front end: JSON experiment configs in, CSV files and a manifest out.

Every run writes ``manifest.json`` into the output directory before any
result file, first with ``"status": "running"`` and finally with ``"ok"`` or
``"failed"``.  Exit codes: 0 success, 2 invalid input, 3 numerical abort.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, bsde, functions, paths, rpde, signals, young
from .errors import NumericalAbort, ValidationError
from .montecarlo import SdeSpec, ensemble_to_csv, euler_maruyama, sample_brownian

SCHEMA = "1"
COMMANDS = ("pvar", "young", "ode", "gen-eta", "sde", "bsde", "pde",
            "study-stability", "study-convergence")
_REQUIRED = object()


class ConfigError(ValidationError):
    pass


# -- config access ---------------------------------------------------------

class Section:
    """Dict view that records which keys were read; :meth:`finish` rejects the rest."""

    def __init__(self, data, where):
        if not isinstance(data, dict):
            raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
        self.data, self.where, self.used = data, where, set()

    def has(self, key):
        return key in self.data

    def raw(self, key, default=_REQUIRED):
        self.used.add(key)
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{self.where}.{key}: required field missing")
            return default
        return self.data[key]

    def num(self, key, default=_REQUIRED, kind=float):
        value = self.raw(key, default)
        if value is None:
            return None
        try:
            if kind is int and float(value) != int(value):
                raise ValueError
            return kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.where}.{key}: expected {kind.__name__}, "
                              f"got {value!r}") from None

    def nums(self, key, default=_REQUIRED):
        value = self.raw(key, default)
        try:
            return [float(v) for v in np.atleast_1d(value)]
        except (TypeError, ValueError):
            raise ConfigError(f"{self.where}.{key}: expected numbers, got {value!r}") from None

    def choice(self, key, options, default=_REQUIRED):
        value = self.raw(key, default)
        if value not in options:
            raise ConfigError(f"{self.where}.{key}: {value!r} not in {list(options)}")
        return value

    def sub(self, key, default=_REQUIRED):
        value = self.raw(key, default)
        return None if value is None else Section(value, f"{self.where}.{key}")

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(f"{self.where}: unknown key(s) {', '.join(extra)}")


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"--set expects KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    try:
        value = json.loads(value)
    except json.JSONDecodeError:
        pass
    return key.strip(), value


def apply_override(cfg, key, value):
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part!r} is not a section")
    node[parts[-1]] = value


def load_config(path):
    """Read a config file; a manifest is accepted too (its echoed config is used)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    base = os.path.dirname(os.path.abspath(path))
    if isinstance(data, dict) and "status" in data and "config" in data:
        return data["config"], data.get("config_dir", base)
    return data, base


def config_hash(cfg):
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# -- builders --------------------------------------------------------------

def build_grid(sec):
    return paths.TimeGrid.uniform(sec.num("horizon", 1.0), sec.num("steps", kind=int))


def build_path(sec, ctx, grid=None):
    """A path from ``csv``, explicit ``times``/``values``, or an ``eta`` recipe."""
    if sec.has("csv"):
        name = sec.raw("csv")
        return paths.from_csv(name if os.path.isabs(name) else os.path.join(ctx.base, name))
    if sec.has("values"):
        values = np.asarray(sec.raw("values"), dtype=float)
        times = sec.raw("times", None)
        times = np.linspace(0.0, sec.num("horizon", 1.0), len(values)) if times is None \
            else np.asarray(times, dtype=float)
        return paths.DiscretePath(paths.TimeGrid(times), values)
    spec = signals.EtaSpec.from_config(sec.raw("eta"))
    if sec.has("steps") or grid is None:
        grid = paths.TimeGrid.uniform(spec.horizon, sec.num("steps", kind=int))
    return signals.generate_eta(spec, grid)


def _finished(sec, value):
    sec.finish()
    return value


def build_path_spec(parent, key, ctx, grid=None, default=_REQUIRED):
    sec = parent.sub(key, default)
    if sec is None:
        return None
    return _finished(sec, build_path(sec, ctx, grid))


def build_forward(sec):
    """Forward models: brownian, ou (mean reverting), gbm."""
    kind = sec.choice("kind", ("brownian", "ou", "gbm"))
    x0 = sec.num("x0", 0.0)
    sigma = sec.num("sigma", 1.0)
    if kind == "brownian":
        sde = SdeSpec(lambda x: 0.0, lambda x: sigma, x0, 0.0, 0.0)
        smax = abs(sigma)
    elif kind == "ou":
        theta, mu = sec.num("theta", 1.0), sec.num("mu", 0.0)
        sde = SdeSpec(lambda x: theta * (mu - x), lambda x: sigma, x0, 0.0, abs(theta))
        smax = abs(sigma)
    else:
        mu = sec.num("mu", 0.0)
        sde = SdeSpec(lambda x: mu * x, lambda x: sigma * x, x0, 0.0, max(abs(mu), abs(sigma)))
        smax = np.inf
    sec.finish()
    return sde, smax


TERMINALS = ("constant", "identity", "square", "sin", "tanh", "call", "indicator")


def build_terminal(sec):
    """Terminal functionals of the first forward coordinate, plus their bound."""
    kind = sec.choice("kind", TERMINALS)
    bound = sec.num("bound")
    a, s, k = sec.num("amplitude", 1.0), sec.num("scale", 1.0), sec.num("strike", 0.0)
    c = sec.num("c", 0.0)
    table = {
        "constant": (lambda x: np.full(len(x), c), 0.0),
        "identity": (lambda x: s * x[:, 0] + c, abs(s)),
        "square": (lambda x: a * x[:, 0] ** 2 + c, np.inf),
        "sin": (lambda x: a * np.sin(s * x[:, 0]) + c, abs(a * s)),
        "tanh": (lambda x: a * np.tanh(s * x[:, 0]) + c, abs(a * s)),
        "call": (lambda x: a * np.maximum(x[:, 0] - k, 0.0) + c, abs(a)),
        "indicator": (lambda x: a * (x[:, 0] > k) + c, np.inf),
    }
    sec.finish()
    fn, lip = table[kind]
    return fn, bound, lip


def build_driver(sec):
    if sec is None:
        return bsde.Driver.zero()
    kind = sec.choice("kind", ("zero", "linear", "affine", "smooth"))
    params = {key: sec.num(key, 0.0) for key in ("a", "b", "c") if sec.has(key)}
    sec.finish()
    if kind == "zero":
        return bsde.Driver.zero()
    if kind == "linear":
        if "b" in params:
            raise ConfigError(f"{sec.where}: linear driver takes a and c only")
        return bsde.Driver.linear(params.get("a", 0.0), params.get("c", 0.0))
    return getattr(bsde.Driver, kind)(**params)


def build_regression(sec):
    if sec is None:
        return bsde.RegressionSpec()
    spec = bsde.RegressionSpec(sec.num("degree", 3, int), sec.num("ridge", 1e-8),
                               sec.num("min_samples", 10, int))
    sec.finish()
    return spec


def build_fields(sec):
    return [functions.from_config(g) for g in sec.raw("fields", [])]


def build_ladder(sec, eta):
    if sec is None:
        return signals.approximation_sequence(eta)
    out = signals.approximation_sequence(
        eta, levels=sec.num("levels", 4, int), width=sec.num("width", None),
        ratio=sec.num("ratio", 2.0),
        method=sec.choice("method", ("average", "interpolate"), "average"),
        extension=sec.choice("extension", signals.EXTENSIONS, "reflect"))
    sec.finish()
    return out


class Context:
    def __init__(self, out, base, seed, workers):
        self.out, self.base, self.seed, self.workers = out, base, seed, workers
        self.outputs, self.timings = [], {}

    def file(self, name):
        self.outputs.append(name)
        return os.path.join(self.out, name)

    def timed(self, label, fn, *args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - t0
        return result


def _fmt(v):
    return repr(float(v))


def write_rows(target, header, rows):
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, bool, int, np.integer)) else _fmt(v)
                        for v in row])


# -- subcommands -----------------------------------------------------------

def cmd_pvar(cfg, ctx):
    path = build_path_spec(cfg, "path", ctx)
    exps = cfg.nums("exponents", [2.0])
    sub = cfg.num("sublevels", 0, int)
    cfg.finish()
    rows = ctx.timed("pvar", signals.qvar_profile, path, exps, sub)
    width = max((len(r.dyadic) for r in rows), default=0)
    write_rows(ctx.file("pvar.csv"), ["exponent", "norm"] + [f"skeleton_{j + 1}"
                                                            for j in range(width)],
               [[r.exponent, r.norm] + list(r.dyadic) for r in rows])
    for r in rows:
        print(f"p={r.exponent!r} pvar={r.norm!r}")


def cmd_young(cfg, ctx):
    if cfg.has("x"):
        X = build_path_spec(cfg, "x", ctx)
        Y = build_path_spec(cfg, "y", ctx)
        p, q = cfg.num("p", None), cfg.num("q", None)
        res = ctx.timed("integral", young.young_integral, X, Y,
                        cfg.choice("mode", ("exact-pl", "left-point"), "exact-pl"),
                        cfg.num("refinement", 1, int), p, q)
        paths.to_csv(res.integral_path, ctx.file("integral.csv"))
        print(f"integral={res.value!r}")
        if p is not None and q is not None:
            rep = young.young_bound_report(X, Y, p, q)
            write_rows(ctx.file("bound.csv"), ["lhs", "rhs", "satisfied"],
                       [[rep.lhs, rep.rhs, str(rep.satisfied).lower()]])
            print(f"bound lhs={rep.lhs!r} rhs={rep.rhs!r} satisfied={rep.satisfied}")
    sweep = cfg.sub("sweep", None)
    cfg.finish()
    if sweep is None:
        return
    kind = sweep.choice("kind", ("bound", "product", "composition"))
    pairs, p = sweep.num("pairs", 500, int), sweep.num("p")
    if kind == "bound":
        summary = ctx.timed("sweep", young.young_bound_sweep, pairs, p, sweep.num("q"), ctx.seed)
    elif kind == "product":
        summary = ctx.timed("sweep", young.product_lemma_sweep, pairs, p, ctx.seed)
    else:
        g = functions.from_config(sweep.raw("g", "tanh"))
        summary = ctx.timed("sweep", young.composition_lemma_sweep, pairs, g, p, ctx.seed)
    sweep.finish()
    write_rows(ctx.file("sweep.csv"), ["trial", "lhs", "rhs", "satisfied"],
               [[k, r.lhs, r.rhs, str(r.satisfied).lower()]
                for k, r in enumerate(summary.reports)])
    print(f"sweep {kind}: trials={summary.trials} violations={summary.violations} "
          f"worst_ratio={summary.worst_ratio!r}")


def cmd_ode(cfg, ctx):
    eta = build_path_spec(cfg, "eta", ctx)
    spec = young.OdeSpec(cfg.num("y0"), cfg.raw("fields"), eta,
                         cfg.choice("direction", ("forward", "backward"), "forward"))
    substeps = cfg.num("substeps", 1, int)
    cfg.finish()
    sol = ctx.timed("ode", young.ode_solve, spec, substeps)
    paths.to_csv(sol.path, ctx.file("ode.csv"))
    print(f"y(0)={float(sol.path.values[0, 0])!r} y(T)={float(sol.path.values[-1, 0])!r} "
          f"richardson_gap={sol.richardson_gap!r}")


def cmd_gen_eta(cfg, ctx):
    grid = _finished(s := cfg.sub("grid"), build_grid(s))
    eta = signals.generate_eta(signals.EtaSpec.from_config(cfg.raw("eta")), grid)
    paths.to_csv(eta, ctx.file("eta.csv"))
    ladder_sec = cfg.sub("ladder", None)
    q = cfg.num("q", 1.5)
    profile = cfg.nums("profile", [])
    cfg.finish()
    if ladder_sec is not None:
        levels = build_ladder(ladder_sec, eta)
        for n, lvl in enumerate(levels):
            paths.to_csv(lvl, ctx.file(f"eta_level_{n}.csv"))
        dist = ctx.timed("ladder", signals.ladder_distances, levels, eta, q)
        write_rows(ctx.file("ladder.csv"), ["level", "qvar_distance"], enumerate(dist))
    if profile:
        rows = ctx.timed("profile", signals.qvar_profile, eta, profile)
        write_rows(ctx.file("profile.csv"), ["exponent", "norm"],
                   [[r.exponent, r.norm] for r in rows])
    print(f"eta: {len(grid)} nodes, {eta.dim} channel(s)")


def cmd_sde(cfg, ctx):
    grid = _finished(s := cfg.sub("grid"), build_grid(s))
    sde, _ = build_forward(cfg.sub("forward"))
    M, d = cfg.num("paths", kind=int), cfg.num("brownian_dim", 1, int)
    dump = cfg.num("dump", 0, int)
    cfg.finish()
    ens = ctx.timed("brownian", sample_brownian, grid, M, d, ctx.seed, ctx.workers)
    fwd = ctx.timed("euler", euler_maruyama, sde, ens, ctx.workers)
    m = fwd.values.shape[2]
    rows = [[t] + [v for k in range(m) for v in (fwd.values[:, i, k].mean(),
                                                  fwd.values[:, i, k].std())]
            for i, t in enumerate(grid.times)]
    write_rows(ctx.file("moments.csv"),
               ["t"] + [f"{s}_x{k + 1}" for k in range(m) for s in ("mean", "std")], rows)
    if dump:
        ensemble_to_csv(fwd.values, grid, ctx.file("samples.csv"), 0, min(dump, M))
    print(f"E[X_T]={float(fwd.values[:, -1, 0].mean())!r}")


def _bsde_parts(cfg, ctx, with_eta=True):
    grid = _finished(s := cfg.sub("grid"), build_grid(s))
    M = cfg.num("paths", kind=int)
    fwd_sec = cfg.sub("forward", None)
    forward = None if fwd_sec is None else build_forward(fwd_sec)[0]
    term, bound, _ = build_terminal(cfg.sub("terminal"))
    fields = build_fields(cfg)
    eta = build_path_spec(cfg, "eta", ctx, grid, None) if with_eta else None
    if eta is not None:
        eta = eta.on_grid(paths.merge_grids(grid, eta.grid))
    elif fields:
        raise ConfigError(f"{cfg.where}.eta: drift fields need a driving path")
    problem = bsde.BsdeProblem(term, bound, eta if fields else None, fields,
                               build_driver(cfg.sub("driver", None)), forward)
    reg = build_regression(cfg.sub("regression", None))
    return grid, M, problem, reg, eta


def cmd_bsde(cfg, ctx):
    grid, M, problem, reg, _ = _bsde_parts(cfg, ctx)
    scheme = cfg.choice("scheme", ("backward", "picard"), "backward")
    inner = cfg.num("inner_iters", 3, int)
    sweeps = cfg.num("sweeps", 5, int)
    p = cfg.num("p", 2.5)
    slices = cfg.raw("slices", [0, len(grid) - 1])
    cfg.finish()
    ens = ctx.timed("brownian", sample_brownian, grid, M, 1, ctx.seed, ctx.workers)
    X = None
    if problem.forward is not None:
        X = ctx.timed("forward", euler_maruyama, problem.forward, ens, ctx.workers)
    if scheme == "backward":
        sol = ctx.timed("solve", bsde.solve_backward, problem, ens, reg, inner, X)
    else:
        sol = ctx.timed("solve", bsde.solve_picard, problem, ens, reg, sweeps, X)
        write_rows(ctx.file("contraction.csv"), ["sweep", "sup_change"],
                   enumerate(sol.contraction, 1))
    files = ctx.timed("export", bsde.export_solution, sol, ctx.out, p, slices)
    ctx.outputs.extend(os.path.relpath(f, ctx.out) for f in files)
    print(f"y0={sol.y0!r} stderr={sol.y0_stderr!r} scheme={sol.scheme}")


def _pde_parts(cfg, ctx, with_eta=True):
    fwd_sec = cfg.sub("forward", None)
    sde, smax = (SdeSpec.brownian(), 1.0) if fwd_sec is None else build_forward(fwd_sec)
    term, bound, lip = build_terminal(cfg.sub("terminal"))
    grid = _finished(s := cfg.sub("grid"), build_grid(s))
    fields = build_fields(cfg)
    eta = build_path_spec(cfg, "eta", ctx, grid, None) if with_eta else None
    pde = rpde.PdeProblem(term, bound, sde.diffusion, sde.drift,
                          build_driver(cfg.sub("driver", None)), fields,
                          eta if fields else None, lip, smax)
    return pde, grid


def _space(sec, pde, horizon, fd):
    lo, hi, dx = sec.num("lo"), sec.num("hi"), sec.num("dx")
    sec.finish()
    if fd:
        if not np.isfinite(pde.sigma_max):
            raise ConfigError("finite-difference solver needs a bounded volatility")
        return rpde.fd_box(lo, hi, pde.sigma_max, horizon, dx), (lo, hi)
    return lo + dx * np.arange(int(round((hi - lo) / dx)) + 1), (lo, hi)


def cmd_pde(cfg, ctx):
    method = cfg.choice("method", ("feynman-kac", "fd"))
    pde, grid = _pde_parts(cfg, ctx)
    xs, (lo, hi) = _space(cfg.sub("space"), pde, grid.horizon, method == "fd")
    if method == "fd":
        theta, w = cfg.num("theta", 1.0), cfg.num("eta_weight", 0.5)
        cfg.finish()
        probes = xs[(xs >= lo - 1e-12) & (xs <= hi + 1e-12)]
        sol = ctx.timed("fd", rpde.fd_reference_solve, pde, grid, xs, theta,
                        probes=probes, eta_weight=w)
    else:
        times = cfg.nums("times", [0.0])
        M = cfg.num("paths", kind=int)
        reg = build_regression(cfg.sub("regression", None))
        cfg.finish()
        sol = ctx.timed("feynman-kac", rpde.feynman_kac_solve, pde, grid, times, xs, M,
                        ctx.seed, reg, workers=ctx.workers)
    files = rpde.pde_to_csv(sol, ctx.out)
    ctx.outputs.extend(os.path.relpath(f, ctx.out) for f in files)
    lower, upper = rpde.barrier_bounds(pde, grid)
    inside = all(lower.at(t)[0] - 1e-9 <= v <= upper.at(t)[0] + 1e-9
                 for t, row in zip(sol.times, sol.u) for v in row)
    print(f"u: {sol.u.shape[0]} times x {sol.u.shape[1]} points, barrier respected: {inside}")


def cmd_study_stability(cfg, ctx):
    grid, M, problem, reg, eta = _bsde_parts(cfg, ctx)
    if eta is None:
        raise ConfigError(f"{cfg.where}.eta: stability study needs a limit path")
    levels = build_ladder(cfg.sub("ladder", None), eta)
    q, p = cfg.num("q", 1.5), cfg.num("p", 2.5)
    lip = cfg.sub("lipschitz", None)
    cfg.finish()
    ens = ctx.timed("brownian", sample_brownian, grid, M, 1, ctx.seed, ctx.workers)
    X = None if problem.forward is None else euler_maruyama(problem.forward, ens, ctx.workers)
    rows = ctx.timed("stability", bsde.stability_in_eta, problem, levels, q, ens, reg, p,
                     forward=X)
    write_rows(ctx.file("stability.csv"),
               ["level", "qvar_distance", "y0_gap", "bp_gap", "stderr"],
               [[r.level, r.qvar_distance, r.y0_gap, r.bp_gap, r.stderr] for r in rows])
    for r in rows:
        print(f"level {r.level}: qvar_distance={r.qvar_distance:.6g} y0_gap={r.y0_gap:.6g}")
    if lip is None:
        return
    deltas = lip.nums("deltas", [0.2, 0.1, 0.05, 0.025])
    kind = lip.choice("perturbation", ("indicator", "sign", "constant"), "indicator")
    lip.finish()
    base = problem.terminal
    shape = {"indicator": lambda x: (x[:, 0] > 0).astype(float),
             "sign": lambda x: np.sign(x[:, 0]),
             "constant": lambda x: np.ones(len(x))}[kind]
    out = []
    for delta in deltas:
        rec = ctx.timed("lipschitz", bsde.lipschitz_in_xi, problem, base,
                        lambda x, dl=delta: base(x) + dl * shape(x), ens, reg,
                        problem.terminal_bound + max(deltas), forward=X)
        out.append([delta, rec.numerator, rec.denominator, rec.ratio, rec.stderr])
        print(f"delta {delta!r}: ratio={rec.ratio:.6g}")
    write_rows(ctx.file("lipschitz.csv"),
               ["delta", "numerator", "denominator", "ratio", "stderr"], out)


def cmd_study_convergence(cfg, ctx):
    pde, grid = _pde_parts(cfg, ctx, with_eta=False)
    eta = build_path_spec(cfg, "eta", ctx, grid)
    eta = eta.on_grid(paths.merge_grids(grid, eta.grid))
    pde = pde.replace(eta=eta)
    xs, _ = _space(cfg.sub("space"), pde, grid.horizon, True)
    levels = build_ladder(cfg.sub("ladder", None), eta)
    probes = [tuple(map(float, pr)) for pr in cfg.raw("probes")]
    mc = cfg.sub("mc")
    mc_grid = paths.TimeGrid.uniform(grid.horizon, mc.num("steps", kind=int))
    M = mc.num("paths", kind=int)
    mc.finish()
    q = cfg.num("q", 1.5)
    reg = build_regression(cfg.sub("regression", None))
    cfg.finish()
    rows = ctx.timed("study", rpde.rough_convergence_study, pde, levels, probes, grid, xs,
                     mc_grid, M, ctx.seed, q, reg, workers=ctx.workers)
    rpde.study_to_csv(rows, ctx.file("convergence.csv"))
    for r in rows:
        print(f"level {r.level}: cauchy_gap={r.cauchy_gap:.6g} mc_gap={r.mc_gap:.6g}")


HANDLERS = {
    "pvar": cmd_pvar, "young": cmd_young, "ode": cmd_ode, "gen-eta": cmd_gen_eta,
    "sde": cmd_sde, "bsde": cmd_bsde, "pde": cmd_pde,
    "study-stability": cmd_study_stability, "study-convergence": cmd_study_convergence,
}
SECTION = {"gen-eta": "gen_eta", "study-stability": "study", "study-convergence": "study"}


# -- driver ----------------------------------------------------------------

def _write_manifest(target, manifest):
    tmp = target + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, target)


def build_parser():
    parser = argparse.ArgumentParser(prog="youngbsde", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override a dotted config key (value parsed as JSON)")
        p.add_argument("--out", help="output directory (default runs/<command>)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, help="override the config seed")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    out = args.out or os.path.join("runs", args.command)
    manifest = {"command": args.command, "library_version": __version__,
                "status": "running", "outputs": [], "timings": {}}
    try:
        cfg, base = load_config(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        for item in args.set:
            apply_override(cfg, *parse_override(item))
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        manifest.update(config=cfg, config_hash=config_hash(cfg), config_dir=base)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(out, exist_ok=True)
    target = os.path.join(out, "manifest.json")
    _write_manifest(target, manifest)
    code = 0
    t0 = time.perf_counter()
    try:
        top = Section(cfg, "config")
        if top.raw("schema") != SCHEMA:
            raise ConfigError(f"config.schema: expected {SCHEMA!r}, got {cfg['schema']!r}")
        seed = top.num("seed", kind=int)
        top.raw("command", args.command)
        if cfg.get("command", args.command) != args.command:
            raise ConfigError(f"config.command: file is for {cfg['command']!r}")
        section = top.sub(SECTION.get(args.command, args.command))
        top.finish()
        ctx = Context(out, base, seed, args.workers)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            HANDLERS[args.command](section, ctx)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        manifest.update(status="ok", outputs=ctx.outputs,
                        warnings=[str(w.message) for w in caught],
                        timings={k: round(v, 6) for k, v in ctx.timings.items()})
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        manifest.update(status="failed", error=str(exc))
        code = 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        manifest.update(status="failed", error=str(exc))
        code = 3
    except BaseException as exc:
        manifest.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        _write_manifest(target, manifest)
        raise
    manifest["timings"]["total"] = round(time.perf_counter() - t0, 6)
    _write_manifest(target, manifest)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

import json

import numpy as np
import pytest

from youngbsde import functions
from youngbsde.bsde import Driver
from youngbsde.errors import ValidationError
from youngbsde.paths import TimeGrid
from youngbsde.rpde import (PdeProblem, barrier_bounds, boundary_mass, fd_box,
                            fd_reference_solve, feynman_kac_solve, modulus_check, pde_to_csv,
                            rough_convergence_study, study_to_csv)
from youngbsde.signals import EtaSpec, approximation_sequence, generate_eta

TGRID = TimeGrid.uniform(1.0, 100)
XS = fd_box(-2.0, 2.0, 1.0, 1.0, 0.05)
ETA = generate_eta(EtaSpec.sinusoid([0.2], [1.0], [0.4]), TGRID)
PROBES = XS[np.abs(XS) <= 2.0]


def sin_problem(**kw):
    return PdeProblem(lambda x: np.sin(x[:, 0]), 1.0, **kw)


def test_box_is_a_lattice_through_lo():
    xs = fd_box(-1.0, 1.0, 1.0, 1.0, 0.1)
    assert np.any(np.isclose(xs, -1.0)) and np.any(np.isclose(xs, 0.3))
    assert xs[0] <= -7.0 + 1e-9 and xs[-1] >= 7.0 - 1e-9
    assert boundary_mass(xs, [0.0], 1.0, 1.0) < 1e-9
    assert boundary_mass(np.linspace(-1, 1, 5), [0.0], 1.0, 1.0) > 0.1


def test_heat_closed_form():
    sol = fd_reference_solve(sin_problem(), TGRID, XS, theta=0.5, probes=PROBES)
    mid = np.abs(XS) <= 2.0
    exact = np.exp(-0.5 * (1.0 - TGRID.times))[:, None] * np.sin(XS[mid])[None, :]
    assert np.max(np.abs(sol.u[:, mid] - exact)) < 1e-3


def test_constant_field_shifts_solution():
    field = [functions.constant(1.5)]
    plain = fd_reference_solve(sin_problem(), TGRID, XS, probes=PROBES)
    driven = fd_reference_solve(sin_problem(fields=field, eta=ETA), TGRID, XS, probes=PROBES)
    shift = 1.5 * (ETA.values[-1, 0] - ETA.values[:, 0])
    assert np.allclose(driven.u - plain.u, shift[:, None], atol=1e-12)


def test_small_box_warns():
    with pytest.warns(UserWarning, match="boundary mass"):
        sol = fd_reference_solve(sin_problem(), TGRID, np.linspace(-1, 1, 41))
    assert sol.meta["boundary_warning"]


def test_cfl_check():
    with pytest.raises(ValidationError, match="CFL"):
        fd_reference_solve(sin_problem(), TimeGrid.uniform(1.0, 10), XS, theta=0.0)


def test_nonuniform_space_grid_rejected():
    with pytest.raises(ValidationError):
        fd_reference_solve(sin_problem(), TGRID, np.array([0.0, 0.1, 0.3]))


def test_feynman_kac_constant_field_exact():
    pde = PdeProblem(lambda x: np.full(len(x), 0.25), 0.25, fields=[functions.constant(2.0)],
                     eta=ETA)
    grid = TimeGrid.uniform(1.0, 20)
    sol = feynman_kac_solve(pde, grid, [0.0, 0.5], [-1.0, 0.0], M=200, seed=1)
    eta = ETA.on_grid(grid)
    for t in (0.0, 0.5):
        exp = 0.25 + 2.0 * (eta.values[-1, 0] - eta.at(t)[0, 0])
        assert sol.value(t, 0.0) == pytest.approx(exp, abs=1e-12)
    assert np.all(sol.stderr == 0.0)


def test_feynman_kac_matches_fd_and_workers():
    pde = sin_problem(fields=[functions.tanh(1.0, 0.5)], eta=ETA,
                      driver=Driver.smooth(0.2, 0.0, 0.1))
    grid = TimeGrid.uniform(1.0, 50)
    mc = feynman_kac_solve(pde, grid, [0.0], [0.0, 0.5], M=4000, seed=3)
    mc2 = feynman_kac_solve(pde, grid, [0.0], [0.0, 0.5], M=4000, seed=3, workers=2)
    assert np.array_equal(mc.u, mc2.u)
    fd = fd_reference_solve(pde, TimeGrid.uniform(1.0, 200), XS, probes=PROBES)
    for x in (0.0, 0.5):
        # both carry a first-order time error; allow it plus 4 standard errors
        se = mc.stderr[0, 0 if x == 0.0 else 1]
        assert abs(mc.value(0.0, x) - fd.value(0.0, x)) < 4 * se + 0.01


def test_value_requires_nodes():
    sol = fd_reference_solve(sin_problem(), TGRID, XS, probes=PROBES)
    with pytest.raises(ValidationError):
        sol.value(0.0, 0.0123)


def test_barriers_bracket_solution():
    pde = sin_problem(fields=[functions.tanh(1.0)], eta=ETA, driver=Driver.smooth(0.3, 0.0, 0.2))
    lower, upper = barrier_bounds(pde, TGRID)
    sol = fd_reference_solve(pde, TGRID, XS, probes=PROBES)
    assert np.all(sol.u <= upper.values + 1e-9)
    assert np.all(sol.u >= lower.values - 1e-9)


def test_modulus_fit_and_check():
    sol = fd_reference_solve(sin_problem(), TGRID, XS, probes=PROBES)
    j0 = int(np.argmin(np.abs(XS)))
    probes = [(i, j0 + k) for i in (0, 50, 99) for k in range(-5, 5)]
    fit = modulus_check(sol, probes)
    assert fit.spatial_constant == pytest.approx(1.0, abs=0.05)
    assert fit.spatial_ok and fit.temporal_ok
    strict = modulus_check(sol, probes, K=0.5 * fit.spatial_constant)
    assert not strict.spatial_ok


def test_convergence_study_rows(tmp_path):
    eta = generate_eta(EtaSpec.fbm(0.75, seed=0), TimeGrid.uniform(1.0, 64))
    levels = approximation_sequence(eta, levels=3, width=0.25, ratio=4)
    pde = sin_problem(fields=[functions.tanh(1.0, 0.5)], eta=eta)
    xs = fd_box(0.5, 0.5, 1.0, 1.0, 0.1)
    rows = rough_convergence_study(pde, levels, [(0.0, 0.5)], TimeGrid.uniform(1.0, 64), xs,
                                   TimeGrid.uniform(1.0, 64), M=1000)
    assert [r.level for r in rows] == [0, 1, 2]
    assert np.isnan(rows[-1].cauchy_gap)
    assert rows[1].cauchy_gap < rows[0].cauchy_gap
    study_to_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("level,qvar_distance,cauchy_gap,mc_gap")


def test_csv_export(tmp_path):
    sol = fd_reference_solve(sin_problem(), TimeGrid.uniform(1.0, 4), XS, probes=PROBES)
    files = pde_to_csv(sol, tmp_path)
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert len(lines) == 6
    assert float(lines[1].split(",")[0]) == 0.0
    assert json.loads((tmp_path / "u.json").read_text())["scheme"] == "fd"
    assert len(files) == 2

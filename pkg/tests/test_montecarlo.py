import numpy as np
import pytest

from youngbsde import _rng
from youngbsde.errors import NumericalAbort, ValidationError
from youngbsde.montecarlo import (SdeSpec, ensemble_to_csv, euler_maruyama, identity_forward,
                                  sample_brownian)
from youngbsde.paths import TimeGrid

GRID = TimeGrid.uniform(1.0, 20)


def test_counter_rng_slices_agree():
    full = _rng.normals(5, 11, 40)
    assert np.array_equal(full[13:29], _rng.normals(5, 11, 16, start=13))
    assert not np.array_equal(full, _rng.normals(5, 12, 40))


def test_counter_rng_is_gaussian():
    z = _rng.normals(1, 2, 200_000)
    assert abs(z.mean()) < 0.01
    assert z.std() == pytest.approx(1.0, abs=0.01)
    assert np.all(np.isfinite(z))


def test_ensemble_independent_of_workers():
    a = sample_brownian(GRID, 101, 2, seed=3, workers=1)
    b = sample_brownian(GRID, 101, 2, seed=3, workers=4)
    assert np.array_equal(a.paths, b.paths)
    # a prefix of the ensemble is the smaller ensemble
    c = sample_brownian(GRID, 50, 2, seed=3)
    assert np.array_equal(a.paths[:50], c.paths)


def test_brownian_moments():
    ens = sample_brownian(GRID, 20_000, 1, seed=0)
    end = ens.paths[:, -1, 0]
    assert abs(end.mean()) < 0.03
    assert end.var() == pytest.approx(1.0, abs=0.04)
    assert np.all(ens.paths[:, 0] == 0.0)


def test_bad_sizes():
    with pytest.raises(ValidationError):
        sample_brownian(GRID, 0)


def test_euler_maruyama_ou_mean():
    ens = sample_brownian(GRID, 20_000, 1, seed=1)
    sde = SdeSpec(lambda x: -x, lambda x: 0.3, x0=1.0)
    X = euler_maruyama(sde, ens, workers=3)
    # Euler mean of the OU process is exactly (1 - dt)^n
    assert X.values[:, -1, 0].mean() == pytest.approx(0.95 ** 20, abs=0.01)
    assert np.array_equal(X.values, euler_maruyama(sde, ens).values)


def test_euler_maruyama_late_start():
    ens = sample_brownian(GRID, 10, 1, seed=2)
    X = euler_maruyama(SdeSpec.brownian(x0=0.5, start_time=0.5), ens)
    assert np.all(X.values[:, :11, 0] == 0.5)
    assert np.allclose(X.values[:, -1, 0] - 0.5,
                       ens.paths[:, -1, 0] - ens.paths[:, 10, 0])


def test_identity_forward():
    ens = sample_brownian(GRID, 4, 1, seed=2)
    assert np.array_equal(identity_forward(ens).values, ens.paths)


def test_blowup_aborts():
    ens = sample_brownian(GRID, 10, 1, seed=3)
    sde = SdeSpec(lambda x: x ** 3 * 1e100, lambda x: 1.0, x0=1.0)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalAbort):
        euler_maruyama(sde, ens)


def test_ensemble_csv(tmp_path):
    ens = sample_brownian(GRID, 3, 1, seed=0)
    target = tmp_path / "e.csv"
    ensemble_to_csv(ens.paths, GRID, target, 1, 2)
    lines = target.read_text().splitlines()
    assert lines[0] == "sample,t,x1"
    assert len(lines) == 1 + len(GRID)
    assert float(lines[-1].split(",")[2]) == ens.paths[1, -1, 0]

import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from youngbsde.errors import ValidationError
from youngbsde.paths import (DiscretePath, TimeGrid, brute_force_pvar, from_csv, merge_grids,
                             pvar_norm, pvar_suffix, sup_norm, to_csv, var_distance)

values_st = st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=10)
p_st = st.floats(1.0, 4.0)


def path_of(vals):
    return DiscretePath(TimeGrid.uniform(1.0, len(vals) - 1), np.asarray(vals))


def test_grid_validation():
    with pytest.raises(ValidationError):
        TimeGrid(np.array([0.0, 0.5, 0.5]))
    with pytest.raises(ValidationError):
        TimeGrid(np.array([0.1, 1.0]))
    with pytest.raises(ValidationError):
        TimeGrid(np.array([0.0]))


def test_refine_keeps_nodes():
    g = TimeGrid(np.array([0.0, 0.3, 1.0]))
    r = g.refine(3)
    assert len(r) == 7
    assert np.allclose(r.times[::3], g.times)


def test_merge_and_resample():
    a = path_of([0.0, 1.0, 0.0])
    b = DiscretePath(TimeGrid(np.array([0.0, 0.25, 1.0])), np.array([0.0, 2.0, 2.0]))
    g = merge_grids(a.grid, b.grid)
    assert np.allclose(g.times, [0.0, 0.25, 0.5, 1.0])
    assert a.on_grid(g).values[1, 0] == pytest.approx(0.5)


def test_zigzag_two_variation():
    zig = path_of([0.0, 1.0, 0.0])
    assert pvar_norm(zig, 2.0) == pytest.approx(np.sqrt(2.0), rel=1e-12)
    assert pvar_norm(zig, 1.0) == pytest.approx(2.0)


def test_linear_path_is_its_increment():
    lin = path_of(np.linspace(0.0, 3.0, 7))
    for p in (1.0, 1.5, 3.0):
        assert pvar_norm(lin, p) == pytest.approx(3.0)


def test_rejects_p_below_one():
    with pytest.raises(ValidationError):
        pvar_norm(path_of([0.0, 1.0]), 0.5)


def test_two_node_brute_force():
    assert brute_force_pvar(path_of([0.0, 2.0]), 2.0) == pytest.approx(2.0)


@given(values_st, p_st)
def test_dp_matches_brute_force(vals, p):
    x = path_of(vals)
    assert pvar_norm(x, p) == pytest.approx(brute_force_pvar(x, p), rel=1e-9, abs=1e-12)


@given(values_st, st.floats(1.0, 2.0), st.floats(0.0, 2.0))
def test_monotone_in_p(vals, p, dp):
    x = path_of(vals)
    assert pvar_norm(x, p + dp) <= pvar_norm(x, p) * (1 + 1e-12) + 1e-12


@given(values_st, p_st)
def test_bounded_below_by_range_increment(vals, p):
    x = path_of(vals)
    assert pvar_norm(x, p) >= abs(vals[-1] - vals[0]) * (1 - 1e-12)


@given(values_st, values_st, p_st)
def test_triangle_inequality(a, b, p):
    n = min(len(a), len(b))
    x, y = path_of(a[:n]), path_of(b[:n])
    assert pvar_norm(x + y, p) <= (pvar_norm(x, p) + pvar_norm(y, p)) * (1 + 1e-12) + 1e-12


@given(values_st, p_st)
def test_suffix_matches_windows(vals, p):
    x = path_of(vals)
    suf = pvar_suffix(np.asarray(vals)[None], p)[0]
    for j in range(len(vals)):
        expected = pvar_norm(x, p, (j, len(vals) - 1)) if j < len(vals) - 1 else 0.0
        assert suf[j] == pytest.approx(expected, rel=1e-9, abs=1e-12)


@given(values_st)
def test_sup_norm(vals):
    assert sup_norm(path_of(vals)) == pytest.approx(max(abs(v) for v in vals))


def test_var_distance_ignores_constant_shift():
    x = path_of([0.0, 1.0, -1.0, 0.5])
    assert var_distance(x, x, 2.0) == 0.0
    assert var_distance(x + path_of([3.0] * 4), x, 2.0) == pytest.approx(3.0)


def test_csv_round_trip(tmp_path):
    x = DiscretePath(TimeGrid(np.array([0.0, 0.1, 0.35])), np.array([[1.0, 2.0],
                                                                       [0.5, -1.0],
                                                                       [1e-17, 3.0]]))
    target = tmp_path / "x.csv"
    to_csv(x, target)
    y = from_csv(target)
    assert np.array_equal(y.values, x.values)
    assert np.array_equal(y.times, x.times)


def test_csv_rejects_bad_rows():
    with pytest.raises(ValidationError):
        from_csv(io.StringIO("t,x\n0,1\n0.5\n"))

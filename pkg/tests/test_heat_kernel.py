from __future__ import annotations

import numpy as np
import pytest

from treelab.errors import SourceTooCloseToBoundary, StepTooLarge, TailNotControlled
from treelab.graph_core import TreePoint
from treelab.heat_kernel import build_ball, decay_fit, green_from_heat, heat_solve, lambda0_spectral
from treelab.resolvent import green, heat_kernel_talbot, lambda0_resolvent, solve_weyl


@pytest.fixture(scope="module")
def unit_field(unit):
    """Dirichlet ball R=6 with sources at the base and at a distance-2 vertex."""
    ball = build_ball(unit, 6.0)
    x, y = TreePoint(()), TreePoint(unit.word("a b'"))
    fx = heat_solve(ball, x, [1.0, 2.0], probes=[y])
    fy = heat_solve(ball, y, [1.0, 2.0], probes=[x])
    return ball, x, y, fx, fy


@pytest.fixture(scope="module")
def unit_transparent(unit):
    ball = build_ball(unit, 5.0, h=0.02, boundary="transparent")
    y = TreePoint(unit.word("a b'"))
    return heat_solve(ball, TreePoint(()), [200.0], dt=0.02, probes=[y, TreePoint(())]), y


def test_mass_conservation(unit):
    ball = build_ball(unit, 15.0, h=0.1)
    f = heat_solve(ball, TreePoint(()), [1.0], dt=0.01)
    assert 0.999 <= f.mass[0] <= 1.0 + 1e-12
    assert f.min_value > -1e-12


def test_symmetry(unit_field):
    ball, x, y, fx, fy = unit_field
    a, b = fx.at(y, 1), fy.at(x, 1)
    assert abs(a - b) < 1e-3 * a


def test_chapman_kolmogorov(unit_field):
    ball, x, y, fx, fy = unit_field
    ck = float(np.sum(ball.mass * fx.values[0] * fy.values[0]))
    assert abs(ck / fx.at(y, 1) - 1.0) < 1e-2


def test_matches_exact_kernel(unit_field, unit):
    ball, x, y, fx, fy = unit_field
    ex = heat_kernel_talbot(unit, x, y, [1.0, 2.0])
    assert np.allclose([fx.at(y, 0), fx.at(y, 1)], ex, rtol=2e-3)


def test_transparent_long_time(unit, unit_transparent):
    f, y = unit_transparent
    t, p = f.series(TreePoint(()))
    ts = np.array([20.0, 100.0, 200.0])
    idx = np.rint(ts / f.dt).astype(int)
    assert np.allclose(p[idx], heat_kernel_talbot(unit, TreePoint(()), TreePoint(()), ts), rtol=3e-3)


@pytest.mark.parametrize("frac,tol", [(0.0, 0.02), (0.5, 0.03)])
def test_green_from_heat(unit, unit_transparent, frac, tol):
    f, y = unit_transparent
    lam = frac * lambda0_resolvent(unit)
    r = green_from_heat(f, lam, y)
    ref = green(solve_weyl(unit, lam), TreePoint(()), y)
    assert abs(r["value"] / ref - 1.0) < tol
    t, p = f.series(y)
    assert np.all(p[1:] > 0)
    partial = np.cumsum(np.exp(lam * t) * p)
    assert np.all(np.diff(partial) >= 0)


def test_green_from_heat_rejects_large_lambda(unit_transparent):
    f, y = unit_transparent
    with pytest.raises(TailNotControlled):
        green_from_heat(f, 0.5, y)


def test_spectral_bottom(unit):
    rep = lambda0_spectral(unit, 20.0, 0.02)
    assert rep["monotone"]
    assert rep["values"][0] > rep["values"][2]
    assert abs(rep["estimate"] - lambda0_resolvent(unit)) < 2e-3


def test_spectral_h_refinement(unit):
    a = lambda0_spectral(unit, 8.0, 0.1)["values"][-1]
    b = lambda0_spectral(unit, 8.0, 0.05)["values"][-1]
    c = lambda0_spectral(unit, 8.0, 0.025)["values"][-1]
    # second order: successive differences shrink by about 4
    assert 3.0 < (a - b) / (b - c) < 5.0


def test_decay_fit_recovers_model():
    t = np.linspace(20, 60, 200)
    p = 2.0 * t**-1.5 * np.exp(-0.1 * t)
    fit = decay_fit(t, p)
    assert abs(fit["alpha"] - 1.5) < 1e-8 and abs(fit["lam"] - 0.1) < 1e-10


def test_guards(unit):
    ball = build_ball(unit, 3.0, h=0.1)
    with pytest.raises(StepTooLarge):
        heat_solve(ball, TreePoint(()), [1.0], dt=0.1)
    with pytest.raises(SourceTooCloseToBoundary):
        heat_solve(ball, TreePoint(unit.word("a b' a")), [1.0])

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from treelab.brownian_mc import (
    McConfig,
    epanechnikov_mass,
    estimate_density,
    estimate_hitting_transform,
    simulate_paths,
    strong_markov_splice,
)
from treelab.errors import ValidationError
from treelab.graph_core import TreePoint, ball_edges
from treelab.resolvent import heat_kernel_talbot, solve_weyl


def killed_msd(t: float, a: float) -> float:
    """E[X_t^2 | no exit by t] for X_0 = 0 killed at +-a, generator d^2/dx^2."""
    n = np.arange(1, 401)
    k = n * np.pi / (2 * a)
    c = np.sin(n * np.pi / 2) * np.exp(-(k**2) * t) / a
    dens = lambda y: float(np.sum(c * np.sin(k * (y + a))))  # noqa: E731
    Z = integrate.quad(dens, -a, a, limit=400)[0]
    return integrate.quad(lambda y: y * y * dens(y), -a, a, limit=400)[0] / Z


@pytest.fixture(scope="module")
def midpoint_ensemble(unit):
    x = unit.point((), 0, 0.5)
    cfg = McConfig(step=1e-4, n_paths=20000, seed=3, horizon=0.1)
    return simulate_paths(unit, x, cfg, [0.005, 0.05])


@pytest.mark.parametrize("t", [0.005, 0.05])
def test_displacement_before_first_vertex(midpoint_ensemble, t):
    d = midpoint_ensemble.displacement_at[t]
    d = d[~np.isnan(d)]
    m = float(np.mean(d**2))
    se = float(np.std(d**2) / math.sqrt(len(d)))
    assert abs(m - killed_msd(t, 0.5)) < 3 * se


def test_free_msd_is_twice_time(midpoint_ensemble):
    d = midpoint_ensemble.displacement_at[0.005]
    assert np.isnan(d).mean() < 1e-3
    d = d[~np.isnan(d)]
    se = float(np.std(d**2) / math.sqrt(len(d)))
    assert abs(np.mean(d**2) - 2 * 0.005) < 3 * se + 2e-4


def test_occupation_symmetry(unit):
    cfg = McConfig(step=1e-2, n_paths=4000, seed=1, horizon=40.0, max_depth=512)
    ens = simulate_paths(unit, TreePoint(()), cfg, [40.0])
    frac = ens.occupation / ens.occupation.sum()
    assert np.allclose(frac, 1.0 / 3.0, atol=5e-3)
    for v, counts in ens.exit_counts.items():
        p = counts / counts.sum()
        assert np.allclose(p, 1.0 / 3.0, atol=5e-3)


def test_occupation_proportional_to_length(dio):
    cfg = McConfig(step=1e-2, n_paths=4000, seed=2, horizon=40.0, max_depth=512)
    ens = simulate_paths(dio, TreePoint(()), cfg, [40.0])
    frac = ens.occupation / ens.occupation.sum()
    lengths = dio.length[::2]
    assert np.allclose(frac, lengths / lengths.sum(), atol=2e-2)


def test_seed_determinism(unit):
    cfg = McConfig(step=1e-3, n_paths=500, seed=9, horizon=1.0)
    a = simulate_paths(unit, TreePoint(()), cfg, [0.5])
    b = simulate_paths(unit, TreePoint(()), cfg, [0.5])
    assert np.array_equal(a.offsets[0], b.offsets[0])
    assert np.array_equal(a.words[0], b.words[0])
    c = simulate_paths(unit, TreePoint(()), McConfig(step=1e-3, n_paths=500, seed=10, horizon=1.0), [0.5])
    assert not np.array_equal(a.offsets[0], c.offsets[0])


@pytest.fixture(scope="module")
def hitting_cfg():
    return McConfig(step=1e-2, n_paths=20000, seed=1, horizon=200.0)


def test_hitting_probability_matches_resolvent(unit, hitting_cfg):
    x, y = TreePoint(()), TreePoint(unit.word("a"))
    r = estimate_hitting_transform(unit, x, y, 0.0, hitting_cfg)
    F = solve_weyl(unit, 0.0).F[0]
    assert abs(r["estimate"] - F) < 3 * r["stderr"]


def test_hitting_multiplicative(unit, hitting_cfg):
    x, y, z = TreePoint(()), TreePoint(unit.word("a")), TreePoint(unit.word("a b'"))
    rxz = estimate_hitting_transform(unit, x, z, 0.0, hitting_cfg)
    rxy = estimate_hitting_transform(unit, x, y, 0.0, hitting_cfg)
    ryz = estimate_hitting_transform(unit, y, z, 0.0, McConfig(step=1e-2, n_paths=20000, seed=2, horizon=200.0))
    prod = rxy["estimate"] * ryz["estimate"]
    se = math.hypot(rxz["stderr"], math.hypot(rxy["stderr"] * ryz["estimate"], ryz["stderr"] * rxy["estimate"]))
    assert abs(rxz["estimate"] - prod) < 3 * se


def test_hitting_self_and_guards(unit, hitting_cfg):
    x = TreePoint(())
    assert estimate_hitting_transform(unit, x, x, 0.05, hitting_cfg)["estimate"] == 1.0
    with pytest.raises(ValidationError):
        estimate_hitting_transform(unit, x, unit.point((), 0, 0.5), 0.0, hitting_cfg)


@pytest.fixture(scope="module")
def density_ensemble(unit):
    cfg = McConfig(step=1e-3, n_paths=20000, seed=4, horizon=1.0)
    return cfg, simulate_paths(unit, TreePoint(()), cfg, [1.0])


def test_density_matches_pde(unit, density_ensemble):
    cfg, ens = density_ensemble
    y = TreePoint(unit.word("a"))
    r = estimate_density(unit, TreePoint(()), y, 1.0, cfg, 0.1, ensemble=ens)
    ref = float(heat_kernel_talbot(unit, TreePoint(()), y, [1.0])[0])
    # kernel smoothing bias is O(b^2 p''), well inside 3 sigma at b = 0.1
    assert abs(r["estimate"] - ref) < 3 * r["stderr"]


def test_density_total_mass(unit, density_ensemble):
    cfg, ens = density_ensemble
    b = 0.1
    total = 0.0
    for word, e, _ in ball_edges(unit, (), 6.0):
        le = float(unit.length[e])
        n = int(round(le / 0.05))
        for s in (np.arange(n) + 0.5) * le / n:
            p = unit.point(word, e, float(s))
            total += estimate_density(unit, TreePoint(()), p, 1.0, cfg, b, ensemble=ens)["estimate"] * le / n
    assert abs(total - 1.0) < 0.01


def test_density_decay_rate(unit):
    cfg = McConfig(step=1e-2, n_paths=100_000, seed=5, horizon=10.0, max_depth=128)
    ts = [2.0, 6.0, 10.0]
    ens = simulate_paths(unit, TreePoint(()), cfg, ts)
    x = TreePoint(())
    vals = [estimate_density(unit, x, x, t, cfg, 0.9, ensemble=ens)["estimate"] for t in ts]
    ex = heat_kernel_talbot(unit, x, x, ts)
    slope_mc = np.polyfit(ts, np.log(vals), 1)[0]
    slope_ex = np.polyfit(ts, np.log(ex), 1)[0]
    assert abs(slope_mc / slope_ex - 1.0) < 0.1


def test_epanechnikov_mass_at_vertex(unit):
    assert epanechnikov_mass(unit, TreePoint(()), 0.1) == 1.5
    assert abs(epanechnikov_mass(unit, unit.point((), 0, 0.5), 0.1) - 1.0) < 1e-12


def test_strong_markov_splice(dio):
    cfg = McConfig(step=2e-3, n_paths=20000, seed=7, horizon=10.0)
    r = strong_markov_splice(dio, TreePoint(()), TreePoint(dio.word("a b'")), 0.5, cfg)
    assert r["n_spliced"] > 1000
    assert r["p_value"] > 0.01

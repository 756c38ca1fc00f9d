"""End-to-end acceptance checks.

Each criterion prints one ``PASS``/``FAIL`` line; run with ``pytest -v`` or
directly as a script.
"""

from __future__ import annotations

import math
import time
from functools import lru_cache

import numpy as np
import pytest

from treelab.asymptotics import build_report, tauberian_limit
from treelab.brownian_mc import McConfig, estimate_density, estimate_hitting_transform
from treelab.graph_core import TreePoint, geodesic, geodesic_point, random_point, random_vertex, reference_graph, tree_distance
from treelab.heat_kernel import build_ball, decay_fit, green_from_heat, heat_solve, lambda0_spectral
from treelab.measures import conformality_check, gibbs_ratio, ps_density, shadow_lemma_ratio
from treelab.resolvent import (
    ancona_diagnostics,
    bottom_table,
    green,
    heat_kernel_talbot,
    hitting_transform,
    lambda0_resolvent,
    solve_weyl,
)
from treelab.thermo import CylinderSet, build_coding, delta_lambda, potential_grid, pressure_root

GRAPHS = ("theta_unit", "theta_dio")
PROBES = ("", "a", "a b'", "a b' c")


@lru_cache(maxsize=None)
def _graph(name):
    return reference_graph(name)


@lru_cache(maxsize=None)
def _bottom(name):
    return bottom_table(_graph(name))


@lru_cache(maxsize=None)
def _long_heat(name):
    """Transparent ball of radius 4 around the base vertex up to t = 200."""
    g = _graph(name)
    ball = build_ball(g, 4.0, h=0.02, boundary="transparent")
    probes = [TreePoint(g.word(w)) for w in PROBES]
    return heat_solve(ball, TreePoint(()), [200.0], dt=0.02, probes=probes), probes


def criterion_1():
    rows, ok = [], True
    for name in GRAPHS:
        g = _graph(name)
        lr = lambda0_resolvent(g)
        ls = lambda0_spectral(g, 20.0, 0.02)["estimate"]
        f, _ = _long_heat(name)
        t, p = f.series(TreePoint(()))
        sel = (t >= 60.0) & (t <= 200.0)
        lh = decay_fit(t[sel], p[sel])["lam"]
        spread = max(lr, ls, lh) - min(lr, ls, lh)
        ok &= spread <= 2e-3
        rows.append(f"{name}: resolvent {lr:.6f} spectral {ls:.6f} heat {lh:.6f} spread {spread:.1e}")
        if name == "theta_unit":
            cos_err = abs(math.cos(math.sqrt(lr)) - 2 * math.sqrt(2) / 3)
            ok &= cos_err <= 1e-3
            rows.append(f"cos relation error {cos_err:.1e}")
    return ok, "; ".join(rows)


def criterion_2():
    rng = np.random.default_rng(2024)
    worst_mult = worst_sym = worst_heat = 0.0
    for name in GRAPHS:
        g = _graph(name)
        lam0 = _bottom(name).lam
        W = solve_weyl(g, 0.5 * lam0).require()
        for _ in range(500):
            x, z = random_point(g, rng, 6), random_point(g, rng, 6)
            seg = geodesic(g, x, z)
            y = geodesic_point(g, seg, rng.uniform(0.0, seg.length))
            lhs = hitting_transform(W, x, z)
            rhs = hitting_transform(W, x, y) * hitting_transform(W, y, z)
            worst_mult = max(worst_mult, abs(lhs / rhs - 1.0))
            worst_sym = max(worst_sym, abs(green(W, x, z) / green(W, z, x) - 1.0))
        f, probes = _long_heat(name)
        for frac in (0.0, 0.5):
            Wl = solve_weyl(g, frac * lam0).require()
            for y in probes:
                if tree_distance(g, TreePoint(()), y) > 4.0:
                    continue
                val = green_from_heat(f, frac * lam0, y)["value"]
                worst_heat = max(worst_heat, abs(val / green(Wl, TreePoint(()), y) - 1.0))
    ok = worst_mult <= 1e-12 and worst_sym <= 1e-10 and worst_heat <= 0.03
    return ok, f"multiplicativity {worst_mult:.1e}, symmetry {worst_sym:.1e}, heat integral {worst_heat:.2%} (1000 triples)"


def criterion_3():
    g = _graph("theta_dio")
    lam0 = _bottom("theta_dio").lam
    tables = [solve_weyl(g, 0.0).require(), solve_weyl(g, 0.5 * lam0).require(), _bottom("theta_dio")]
    reps = [ancona_diagnostics(W, samples=200, seed=0) for W in tables]
    Cs = [r["C_ancona"] for r in reps]
    uniform = max(Cs) / min(Cs) <= 2.0
    strong = reps[-1]["strong"]
    decay = strong["rho"] < 1.0 and strong["r2"] >= 0.98
    detail = (
        f"C = {', '.join(f'{c:.3f}' for c in Cs)} (uniform {uniform}); "
        f"strong fit rho {strong['rho']:.3f} R^2 {strong['r2']:.3f}, max deviation {max(strong['max_deviation']):.1e}"
    )
    return uniform and decay, detail


def criterion_4():
    ok, rows = True, []
    for name in GRAPHS:
        g = _graph(name)
        W0 = _bottom(name)
        lams = np.linspace(0.0, W0.lam, 8)
        deltas, worst = [], 0.0
        for i, lam in enumerate(lams):
            W = W0 if i == 7 else solve_weyl(g, float(lam)).require()
            grid = potential_grid(W, 6)
            d = delta_lambda(W)
            gap = abs(pressure_root(grid) - d)
            ok &= gap <= max(1e-3, grid.band)
            worst = max(worst, gap)
            deltas.append(d)
        ok &= all(d <= 0 for d in deltas) and abs(deltas[-1]) <= 5e-3
        rows.append(f"{name}: max |s*-delta| {worst:.1e}, delta(lambda0) {deltas[-1]:.1e}")
    return ok, "; ".join(rows)


def criterion_5():
    g = _graph("theta_dio")
    W0 = _bottom("theta_dio")
    rng = np.random.default_rng(5)
    x = TreePoint(())
    cs = build_coding(g)
    words = cs.words(5)
    picks = rng.choice(len(words), size=50, replace=False)
    ratios, gibbs, devs = [], [], []
    deep = TreePoint(g.word("a b' a c' a b' a c'"))
    for lam in (0.0, 0.5 * W0.lam, W0.lam):
        W = W0 if lam == W0.lam else solve_weyl(g, lam).require()
        mu = ps_density(W)
        n = 0
        while n < 200:
            y = TreePoint(random_vertex(g, rng, 8).word)
            if 2.0 <= tree_distance(g, x, y) <= 8.0:
                ratios.append(shadow_lemma_ratio(mu, x, y))
                n += 1
        rep = conformality_check(W, x, TreePoint(deep.anchor[:2]), deep, schedule=(8,))
        devs.append(rep["rows"][0]["deviation"])
        gibbs.extend(gibbs_ratio(W, CylinderSet(words[i]), mu) for i in picks)
    r, gr = np.array(ratios), np.array(gibbs)
    C = float(max(r.max(), 1.0 / r.min()))
    Cg = float(max(gr.max(), 1.0 / gr.min()))
    ok = np.isfinite(C) and max(devs) < 0.1 and np.isfinite(Cg) and gr.min() > 0
    return bool(ok), f"shadow C {C:.2f}, conformality deviation {max(devs):.2%}, Gibbs C {Cg:.2f}"


def criterion_6():
    g = _graph("theta_dio")
    tb = tauberian_limit(g, TreePoint(()), TreePoint(g.word("a b'")), W0=_bottom("theta_dio"), min_r2=0.0)
    ok = tb.r2 >= 0.99 and abs(tb.second_ratio - 1.0) <= 0.1
    return ok, f"R^2 {tb.r2:.4f}, second-derivative ratio {tb.second_ratio:.3f}, L_fit {tb.L_fit:.3f}, L limit {tb.L_direct:.3f}"


def criterion_7():
    g = _graph("theta_dio")
    x = TreePoint(())
    ball = build_ball(g, 20.0, h=0.05, boundary="transparent")
    f = heat_solve(ball, x, [60.0], dt=0.02, probes=[x])
    rep = build_report(g, x, x, f.probe_times[1:], f.probe_values[1:, 0], (20.0, 60.0), W0=_bottom("theta_dio"))
    ok = 1.35 <= rep.alpha_fit <= 1.65 and rep.C_relative_error <= 0.2
    return ok, (
        f"alpha {rep.alpha_fit:.3f}, C_fit {rep.C_fit:.3f} vs L_fit/sqrt(pi) {rep.predicted_C:.3f} "
        f"({rep.C_relative_error:.0%}), label {rep.llt_label}"
    )


def criterion_8():
    ok, rows = True, []
    for name in GRAPHS:
        g = _graph(name)
        x, y = TreePoint(()), TreePoint(g.word("a"))
        lam = 0.5 * _bottom(name).lam
        hit = estimate_hitting_transform(g, x, y, lam, McConfig(step=1e-2, n_paths=100_000, seed=8, horizon=200.0))
        ref = hitting_transform(solve_weyl(g, lam).require(), x, y)
        zh = abs(hit["estimate"] - ref) / hit["stderr"]
        den = estimate_density(g, x, y, 1.0, McConfig(step=1e-3, n_paths=100_000, seed=9, horizon=1.0), 0.1)
        refp = float(heat_kernel_talbot(g, x, y, [1.0])[0])
        zd = abs(den["estimate"] - refp) / den["stderr"]
        ok &= zh <= 3.0 and zd <= 3.0
        rows.append(f"{name}: hitting z {zh:.2f}, density z {zd:.2f}")
    return ok, "; ".join(rows)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


def _line(k: int, ok: bool, detail: str, seconds: float) -> str:
    return f"ACCEPTANCE {k} {'PASS' if ok else 'FAIL'} [{seconds:.0f}s]: {detail}"


@pytest.mark.parametrize("k", range(1, 9))
def test_acceptance(k, capsys):
    t0 = time.perf_counter()
    ok, detail = CRITERIA[k - 1]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail, time.perf_counter() - t0))
    assert ok, detail


if __name__ == "__main__":
    for k, fn in enumerate(CRITERIA, 1):
        t0 = time.perf_counter()
        ok, detail = fn()
        print(_line(k, ok, detail, time.perf_counter() - t0), flush=True)

from __future__ import annotations

import numpy as np
import pytest

from treelab.errors import TailNotControlled, ValidationError
from treelab.graph_core import TreePoint, random_vertex, tree_distance
from treelab.measures import (
    c_kernel,
    cone_mass,
    conformality_check,
    cylinder_measure,
    first_edge_masses,
    gibbs_ratio,
    ps_density,
    ps_shadow_mass,
    shadow_lemma_ratio,
)
from treelab.resolvent import solve_weyl
from treelab.thermo import CylinderSet, build_coding


@pytest.fixture(scope="module")
def densities(dio_tables):
    return [ps_density(W) for W in dio_tables]


def _shadow_ratios(mu, n=150, seed=0):
    g = mu.graph
    rng = np.random.default_rng(seed)
    x = TreePoint(())
    out = []
    while len(out) < n:
        y = TreePoint(random_vertex(g, rng, 8).word)
        if 2.0 <= tree_distance(g, x, y) <= 8.0:
            out.append(shadow_lemma_ratio(mu, x, y))
    return np.array(out)


def test_first_edge_partition(densities):
    for mu in densities:
        fe = first_edge_masses(mu, TreePoint(()))
        assert abs(fe["total"] - 1.0) < 1e-12
        assert all(p > 0 for p in fe["parts"])


def test_truncated_partition(dio_tables):
    mu = ps_density(dio_tables[1], s=0.0, depth=12)
    fe = first_edge_masses(mu, TreePoint(()))
    assert abs(fe["total"] - 1.0) < 1e-12


def test_nested_shadows(densities, dio):
    x = TreePoint(())
    path = dio.word("a b' c a' b")
    for mu in densities:
        masses = [cone_mass(mu, x, TreePoint(path[:k])) for k in range(1, len(path) + 1)]
        assert all(a >= b for a, b in zip(masses, masses[1:]))


def test_positive_on_every_shadow(densities, dio):
    cs = build_coding(dio)
    x = TreePoint(())
    for mu in densities:
        for w in cs.words(4):
            if int(dio.origin[w[0]]) != dio.base:
                continue
            assert cone_mass(mu, x, TreePoint(w)) > 0


def test_shadow_mass_guards(densities, dio):
    mu = densities[0]
    with pytest.raises(ValidationError):
        ps_shadow_mass(mu, TreePoint(()), TreePoint(dio.word("a")))
    short = ps_density(solve_weyl(dio, 0.0), s=0.0, depth=4)
    with pytest.raises(ValidationError):
        ps_shadow_mass(short, TreePoint(()), TreePoint(dio.word("a b'")))
    with pytest.raises(TailNotControlled):
        ps_density(solve_weyl(dio, 0.0), s=-5.0)


def test_truncation_band(dio):
    W = solve_weyl(dio, 0.0)
    y = TreePoint(dio.word("a b'"))
    bands = [ps_shadow_mass(ps_density(W, s=0.0, depth=n), TreePoint(()), y)[1] for n in (10, 20, 40)]
    assert bands[0] > bands[1] > bands[2]


def test_shadow_lemma_bounded(densities):
    Cs = []
    for mu in densities:
        r = _shadow_ratios(mu)
        Cs.append(max(r.max(), 1.0 / r.min()))
    assert all(np.isfinite(Cs))


def test_shadow_lemma_uniform_in_lambda(densities):
    """Per-lambda shadow constants stay within a factor 3 of each other."""
    Cs = []
    for mu in densities:
        r = _shadow_ratios(mu)
        Cs.append(max(r.max(), 1.0 / r.min()))
    assert max(Cs) / min(Cs) <= 3.0, f"constants {Cs}"


def test_conformality_identity(dio_tables):
    x = TreePoint(())
    rep = conformality_check(dio_tables[-1], x, x, TreePoint((0, 3)))
    assert rep["factor"] == 1.0
    assert all(r["ratio"] == 1.0 for r in rep["rows"])


def test_conformality_along_ray(dio_tables, dio):
    W = dio_tables[-1]
    x = TreePoint(())
    y = TreePoint(dio.word("a b'"))
    w = TreePoint(dio.word("a b' a c' a b'"))
    rep = conformality_check(W, x, y, w, schedule=(2, 4, 6, 8, None))
    devs = [r["deviation"] for r in rep["rows"]]
    assert all(a > b for a, b in zip(devs, devs[1:]))
    assert devs[3] < 0.1
    assert devs[-1] < 1e-10


def test_equivariance(densities, dio):
    gamma = dio.word("a b'")
    x, w = TreePoint(()), TreePoint(dio.word("a c'"))
    for mu in densities:
        a = cone_mass(mu, x, w)
        b = cone_mass(mu, TreePoint(gamma + x.anchor), TreePoint(gamma + w.anchor))
        assert a == b


def test_continuity_in_lambda(dio, dio_bottom):
    x, w = TreePoint(()), TreePoint(dio.word("a b' c"))
    lam0 = dio_bottom.lam
    ref = cone_mass(ps_density(dio_bottom), x, w)
    jumps = [abs(cone_mass(ps_density(solve_weyl(dio, lam0 - eps)), x, w) - ref) for eps in (1e-2, 1e-3, 1e-4)]
    assert jumps[0] > jumps[1] > jumps[2]


@pytest.fixture(scope="module")
def cylinders(dio):
    cs = build_coding(dio)
    rng = np.random.default_rng(11)
    words = cs.words(3)
    pick = rng.choice(len(words), size=6, replace=False)
    return [CylinderSet(words[i]) for i in pick]


def test_gibbs_ratio_bounded(dio_tables, densities, cylinders):
    for W, mu in zip(dio_tables, densities):
        r = np.array([gibbs_ratio(W, c, mu) for c in cylinders])
        assert np.all(r > 0) and r.max() / r.min() < 3.0


def test_cylinder_routes_agree(dio_tables, densities, cylinders):
    """Both cylinder routes agree within their combined band."""
    W, mu = dio_tables[0], densities[0]
    c = cylinders[0]
    a = cylinder_measure(W, c, "shadow-product", mu=mu)
    b = cylinder_measure(W, c, "gibbs-formula", mu=mu)
    assert abs(a.value - b.value) <= a.band + b.band + 1e-9 * a.value


def test_cylinder_extension_and_additivity(dio_tables, densities, dio):
    cs = build_coding(dio)
    W, mu = dio_tables[1], densities[1]
    w = cs.words(3)[5]
    base = cylinder_measure(W, CylinderSet(w), mu=mu)
    ext = [cylinder_measure(W, CylinderSet(w + (int(e),)), mu=mu) for e in np.flatnonzero(cs.transition[w[-1]])]
    assert all(e.value <= base.value for e in ext)
    total = sum(e.value for e in ext)
    assert abs(total - base.value) <= 1e-9 * base.value + base.band + sum(e.band for e in ext)


def test_cylinder_guards(dio_tables):
    with pytest.raises(ValidationError):
        cylinder_measure(dio_tables[0], CylinderSet((0,)))
    with pytest.raises(ValidationError):
        cylinder_measure(dio_tables[0], CylinderSet((0, 1)))


def test_c_kernel(dio_bottom, dio):
    mu = ps_density(dio_bottom)
    x = TreePoint(())
    v, band = c_kernel(dio_bottom, x, x, 6, mu)
    assert abs(v - first_edge_masses(mu, x)["total"]) < 1e-12 and band < 1e-12
    y = TreePoint(dio.word("a b'"))
    v6, b6 = c_kernel(dio_bottom, x, y, 6, mu)
    v8, _ = c_kernel(dio_bottom, x, y, 8, mu)
    assert v6 > 0 and abs(v8 - v6) <= max(b6, 1e-12) * 2 + 1e-12
    with pytest.raises(ValidationError):
        c_kernel(dio_bottom, x, dio.point((), 0, 0.5))

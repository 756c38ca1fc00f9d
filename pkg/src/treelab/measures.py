"""Patterson-Sullivan densities and Gibbs cylinder masses.

Atoms sit on the lifts of one quotient vertex (the orbit type) with weight
``G(x, z)^2 exp(-s d(x, z))``.  On a tree the Green function factorises
over edges, so the total weight of every cone ``{z : [x, z] passes
through w}`` is the product of a geometric prefix factor and a cone series
``Y_e`` that depends only on the edge ``e`` by which the cone is entered.
``Y`` solves ``(I - B(s)) Y = 1[terminus = orbit type]``, with ``B`` the
Green-weighted edge matrix, and is truncated by partial Neumann sums when a
finite depth is requested.  At ``s = delta_lambda`` the normalised masses
are the limits of the ratio of two divergent series and are read off the
Perron vector of ``B(delta_lambda)``.

Shadows are always of the form ``O_x(w)`` with ``w`` a tree vertex.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import TailNotControlled, ValidationError
from .graph_core import (
    BoundaryRay,
    QuotientGraph,
    TreePoint,
    extend_to_ray,
    geodesic,
    tree_distance,
)
from .resolvent import WeylTable, hitting_transform, martin_kernel, naim_kernel
from .thermo import CylinderSet, build_coding, delta_lambda, green_weighted_matrix

__all__ = [
    "PsDensityApprox",
    "ps_density",
    "ps_shadow_mass",
    "cone_mass",
    "first_edge_masses",
    "shadow_lemma_ratio",
    "conformality_check",
    "GibbsCylinderMeasure",
    "cylinder_measure",
    "gibbs_ratio",
    "c_kernel",
    "rebased",
]


def rebased(W: WeylTable, vtype: int) -> WeylTable:
    """Same Weyl data with the base lift moved over quotient vertex ``vtype``."""
    g = W.graph
    if g.base == vtype:
        return W
    g2 = dataclasses.replace(g, base_vertex=g.vertices[vtype])
    return dataclasses.replace(W, graph=g2)


@dataclass(frozen=True, eq=False)
class PsDensityApprox:
    """Truncated Patterson-Sullivan density.

    Attributes
    ----------
    W : WeylTable
    s : float
        Exponent; ``s == delta`` selects the limit measure unless ``depth``
        is finite.
    depth : int or None
        Maximal number of letters between the base point and an atom.
    orbit_type : int
        Quotient vertex whose lifts carry the atoms; the normaliser is the
        series seen from the lift of this vertex at the base.
    delta : float
        Critical exponent at ``W.lam``.
    """

    W: WeylTable
    s: float
    depth: int | None
    orbit_type: int
    delta: float

    @property
    def graph(self) -> QuotientGraph:
        return self.W.graph

    @property
    def is_limit(self) -> bool:
        return self.depth is None and abs(self.s - self.delta) < 1e-14

    @cached_property
    def _B(self) -> np.ndarray:
        return green_weighted_matrix(self.W, self.s)

    @cached_property
    def _hit(self) -> np.ndarray:
        g = self.graph
        return (np.asarray(g.terminus) == self.orbit_type).astype(float)

    @cached_property
    def _partial(self) -> list[np.ndarray]:
        """``Y^(j) = sum_{n <= j} B^n w`` for ``j = 0..depth``."""
        out = [self._hit.copy()]
        term = self._hit.copy()
        for _ in range(int(self.depth or 0)):
            term = self._B @ term
            out.append(out[-1] + term)
        return out

    @cached_property
    def _full(self) -> np.ndarray:
        if self.is_limit:
            vals, vecs = np.linalg.eig(self._B)
            i = int(np.argmax(vals.real))
            v = np.abs(vecs[:, i].real)
            return v / v.max()
        rho = float(np.max(np.abs(np.linalg.eigvals(self._B))))
        if rho >= 1.0:
            raise TailNotControlled(f"Poincare series diverges at s={self.s} (rho={rho:.6g})")
        return np.linalg.solve(np.eye(len(self._hit)) - self._B, self._hit)

    def cone_series(self, e: int, letters_used: int = 0) -> float:
        """Weight of a cone entered by ``e`` relative to its apex."""
        if self.depth is None:
            return float(self._full[e])
        j = self.depth - letters_used
        return float(self._partial[j][e]) if j >= 0 else 0.0

    @cached_property
    def normaliser(self) -> float:
        g = self.graph
        wts = self.W.F**2 * np.exp(-self.s * g.length)
        out = g.out_edges[self.orbit_type]
        if self.is_limit:
            return float(sum(wts[e] * self._full[e] for e in out))
        tail = sum(wts[e] * self.cone_series(e, 1) for e in out)
        return 1.0 + float(tail)


def ps_density(
    W: WeylTable,
    s: float | None = None,
    depth: int | None = None,
    orbit_type: int | None = None,
    delta: float | None = None,
) -> PsDensityApprox:
    """Build a density; ``s=None`` means ``s = delta_lambda``."""
    W.require()
    d = delta_lambda(W) if delta is None else delta
    s = d if s is None else float(s)
    if depth is None and s < d - 1e-14:
        raise TailNotControlled(f"s={s} below the critical exponent {d}")
    if depth is not None and depth < 1:
        raise ValidationError("depth must be positive")
    return PsDensityApprox(W, s, depth, W.graph.base if orbit_type is None else orbit_type, d)


def _entry(g: QuotientGraph, x: TreePoint, w: TreePoint) -> tuple[int, int]:
    """Edge by which ``[x, w]`` enters ``w`` and the number of vertices crossed."""
    seg = geodesic(g, x, w)
    if not seg.pieces:
        raise ValidationError("shadow apex coincides with the base point")
    f = seg.pieces[-1][0]
    return int(f), len(seg.edge_word)


def cone_mass(mu: PsDensityApprox, x: TreePoint, w: TreePoint) -> float:
    """Normalised mass of the atoms in ``O_x(w)`` for a tree vertex ``w``."""
    if not w.is_vertex:
        raise ValidationError("shadow apex must be a tree vertex")
    g = mu.graph
    e, k = _entry(g, x, w)
    phi = hitting_transform(mu.W, x, w)
    d = tree_distance(g, x, w)
    return phi * phi * math.exp(-mu.s * d) * mu.cone_series(e, k) / mu.normaliser


def ps_shadow_mass(mu: PsDensityApprox, x: TreePoint, y: TreePoint) -> tuple[float, float]:
    """Mass of ``O_x(y)`` and its truncation band.

    Raises
    ------
    ValidationError
        ``d(x, y) <= 1`` or the depth does not reach ``d(x, y) + 6``.
    TailNotControlled
        The untruncated series diverges.
    """
    g = mu.graph
    d = tree_distance(g, x, y)
    if d <= 1.0:
        raise ValidationError("shadow anchor needs d(x, y) > 1")
    if mu.depth is not None and mu.depth < math.ceil(d) + 6:
        raise ValidationError(f"depth {mu.depth} < d(x, y) + 6")
    w = y
    if not y.is_vertex:
        seg = geodesic(g, x, y)
        f, _, _, org = seg.pieces[-1]
        w = g.point(org, f, float(g.length[f]))
    m = cone_mass(mu, x, w)
    if mu.depth is None:
        return m, 0.0
    # completing the series (or passing to the limit at s = delta)
    return m, abs(cone_mass(dataclasses.replace(mu, depth=None), x, w) - m)


def first_edge_masses(mu: PsDensityApprox, x: TreePoint) -> dict:
    """Masses of the first-edge shadows at a vertex ``x`` and the total mass."""
    g = mu.graph
    if not x.is_vertex:
        raise ValidationError("x must be a vertex")
    parts = []
    vt = g.end_type(x.anchor)
    for e in g.out_edges[vt]:
        w = TreePoint(g.step(x.anchor, e))
        parts.append(cone_mass(mu, x, w))
    atom = 0.0 if mu.is_limit else (1.0 if vt == mu.orbit_type else 0.0) / mu.normaliser
    return {"parts": parts, "sum": float(sum(parts)), "atom_at_x": atom, "total": float(sum(parts)) + atom}


def shadow_lemma_ratio(mu: PsDensityApprox, x: TreePoint, y: TreePoint) -> float:
    """``mu_x(O_x(y)) / (exp(-delta d(x, y)) G(x, y)^2)`` with ``G(x, y) = Phi G(y, y)``."""
    from .resolvent import green

    m, _ = ps_shadow_mass(mu, x, y)
    gxy = green(mu.W, x, y)
    return m / (math.exp(-mu.delta * tree_distance(mu.graph, x, y)) * gxy * gxy)


def conformality_check(
    W: WeylTable,
    x: TreePoint,
    y: TreePoint,
    w: TreePoint,
    schedule: Iterable[int | None] = (2, 4, 6, 8, None),
) -> dict:
    """Radon-Nikodym test ``mu_y(O) / mu_x(O)`` against ``k^2 exp(delta beta)``.

    ``O = O_x(w)`` must also be the shadow of ``w`` seen from ``y``.  Entry
    ``j`` of ``schedule`` uses the full series at ``s = delta + 2**-j``;
    ``None`` is the limit density.
    """
    g = W.graph
    delta = delta_lambda(W)
    if x == y:
        return {"factor": 1.0, "rows": [{"j": j, "ratio": 1.0, "deviation": 0.0} for j in schedule]}
    ex, _ = _entry(g, x, w)
    ey, _ = _entry(g, y, w)
    if ex != ey:
        raise ValidationError("the shadow seen from y is not the shadow seen from x")
    ray = extend_to_ray(g, _outward_word(g, w, ex))
    depth = max(ray.transient_length, len(x.anchor), len(y.anchor)) + 4
    k = martin_kernel(W, x, y, ray, depth).value
    z = TreePoint(ray.word(depth))
    beta = tree_distance(g, x, z) - tree_distance(g, y, z)
    factor = k * k * math.exp(delta * beta)
    rows = []
    for j in schedule:
        s = delta if j is None else delta + 2.0 ** (-j)
        mu = ps_density(W, s=s, delta=delta)
        r = cone_mass(mu, y, w) / cone_mass(mu, x, w)
        rows.append({"j": j, "s": s, "ratio": r, "deviation": abs(r / factor - 1.0)})
    return {"factor": factor, "rows": rows}


def _outward_word(g: QuotientGraph, w: TreePoint, entry: int) -> tuple[int, ...]:
    if not w.anchor or w.anchor[-1] != entry:
        raise ValidationError("cone must point away from the base lift")
    return w.anchor


# ---------------------------------------------------------------------------
# Gibbs cylinders
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GibbsCylinderMeasure:
    lam: float
    cylinder: CylinderSet
    value: float
    route: str
    band: float


def _continuations(g: QuotientGraph, word: tuple[int, ...], n: int) -> list[tuple[int, ...]]:
    out = [word]
    for _ in range(n):
        out = [w + (e,) for w in out for e in g.out_edges[g.end_type(w)] if e != (w[-1] ^ 1)]
    return out


def cylinder_measure(
    W: WeylTable,
    cyl: CylinderSet,
    route: str = "shadow-product",
    refine: int = 4,
    mu: PsDensityApprox | None = None,
) -> GibbsCylinderMeasure:
    """Gibbs mass of the geodesics crossing the lifted cylinder word.

    ``route="shadow-product"`` integrates ``theta^2`` over the product of
    the backward and forward shadows, piecewise constant on sub-shadows
    ``refine`` letters deep.  ``route="gibbs-formula"`` exponentiates the
    Birkhoff sum of the potential along the cylinder.
    """
    w = tuple(cyl.word)
    if len(w) < 2:
        raise ValidationError("cylinder length must be at least 2")
    if not build_coding(W.graph).admissible(w):
        raise ValidationError("cylinder word is not admissible")
    Wr = rebased(W, int(W.graph.origin[w[0]]))
    g = Wr.graph
    g.check_word(w)
    if mu is None:
        mu = ps_density(W)
    mu = dataclasses.replace(mu, W=Wr)
    xp = TreePoint(())
    if route == "gibbs-formula":
        ray = extend_to_ray(g, w)
        total = 0.0
        for i in range(len(w)):
            a, b = TreePoint(w[:i]), TreePoint(w[: i + 1])
            kv = martin_kernel(Wr, b, a, ray, len(w) + len(ray.period) + 4)
            total += 2.0 * math.log(kv.value) - mu.delta * float(g.length[w[i]])
        return GibbsCylinderMeasure(W.lam, cyl, math.exp(total), route, 0.0)
    if route != "shadow-product":
        raise ValidationError(f"unknown route {route!r}")
    fwd = _continuations(g, w, refine)
    back = [c for e in g.out_edges[g.base] if e != w[0] for c in _continuations(g, (e,), refine - 1)]
    fm = np.array([cone_mass(mu, xp, TreePoint(c)) for c in fwd])
    bm = np.array([cone_mass(mu, xp, TreePoint(c)) for c in back])
    fr = [extend_to_ray(g, c) for c in fwd]
    br = [extend_to_ray(g, c) for c in back]
    depth = len(w) + refine + 8
    total, band = 0.0, 0.0
    for i, rb in enumerate(br):
        for j, rf in enumerate(fr):
            kv = naim_kernel(Wr, xp, rb, rf, depth)
            total += kv.value**2 * bm[i] * fm[j]
            band += 2.0 * kv.value * kv.error_bound * bm[i] * fm[j]
    return GibbsCylinderMeasure(W.lam, cyl, float(total), route, float(band))


def gibbs_ratio(W: WeylTable, cyl: CylinderSet, mu: PsDensityApprox | None = None) -> float:
    """``nu(C) / exp(S F)`` for one cylinder."""
    mu = mu or ps_density(W)
    a = cylinder_measure(W, cyl, "shadow-product", mu=mu).value
    b = cylinder_measure(W, cyl, "gibbs-formula", mu=mu).value
    return a / b


# ---------------------------------------------------------------------------
# c(x, y)
# ---------------------------------------------------------------------------
def c_kernel(
    W: WeylTable, x: TreePoint, y: TreePoint, depth: int = 8, mu: PsDensityApprox | None = None
) -> tuple[float, float]:
    """``int k(x, y, xi) dmu_x(xi)`` on the depth-``depth`` shadow partition from ``x``.

    Returns the value and the change from ``depth - 1`` as its band.  Both
    points must be vertices.
    """
    if not (x.is_vertex and y.is_vertex):
        raise ValidationError("c_kernel needs vertices")
    g = W.graph
    rel = geodesic(g, x, y).edge_word
    Wr = rebased(W, g.end_type(x.anchor))
    gr = Wr.graph
    mu = dataclasses.replace(mu or ps_density(W), W=Wr)
    x0, y0 = TreePoint(()), TreePoint(tuple(rel))
    if depth <= len(rel):
        raise ValidationError("depth must exceed the number of letters between x and y")

    def at(n: int) -> float:
        acc = 0.0
        for e in gr.out_edges[gr.base]:
            for c in _continuations(gr, (e,), n - 1):
                m = cone_mass(mu, x0, TreePoint(c))
                ray = extend_to_ray(gr, c)
                acc += m * martin_kernel(Wr, x0, y0, ray, n + len(ray.period) + 2).value
        return acc

    v = at(depth)
    return v, abs(v - at(depth - 1))

"""Exact lambda-Green functions on the universal-cover tree.

For each oriented quotient edge ``e`` the branch *behind* ``e`` is the
edge itself plus everything beyond ``i(e)``.  Its minimal positive
solution of ``u'' = -lambda u`` (Kirchhoff at every branch vertex),
normalised by ``u(t(e)) = 1``, has

* ``m_e``: logarithmic derivative at ``t(e)`` pointing into the edge;
* ``F_e = u(i(e))``: the hitting transform from ``i(e)`` to ``t(e)``.

With ``c = cos(k s)``, ``sn = sin(k s)/k`` (``k = sqrt(lambda)``) and
``M_e = sum of m_e'`` over edges ``e'`` entering ``i(e)`` other than
the reverse of ``e``, the branch function along ``e`` is ``c + M_e sn``
up to scale, which gives the Moebius transfer

    m_e = (M_e c - lambda sn) / (c + M_e sn),    F_e = 1 / (c + M_e sn).

The minimal solution is the largest fixed point; it is reached
monotonically from the Dirichlet start ``m = c/sn`` by Newton's method
(the map is concave and increasing) or by plain iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .errors import (
    DepthTooSmall,
    Diverged,
    EqualBoundaryPoints,
    NegativeLambda,
    NotConverged,
    TailNotControlled,
    ValidationError,
)
from .graph_core import (
    BoundaryRay,
    QuotientGraph,
    TreePoint,
    _depth_hint,
    _rays_equal_upto,
    _root_path,
    ball_edges,
    geodesic,
    geodesic_point,
    random_point,
    ray_vertex,
    tree_distance,
)
from .jets import Jet, trig_jets

__all__ = [
    "WeylTable",
    "GreenValue",
    "KernelValue",
    "solve_weyl",
    "dirichlet_iterate",
    "green",
    "green_value",
    "hitting_transform",
    "martin_kernel",
    "naim_kernel",
    "lambda0_resolvent",
    "bottom_table",
    "green_lambda_derivative",
    "green_jet",
    "ancona_diagnostics",
    "branch_matrix",
    "weyl_complex",
    "green_complex",
    "heat_kernel_talbot",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _trig(lam: float, sigma: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
    k = math.sqrt(lam)
    s = np.asarray(sigma, dtype=float)
    return np.cos(k * s), s * np.sinc(k * s / math.pi)


def branch_matrix(g: QuotientGraph) -> np.ndarray:
    """``N[f, e'] = 1`` iff ``t(e') = i(f)`` and ``e' != reverse(f)``."""
    return g.successor_matrix.T.copy()


@dataclass(frozen=True, eq=False)
class WeylTable:
    """Branch Weyl coefficients and hitting transforms at one ``lambda``.

    Attributes
    ----------
    m, F : ndarray
        Per oriented edge id.
    Mb : ndarray
        Summed coefficients of the branches feeding each edge.
    converged : bool
        False signals ``lambda`` above the bottom of the spectrum.
    status : str
        ``"converged"``, ``"diverged"`` or ``"not_converged"``.
    """

    graph: QuotientGraph
    lam: float
    m: np.ndarray
    F: np.ndarray
    Mb: np.ndarray
    converged: bool
    iterations: int
    status: str = "converged"
    residual: float = 0.0
    spectral_radius: float = 0.0

    def require(self) -> "WeylTable":
        if not self.converged:
            raise NotConverged(f"Weyl table at lambda={self.lam} is {self.status}")
        return self

    @cached_property
    def vertex_green(self) -> np.ndarray:
        """``G(v, v)`` for every quotient vertex."""
        g = self.graph
        return np.array([1.0 / sum(self.m[e] for e in g.in_edges[v]) for v in range(len(g.vertices))])

    @cached_property
    def jets(self) -> tuple[Jet, Jet, Jet]:
        """Exact lambda-jets of ``(m, F, Mb)``."""
        return _weyl_jets(self)

    def u(self, f: int, sigma: np.ndarray | float) -> np.ndarray:
        """Branch function of ``f`` along ``f`` (value 1 at ``i(f)``)."""
        c, sn = _trig(self.lam, sigma)
        return c + self.Mb[f] * sn

    def transfer(self, f: int, sigma: np.ndarray | float) -> np.ndarray:
        """Log-derivative at distance ``sigma`` from ``i(f)`` of the branch behind ``f``."""
        c, sn = _trig(self.lam, sigma)
        M = self.Mb[f]
        return (M * c - self.lam * sn) / (c + M * sn)


@dataclass(frozen=True)
class GreenValue:
    lam: float
    x: TreePoint
    y: TreePoint
    value: float


@dataclass(frozen=True)
class KernelValue:
    value: float
    error_bound: float
    depth: int


# ---------------------------------------------------------------------------
# Weyl solve
# ---------------------------------------------------------------------------
def solve_weyl(
    g: QuotientGraph,
    lam: float,
    *,
    method: str = "newton",
    tol: float = 1e-13,
    max_iter: int = 100_000,
    blowup: float = 1e6,
    raise_on_divergence: bool = False,
) -> WeylTable:
    """Minimal Weyl coefficients at spectral parameter ``lam``.

    Parameters
    ----------
    method : {"newton", "plain"}
        Newton iteration on ``m - T(N m)`` (default) or the plain
        truncation-depth iteration ``m <- T(N m)``.
    tol : float
        Sup-norm step tolerance relative to ``1 + max|m|``.
    blowup : float
        Guard on ``F`` for the plain iteration.

    Returns
    -------
    WeylTable
        ``converged=False`` when no fixed point exists (``lam`` above the
        bottom of the spectrum) or the iteration stalls.

    Raises
    ------
    NegativeLambda
        ``lam < 0``.
    Diverged
        Only with ``raise_on_divergence=True``.
    """
    lam = float(lam)
    if lam < 0.0:
        raise NegativeLambda(f"lambda={lam} < 0")
    N = branch_matrix(g)
    L = g.length
    c, sn = _trig(lam, L)
    n = g.n_edges

    def fail(status: str, m: np.ndarray, it: int) -> WeylTable:
        if raise_on_divergence:
            raise Diverged(f"Weyl recursion {status} at lambda={lam}")
        nan = np.full(n, np.nan)
        return WeylTable(g, lam, m, nan, nan, False, it, status)

    if np.any(sn <= 0.0):
        return fail("diverged", np.full(n, np.nan), 0)
    m = c / sn
    if method == "plain":
        for it in range(1, max_iter + 1):
            M = N @ m
            D = c + M * sn
            if np.any(D <= 0.0) or np.any(1.0 / D > blowup):
                return fail("diverged", m, it)
            new = (M * c - lam * sn) / D
            step = np.max(np.abs(new - m))
            m = new
            if step < tol * (1.0 + np.max(np.abs(m))):
                return _finish(g, lam, m, N, c, sn, it)
        return fail("not_converged", m, max_iter)
    if method != "newton":
        raise ValidationError(f"unknown method {method!r}")
    eye = np.eye(n)
    for it in range(1, 500):
        M = N @ m
        D = c + M * sn
        if np.any(D <= 0.0):
            return fail("diverged", m, it)
        F = 1.0 / D
        r = m - (M * c - lam * sn) * F
        K = (F * F)[:, None] * N
        rho = float(np.max(np.abs(np.linalg.eigvals(K))))
        scale = 1.0 + np.max(np.abs(m))
        if np.max(np.abs(r)) < 1e-15 * scale:
            return _finish(g, lam, m, N, c, sn, it)
        if rho >= 1.0:
            return fail("diverged", m, it)
        step = np.linalg.solve(eye - K, -r)
        if np.any(step > 1e-12 * scale):
            # a convex residual seen from above never steps upward unless no root exists
            return fail("diverged", m, it)
        m = m + step
        if np.max(np.abs(step)) < tol * scale:
            return _finish(g, lam, m, N, c, sn, it)
    return fail("not_converged", m, 500)


def _finish(g, lam, m, N, c, sn, it) -> WeylTable:
    M = N @ m
    D = c + M * sn
    F = 1.0 / D
    res = float(np.max(np.abs(m - (M * c - lam * sn) * F)))
    K = (F * F)[:, None] * N
    rho = float(np.max(np.abs(np.linalg.eigvals(K))))
    return WeylTable(g, lam, m, F, M, True, it, "converged", res, rho)


def dirichlet_iterate(g: QuotientGraph, lam: float, depth: int) -> np.ndarray:
    """``F`` after ``depth`` plain steps from the absorbing start.

    Depth 0 puts the absorbing point at ``i(e)`` itself (so ``F = 0``);
    depth 1 absorbs one edge further out, and so on.  The sequence is
    non-decreasing and converges to the minimal table's ``F``.
    """
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    if depth == 0:
        return np.zeros(g.n_edges)
    N = branch_matrix(g)
    c, sn = _trig(lam, g.length)
    m = c / sn
    for _ in range(depth - 1):
        M = N @ m
        m = (M * c - lam * sn) / (c + M * sn)
    return 1.0 / (c + (N @ m) * sn)


def _weyl_jets(W: WeylTable) -> tuple[Jet, Jet, Jet]:
    W.require()
    g = W.graph
    N = branch_matrix(g)
    c, sn = trig_jets(W.lam, g.length)
    lam = Jet(W.lam, 1.0, 0.0)
    eye = np.eye(g.n_edges)
    A = eye - (W.F * W.F)[:, None] * N

    def T(Mj: Jet) -> Jet:
        return (Mj * c - lam * sn) / (c + Mj * sn)

    m1 = np.linalg.solve(A, T(Jet(W.Mb)).c1)
    M1 = N @ m1
    m2 = np.linalg.solve(A, T(Jet(W.Mb, M1, 0.0)).c2)
    m = Jet(W.m, m1, m2)
    Mb = Jet(W.Mb, M1, N @ m2)
    F = (c + Mb * sn).reciprocal()
    return m, F, Mb


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
def _diag(W: WeylTable, y: TreePoint) -> float:
    g = W.graph
    if y.edge is None:
        return float(W.vertex_green[g.end_type(y.anchor)])
    f = y.edge
    s = y.offset
    le = float(g.length[f])
    return float(1.0 / (W.transfer(f, s) + W.transfer(f ^ 1, le - s)))


def hitting_transform(W: WeylTable, x: TreePoint, y: TreePoint) -> float:
    """``Phi_lambda(x, y)``: product of per-piece branch-function ratios along ``[x, y]``."""
    W.require()
    seg = geodesic(W.graph, x, y)
    val = 1.0
    for f, a, b, _ in seg.pieces:
        ua, ub = W.u(f, np.array([a, b]))
        val *= float(ua / ub)
    return val


def green(W: WeylTable, x: TreePoint, y: TreePoint) -> float:
    """``G_lambda(x, y) = Phi(x, y) G(y, y)``."""
    W.require()
    return hitting_transform(W, x, y) * _diag(W, y)


def green_value(W: WeylTable, x: TreePoint, y: TreePoint) -> GreenValue:
    return GreenValue(W.lam, x, y, green(W, x, y))


def green_jet(W: WeylTable, x: TreePoint, y: TreePoint) -> Jet:
    """Exact ``(G, dG/dlambda, d2G/dlambda2 / 2)`` at ``(x, y)``."""
    g = W.graph
    m, F, Mb = W.jets
    lam = Jet(W.lam, 1.0, 0.0)

    def u(f: int, s: float) -> Jet:
        c, sn = trig_jets(W.lam, s)
        return c + Mb[f] * sn

    def tr(f: int, s: float) -> Jet:
        c, sn = trig_jets(W.lam, s)
        return (Mb[f] * c - lam * sn) / (c + Mb[f] * sn)

    val = Jet(1.0)
    for f, a, b, _ in geodesic(g, x, y).pieces:
        val = val * u(f, a) / u(f, b)
    if y.edge is None:
        tot = Jet(0.0)
        for e in g.in_edges[g.end_type(y.anchor)]:
            tot = tot + m[e]
        diag = tot.reciprocal()
    else:
        le = float(g.length[y.edge])
        diag = (tr(y.edge, y.offset) + tr(y.edge ^ 1, le - y.offset)).reciprocal()
    return val * diag


def _realise(g: QuotientGraph, ray: BoundaryRay, depth: int) -> TreePoint:
    return ray_vertex(g, ray, depth)


def martin_kernel(
    W: WeylTable, x0: TreePoint, x: TreePoint, xi: BoundaryRay, depth: int
) -> KernelValue:
    """``G(x, z)/G(x0, z)`` with ``z`` the ray vertex at ``depth``.

    The reported error bound is the change from ``depth - 1``, which on a
    tree is zero up to rounding once both ``x`` and ``x0`` have merged
    into the ray.

    Raises
    ------
    DepthTooSmall
        ``depth`` does not clear the confluence of ``x``, ``x0`` and ``xi``.
    """
    W.require()
    g = W.graph
    need = _depth_hint(g, x0, x) + 1
    if depth < need:
        raise DepthTooSmall(f"depth {depth} < {need}")
    if x == x0:
        return KernelValue(1.0, 0.0, depth)

    def at(n: int) -> float:
        z = _realise(g, xi, n)
        return hitting_transform(W, x, z) / hitting_transform(W, x0, z)

    v = at(depth)
    return KernelValue(v, abs(v - at(depth - 1)), depth)


def naim_kernel(
    W: WeylTable, x: TreePoint, xi: BoundaryRay, zeta: BoundaryRay, depth: int
) -> KernelValue:
    """``lim G(y, z) / (G(y, x) G(x, z))`` as ``y -> xi``, ``z -> zeta``."""
    W.require()
    g = W.graph
    j = _rays_equal_upto(xi, zeta)
    if j is None:
        raise EqualBoundaryPoints("Naim kernel needs distinct boundary points")
    need = max(j, _depth_hint(g, x)) + 1
    if depth < need:
        raise DepthTooSmall(f"depth {depth} < {need}")
    gxx = _diag(W, x)

    def at(n: int) -> float:
        y = _realise(g, xi, n)
        z = _realise(g, zeta, n)
        return hitting_transform(W, y, z) / (hitting_transform(W, y, x) * hitting_transform(W, x, z) * gxx)

    v = at(depth)
    return KernelValue(v, abs(v - at(depth - 1)), depth)


# ---------------------------------------------------------------------------
# bottom of the spectrum
# ---------------------------------------------------------------------------
def lambda0_resolvent(g: QuotientGraph, tol: float = 1e-10) -> float:
    """Bisection on the convergence boundary of :func:`solve_weyl`."""
    if not tol > 0.0:
        raise ValidationError("tol must be positive")
    lo = 0.0
    hi = (math.pi / g.l_max) ** 2
    while hi - lo > 2.0 * tol:
        mid = 0.5 * (lo + hi)
        if solve_weyl(g, mid).converged:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bottom_table(g: QuotientGraph, tol: float = 1e-12) -> WeylTable:
    """Converged Weyl table at the largest bracketed ``lambda <= lambda_0``.

    The returned table sits within ``tol`` below the bottom of the
    spectrum, which is as close as the recursion allows.
    """
    lo, hi = 0.0, (math.pi / g.l_max) ** 2
    best = solve_weyl(g, 0.0).require()
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        W = solve_weyl(g, mid)
        if W.converged:
            lo, best = mid, W
        else:
            hi = mid
    return best


# ---------------------------------------------------------------------------
# lambda-derivatives by integration
# ---------------------------------------------------------------------------
def _tail_system(W: WeylTable) -> tuple[Jet, float]:
    """Jets of ``T_e``: integral of ``Phi(z, i(e))^2`` over the subtree entered by ``e``."""
    g = W.graph
    m, F, Mb = W.jets
    A = g.successor_matrix
    n = g.n_edges
    rev = g.reverse_ids
    b0, b1, b2 = np.zeros(n), np.zeros(n), np.zeros(n)
    for e in range(n):
        le = float(g.length[e])
        s = 0.5 * le * (_GL_X + 1.0)
        c, sn = trig_jets(W.lam, s)
        u = c + Mb[int(rev[e])] * sn
        Fr = F[int(rev[e])]
        uu = u * u
        wts = 0.5 * le * _GL_W
        I = Jet((uu.c0 * wts).sum(), (uu.c1 * wts).sum(), (uu.c2 * wts).sum())
        bj = Fr * Fr * I
        b0[e], b1[e], b2[e] = bj.c0, bj.c1, bj.c2
    Fr = F[rev]
    f2 = Fr * Fr
    K0 = f2.c0[:, None] * A
    K1 = f2.c1[:, None] * A
    K2 = f2.c2[:, None] * A
    rho = float(np.max(np.abs(np.linalg.eigvals(K0))))
    if rho >= 1.0:
        raise TailNotControlled(f"branch tail operator has spectral radius {rho:.6f} >= 1")
    I0 = np.eye(n) - K0
    T0 = np.linalg.solve(I0, b0)
    T1 = np.linalg.solve(I0, b1 + K1 @ T0)
    T2 = np.linalg.solve(I0, b2 + K1 @ T1 + K2 @ T0)
    return Jet(T0, T1, T2), rho


def _edge_nodes(le: float, cuts: list[float]) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted({0.0, le, *[c for c in cuts if 0.0 < c < le]})
    xs, ws = [], []
    for a, b in zip(pts[:-1], pts[1:]):
        xs.append(a + 0.5 * (b - a) * (_GL_X + 1.0))
        ws.append(0.5 * (b - a) * _GL_W)
    return np.concatenate(xs), np.concatenate(ws)


def _cut_on_edge(g: QuotientGraph, p: TreePoint, word: tuple[int, ...], e: int) -> float | None:
    """Offset of ``p`` along tree edge ``(word, e)`` if it lies strictly inside."""
    if p.edge is None:
        return None
    if p.anchor == word and p.edge == e:
        return p.offset
    if word and word[-1] == (e ^ 1) and p.anchor == word[:-1] and p.edge == word[-1]:
        return float(g.length[e]) - p.offset
    return None


def green_lambda_derivative(
    g: QuotientGraph | WeylTable,
    lam: float | None,
    x: TreePoint,
    y: TreePoint,
    order: int = 1,
    radius: float = 6.0,
    return_report: bool = False,
) -> float | tuple[float, dict[str, Any]]:
    """``d^k/dlambda^k G_lambda(x, y)`` for ``k`` in {1, 2} by integration.

    Order 1 integrates ``G(x, z) G(z, y)`` over the tree; order 2 integrates
    ``2 G(x, z) dG(z, y)``.  Inside the ball of ``radius`` around the anchor
    of ``x`` each lifted edge is handled by 16-point Gauss-Legendre
    quadrature (split at ``x`` and ``y``); beyond it every hanging subtree
    contributes in closed form through the branch tail integrals.

    Raises
    ------
    TailNotControlled
        The tail operator is not a contraction (``lambda`` at or above the
        bottom of the spectrum).
    """
    if order not in (1, 2):
        raise ValidationError("order must be 1 or 2")
    W = g if isinstance(g, WeylTable) else solve_weyl(g, float(lam))
    W.require()
    G = W.graph
    center = x.anchor
    for p in (x, y):
        if tree_distance(G, TreePoint(center), p) + G.l_max >= radius:
            raise ValidationError("radius must enclose x and y with one edge to spare")
    T, rho = _tail_system(W)
    m, F, Mb = W.jets
    lamj = Jet(W.lam, 1.0, 0.0)

    gx_cache: dict[tuple[int, ...], tuple[float, Jet]] = {}
    phi_cache: dict[int, Jet] = {}

    def at_vertex(word: tuple[int, ...]) -> tuple[float, Jet]:
        if word not in gx_cache:
            v = TreePoint(word)
            gx_cache[word] = (green(W, x, v), green_jet(W, v, y))
        return gx_cache[word]

    def push(word: tuple[int, ...], e: int, far: tuple[int, ...], beyond: list[bool]) -> None:
        # one step away from x (resp. y) multiplies by the full-edge hitting transform
        if far in gx_cache or word not in gx_cache:
            return
        gxw, jyw = gx_cache[word]
        fr = F[int(rev[e])]
        gx = gxw * float(fr.c0) if not beyond[0] else green(W, x, TreePoint(far))
        jy = jyw * fr if not beyond[1] else green_jet(W, TreePoint(far), y)
        gx_cache[far] = (gx, jy)

    core = 0.0
    tail = 0.0
    rev = G.reverse_ids
    for word, e, d0 in ball_edges(G, center, radius):
        le = float(G.length[e])
        far = G.step(word, e)
        cuts = [c for c in (_cut_on_edge(G, x, word, e), _cut_on_edge(G, y, word, e)) if c is not None]
        xs, ws = _edge_nodes(le, cuts)
        far_pt = TreePoint(far)
        beyond = [
            tree_distance(G, far_pt, p) < tree_distance(G, TreePoint(word), p) + le - 1e-9 or bool(_cut_on_edge(G, p, word, e))
            for p in (x, y)
        ]
        if not any(beyond):
            # z hangs off `word` away from x and y: G(x,z) = G(x,w) Phi(z,w)
            gxw, jyw = at_vertex(word)
            if e not in phi_cache:
                c, sn = trig_jets(W.lam, le - xs)
                phi_cache[e] = (c + Mb[int(rev[e])] * sn) * F[int(rev[e])]
            phi = phi_cache[e]
            if order == 1:
                core += float(np.sum(ws * gxw * jyw.c0 * phi.c0**2))
            else:
                dgz = phi.c1 * jyw.c0 + phi.c0 * jyw.c1
                core += float(np.sum(ws * 2.0 * gxw * phi.c0 * dgz))
        else:
            for s, wq in zip(xs, ws):
                z = G.point(word, e, float(s))
                if order == 1:
                    core += wq * green(W, x, z) * green(W, z, y)
                else:
                    core += wq * 2.0 * green(W, x, z) * float(green_jet(W, z, y).c1)
        at_vertex(word)
        push(word, e, far, beyond)
        if d0 + le >= radius:
            gxv, jyv = at_vertex(far)
            for e2 in G.out_edges[G.end_type(far)]:
                if e2 == (e ^ 1):
                    continue
                if order == 1:
                    tail += gxv * float(jyv.c0) * float(T.c0[e2])
                else:
                    tail += 2.0 * gxv * (float(jyv.c0) * 0.5 * float(T.c1[e2]) + float(jyv.c1) * float(T.c0[e2]))
    val = core + tail
    if return_report:
        return val, {"core": core, "tail": tail, "tail_rho": rho, "radius": radius}
    return val


# ---------------------------------------------------------------------------
# Ancona, strong Ancona and Harnack diagnostics
# ---------------------------------------------------------------------------
def _sample_geodesic_triple(G, rng, depth):
    while True:
        x = random_point(G, rng, depth)
        z = random_point(G, rng, depth)
        seg = geodesic(G, x, z)
        if seg.length > 0.5:
            y = geodesic_point(G, seg, float(rng.uniform(0.0, seg.length)))
            return x, y, z


def _fork(G, rng, n: int):
    """x, x' beyond one end and y, y' beyond the other end of a reduced
    word of ``n`` edges; all four pairs overlap on that stretch."""
    from .graph_core import random_vertex

    start = random_vertex(G, rng, 2).word
    w = start
    for _ in range(n):
        choices = [e for e in G.out_edges[G.end_type(w)] if not (w and e == (w[-1] ^ 1))]
        w = w + (int(rng.choice(choices)),)
    a_word, b_word = start, w
    first = w[len(start)]
    last = w[-1]

    def hang(word, forbidden):
        out = []
        for _ in range(2):
            v, prev = word, -1
            for k in range(2):
                bad = forbidden if k == 0 else prev ^ 1
                prev = int(rng.choice([e for e in G.out_edges[G.end_type(v)] if e != bad]))
                v = G.step(v, prev)
            out.append(TreePoint(v))
        return out

    xs = hang(a_word, first)
    ys = hang(b_word, last ^ 1)
    return xs, ys


def _sphere_and_ball(G: QuotientGraph, center: tuple[int, ...], r: float, rr: float) -> tuple[int, float]:
    """(# points at distance ``rr``, length of the ball of radius ``r``)."""
    count = 0
    vol = 0.0
    for word, e, d0 in ball_edges(G, center, max(r, rr)):
        le = float(G.length[e])
        vol += min(le, max(0.0, r - d0))
        if d0 < rr <= d0 + le + 1e-12:
            count += 1
    return count, vol


def ancona_diagnostics(
    W: WeylTable,
    samples: int = 200,
    *,
    seed: int = 0,
    depth: int = 4,
    overlaps: tuple[int, ...] = (1, 2, 3, 4, 5, 6),
    harnack_r: float = 1.0,
    harnack_l: float = 1.0,
) -> dict[str, Any]:
    """Empirical Ancona, strong-Ancona and Harnack constants.

    Returns
    -------
    dict
        ``C_ancona``: max over sampled collinear triples of
        ``max(r, 1/r)`` with ``r = G(x,z)/(G(x,y)G(y,z))``.
        ``strong``: per-overlap maximal deviation of the fork ratio from 1,
        the fitted ``rho`` (exp of the log-linear slope), ``C_strong`` and
        the fit ``r2``.
        ``D_harnack``: empirical ``log(max f / min f)`` over balls of
        radius ``harnack_r`` for ``f = G(., w)`` with ``w`` outside the
        enlarged ball, next to the two closed-form bounds ``D_formula_1``
        and ``D_formula_2``.
    """
    W.require()
    G = W.graph
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        x, y, z = _sample_geodesic_triple(G, rng, depth)
        r = green(W, x, z) / (green(W, x, y) * green(W, y, z))
        ratios.append(r)
    ratios = np.array(ratios)
    C_anc = float(np.max(np.maximum(ratios, 1.0 / ratios)))

    devs = []
    per = max(1, samples // len(overlaps))
    for n in overlaps:
        worst = 0.0
        for _ in range(per):
            (x, xp), (y, yp) = _fork(G, rng, n)
            q = (green(W, x, y) / green(W, xp, y)) / (green(W, x, yp) / green(W, xp, yp))
            worst = max(worst, abs(q - 1.0))
        devs.append(worst)
    devs = np.array(devs)
    ns = np.array(overlaps, dtype=float)
    pos = devs > 0.0
    if pos.sum() >= 2:
        ly = np.log(devs[pos])
        slope, icpt = np.polyfit(ns[pos], ly, 1)
        pred = slope * ns[pos] + icpt
        ss_res = float(np.sum((ly - pred) ** 2))
        ss_tot = float(np.sum((ly - ly.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
        rho = float(math.exp(slope))
        C_strong = float(np.max(devs / rho**ns)) if rho > 0 else math.inf
    else:
        r2, rho, C_strong = 0.0, 0.0, 0.0

    # Harnack on vertex-centred balls
    D_emp, D1, D2 = 0.0, 0.0, 0.0
    r, l = harnack_r, harnack_l
    for _ in range(max(4, samples // 50)):
        c = random_point(G, rng, depth)
        cw = c.anchor
        pts = [TreePoint(cw)]
        for word, e, d0 in ball_edges(G, cw, r):
            le = float(G.length[e])
            for s in np.linspace(0.0, min(le, r - d0), 5)[1:]:
                pts.append(G.point(word, e, float(s)))
        # pole beyond the margin
        w = cw
        for _ in range(int(math.ceil((r + l) / G.l_min)) + 2):
            choices = [e for e in G.out_edges[G.end_type(w)] if not (w and e == (w[-1] ^ 1))]
            w = w + (int(rng.choice(choices)),)
        pole = TreePoint(w)
        if tree_distance(G, TreePoint(cw), pole) <= r + l:
            continue
        vals = np.array([green(W, p, pole) for p in pts])
        D_emp = max(D_emp, float(np.log(vals.max() / vals.min())))
        cnt, vol = _sphere_and_ball(G, cw, r, r + l)
        D1 = max(D1, math.sqrt(2.0 * cnt * vol / l))
        for s in np.linspace(l / 8, l, 8):
            cnt_s, _ = _sphere_and_ball(G, cw, r, r + s)
            D2 = max(D2, math.sqrt(4.0 * cnt_s * vol / l))
    return {
        "lambda": W.lam,
        "C_ancona": C_anc,
        "ancona_ratio_range": [float(ratios.min()), float(ratios.max())],
        "strong": {
            "overlaps": list(overlaps),
            "max_deviation": devs.tolist(),
            "rho": rho,
            "C_strong": C_strong,
            "r2": r2,
        },
        "D_harnack": D_emp,
        "D_formula_1": D1,
        "D_formula_2": D2,
    }


# ---------------------------------------------------------------------------
# complex spectral parameter (time-domain inversion support)
# ---------------------------------------------------------------------------
def _scaled_trig(kappa: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``2 e^{-k s} cosh(k s)``, ``2 e^{-k s} sinh(k s)/k`` and ``e^{-k s}``."""
    x = kappa * sigma
    e1 = np.exp(-x)
    e2 = e1 * e1
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, kappa)
    series = sigma * (2.0 - 2.0 * x + (4.0 / 3.0) * x**2 - (2.0 / 3.0) * x**3)
    snp = np.where(small, series, (1.0 - e2) / safe)
    return 1.0 + e2, snp, e1


def weyl_complex(g: QuotientGraph, lam: np.ndarray, tol: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """Minimal Weyl coefficients for complex ``lam`` off ``[lambda_0, inf)``.

    Returns ``(m, Mb)`` with shape ``(len(lam), n_edges)``.  Plain
    iteration from the Dirichlet start, then Newton polishing.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    N = branch_matrix(g)
    kappa = np.sqrt(-lam)[:, None]
    L = g.length[None, :]
    cp, snp, e1 = _scaled_trig(kappa, L)
    lam2 = lam[:, None]
    m = cp / snp
    for _ in range(20000):
        M = m @ N.T
        new = (M * cp - lam2 * snp) / (cp + M * snp)
        step = np.max(np.abs(new - m))
        m = new
        if step < 1e-10 * (1.0 + np.max(np.abs(m))):
            break
    eye = np.eye(g.n_edges)
    for _ in range(4):
        M = m @ N.T
        D = cp + M * snp
        r = m - (M * cp - lam2 * snp) / D
        F2 = (2.0 * e1 / D) ** 2
        J = eye[None] - F2[:, :, None] * N[None]
        m = m + np.linalg.solve(J, -r[..., None])[..., 0]
        if np.max(np.abs(r)) < tol * (1.0 + np.max(np.abs(m))):
            break
    return m, m @ N.T


def green_complex(g: QuotientGraph, lam: np.ndarray, x: TreePoint, y: TreePoint) -> np.ndarray:
    """``G_lambda(x, y)`` for an array of complex ``lam``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    m, Mb = weyl_complex(g, lam)
    kappa = np.sqrt(-lam)

    def u(f: int, s: float) -> tuple[np.ndarray, np.ndarray]:
        cp, snp, e1 = _scaled_trig(kappa, np.float64(s))
        return cp + Mb[:, f] * snp, e1

    def tr(f: int, s: float) -> np.ndarray:
        cp, snp, _ = _scaled_trig(kappa, np.float64(s))
        return (Mb[:, f] * cp - lam * snp) / (cp + Mb[:, f] * snp)

    val = np.ones_like(lam)
    for f, a, b, _ in geodesic(g, x, y).pieces:
        ua, _ = u(f, a)
        ub, _ = u(f, b)
        eab = np.exp(-kappa * (b - a))
        val = val * eab * ua / ub
    if y.edge is None:
        diag = 1.0 / m[:, list(g.in_edges[g.end_type(y.anchor)])].sum(axis=1)
    else:
        le = float(g.length[y.edge])
        diag = 1.0 / (tr(y.edge, y.offset) + tr(y.edge ^ 1, le - y.offset))
    return val * diag


def heat_kernel_talbot(
    g: QuotientGraph, x: TreePoint, y: TreePoint, times: np.ndarray, n_nodes: int = 32, shift: float | None = None
) -> np.ndarray:
    """``p(t, x, y)`` on the infinite tree by fixed-Talbot inversion of ``G``.

    Inverts ``z -> G_{shift - z}(x, y)``, the transform of
    ``e^{shift t} p(t)``; ``shift`` defaults to ``lambda_0``.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    lam0 = lambda0_resolvent(g, 1e-12) if shift is None else float(shift)
    M = n_nodes
    out = np.empty_like(t)
    k = np.arange(1, M)
    theta = k * math.pi / M
    cot = 1.0 / np.tan(theta)
    sig = theta + (theta * cot - 1.0) * cot
    for i, ti in enumerate(t):
        r = 2.0 * M / (5.0 * ti)
        z = np.concatenate([[r], r * theta * (cot + 1j)])
        Fz = green_complex(g, lam0 - z, x, y)
        total = 0.5 * np.exp(r * ti) * Fz[0].real
        total += np.sum((np.exp(z[1:] * ti) * Fz[1:] * (1.0 + 1j * sig)).real)
        out[i] = (r / M) * total * math.exp(-lam0 * ti)
    return out

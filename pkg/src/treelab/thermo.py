"""Symbolic dynamics of the geodesic flow on the quotient.

The cross-section is the set of geodesics based at a vertex; its first
return map is the non-backtracking shift on oriented edges with roof equal
to the edge length.  The potential of interest is built from Martin
kernels, and its pressure is compared against the critical exponent
``delta_lambda`` obtained from the Green-weighted edge matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.sparse.csgraph import connected_components

from .errors import NotStronglyConnected, PowerIterationStalled, ValidationError
from .graph_core import (
    BoundaryRay,
    QuotientGraph,
    TreePoint,
    extend_to_ray,
    geodesic,
    geodesic_point,
    ray_vertex,
)
from .resolvent import WeylTable, martin_kernel

__all__ = [
    "CodingSystem",
    "CylinderSet",
    "PotentialGrid",
    "build_coding",
    "delta_lambda",
    "green_weighted_matrix",
    "annulus_growth",
    "lift_prefix",
    "potential_grid",
    "pressure",
    "pressure_root",
    "pressure_operator",
    "LineSpec",
    "f_lambda_pointwise",
    "f_lambda_integral",
    "potential_closed_form",
    "abramov_check",
    "pressure_table",
]


# ---------------------------------------------------------------------------
# coding
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class CodingSystem:
    """Non-backtracking edge shift with roof function.

    Attributes
    ----------
    graph : QuotientGraph
    transition : ndarray of bool
        ``transition[e, f]`` iff ``f`` may follow ``e``.
    roof : ndarray
        Length of each letter.
    """

    graph: QuotientGraph
    transition: np.ndarray
    roof: np.ndarray

    @property
    def alphabet(self) -> list[int]:
        return list(range(self.graph.n_edges))

    def admissible(self, word: Sequence[int]) -> bool:
        return all(self.transition[a, b] for a, b in zip(word[:-1], word[1:]))

    def words(self, k: int) -> list[tuple[int, ...]]:
        """All admissible words of length ``k``, in lexicographic order."""
        if k < 1:
            raise ValidationError("word length must be positive")
        out: list[tuple[int, ...]] = [(e,) for e in self.alphabet]
        succ = [np.flatnonzero(self.transition[e]).tolist() for e in self.alphabet]
        for _ in range(k - 1):
            out = [w + (f,) for w in out for f in succ[w[-1]]]
        return out

    @staticmethod
    def flip(word: Sequence[int]) -> tuple[int, ...]:
        """Reverse the word and each letter's orientation."""
        return tuple(e ^ 1 for e in reversed(word))


@dataclass(frozen=True)
class CylinderSet:
    word: tuple[int, ...]
    position: int = 0

    @property
    def last(self) -> int:
        return self.position + len(self.word) - 1


def build_coding(g: QuotientGraph) -> CodingSystem:
    """Transition matrix and roof of the vertex cross-section.

    Raises
    ------
    NotStronglyConnected
        The shift is not transitive.
    """
    A = g.successor_matrix > 0
    n, labels = connected_components(sparse.csr_matrix(A), directed=True, connection="strong")
    if n != 1:
        raise NotStronglyConnected(f"edge shift has {n} strong components")
    return CodingSystem(g, A, np.asarray(g.length, float).copy())


# ---------------------------------------------------------------------------
# critical exponent
# ---------------------------------------------------------------------------
def green_weighted_matrix(W: WeylTable, s: float) -> np.ndarray:
    """``B[e, f] = A[e, f] F_f^2 exp(-s l_f)``."""
    g = W.graph
    w = W.F**2 * np.exp(-s * g.length)
    return g.successor_matrix * w[None, :]


def _log_rho(M: np.ndarray) -> float:
    return math.log(float(np.max(np.abs(np.linalg.eigvals(M)))))


def delta_lambda(W: WeylTable) -> float:
    """Critical exponent: the root ``s`` of ``log rho(B(lambda, s)) = 0``.

    ``log rho`` is convex and strictly decreasing in ``s`` with slope
    between ``-l_max`` and ``-l_min``, which gives a guaranteed bracket.
    """
    W.require()
    g = W.graph
    r0 = _log_rho(green_weighted_matrix(W, 0.0))
    lo = r0 / g.l_min if r0 < 0 else r0 / g.l_max
    hi = r0 / g.l_max if r0 < 0 else r0 / g.l_min
    lo, hi = min(lo, hi) - 1e-9, max(lo, hi) + 1e-9
    return float(optimize.brentq(lambda s: _log_rho(green_weighted_matrix(W, s)), lo, hi, xtol=1e-15))


def annulus_growth(W: WeylTable, max_length: float = 14.0) -> dict:
    """Growth rate of Green-squared orbit sums over unit annuli.

    Enumerates every lift ``z`` of the base vertex with
    ``d(base, z) <= max_length`` by dynamic programming over
    ``(last letter, length)`` and sums ``G(base, z)^2`` over the annuli
    ``n - 1 < d <= n``.  The rate is the least-squares slope of the
    logarithm over the upper half of the non-empty annuli.
    """
    W.require()
    g = W.graph
    A = g.successor_matrix
    b = g.base
    gbb = float(W.vertex_green[b])
    weight = W.F**2
    sums = np.zeros(int(math.ceil(max_length)) + 1)
    sums[0] = gbb**2
    layer: dict[tuple[int, float], float] = {}
    for e in g.out_edges[b]:
        key = (int(e), round(float(g.length[e]), 9))
        layer[key] = layer.get(key, 0.0) + float(weight[e])
    while layer:
        nxt: dict[tuple[int, float], float] = {}
        for (e, d), v in layer.items():
            if int(g.terminus[e]) == b:
                sums[int(math.ceil(d - 1e-9))] += v * gbb**2
            for f in np.flatnonzero(A[e]):
                dd = round(d + float(g.length[f]), 9)
                if dd <= max_length + 1e-9:
                    key = (int(f), dd)
                    nxt[key] = nxt.get(key, 0.0) + v * float(weight[f])
        layer = nxt
    n = np.arange(len(sums))
    ok = (sums > 0) & (n >= 1)
    ns, vals = n[ok], np.log(sums[ok])
    half = ns >= ns.max() / 2
    slope = float(np.polyfit(ns[half], vals[half], 1)[0])
    return {"annuli": sums, "rate": slope}


# ---------------------------------------------------------------------------
# potential on k-cylinders
# ---------------------------------------------------------------------------
def lift_prefix(g: QuotientGraph, first: int) -> tuple[int, ...]:
    """Shortest (then lexicographic) reduced word from the base lift to a
    lift of ``origin(first)`` that can be continued by ``first``."""
    target = int(g.origin[first])
    frontier: list[tuple[int, ...]] = [()]
    for _ in range(len(g.vertices) + 2):
        for w in frontier:
            if g.end_type(w) == target and not (w and w[-1] == (first ^ 1)):
                return w
        frontier = [
            w + (e,)
            for w in frontier
            for e in g.out_edges[g.end_type(w)]
            if not (w and e == (w[-1] ^ 1))
        ]
    raise ValidationError("no lift prefix found")


def _ray_for(g: QuotientGraph, prefix: tuple[int, ...], word: tuple[int, ...]) -> BoundaryRay:
    closes = int(g.terminus[word[-1]]) == int(g.origin[word[0]]) and word[0] != (word[-1] ^ 1)
    if closes:
        return BoundaryRay(prefix, (), word)
    return extend_to_ray(g, prefix + word)


@dataclass(frozen=True, eq=False)
class PotentialGrid:
    """Values of ``2 log k_lambda(x_1, x_0, xi_w)`` on admissible k-words.

    ``band`` is the largest change observed when every word is refined to
    its one-letter extensions.
    """

    W: WeylTable
    k: int
    words: list[tuple[int, ...]]
    values: np.ndarray
    band: float
    index: dict[tuple[int, ...], int] = field(repr=False)

    @property
    def lam(self) -> float:
        return self.W.lam

    @property
    def graph(self) -> QuotientGraph:
        return self.W.graph


def _values(W: WeylTable, words: list[tuple[int, ...]]) -> np.ndarray:
    g = W.graph
    out = np.empty(len(words))
    for i, w in enumerate(words):
        pre = lift_prefix(g, w[0])
        ray = _ray_for(g, pre, w)
        x0 = TreePoint(pre)
        x1 = TreePoint(pre + (w[0],))
        kv = martin_kernel(W, x1, x0, ray, len(pre) + len(w) + 4)
        out[i] = 2.0 * math.log(kv.value)
    return out


def potential_grid(W: WeylTable, k: int = 6, coding: CodingSystem | None = None) -> PotentialGrid:
    """Evaluate the k-cylinder potential and its refinement band."""
    if k < 2:
        raise ValidationError("k must be at least 2")
    W.require()
    cs = coding or build_coding(W.graph)
    words = cs.words(k)
    vals = _values(W, words)
    longer = cs.words(k + 1)
    vl = _values(W, longer)
    idx = {w: i for i, w in enumerate(words)}
    band = float(max(abs(vl[j] - vals[idx[w[:-1]]]) for j, w in enumerate(longer)))
    return PotentialGrid(W, k, words, vals, band, idx)


def pressure_operator(grid: PotentialGrid, s: float) -> sparse.csr_matrix:
    """Weighted transition operator on k-words.

    ``w -> w[1:] + (e,)`` carries weight ``exp(value(w) - s l(w[-1]))``.
    """
    g = grid.graph
    A = g.successor_matrix
    rows, cols, data = [], [], []
    L = g.length
    for i, w in enumerate(grid.words):
        wt = math.exp(grid.values[i] - s * float(L[w[-1]]))
        for e in np.flatnonzero(A[w[-1]]):
            rows.append(i)
            cols.append(grid.index[w[1:] + (int(e),)])
            data.append(wt)
    n = len(grid.words)
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def _perron(M: sparse.csr_matrix, tol: float = 1e-14, max_iter: int = 200_000) -> tuple[float, np.ndarray]:
    # shift by the identity so that periodic shifts still have a dominant eigenvalue
    n = M.shape[0]
    v = np.full(n, 1.0 / n)
    lam = 0.0
    for _ in range(max_iter):
        w = M @ v + v
        nrm = w.sum()
        w /= nrm
        if np.max(np.abs(w - v)) < tol * np.max(w):
            return float(nrm - 1.0), w
        v = w
        lam = nrm - 1.0
    raise PowerIterationStalled(f"power iteration did not settle (last estimate {lam})")


def pressure(grid: PotentialGrid, s: float) -> float:
    """Log of the leading eigenvalue of :func:`pressure_operator`."""
    rho, _ = _perron(pressure_operator(grid, s))
    return math.log(rho)


def pressure_root(grid: PotentialGrid) -> float:
    """Zero of ``s -> pressure(grid, s)``."""
    g = grid.graph
    p0 = pressure(grid, 0.0)
    lo = p0 / g.l_min if p0 < 0 else p0 / g.l_max
    hi = p0 / g.l_max if p0 < 0 else p0 / g.l_min
    lo, hi = min(lo, hi) - 1e-6, max(lo, hi) + 1e-6
    return float(optimize.brentq(lambda s: pressure(grid, s), lo, hi, xtol=1e-13))


# ---------------------------------------------------------------------------
# pointwise potential
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class LineSpec:
    """Geodesic line through ``point`` heading to the boundary ray ``forward``.

    Only the forward end enters the potential, so the backward half is
    left implicit.
    """

    point: TreePoint
    forward: BoundaryRay


def _far(g: QuotientGraph, line: LineSpec, extra: int = 6) -> TreePoint:
    depth = max(line.forward.transient_length, len(line.point.anchor) + 1) + len(line.forward.period) + extra
    return ray_vertex(g, line.forward, depth)


def _advance(g: QuotientGraph, line: LineSpec, t: float) -> TreePoint:
    z = _far(g, line)
    return geodesic_point(g, geodesic(g, line.point, z), t)


def _log_k(W: WeylTable, line: LineSpec, t: float) -> float:
    # log k(g(0), g(t), g_+) = log G(g(t), z) / G(g(0), z)
    g = W.graph
    z = _far(g, line)
    seg = geodesic(g, line.point, z)
    a = line.point
    b = geodesic_point(g, seg, t)
    return _log_phi(W, b, z) - _log_phi(W, a, z)


def _log_phi(W: WeylTable, x: TreePoint, z: TreePoint) -> float:
    val = 0.0
    for f, a, b, _ in geodesic(W.graph, x, z).pieces:
        ua, ub = W.u(f, np.array([a, b]))
        val += math.log(float(ua)) - math.log(float(ub))
    return val


def f_lambda_pointwise(W: WeylTable, line: LineSpec, dt: float = 1e-3) -> float:
    """``-2 d/dt log k(g(0), g(t), g_+)`` at ``t = 0+``.

    One-sided difference quotients at ``dt`` and ``dt/2`` combined by
    Richardson extrapolation.
    """
    if not 0.0 < dt <= 1e-3:
        raise ValidationError("dt must lie in (0, 1e-3]")
    W.require()
    d1 = -2.0 * _log_k(W, line, dt) / dt
    d2 = -2.0 * _log_k(W, line, dt / 2) / (dt / 2)
    return 2.0 * d2 - d1


def _return_time(g: QuotientGraph, line: LineSpec) -> float:
    """Distance from the base point of ``line`` to the next vertex ahead."""
    z = _far(g, line)
    seg = geodesic(g, line.point, z)
    f, a, b, _ = seg.pieces[0]
    if line.point.edge is None:
        return float(g.length[f])
    return b - a


def potential_closed_form(W: WeylTable, line: LineSpec, delta: float) -> float:
    """``2 log k(x_1, x_0, g_+) - delta d(x_0, x_1)`` for ``line`` based at a vertex ``x_0``."""
    g = W.graph
    if line.point.edge is not None:
        raise ValidationError("closed form needs a line based at a vertex")
    tau = _return_time(g, line)
    return -2.0 * _log_k(W, line, tau) - delta * tau


def f_lambda_integral(W: WeylTable, line: LineSpec, delta: float, dt: float = 1e-3, nodes: int = 16) -> float:
    """Gauss-Legendre integral of ``f(phi_t g) - delta`` over one return time."""
    g = W.graph
    tau = _return_time(g, line)
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts = 0.5 * tau * (x + 1.0)
    acc = 0.0
    for t, wt in zip(ts, w):
        p = _advance(g, line, float(t))
        acc += wt * f_lambda_pointwise(W, LineSpec(p, line.forward), dt)
    return 0.5 * tau * acc - delta * tau


# ---------------------------------------------------------------------------
# equilibrium measure
# ---------------------------------------------------------------------------
def abramov_check(grid: PotentialGrid, s: float) -> dict:
    """Entropy, potential integral and roof integral of the k-step Gibbs chain.

    The chain is ``P[i, j] = M[i, j] v_j / (rho v_i)`` with ``M`` the
    pressure operator and ``v`` its right Perron vector; its stationary law
    is ``u_i v_i`` with ``u`` the left Perron vector.
    """
    M = pressure_operator(grid, s).tocoo()
    rho, v = _perron(M.tocsr())
    _, u = _perron(M.T.tocsr())
    pi = u * v
    pi /= pi.sum()
    P = M.data * v[M.col] / (rho * v[M.row])
    flow = pi[M.row] * P
    entropy = float(-(flow * np.log(P)).sum())
    pot = float((flow * np.log(M.data)).sum())
    L = grid.graph.length
    roof = float(sum(pi[i] * L[w[-1]] for i, w in enumerate(grid.words)))
    press = math.log(rho)
    return {
        "s": s,
        "pressure": press,
        "entropy": entropy,
        "potential_integral": pot,
        "variational_gap": entropy + pot - press,
        "roof_integral": roof,
        "flow_entropy": entropy / roof,
        "band": grid.band,
    }


def pressure_table(g: QuotientGraph, lams: Sequence[float], k: int = 6) -> list[dict]:
    """Rows ``(lambda, delta, s*_k, band)`` for a grid of spectral parameters."""
    from .resolvent import solve_weyl

    rows = []
    for lam in lams:
        W = solve_weyl(g, float(lam)).require()
        grid = potential_grid(W, k)
        rows.append({"lambda": float(lam), "delta": delta_lambda(W), "s_star": pressure_root(grid), "band": grid.band})
    return rows

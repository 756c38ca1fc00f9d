"""Heat kernel of the tree by finite elements on a ball.

The ball around a vertex is discretised with linear elements (lumped
mass, conforming at vertices, so Kirchhoff balance is the natural vertex
condition).  Time stepping is the second-order backward differentiation
formula written as a convolution quadrature of the whole Laplace-domain
operator, which also makes an exact *transparent* outer boundary cheap:
each outer vertex sees the exterior branches through their
Dirichlet-to-Neumann symbols ``m(-s)``, taken from the Weyl solver at
complex arguments.  ``boundary="dirichlet"`` gives the absorbing ball.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate

from .errors import (
    IterationStalled,
    SourceTooCloseToBoundary,
    StepTooLarge,
    TailNotControlled,
    ValidationError,
)
from .graph_core import QuotientGraph, TreePoint, ball_edges, tree_distance
from .resolvent import weyl_complex

__all__ = [
    "TruncatedBall",
    "HeatField",
    "build_ball",
    "heat_solve",
    "lambda0_spectral",
    "inertia_count",
    "green_from_heat",
    "decay_fit",
    "export_field",
]


@dataclass(eq=False)
class TruncatedBall:
    """Discretised ball ``B(center, radius)`` of the tree.

    Attributes
    ----------
    mass : ndarray
        Lumped node masses.
    stiffness : scipy.sparse.csr_matrix
        Stiffness matrix (``sum f'^2``).
    vertex_node : dict
        Tree-vertex word -> node index.
    edges : dict
        Canonical ``(anchor, edge)`` -> ``(node indices, offsets)`` from the
        anchor end; ``-1`` marks a removed (absorbing) vertex.
    boundary_groups : dict
        For the transparent boundary, ``(vertex type, incoming edge)`` ->
        ``(node indices, exit edge ids)``.
    """

    graph: QuotientGraph
    center: TreePoint
    radius: float
    h: float
    boundary: str
    mass: np.ndarray
    stiffness: sp.csr_matrix
    vertex_node: dict[tuple[int, ...], int]
    edges: dict[tuple[tuple[int, ...], int], tuple[np.ndarray, np.ndarray]]
    boundary_groups: dict[tuple[int, int], tuple[np.ndarray, tuple[int, ...]]]
    node_label: list[tuple[str, float]] = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.mass)

    def locate(self, p: TreePoint) -> tuple[np.ndarray, np.ndarray]:
        """Node indices and linear-interpolation weights for ``p``."""
        if p.edge is None:
            if p.anchor not in self.vertex_node:
                raise ValidationError("point outside the discretised ball")
            return np.array([self.vertex_node[p.anchor]]), np.array([1.0])
        key = (p.anchor, p.edge)
        if key not in self.edges:
            raise ValidationError("point outside the discretised ball")
        nodes, offs = self.edges[key]
        k = int(np.clip(np.searchsorted(offs, p.offset) - 1, 0, len(offs) - 2))
        w = (p.offset - offs[k]) / (offs[k + 1] - offs[k])
        idx = np.array([nodes[k], nodes[k + 1]])
        wts = np.array([1.0 - w, w])
        keep = idx >= 0
        return idx[keep], wts[keep]

    def nearest_node(self, p: TreePoint) -> int:
        idx, w = self.locate(p)
        return int(idx[int(np.argmax(w))])


def build_ball(
    g: QuotientGraph,
    radius: float,
    h: float | None = None,
    center: TreePoint | None = None,
    boundary: str = "dirichlet",
) -> TruncatedBall:
    """Discretise the tree edges whose nearer end lies within ``radius``.

    Every edge of length ``l`` gets ``ceil(l / h)`` equal cells, so node
    spacing never exceeds ``h`` (default ``0.02 * l_min``).
    """
    if boundary not in ("dirichlet", "transparent"):
        raise ValidationError(f"unknown boundary {boundary!r}")
    center = center or TreePoint(())
    if center.edge is not None:
        raise ValidationError("ball centre must be a vertex")
    h = float(h) if h is not None else 0.02 * g.l_min
    if not h > 0:
        raise ValidationError("h must be positive")
    vnode: dict[tuple[int, ...], int] = {center.anchor: 0}
    labels: list[tuple[str, float]] = [(g.format_word(center.anchor), 0.0)]
    n_nodes = 1
    rows, cols, vals = [], [], []
    mass_parts: list[tuple[np.ndarray, np.ndarray]] = []
    edges: dict[tuple[tuple[int, ...], int], tuple[np.ndarray, np.ndarray]] = {}
    groups: dict[tuple[int, int], list[int]] = {}
    for word, e, d0 in ball_edges(g, center.anchor, radius):
        le = float(g.length[e])
        n = max(1, int(math.ceil(le / h - 1e-9)))
        he = le / n
        far = g.step(word, e)
        outer = d0 + le >= radius
        if outer and boundary == "dirichlet":
            fnode = -1
        else:
            fnode = n_nodes
            vnode[far] = fnode
            labels.append((g.format_word(far), 0.0))
            n_nodes += 1
            if outer:
                groups.setdefault((g.end_type(far), e), []).append(fnode)
        inner = np.arange(n_nodes, n_nodes + n - 1)
        n_nodes += n - 1
        chain = np.concatenate([[vnode[word]], inner, [fnode]])
        offs = np.linspace(0.0, le, n + 1)
        if word and word[-1] == (e ^ 1):
            key = (word[:-1], word[-1])
            edges[key] = (chain[::-1].copy(), offs)
            lab_word, lab_edge, flip = word[:-1], word[-1], True
        else:
            key = (word, e)
            edges[key] = (chain, offs)
            lab_word, lab_edge, flip = word, e, False
        base = g.format_word(lab_word + (lab_edge,))
        for k in range(1, n):
            s = offs[k] if not flip else le - offs[k]
            labels.append((base, float(s)))
        a, b = chain[:-1], chain[1:]
        w = np.full(n, 1.0 / he)
        ok = b >= 0
        rows += [a, b[ok], a[ok], b[ok]]
        cols += [a, b[ok], b[ok], a[ok]]
        vals += [w, w[ok], -w[ok], -w[ok]]
        mass_parts.append((a, np.full(n, 0.5 * he)))
        mass_parts.append((b[ok], np.full(int(ok.sum()), 0.5 * he)))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    K = sp.csr_matrix((v, (r, c)), shape=(n_nodes, n_nodes))
    mass = np.zeros(n_nodes)
    for idx, mv in mass_parts:
        np.add.at(mass, idx, mv)
    bgroups = {}
    for (vt, e), nodes in groups.items():
        exits = tuple(x for x in g.out_edges[vt] if x != (e ^ 1))
        bgroups[(vt, e)] = (np.array(nodes), exits)
    return TruncatedBall(g, center, float(radius), h, boundary, mass, K, vnode, edges, bgroups, labels)


@dataclass(eq=False)
class HeatField:
    """``p(t, source, .)`` on a ball.

    ``values[i]`` is the nodal field at ``times[i]``; ``probe_times`` and
    ``probe_values`` record the probe points at every step.
    """

    ball: TruncatedBall
    source: TreePoint
    times: np.ndarray
    values: np.ndarray
    mass: np.ndarray
    probes: list[TreePoint]
    probe_times: np.ndarray
    probe_values: np.ndarray
    dt: float
    min_value: float

    def at(self, y: TreePoint, i: int) -> float:
        idx, w = self.ball.locate(y)
        return float(np.dot(self.values[i][idx], w))

    def series(self, y: TreePoint) -> tuple[np.ndarray, np.ndarray]:
        """Full time series of a probe point."""
        try:
            k = self.probes.index(y)
        except ValueError as exc:
            raise ValidationError("point was not registered as a probe") from exc
        return self.probe_times, self.probe_values[:, k]


def _cq_weights(symbol, n: int, dt: float) -> np.ndarray:
    """BDF2 convolution-quadrature weights ``w_0..w_n`` of a Laplace symbol."""
    # contour radius rho with rho**L = 1e-8; L >= 8(n+1) keeps the
    # rho**-n amplification of symbol errors below 10 at the last index
    L = max(1 << int(math.ceil(math.log2(8 * (n + 1)))), 64)
    rho = 1e-8 ** (1.0 / L)
    zeta = rho * np.exp(2j * np.pi * np.arange(L) / L)
    s = ((1.0 - zeta) + 0.5 * (1.0 - zeta) ** 2) / dt
    vals = symbol(s)
    w = np.fft.fft(vals) / L
    return (w[: n + 1] * rho ** (-np.arange(n + 1))).real


def heat_solve(
    ball: TruncatedBall,
    source: TreePoint,
    times: Sequence[float],
    dt: float = 0.005,
    probes: Sequence[TreePoint] = (),
) -> HeatField:
    """Heat kernel ``p(t, source, .)`` at the requested times.

    Parameters
    ----------
    times : sequence of float
        Snapshot times; each is rounded to the step grid.
    dt : float
        Time step, at most 0.05.
    probes : sequence of TreePoint
        Points whose values are recorded after every step.

    Raises
    ------
    StepTooLarge
        ``dt > 0.05``.
    SourceTooCloseToBoundary
        The source is not at least one edge inside the ball.
    """
    if dt > 0.05:
        raise StepTooLarge(f"dt={dt} exceeds 0.05")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    g = ball.graph
    if tree_distance(g, ball.center, source) + g.l_max > ball.radius:
        raise SourceTooCloseToBoundary("source needs a margin of one edge inside the ball")
    times = np.asarray(sorted(times), dtype=float)
    steps = np.rint(times / dt).astype(int)
    nsteps = int(steps.max())
    M = ball.mass
    n = ball.n_nodes
    src = ball.nearest_node(source)
    u0 = np.zeros(n)
    u0[src] = 1.0 / M[src]
    Mu0 = M * u0

    groups = list(ball.boundary_groups.values()) if ball.boundary == "transparent" else []
    weights = []
    diag_add = np.zeros(n)
    if groups:
        sym_cache: dict[tuple[int, ...], np.ndarray] = {}
        for nodes, exits in groups:
            if exits not in sym_cache:
                rev = [x ^ 1 for x in exits]

                def symbol(s, rev=rev):
                    m, _ = weyl_complex(g, -s)
                    return m[:, rev].sum(axis=1)

                sym_cache[exits] = _cq_weights(symbol, nsteps, dt)
            w = sym_cache[exits]
            weights.append(w)
            diag_add[nodes] += w[0]
    A = (1.5 / dt) * sp.diags(M) + ball.stiffness + sp.diags(diag_add)
    lu = spla.splu(A.tocsc())

    probe_loc = [ball.locate(p) for p in probes]
    pvals = np.zeros((nsteps + 1, len(probes)))
    hist = [np.zeros((nsteps + 1, len(nodes))) for nodes, _ in groups]
    snaps = np.zeros((len(times), n))
    masses = np.zeros(len(times))
    u_prev = np.zeros(n)
    u_prev2 = np.zeros(n)
    lowest = math.inf
    for k in range(nsteps + 1):
        rhs = M * (2.0 * u_prev - 0.5 * u_prev2) / dt
        if k == 0:
            rhs = rhs + Mu0 / dt
        for (nodes, _), w, H in zip(groups, weights, hist):
            if k > 0:
                rhs[nodes] -= w[k:0:-1] @ H[:k]
        u = lu.solve(rhs)
        for (nodes, _), H in zip(groups, hist):
            H[k] = u[nodes]
        for j, (idx, wts) in enumerate(probe_loc):
            pvals[k, j] = np.dot(u[idx], wts)
        if k > 0:
            lowest = min(lowest, float(u.min()))
        hit = np.nonzero(steps == k)[0]
        for i in hit:
            snaps[i] = u
            masses[i] = float(np.dot(M, u))
        u_prev2, u_prev = u_prev, u
    return HeatField(
        ball,
        source,
        steps * dt,
        snaps,
        masses,
        list(probes),
        np.arange(nsteps + 1) * dt,
        pvals,
        dt,
        lowest,
    )


# ---------------------------------------------------------------------------
# bottom of the discrete Dirichlet spectrum by inertia counting
# ---------------------------------------------------------------------------
def inertia_count(g: QuotientGraph, radius: float, h: float, lam: np.ndarray) -> np.ndarray:
    """Number of discrete Dirichlet eigenvalues below each ``lam``.

    Sylvester's law of inertia applied to ``K - lam M`` eliminated from the
    leaves inward; subtrees are memoised by (edge, remaining radius), so
    the cost grows with the number of distinct lifted-path lengths, not
    with the size of the ball.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    memo: dict[tuple[int, float], tuple[np.ndarray, np.ndarray]] = {}
    tiny = 1e-300

    def branch(e: int, r: float) -> tuple[np.ndarray, np.ndarray]:
        key = (e, round(r, 9))
        if key in memo:
            return memo[key]
        le = float(g.length[e])
        n = max(1, int(math.ceil(le / h - 1e-9)))
        he = le / n
        half = 1.0 / he - lam * he * 0.5
        a = 2.0 / he - lam * he
        b2 = 1.0 / he**2
        neg = np.zeros(lam.shape, dtype=np.int64)
        rc = r - le
        if rc > 1e-12:
            dv = half.copy()
            vt = int(g.terminus[e])
            for e2 in g.out_edges[vt]:
                if e2 == (e ^ 1):
                    continue
                s2, n2 = branch(e2, rc)
                dv = dv + s2
                neg = neg + n2
            dv = np.where(dv == 0.0, tiny, dv)
            neg = neg + (dv < 0)
            d = dv
            coupled = True
        else:
            d = None
            coupled = False
        for _ in range(n - 1):
            dk = a - (b2 / d if coupled else 0.0)
            dk = np.where(dk == 0.0, tiny, dk)
            neg = neg + (dk < 0)
            d = dk
            coupled = True
        contrib = half - (b2 / d if coupled else 0.0)
        memo[key] = (contrib, neg)
        return contrib, neg

    dc = np.zeros(lam.shape)
    total = np.zeros(lam.shape, dtype=np.int64)
    for e in g.out_edges[g.base]:
        s, k = branch(e, radius)
        dc = dc + s
        total = total + k
    return total + (dc < 0)


def _ball_bottom(g: QuotientGraph, radius: float, h: float, tol: float) -> float:
    lo = 0.0
    hi = 1.2 * (math.pi / g.l_max) ** 2
    if inertia_count(g, radius, h, np.array([hi]))[0] < 1:
        raise IterationStalled("no eigenvalue below the bracket")
    for _ in range(60):
        if hi - lo <= tol:
            break
        grid = np.linspace(lo, hi, 17)[1:-1]
        cnt = inertia_count(g, radius, h, grid)
        above = np.nonzero(cnt >= 1)[0]
        if len(above):
            j = int(above[0])
            hi = float(grid[j])
            lo = float(grid[j - 1]) if j > 0 else lo
        else:
            lo = float(grid[-1])
    else:
        raise IterationStalled("multisection did not reach tolerance")
    return 0.5 * (lo + hi)


def lambda0_spectral(
    g: QuotientGraph | TruncatedBall,
    radius: float | None = None,
    h: float | None = None,
    tol: float = 1e-9,
) -> dict[str, Any]:
    """Smallest discrete Dirichlet eigenvalue on balls and its limit in ``R``.

    Evaluates the ball bottoms at ``R/2, 3R/4, R`` and extrapolates with
    the model ``lam(R) = lam_inf + a / (R + b)**2`` through the three
    points.

    Returns
    -------
    dict
        ``radii``, ``values``, ``monotone`` (non-increasing in ``R``),
        ``estimate`` (extrapolated) and ``h``.
    """
    if isinstance(g, TruncatedBall):
        radius = g.radius if radius is None else radius
        h = g.h if h is None else h
        g = g.graph
    if radius is None:
        raise ValidationError("radius required")
    h = 0.02 * g.l_min if h is None else h
    if radius < 8 * g.l_min:
        raise ValidationError("ball radius must be at least 8 edges")
    radii = [radius / 2.0, 0.75 * radius, float(radius)]
    vals = [_ball_bottom(g, r, h, tol) for r in radii]
    est = _extrapolate(radii, vals)
    return {
        "radii": radii,
        "values": vals,
        "monotone": bool(vals[0] >= vals[1] >= vals[2]),
        "estimate": est,
        "h": h,
    }


def _extrapolate(radii: Sequence[float], vals: Sequence[float]) -> float:
    from scipy.optimize import brentq

    (r1, r2, r3), (v1, v2, v3) = radii, vals
    # (v1 - v2)/(v2 - v3) = (f(r1) - f(r2))/(f(r2) - f(r3)) with f = (r + b)^-2
    target = (v1 - v2) / (v2 - v3) if v2 != v3 else math.inf

    def ratio(b: float) -> float:
        f = [(r + b) ** -2 for r in (r1, r2, r3)]
        return (f[0] - f[1]) / (f[1] - f[2]) - target

    try:
        b = brentq(ratio, -0.9 * r1, 50.0 * r3)
    except ValueError:
        return v3
    f = [(r + b) ** -2 for r in (r1, r2, r3)]
    a = (v2 - v3) / (f[1] - f[2])
    return v3 - a * f[2]


# ---------------------------------------------------------------------------
# time integrals and long-time fits
# ---------------------------------------------------------------------------
def decay_fit(t: np.ndarray, p: np.ndarray, alpha: float | None = None) -> dict[str, float]:
    """Least-squares fit of ``log p = c - alpha log t - lam t``.

    ``alpha`` is fitted unless given.
    """
    t = np.asarray(t, float)
    y = np.log(np.asarray(p, float))
    if alpha is None:
        A = np.c_[np.ones_like(t), -np.log(t), -t]
        (c, a, lam), *_ = np.linalg.lstsq(A, y, rcond=None)
    else:
        A = np.c_[np.ones_like(t), -t]
        (c, lam), *_ = np.linalg.lstsq(A, y + alpha * np.log(t), rcond=None)
        a = alpha
    pred = A @ (np.array([c, a, lam]) if alpha is None else np.array([c, lam]))
    resid = y - pred
    return {"c": float(c), "alpha": float(a), "lam": float(lam), "rms": float(np.sqrt(np.mean(resid**2)))}


def green_from_heat(field: HeatField, lam: float, y: TreePoint, fit_window: float = 0.25) -> dict[str, float]:
    """``int_0^inf e^{lam t} p(t, x, y) dt`` from a probe series.

    Trapezoid rule over the simulated horizon plus the integral of the
    fitted long-time model beyond it (fit on the last ``fit_window``
    fraction of the horizon).

    Raises
    ------
    TailNotControlled
        ``lam`` is not below the fitted decay rate, or the tail exceeds a
        tenth of the total.
    """
    t, p = field.series(y)
    # on the diagonal p ~ c t^{-1/2}; integrate c t^{-1/2} e^{-t} exactly and
    # the smooth remainder by the trapezoid rule
    c = 0.0
    if y == field.source:
        g = field.ball.graph
        share = 2.0 / int(g.degree[g.end_type(y.anchor)]) if y.is_vertex else 1.0
        c = share / math.sqrt(4.0 * math.pi)
    if c > 0.0:
        model = np.zeros_like(t)
        model[1:] = c * np.exp(-t[1:]) / np.sqrt(t[1:])
        r = p - model
        r[0] = 0.0
        body = float(integrate.trapezoid(np.exp(lam * t) * r, t)) + c * math.sqrt(math.pi / (1.0 - lam))
    else:
        body = float(integrate.trapezoid(np.exp(lam * t) * p, t))
    T = float(t[-1])
    sel = t >= (1.0 - fit_window) * T
    fit = decay_fit(t[sel], p[sel])
    rate = fit["lam"] - lam
    if rate <= 0:
        raise TailNotControlled(f"lambda={lam} is not below the fitted decay rate {fit['lam']}")
    c, a = fit["c"], fit["alpha"]
    tail, _ = integrate.quad(lambda s: math.exp(c - a * math.log(s) - rate * s), T, np.inf)
    if tail > 0.1 * (body + tail):
        raise TailNotControlled(f"tail {tail:.3g} is more than 10% of the total")
    return {"value": body + tail, "body": body, "tail": tail, "decay_rate": fit["lam"]}


def export_field(field: HeatField, path: str | Path) -> tuple[Path, Path]:
    """Write ``(t, edge_word, offset, value)`` rows plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = field.ball.node_label
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "edge_word", "offset", "value"])
        for t, vals in zip(field.times, field.values):
            for (word, off), v in zip(labels, vals):
                w.writerow([f"{t:.10g}", word, f"{off:.10g}", f"{v:.17g}"])
    meta = {
        "radius": field.ball.radius,
        "h": field.ball.h,
        "dt": field.dt,
        "boundary": field.ball.boundary,
        "n_nodes": field.ball.n_nodes,
        "times": [float(t) for t in field.times],
        "mass_deficit": [float(1.0 - m) for m in field.mass],
    }
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path, side

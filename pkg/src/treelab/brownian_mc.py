"""Monte Carlo Brownian motion on the metric tree.

Paths are simulated in blocks with numpy; a path's position is kept
relative to a root vertex as a stack-encoded reduced word of its parent
vertex, the oriented edge it sits on (pointing away from the root) and
the offset along that edge.  The generator is ``d^2/dx^2`` on edges, so
Gaussian increments have variance ``2 * step``.  At a vertex the excess
displacement continues along an incident edge chosen uniformly
(backtracking allowed).  Within a step, a path whose endpoints lie on the
same edge may still touch an end vertex; this is sampled with the
Brownian-bridge probability ``exp(-a b / step)`` and the endpoint is then
re-scattered uniformly over the incident edges, which is exact for a
star.

Each block of ``BLOCK`` paths draws from its own Philox stream keyed by
``(seed, block index)``, so results do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from scipy import stats

from .errors import ValidationError, VarianceExplosion
from .graph_core import QuotientGraph, TreePoint, geodesic

__all__ = [
    "McConfig",
    "PathEnsemble",
    "simulate_paths",
    "estimate_hitting_transform",
    "estimate_density",
    "epanechnikov_mass",
    "strong_markov_splice",
    "BLOCK",
]

BLOCK = 16384


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings: step, path count, seed and horizon."""

    step: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    horizon: float = 10.0
    max_depth: int = 64

    def __post_init__(self) -> None:
        if not self.step > 0 or not self.horizon > 0:
            raise ValidationError("step and horizon must be positive")
        if self.n_paths < 1:
            raise ValidationError("n_paths must be positive")


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & (2**63 - 1), block])))


class _State:
    """Vectorised positions relative to a root vertex."""

    def __init__(self, g: QuotientGraph, root: tuple[int, ...], start: TreePoint, n: int, max_depth: int):
        self.g = g
        self.L = g.length
        self.root_type = g.end_type(root)
        self.out = [np.array(o) for o in g.out_edges]
        self.deg = np.array([len(o) for o in g.out_edges])
        self.max_depth = max_depth
        # express the start relative to the root: walk the geodesic root -> start
        seg = geodesic(g, TreePoint(root), start)
        word: list[int] = []
        e, s = -1, 0.0
        for f, a, b, _ in seg.pieces:
            if b >= float(g.length[f]) - 1e-15 and a <= 1e-15:
                word.append(f)
            else:
                e, s = f, b
        if e < 0:
            # start is a vertex: sit at offset 0 on the first edge out of it
            vt = int(g.terminus[word[-1]]) if word else self.root_type
            cand = [x for x in g.out_edges[vt] if not (word and x == (word[-1] ^ 1))]
            e, s = cand[0], 0.0
        self.W = np.zeros((n, max_depth), dtype=np.int64)
        self.depth = np.full(n, len(word), dtype=np.int64)
        if word:
            self.W[:, : len(word)] = word
        self.cum = np.full(n, float(sum(g.length[w] for w in word)))
        self.e = np.full(n, e, dtype=np.int64)
        self.s = np.full(n, s, dtype=float)
        self.touched = np.zeros(n, dtype=bool)
        self.counts: dict[int, np.ndarray] | None = None

    def take(self, keep: np.ndarray) -> None:
        for name in ("W", "depth", "cum", "e", "s", "touched"):
            setattr(self, name, getattr(self, name)[keep])

    def parent_type(self, idx: np.ndarray) -> np.ndarray:
        d = self.depth[idx]
        top = self.W[idx, np.maximum(d - 1, 0)]
        return np.where(d > 0, self.g.terminus[top], self.root_type)

    def _pick(self, vt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        deg = self.deg[vt]
        k = (rng.random(len(vt)) * deg).astype(np.int64)
        out = np.empty(len(vt), dtype=np.int64)
        for t in range(len(self.out)):
            sel = vt == t
            if not sel.any():
                continue
            out[sel] = self.out[t][k[sel]]
            if self.counts is not None:
                np.add.at(self.counts[int(t)], k[sel], 1)
        return out

    def at_parent(self, idx: np.ndarray, dist: np.ndarray, rng, root_hit: np.ndarray) -> None:
        """Paths ``idx`` sit at their parent vertex, then move ``dist`` along a uniform edge."""
        at_root = self.depth[idx] == 0
        root_hit[idx[at_root]] = True
        self.touched[idx] = True
        vt = self.parent_type(idx)
        pick = self._pick(vt, rng)
        d = self.depth[idx]
        top = self.W[idx, np.maximum(d - 1, 0)]
        up = (d > 0) & (pick == (top ^ 1))
        # go up: the parent edge becomes the current edge, measured from the grandparent
        iu = idx[up]
        tu = top[up]
        self.depth[iu] -= 1
        self.cum[iu] -= self.L[tu]
        self.e[iu] = tu
        self.s[iu] = self.L[tu] - dist[up]
        idn = idx[~up]
        self.e[idn] = pick[~up]
        self.s[idn] = dist[~up]

    def at_child(self, idx: np.ndarray, dist: np.ndarray, rng) -> None:
        e = self.e[idx]
        vt = self.g.terminus[e]
        self.touched[idx] = True
        pick = self._pick(vt, rng)
        back = pick == (e ^ 1)
        ib = idx[back]
        self.s[ib] = self.L[e[back]] - dist[back]
        ifw = idx[~back]
        d = self.depth[ifw]
        if np.any(d >= self.max_depth):
            raise ValidationError("path depth exceeded max_depth; raise McConfig.max_depth")
        self.W[ifw, d] = e[~back]
        self.depth[ifw] += 1
        self.cum[ifw] += self.L[e[~back]]
        self.e[ifw] = pick[~back]
        self.s[ifw] = dist[~back]

    def step(self, dx: np.ndarray, step: float, rng, root_hit: np.ndarray) -> None:
        s0 = self.s
        # a path sitting exactly at its parent vertex leaves along a uniform edge
        dx = np.where(s0 == 0.0, -np.abs(dx), dx)
        s1 = s0 + dx
        le = self.L[self.e]
        inside = (s1 >= 0) & (s1 <= le)
        # bridge touches of an end vertex while both endpoints stay on the edge
        u = rng.random(len(s0))
        p_par = np.exp(-np.maximum(s0, 0) * np.maximum(s1, 0) / step)
        p_chi = np.exp(-np.maximum(le - s0, 0) * np.maximum(le - s1, 0) / step)
        touch_par = inside & (u < p_par)
        touch_chi = inside & ~touch_par & (u < p_par + p_chi)
        self.s = np.where(inside, s1, self.s)
        idx = np.nonzero(touch_par)[0]
        if len(idx):
            self.at_parent(idx, s1[idx], rng, root_hit)
        idx = np.nonzero(touch_chi)[0]
        if len(idx):
            self.at_child(idx, le[idx] - s1[idx], rng)
        # crossings: propagate the excess until it is used up
        pend = np.nonzero(~inside)[0]
        excess = s1[pend]
        while len(pend):
            le_p = self.L[self.e[pend]]
            low = excess < 0
            high = excess > le_p
            ok = ~(low | high)
            self.s[pend[ok]] = excess[ok]
            il = pend[low]
            if len(il):
                self.at_parent(il, -excess[low], rng, root_hit)
            ih = pend[high]
            if len(ih):
                self.at_child(ih, excess[high] - le_p[high], rng)
            nxt = np.concatenate([il, ih])
            # after re-entry the stored offset may still lie outside its edge
            s_new = self.s[nxt]
            bad = (s_new < 0) | (s_new > self.L[self.e[nxt]])
            pend = nxt[bad]
            excess = s_new[bad]

    def distance(self) -> np.ndarray:
        return self.cum + self.s


@dataclass(eq=False)
class PathEnsemble:
    """Positions at the requested times plus visit statistics.

    ``words[i]`` is an ``(n_paths, max_depth)`` array with ``depths[i]``
    giving the used prefix: the parent vertex word relative to the base
    vertex; ``edges[i]`` and ``offsets[i]`` locate the path on the next
    edge.  ``occupation`` is the time spent on each undirected quotient
    edge and ``exit_counts[v]`` counts uniform edge choices at vertices
    of type ``v``.
    """

    times: np.ndarray
    words: list[np.ndarray]
    depths: list[np.ndarray]
    edges: list[np.ndarray]
    offsets: list[np.ndarray]
    occupation: np.ndarray
    exit_counts: dict[int, np.ndarray] = field(default_factory=dict)
    first_vertex_time: np.ndarray | None = None
    displacement_at: dict[float, np.ndarray] = field(default_factory=dict)

    def point(self, i: int, k: int, g: QuotientGraph) -> TreePoint:
        w = tuple(int(a) for a in self.words[i][k, : self.depths[i][k]])
        return g.point(w, int(self.edges[i][k]), float(self.offsets[i][k]))


def simulate_paths(
    g: QuotientGraph, x: TreePoint, cfg: McConfig, times: Sequence[float]
) -> PathEnsemble:
    """Simulate ``cfg.n_paths`` paths from ``x`` and record them at ``times``.

    Also records the signed displacement from ``x`` of each path at every
    requested time that comes before the path's first vertex visit (NaN
    afterwards), for one-dimensional scaling checks.
    """
    times = np.asarray(sorted(times), dtype=float)
    steps = np.rint(times / cfg.step).astype(int)
    nsteps = int(steps.max())
    words, depths, edges, offsets = [], [], [], []
    occ = np.zeros(g.n_edges // 2)
    exits = {v: np.zeros(len(g.out_edges[v]), dtype=np.int64) for v in range(len(g.vertices))}
    first_visit = []
    disp = {float(t): [] for t in times}
    sd = math.sqrt(2.0 * cfg.step)
    snaps = [[[] for _ in range(4)] for _ in times]
    n_blocks = (cfg.n_paths + BLOCK - 1) // BLOCK
    for b in range(n_blocks):
        n = min(BLOCK, cfg.n_paths - b * BLOCK)
        rng = _rng(cfg.seed, b)
        st = _State(g, (), x, n, cfg.max_depth)
        st.counts = exits
        hit = np.zeros(n, dtype=bool)
        s_start = st.s.copy()
        fv = np.full(n, np.inf)
        for k in range(1, nsteps + 1):
            st.step(rng.standard_normal(n) * sd, cfg.step, rng, hit)
            visited = st.touched
            fv[visited & np.isinf(fv)] = k * cfg.step
            np.add.at(occ, st.e // 2, cfg.step)
            j = np.nonzero(steps == k)[0]
            for i in j:
                snaps[i][0].append(st.W.copy())
                snaps[i][1].append(st.depth.copy())
                snaps[i][2].append(st.e.copy())
                snaps[i][3].append(st.s.copy())
                d = np.where(visited, np.nan, st.s - s_start)
                disp[float(times[i])].append(d)
        first_visit.append(fv)
    for i in range(len(times)):
        words.append(np.concatenate(snaps[i][0]))
        depths.append(np.concatenate(snaps[i][1]))
        edges.append(np.concatenate(snaps[i][2]))
        offsets.append(np.concatenate(snaps[i][3]))
    return PathEnsemble(
        steps * cfg.step,
        words,
        depths,
        edges,
        offsets,
        occ,
        exits,
        np.concatenate(first_visit),
        {t: np.concatenate(v) for t, v in disp.items()},
    )


def estimate_hitting_transform(
    g: QuotientGraph,
    x: TreePoint,
    y: TreePoint,
    lam: float,
    cfg: McConfig,
    depth_cap: float = 16.0,
) -> dict[str, Any]:
    """Monte Carlo ``E_x[1{t_y < T} exp(lam t_y)]`` for a vertex ``y``.

    Paths farther than ``depth_cap`` (in length) from ``y`` are stopped as
    non-hitting; their count is reported as ``capped``, together with
    ``unfinished`` paths still alive at the horizon.

    Raises
    ------
    VarianceExplosion
        The weighted second moment keeps growing over the last half of the
        horizon, the signature of ``lam`` too close to the bottom of the
        spectrum.
    """
    if y.edge is not None:
        raise ValidationError("hitting target must be a tree vertex")
    if x == y:
        return {"estimate": 1.0, "stderr": 0.0, "capped": 0, "unfinished": 0, "n_paths": cfg.n_paths}
    sd = math.sqrt(2.0 * cfg.step)
    nsteps = int(math.ceil(cfg.horizon / cfg.step))
    values = []
    half_second_moment = []
    capped = 0
    unfinished = 0
    n_blocks = (cfg.n_paths + BLOCK - 1) // BLOCK
    for b in range(n_blocks):
        n = min(BLOCK, cfg.n_paths - b * BLOCK)
        rng = _rng(cfg.seed, b)
        st = _State(g, y.anchor, x, n, cfg.max_depth)
        alive = np.arange(n)
        out = np.zeros(n)
        for k in range(1, nsteps + 1):
            hit = np.zeros(len(alive), dtype=bool)
            st.step(rng.standard_normal(len(alive)) * sd, cfg.step, rng, hit)
            t = k * cfg.step
            out[alive[hit]] = math.exp(lam * t)
            far = st.distance() > depth_cap
            capped += int((far & ~hit).sum())
            keep = ~(hit | far)
            if not keep.all():
                st.take(keep)
                alive = alive[keep]
            if k == nsteps // 2:
                half_second_moment.append(float(np.sum(out**2)))
            if len(alive) == 0:
                break
        unfinished += len(alive)
        values.append(out)
    v = np.concatenate(values)
    est = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(len(v)))
    m2_half = sum(half_second_moment) / len(v) if half_second_moment else float(np.mean(v**2))
    m2 = float(np.mean(v**2))
    if lam > 0 and m2 > 1.5 * m2_half and unfinished > 0.01 * len(v):
        raise VarianceExplosion("second moment still growing at the horizon")
    return {
        "estimate": est,
        "stderr": se,
        "capped": capped,
        "unfinished": unfinished,
        "n_paths": len(v),
        "cap_bias_note": "capped paths count as non-hitting",
    }


def _epan_cdf(r: np.ndarray | float, b: float) -> np.ndarray:
    """``int_0^r`` of the Epanechnikov kernel ``3/(4b)(1-(u/b)^2)`` on ``[0, b]``."""
    u = np.clip(np.asarray(r, float) / b, 0.0, 1.0)
    return 0.75 * (u - u**3 / 3.0)


def epanechnikov_mass(g: QuotientGraph, y: TreePoint, b: float) -> float:
    """Tree integral of ``K_b(d(., y))``; equals ``deg/2`` at a vertex."""
    if b > g.l_min:
        raise ValidationError("bandwidth must not exceed the shortest edge")
    if y.edge is None:
        return 0.5 * len(g.out_edges[g.end_type(y.anchor)])
    le = float(g.length[y.edge])
    s = y.offset
    dA = len(g.out_edges[int(g.origin[y.edge])])
    dB = len(g.out_edges[int(g.terminus[y.edge])])
    own = _epan_cdf(s, b) + _epan_cdf(le - s, b)
    extra = (dA - 1) * (0.5 - _epan_cdf(s, b)) + (dB - 1) * (0.5 - _epan_cdf(le - s, b))
    return float(own + extra)


def _distance_to(g: QuotientGraph, y: TreePoint, ens_word, depth, e, s) -> np.ndarray:
    """Vectorised ``d(X, y)`` for base-rooted positions."""
    ey = y.anchor + ((y.edge,) if y.edge is not None else ())
    ay = y.offset if y.edge is not None else (float(g.length[y.anchor[-1]]) if y.anchor else 0.0)
    L = g.length
    n = len(depth)
    # root path of X: W[:depth] + (e,), last offset s
    full = np.concatenate([ens_word, np.zeros((n, 1), dtype=np.int64)], axis=1)
    full[np.arange(n), depth] = e
    lenx = depth + 1
    cumx = np.concatenate([np.zeros((n, 1)), np.cumsum(L[full], axis=1)], axis=1)
    dx = cumx[np.arange(n), depth] + s
    ky = len(ey)
    dy = (sum(float(L[a]) for a in ey[:-1]) + ay) if ky else 0.0
    cumy = np.concatenate([[0.0], np.cumsum([float(L[a]) for a in ey])]) if ky else np.zeros(1)
    j = np.zeros(n, dtype=np.int64)
    match = np.ones(n, dtype=bool)
    for i in range(min(ky, full.shape[1])):
        match &= (lenx > i) & (full[:, i] == ey[i])
        j += match
    meet = np.empty(n)
    both_long = (j < lenx) & (j < ky)
    meet[both_long] = cumy[j[both_long]]
    jm = np.maximum(j - 1, 0)
    at_x = (j == lenx) & (j < ky)
    meet[at_x] = cumy[jm[at_x]] + s[at_x]
    at_y = (j == ky) & (j < lenx)
    meet[at_y] = cumy[jm[at_y]] + ay
    same = (j == lenx) & (j == ky)
    meet[same] = cumy[jm[same]] + np.minimum(s[same], ay)
    zero = j == 0
    meet[zero & ~both_long] = 0.0
    return np.maximum(dx + dy - 2.0 * meet, 0.0)


def estimate_density(
    g: QuotientGraph,
    x: TreePoint,
    y: TreePoint,
    t: float,
    cfg: McConfig,
    bandwidth: float,
    ensemble: PathEnsemble | None = None,
) -> dict[str, float]:
    """Kernel-density estimate of ``p(t, x, y)``.

    Epanechnikov kernel in the tree metric divided by its tree integral at
    ``y`` (the local-degree correction).  Pass ``ensemble`` to reuse
    simulated paths (it must contain time ``t``).
    """
    if bandwidth < 2.0 * math.sqrt(cfg.step):
        raise ValidationError("bandwidth must be at least 2 sqrt(step)")
    ens = ensemble or simulate_paths(g, x, cfg, [t])
    i = int(np.argmin(np.abs(ens.times - t)))
    if abs(ens.times[i] - t) > 0.5 * cfg.step:
        raise ValidationError("time not present in the ensemble")
    d = _distance_to(g, y, ens.words[i], ens.depths[i], ens.edges[i], ens.offsets[i])
    k = np.where(d < bandwidth, 0.75 / bandwidth * (1.0 - (d / bandwidth) ** 2), 0.0)
    k = k / epanechnikov_mass(g, y, bandwidth)
    return {"estimate": float(k.mean()), "stderr": float(k.std(ddof=1) / math.sqrt(len(k))), "n_paths": len(k)}


def strong_markov_splice(
    g: QuotientGraph,
    x: TreePoint,
    y: TreePoint,
    s: float,
    cfg: McConfig,
    depth_cap: float = 16.0,
) -> dict[str, Any]:
    """Compare the law of ``d(X, y)`` a time ``s`` after the first hit of
    the vertex ``y`` with the same statistic for fresh paths from ``y``.

    Each path from ``x`` carries its own clock started at its first visit
    to ``y``; paths that escape beyond ``depth_cap`` or outlive the horizon
    without hitting are discarded.  The two samples are compared with a
    two-sample Kolmogorov-Smirnov test.
    """
    if y.edge is not None:
        raise ValidationError("splice point must be a tree vertex")
    m = int(round(s / cfg.step))
    if m < 1:
        raise ValidationError("s must cover at least one step")
    sd = math.sqrt(2.0 * cfg.step)
    nsteps = int(math.ceil(cfg.horizon / cfg.step))
    spliced, fresh = [], []
    n_blocks = (cfg.n_paths + BLOCK - 1) // BLOCK
    for b in range(n_blocks):
        n = min(BLOCK, cfg.n_paths - b * BLOCK)
        rng = _rng(cfg.seed, b)
        st = _State(g, y.anchor, x, n, cfg.max_depth)
        clock = np.full(n, -1, dtype=np.int64)
        for k in range(1, nsteps + m + 1):
            hit = np.zeros(len(clock), dtype=bool)
            st.step(rng.standard_normal(len(clock)) * sd, cfg.step, rng, hit)
            clock[(clock < 0) & hit] = k
            done = (clock > 0) & (k - clock == m)
            if done.any():
                spliced.append(st.distance()[done])
            lost = (clock < 0) & ((st.distance() > depth_cap) | (k >= nsteps))
            keep = ~(done | lost)
            if not keep.all():
                st.take(keep)
                clock = clock[keep]
            if len(clock) == 0:
                break
        # fresh paths from y use an independent stream of the same block
        rng2 = _rng(cfg.seed ^ 0x5DEECE66D, b)
        st2 = _State(g, y.anchor, y, n, cfg.max_depth)
        dummy = np.zeros(n, dtype=bool)
        for _ in range(m):
            st2.step(rng2.standard_normal(n) * sd, cfg.step, rng2, dummy)
        fresh.append(st2.distance())
    a = np.concatenate(spliced) if spliced else np.zeros(0)
    f = np.concatenate(fresh)
    if len(a) < 2:
        raise ValidationError("too few paths reached y; raise n_paths or horizon")
    ks = stats.ks_2samp(a, f)
    return {
        "n_spliced": int(len(a)),
        "n_fresh": int(len(f)),
        "ks_statistic": float(ks.statistic),
        "p_value": float(ks.pvalue),
        "mean_spliced": float(a.mean()),
        "mean_fresh": float(f.mean()),
    }

"""Quotient metric graphs and the geometry of their universal-cover trees.

A tree vertex is addressed by the reduced (non-backtracking) word of
oriented quotient edges leading to it from the base lift.  Everything
here is exact combinatorics on those words plus floating-point sums of
edge lengths; no tree is ever materialised.

Oriented edge ids are ``2k`` (as listed, ``u -> v``) and ``2k + 1``
(reversed) for the k-th undirected edge of the configuration.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Union

import numpy as np

from .errors import (
    DanglingEndpoint,
    DegreeTooSmall,
    EqualBoundaryPoints,
    NonPositiveLength,
    ValidationError,
)

__all__ = [
    "QuotientGraph",
    "TreeVertex",
    "TreePoint",
    "BoundaryRay",
    "GeodesicSegment",
    "load_quotient_graph",
    "reference_graph",
    "parse_length",
    "tree_distance",
    "geodesic",
    "geodesic_point",
    "gromov_product",
    "busemann",
    "shadow_contains",
    "length_spectrum",
    "ray_vertex",
    "ball_edges",
    "random_vertex",
    "random_point",
    "random_ray",
    "extend_to_ray",
]

_NAMED_LENGTHS = {
    "sqrt2": math.sqrt(2.0),
    "sqrt3": math.sqrt(3.0),
    "golden": (1.0 + math.sqrt(5.0)) / 2.0,
}


def parse_length(value: Any) -> float:
    """Read an edge length from a config value.

    Accepts numbers, decimal strings and the names ``sqrt2``, ``sqrt3``
    and ``golden`` (expanded to 16 significant digits).
    """
    if isinstance(value, str):
        key = value.strip().lower()
        if key in _NAMED_LENGTHS:
            return float(f"{_NAMED_LENGTHS[key]:.16g}")
        try:
            return float(key)
        except ValueError as exc:
            raise ValidationError(f"unreadable length {value!r}") from exc
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"unreadable length {value!r}")
    return float(value)


@dataclass(frozen=True)
class TreeVertex:
    """Tree vertex: reduced edge word from the base lift (empty = base)."""

    word: tuple[int, ...] = ()


@dataclass(frozen=True)
class TreePoint:
    """Point of the tree.

    ``edge is None`` means the point is the vertex ``anchor``.  Otherwise
    the point lies at distance ``offset`` (strictly inside the edge) from
    ``anchor`` along the outgoing oriented edge ``edge``, and ``anchor`` is
    the endpoint nearer to the base lift.  Build instances through
    :meth:`QuotientGraph.point`, which canonicalises.
    """

    anchor: tuple[int, ...] = ()
    edge: int | None = None
    offset: float = 0.0

    @property
    def is_vertex(self) -> bool:
        return self.edge is None


@dataclass(frozen=True)
class BoundaryRay:
    """Boundary point given by the infinite reduced word
    ``prefix + preperiod + period + period + ...`` read from the base lift."""

    prefix: tuple[int, ...]
    preperiod: tuple[int, ...]
    period: tuple[int, ...]

    def letter(self, i: int) -> int:
        n0 = len(self.prefix)
        if i < n0:
            return self.prefix[i]
        i -= n0
        n1 = len(self.preperiod)
        if i < n1:
            return self.preperiod[i]
        return self.period[(i - n1) % len(self.period)]

    def word(self, n: int) -> tuple[int, ...]:
        return tuple(self.letter(i) for i in range(n))

    @property
    def transient_length(self) -> int:
        return len(self.prefix) + len(self.preperiod)


Point = TreePoint
Endpoint = Union[TreePoint, BoundaryRay]


@dataclass(frozen=True)
class GeodesicSegment:
    """Geodesic ``[start, end]``.

    ``pieces`` lists ``(f, a, b, origin)``: the segment runs along oriented
    edge ``f`` from distance ``a`` to ``b`` measured from the tree vertex
    ``origin`` (a word) at which that copy of ``f`` starts.
    """

    start: TreePoint
    end: TreePoint
    edge_word: tuple[int, ...]
    length: float
    pieces: tuple[tuple[int, float, float, tuple[int, ...]], ...] = field(repr=False)


@dataclass(frozen=True, eq=False)
class QuotientGraph:
    """Finite connected metric graph presenting the quotient of the tree."""

    vertices: tuple[str, ...]
    origin: np.ndarray
    terminus: np.ndarray
    length: np.ndarray
    labels: tuple[str, ...]
    base_vertex: str
    name: str = "graph"

    # ----- derived structure -------------------------------------------------
    @property
    def n_edges(self) -> int:
        return len(self.labels)

    @staticmethod
    def reverse(e: int) -> int:
        return e ^ 1

    @cached_property
    def reverse_ids(self) -> np.ndarray:
        return np.arange(self.n_edges) ^ 1

    @cached_property
    def vertex_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def base(self) -> int:
        return self.vertex_index[self.base_vertex]

    @cached_property
    def out_edges(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in self.vertices]
        for e in range(self.n_edges):
            out[int(self.origin[e])].append(e)
        return tuple(tuple(x) for x in out)

    @cached_property
    def in_edges(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in self.vertices]
        for e in range(self.n_edges):
            inc[int(self.terminus[e])].append(e)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def degree(self) -> np.ndarray:
        return np.array([len(o) for o in self.out_edges])

    @cached_property
    def l_min(self) -> float:
        return float(self.length.min())

    @cached_property
    def l_max(self) -> float:
        return float(self.length.max())

    @cached_property
    def successor_matrix(self) -> np.ndarray:
        """``A[e, f] = 1`` iff ``f`` may follow ``e`` in a reduced word."""
        n = self.n_edges
        a = np.zeros((n, n))
        for e in range(n):
            for f in self.out_edges[int(self.terminus[e])]:
                if f != (e ^ 1):
                    a[e, f] = 1.0
        return a

    @cached_property
    def _label_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.labels)}

    def to_config(self) -> dict[str, Any]:
        """Config document reproducing this graph (lengths as floats)."""
        edges = []
        for k in range(self.n_edges // 2):
            e = 2 * k
            edges.append(
                {
                    "u": self.vertices[int(self.origin[e])],
                    "v": self.vertices[int(self.terminus[e])],
                    "length": float(self.length[e]),
                    "name": self.labels[e],
                }
            )
        return {
            "name": self.name,
            "vertices": list(self.vertices),
            "edges": edges,
            "base_vertex": self.base_vertex,
        }

    def scaled(self, c: float) -> "QuotientGraph":
        """Same combinatorics, every length multiplied by ``c``."""
        return QuotientGraph(
            self.vertices,
            self.origin,
            self.terminus,
            self.length * float(c),
            self.labels,
            self.base_vertex,
            f"{self.name}*{c:g}",
        )

    # ----- words -------------------------------------------------------------
    def label(self, e: int) -> str:
        return self.labels[e]

    def format_word(self, word: Sequence[int]) -> str:
        return ".".join(self.labels[e] for e in word)

    def word(self, spec: str | Sequence[int | str]) -> tuple[int, ...]:
        """Parse ``"a.b'"``, ``["a", "b'"]`` or ``[0, 3]`` into edge ids."""
        if isinstance(spec, str):
            items: list[int | str] = [s for s in spec.replace(" ", ".").split(".") if s]
        else:
            items = list(spec)
        out = []
        for it in items:
            if isinstance(it, (int, np.integer)):
                if not 0 <= int(it) < self.n_edges:
                    raise ValidationError(f"no oriented edge {it}")
                out.append(int(it))
            else:
                try:
                    out.append(self._label_index[it])
                except KeyError as exc:
                    raise ValidationError(f"unknown edge label {it!r}") from exc
        return tuple(out)

    def end_type(self, word: Sequence[int]) -> int:
        """Quotient vertex under the tree vertex with this word."""
        return int(self.terminus[word[-1]]) if len(word) else self.base

    def check_word(self, word: Sequence[int]) -> None:
        v = self.base
        prev = -1
        for e in word:
            if int(self.origin[e]) != v:
                raise ValidationError(
                    f"word {self.format_word(word)} does not compose at {self.label(e)}"
                )
            if e == (prev ^ 1) and prev >= 0:
                raise ValidationError(f"word {self.format_word(word)} backtracks")
            v = int(self.terminus[e])
            prev = e

    @staticmethod
    def step(word: tuple[int, ...], e: int) -> tuple[int, ...]:
        """Tree vertex reached from ``word`` along oriented edge ``e``."""
        if word and word[-1] == (e ^ 1):
            return word[:-1]
        return word + (e,)

    def walk(self, word: tuple[int, ...], path: Iterable[int]) -> tuple[int, ...]:
        for e in path:
            if int(self.origin[e]) != self.end_type(word):
                raise ValidationError("path does not compose with the start vertex")
            word = self.step(word, e)
        return word

    # ----- constructors for points and rays ----------------------------------
    def vertex(self, word: str | Sequence[int | str] = ()) -> TreeVertex:
        w = self.word(word)
        self.check_word(w)
        return TreeVertex(w)

    def point(
        self,
        anchor: TreeVertex | str | Sequence[int | str] = (),
        edge: int | str | None = None,
        offset: float = 0.0,
    ) -> TreePoint:
        """Canonical tree point at ``offset`` along ``edge`` from ``anchor``."""
        w = anchor.word if isinstance(anchor, TreeVertex) else self.word(anchor)
        self.check_word(w)
        if edge is None:
            if offset != 0.0:
                raise ValidationError("offset given without an edge")
            return TreePoint(w)
        e = self.word([edge])[0] if isinstance(edge, str) else int(edge)
        if int(self.origin[e]) != self.end_type(w):
            raise ValidationError("edge does not start at the anchor vertex")
        le = float(self.length[e])
        offset = float(offset)
        if not -1e-12 <= offset <= le + 1e-12:
            raise ValidationError(f"offset {offset} outside [0, {le}]")
        if offset <= 0.0:
            return TreePoint(w)
        if offset >= le:
            return TreePoint(self.step(w, e))
        if w and w[-1] == (e ^ 1):
            return TreePoint(w[:-1], w[-1], le - offset)
        return TreePoint(w, e, offset)

    def ray(
        self,
        prefix: TreeVertex | str | Sequence[int | str],
        period: str | Sequence[int | str],
        preperiod: str | Sequence[int | str] = (),
    ) -> BoundaryRay:
        p = prefix.word if isinstance(prefix, TreeVertex) else self.word(prefix)
        per = self.word(period)
        pre = self.word(preperiod)
        if not per:
            raise ValidationError("empty period")
        r = BoundaryRay(p, pre, per)
        n = r.transient_length + 2 * len(per) + 1
        self.check_word(r.word(n))
        return r


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------
def load_quotient_graph(spec: dict[str, Any] | str | Path) -> QuotientGraph:
    """Validate a config document (dict, JSON text or path) into a graph.

    Raises
    ------
    DanglingEndpoint
        An edge names a vertex that is not declared.
    NonPositiveLength
        Some edge length is not strictly positive.
    DegreeTooSmall
        Some vertex has fewer than three outgoing oriented edges.
    """
    if isinstance(spec, Path) or (isinstance(spec, str) and not spec.lstrip().startswith("{")):
        spec = json.loads(Path(spec).read_text())
    elif isinstance(spec, str):
        spec = json.loads(spec)
    if not isinstance(spec, dict):
        raise ValidationError("graph config must be a JSON object")
    try:
        vertices = tuple(str(v) for v in spec["vertices"])
        raw_edges = list(spec["edges"])
    except (KeyError, TypeError) as exc:
        raise ValidationError("graph config needs 'vertices' and 'edges'") from exc
    if not vertices or len(set(vertices)) != len(vertices):
        raise ValidationError("vertex ids must be non-empty and distinct")
    base = str(spec.get("base_vertex", vertices[0]))
    if base not in vertices:
        raise DanglingEndpoint(f"base vertex {base!r} is not a vertex")
    index = {v: i for i, v in enumerate(vertices)}
    origin, terminus, length, labels = [], [], [], []
    for k, rec in enumerate(raw_edges):
        try:
            u, v = str(rec["u"]), str(rec["v"])
            ell = parse_length(rec["length"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"edge {k} needs u, v, length") from exc
        for end in (u, v):
            if end not in index:
                raise DanglingEndpoint(f"edge {k} uses undeclared vertex {end!r}")
        if not ell > 0.0 or not math.isfinite(ell):
            raise NonPositiveLength(f"edge {k} has length {ell}")
        name = str(rec.get("name", _default_name(k)))
        origin += [index[u], index[v]]
        terminus += [index[v], index[u]]
        length += [ell, ell]
        labels += [name, name + "'"]
    if len(set(labels)) != len(labels):
        raise ValidationError("edge names must be distinct")
    g = QuotientGraph(
        vertices,
        np.array(origin, dtype=np.int64),
        np.array(terminus, dtype=np.int64),
        np.array(length, dtype=float),
        tuple(labels),
        base,
        str(spec.get("name", "graph")),
    )
    for i, d in enumerate(g.degree):
        if d < 3:
            raise DegreeTooSmall(f"vertex {vertices[i]!r} has degree {d}")
    _check_connected(g)
    return g


def _default_name(k: int) -> str:
    return "abcdefghijklmnopqrstuvwxyz"[k] if k < 26 else f"e{k}"


def _check_connected(g: QuotientGraph) -> None:
    seen = {g.base}
    stack = [g.base]
    while stack:
        v = stack.pop()
        for e in g.out_edges[v]:
            w = int(g.terminus[e])
            if w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != len(g.vertices):
        raise ValidationError("quotient graph is not connected")


def reference_graph(name: str) -> QuotientGraph:
    """Bundled configs: ``theta_unit`` and ``theta_dio``."""
    try:
        text = resources.files("treelab.data").joinpath(f"{name}.json").read_text()
    except FileNotFoundError as exc:
        raise ValidationError(f"no reference graph {name!r}") from exc
    return load_quotient_graph(json.loads(text))


# ---------------------------------------------------------------------------
# metric geometry
# ---------------------------------------------------------------------------
def _root_path(g: QuotientGraph, p: TreePoint) -> tuple[tuple[int, ...], float]:
    """Edges of ``[base, p]`` and how far along the last one ``p`` sits."""
    if p.edge is None:
        w = p.anchor
        return w, (float(g.length[w[-1]]) if w else 0.0)
    return p.anchor + (p.edge,), float(p.offset)


def _prefix_sum(g: QuotientGraph, word: Sequence[int], n: int) -> float:
    return float(sum(g.length[e] for e in word[:n]))


def _common(a: Sequence[int], b: Sequence[int]) -> int:
    j = 0
    for x, y in zip(a, b):
        if x != y:
            break
        j += 1
    return j


def tree_distance(g: QuotientGraph, x: TreePoint, y: TreePoint) -> float:
    """Path-metric distance between two tree points."""
    ex, ax = _root_path(g, x)
    ey, ay = _root_path(g, y)
    j = _common(ex, ey)
    dx = _prefix_sum(g, ex, len(ex) - 1) + ax if ex else 0.0
    dy = _prefix_sum(g, ey, len(ey) - 1) + ay if ey else 0.0
    if j < len(ex) and j < len(ey):
        meet = _prefix_sum(g, ex, j)
    elif j == 0:
        meet = 0.0
    elif j == len(ex) and j == len(ey):
        meet = _prefix_sum(g, ex, j - 1) + min(ax, ay)
    elif j == len(ex):
        meet = _prefix_sum(g, ex, j - 1) + ax
    else:
        meet = _prefix_sum(g, ey, j - 1) + ay
    return max(dx + dy - 2.0 * meet, 0.0)


def geodesic(g: QuotientGraph, x: TreePoint, y: TreePoint) -> GeodesicSegment:
    """The unique geodesic from ``x`` to ``y`` with its edge pieces."""
    ex, ax = _root_path(g, x)
    ey, ay = _root_path(g, y)
    j = _common(ex, ey)
    L = g.length
    pieces: list[tuple[int, float, float, tuple[int, ...]]] = []

    def up(stop: int) -> None:
        # climb x's root path from its end down to edge index `stop`
        for i in range(len(ex) - 1, stop - 1, -1):
            li = float(L[ex[i]])
            ai = ax if i == len(ex) - 1 else li
            if ai > 0.0:
                pieces.append((ex[i] ^ 1, li - ai, li, ex[: i + 1]))

    def down(start: int) -> None:
        for i in range(start, len(ey)):
            li = float(L[ey[i]])
            ai = ay if i == len(ey) - 1 else li
            if ai > 0.0:
                pieces.append((ey[i], 0.0, ai, ey[:i]))

    if j < len(ex) and j < len(ey):
        up(j)
        down(j)
    elif j == len(ex) and j == len(ey):
        if j > 0 and ax != ay:
            e = ex[-1]
            le = float(L[e])
            if ax < ay:
                pieces.append((e, ax, ay, ex[:-1]))
            else:
                pieces.append((e ^ 1, le - ax, le - ay, ex))
    elif j == len(ex):
        if j > 0:
            le = float(L[ey[j - 1]])
            if ax < le:
                pieces.append((ey[j - 1], ax, le, ey[: j - 1]))
        down(j)
    else:
        up(j)
        if j > 0:
            le = float(L[ex[j - 1]])
            if ay < le:
                pieces.append((ex[j - 1] ^ 1, 0.0, le - ay, ex[:j]))
    length = float(sum(b - a for _, a, b, _ in pieces))
    return GeodesicSegment(x, y, tuple(p[0] for p in pieces), length, tuple(pieces))


def geodesic_point(g: QuotientGraph, seg: GeodesicSegment, s: float) -> TreePoint:
    """Point of ``seg`` at distance ``s`` from its start."""
    if s <= 0.0:
        return seg.start
    acc = 0.0
    for f, a, b, org in seg.pieces:
        if s <= acc + (b - a):
            return g.point(org, f, a + (s - acc))
        acc += b - a
    return seg.end


def ray_vertex(g: QuotientGraph, ray: BoundaryRay, n: int) -> TreePoint:
    """Vertex reached after ``n`` letters of the ray's word."""
    return TreePoint(ray.word(n))


def _rays_equal_upto(r1: BoundaryRay, r2: BoundaryRay) -> int | None:
    """Length of the common prefix, or ``None`` when the rays coincide."""
    bound = max(r1.transient_length, r2.transient_length) + math.lcm(
        len(r1.period), len(r2.period)
    )
    for i in range(bound):
        if r1.letter(i) != r2.letter(i):
            return i
    return None


def _depth_hint(g: QuotientGraph, *objs: Endpoint) -> int:
    d = 0
    for o in objs:
        if isinstance(o, BoundaryRay):
            d = max(d, o.transient_length)
        else:
            d = max(d, len(_root_path(g, o)[0]))
    return d


def _realise(g: QuotientGraph, o: Endpoint, depth: int) -> TreePoint:
    return ray_vertex(g, o, depth) if isinstance(o, BoundaryRay) else o


def gromov_product(g: QuotientGraph, x: TreePoint, p: Endpoint, q: Endpoint) -> float:
    """``(p|q)_x``; with boundary arguments this is ``d(x, [p, q])``.

    Raises
    ------
    EqualBoundaryPoints
        Both arguments are the same boundary point.
    """
    depth = _depth_hint(g, x, p, q) + 2
    if isinstance(p, BoundaryRay) and isinstance(q, BoundaryRay):
        j = _rays_equal_upto(p, q)
        if j is None:
            raise EqualBoundaryPoints("(xi|xi) is infinite")
        depth = max(depth, j + 2)
    pp, qq = _realise(g, p, depth), _realise(g, q, depth)
    val = 0.5 * (tree_distance(g, x, pp) + tree_distance(g, x, qq) - tree_distance(g, pp, qq))
    return max(val, 0.0)


def busemann(g: QuotientGraph, xi: BoundaryRay, x: TreePoint, y: TreePoint) -> float:
    """``beta_xi(x, y) = lim d(x, z) - d(y, z)`` as ``z -> xi`` (exact)."""
    z = ray_vertex(g, xi, _depth_hint(g, xi, x, y) + 2)
    return tree_distance(g, x, z) - tree_distance(g, y, z)


def shadow_contains(g: QuotientGraph, x: TreePoint, y: TreePoint, xi: BoundaryRay) -> bool:
    """Whether the ray from ``x`` to ``xi`` passes through ``y``."""
    if x == y:
        raise ValidationError("shadow of a point seen from itself")
    z = ray_vertex(g, xi, _depth_hint(g, xi, x, y) + 2)
    dxy = tree_distance(g, x, y)
    gap = tree_distance(g, x, y) + tree_distance(g, y, z) - tree_distance(g, x, z)
    return gap <= 1e-9 * max(1.0, dxy)


# ---------------------------------------------------------------------------
# enumeration helpers
# ---------------------------------------------------------------------------
def ball_edges(
    g: QuotientGraph, center: tuple[int, ...], radius: float
) -> list[tuple[tuple[int, ...], int, float]]:
    """Tree edges whose endpoint nearer to ``center`` lies at distance < ``radius``.

    Returns ``(near vertex word, outward edge id, distance of near vertex)``
    in breadth-first order.
    """
    out = []
    frontier = [(center, -1, 0.0)]
    while frontier:
        nxt = []
        for word, came, dist in frontier:
            if dist >= radius:
                continue
            for e in g.out_edges[g.end_type(word)]:
                if came >= 0 and e == (came ^ 1):
                    continue
                out.append((word, e, dist))
                nxt.append((g.step(word, e), e, dist + float(g.length[e])))
        frontier = nxt
    return out


def _closed_words(g: QuotientGraph, max_len: int) -> Iterator[tuple[int, ...]]:
    """All cyclically reduced closed reduced words of length <= ``max_len``."""
    for e0 in range(g.n_edges):
        stack = [(e0,)]
        while stack:
            w = stack.pop()
            last = w[-1]
            if int(g.terminus[last]) == int(g.origin[e0]) and e0 != (last ^ 1):
                yield w
            if len(w) < max_len:
                for f in g.out_edges[int(g.terminus[last])]:
                    if f != (last ^ 1):
                        stack.append(w + (f,))


def _canonical_rotation(w: tuple[int, ...]) -> tuple[int, ...]:
    return min(w[i:] + w[:i] for i in range(len(w)))


def _is_primitive(w: tuple[int, ...]) -> bool:
    n = len(w)
    return all(w != w[d:] + w[:d] for d in range(1, n) if n % d == 0)


def length_spectrum(
    g: QuotientGraph, max_word_length: int, beta: float = 2.0, qmax: int = 10_000
) -> dict[str, Any]:
    """Closed-geodesic lengths and commensurability evidence.

    Returns
    -------
    dict
        ``cycles``: list of (word label string, translation length) for
        primitive conjugacy classes up to rotation; ``flag``: ``"lattice"``
        when every length ratio is rational with denominator <= ``qmax``
        (then ``generator`` is the positive generator of the group they
        span) and ``"dense"`` otherwise; ``diophantine_min``: minimum over
        incommensurable pairs and convergents ``p/q`` with ``q <= qmax`` of
        ``q**beta * |l1/l2 - p/q|``.  This is evidence only.
    """
    if max_word_length < 2:
        raise ValidationError("max_word_length must be >= 2")
    seen: dict[tuple[int, ...], float] = {}
    for w in _closed_words(g, max_word_length):
        if not _is_primitive(w):
            continue
        c = _canonical_rotation(w)
        if c not in seen:
            seen[c] = float(sum(g.length[e] for e in c))
    cycles = sorted(seen.items(), key=lambda kv: (len(kv[0]), kv[0]))
    lengths = sorted({round(v, 12) for v in seen.values()})
    ref = lengths[0]
    fracs = []
    rational = True
    for ell in lengths:
        r = ell / ref
        fr = Fraction(r).limit_denominator(qmax)
        if abs(r - fr.numerator / fr.denominator) > 1e-10 * r:
            rational = False
            break
        fracs.append(fr)
    result: dict[str, Any] = {
        "cycles": [(g.format_word(w), ell) for w, ell in cycles],
        "flag": "lattice" if rational else "dense",
    }
    if rational:
        den = math.lcm(*[f.denominator for f in fracs])
        num = math.gcd(*[f.numerator * (den // f.denominator) for f in fracs])
        result["generator"] = ref * num / den
    best = math.inf
    for i, l1 in enumerate(lengths):
        for l2 in lengths[i + 1 :]:
            r = l2 / l1
            fr = Fraction(r).limit_denominator(qmax)
            if abs(r - fr.numerator / fr.denominator) <= 1e-10 * r:
                continue
            for p, q in _convergents(r, qmax):
                best = min(best, q**beta * abs(r - p / q))
    result["diophantine_min"] = best
    result["beta"] = beta
    return result


def _convergents(x: float, qmax: int) -> Iterator[tuple[int, int]]:
    h0, h1, k0, k1 = 0, 1, 1, 0
    y = x
    for _ in range(64):
        a = math.floor(y)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > qmax:
            return
        yield h1, k1
        frac = y - a
        if frac < 1e-15:
            return
        y = 1.0 / frac


# ---------------------------------------------------------------------------
# sampling and boundary extension
# ---------------------------------------------------------------------------
def random_vertex(g: QuotientGraph, rng: np.random.Generator, max_depth: int) -> TreeVertex:
    n = int(rng.integers(0, max_depth + 1))
    w: tuple[int, ...] = ()
    for _ in range(n):
        choices = [e for e in g.out_edges[g.end_type(w)] if not (w and e == (w[-1] ^ 1))]
        w = w + (int(rng.choice(choices)),)
    return TreeVertex(w)


def random_point(g: QuotientGraph, rng: np.random.Generator, max_depth: int) -> TreePoint:
    """Random vertex (probability 1/2) or interior point near depth ``max_depth``."""
    v = random_vertex(g, rng, max_depth)
    if rng.random() < 0.5:
        return TreePoint(v.word)
    e = int(rng.choice(g.out_edges[g.end_type(v.word)]))
    s = float(rng.uniform(0.05, 0.95)) * float(g.length[e])
    return g.point(v, e, s)


def _cycle_table(g: QuotientGraph, max_len: int = 8) -> list[tuple[int, ...]]:
    ws = [w for w in _closed_words(g, max_len) if _is_primitive(w)]
    return sorted(set(ws), key=lambda w: (len(w), w))


def extend_to_ray(g: QuotientGraph, word: Sequence[int], cyclic_if_possible: bool = False) -> BoundaryRay:
    """Deterministic eventually periodic ray starting with the reduced ``word``.

    If ``cyclic_if_possible`` and ``word`` is itself a cyclically reduced
    closed word starting at the base vertex, it is repeated; otherwise the
    first (shortest, then lexicographic) admissible cycle is appended.
    """
    w = tuple(word)
    g.check_word(w)
    if (
        cyclic_if_possible
        and w
        and int(g.terminus[w[-1]]) == int(g.origin[w[0]])
        and w[0] != (w[-1] ^ 1)
    ):
        return BoundaryRay((), (), w)
    for c in _cycle_table(g):
        if int(g.origin[c[0]]) != g.end_type(w):
            continue
        if w and c[0] == (w[-1] ^ 1):
            continue
        return BoundaryRay(w, (), c)
    raise ValidationError("no admissible periodic extension found")


def random_ray(g: QuotientGraph, rng: np.random.Generator, depth: int) -> BoundaryRay:
    """Ray whose first ``depth`` letters are uniform, then a random cycle."""
    w: tuple[int, ...] = ()
    for _ in range(depth):
        choices = [e for e in g.out_edges[g.end_type(w)] if not (w and e == (w[-1] ^ 1))]
        w = w + (int(rng.choice(choices)),)
    table = _cycle_table(g, 6)
    ok = [
        c
        for c in table
        if int(g.origin[c[0]]) == g.end_type(w) and not (w and c[0] == (w[-1] ^ 1))
    ]
    if not ok:
        return extend_to_ray(g, w)
    c = ok[int(rng.integers(len(ok)))]
    return BoundaryRay(w, (), c)

"""Tauberian constants and local-limit fits.

Near the bottom of the spectrum the lambda-derivative of the Green
function blows up like ``L / sqrt(lambda_0 - lambda)``.  If the heat
kernel satisfies ``p(t) ~ C t^{-3/2} e^{-lambda_0 t}`` the two constants
are tied by ``L = C sqrt(pi)``, which is what the reports compare.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import FitRejected, ValidationError, WindowContaminated
from .graph_core import QuotientGraph, TreePoint, length_spectrum
from .resolvent import WeylTable, bottom_table, green_jet, solve_weyl
from .thermo import delta_lambda

__all__ = [
    "FitReport",
    "TauberianFit",
    "tauberian_limit",
    "LltFit",
    "llt_fit",
    "lattice_contrast",
    "oscillation_report",
    "scaled_curve",
    "spectrum_flags",
    "build_report",
    "direct_limit",
]

CONSTANT_NOTE = (
    "the Tauberian constant and the heat-kernel constant are chained assuming "
    "the two normalising constants of the flow integral are the same quantity"
)


def spectrum_flags(g: QuotientGraph, max_word_length: int = 6, threshold: float = 1e-2) -> dict:
    """Lattice / dense / Diophantine flags from :func:`length_spectrum`.

    ``diophantine`` means the length-ratio evidence stays above
    ``threshold`` (with exponent 2) over all convergents examined.
    """
    spec = length_spectrum(g, max_word_length)
    dense = spec["flag"] == "dense"
    dmin = float(spec["diophantine_min"])
    return {
        "flag": spec["flag"],
        "lattice": not dense,
        "dense": dense,
        "diophantine": bool(dense and math.isfinite(dmin) and dmin > threshold),
        "diophantine_min": dmin,
    }


def _r2(y: np.ndarray, pred: np.ndarray) -> float:
    ss = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else 1.0


# ---------------------------------------------------------------------------
# Tauberian limit
# ---------------------------------------------------------------------------
@dataclass
class TauberianFit:
    lambda0: float
    gaps: list[float]
    d1: list[float]
    d2: list[float]
    slope: float
    intercept: float
    r2: float
    L_fit: float
    L_halves: tuple[float, float]
    second_ratio: float
    L_direct: float

    @property
    def half_spread(self) -> float:
        a, b = self.L_halves
        return abs(a - b) / self.L_fit


def _line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    b, a = np.polyfit(x, y, 1)
    return float(b), float(a), _r2(y, a + b * x)


def tauberian_limit(
    g: QuotientGraph,
    x: TreePoint,
    y: TreePoint,
    gaps: Sequence[float] | None = None,
    W0: WeylTable | None = None,
    min_r2: float = 0.99,
) -> TauberianFit:
    """Regress ``1 / (dG/dlambda)^2`` on ``lambda_0 - lambda``.

    Parameters
    ----------
    gaps : sequence of float, optional
        Values of ``lambda_0 - lambda``; default 16 log-spaced points in
        ``[1e-3, min(0.1, lambda_0)]``.
    W0 : WeylTable, optional
        Table at the bottom of the spectrum (from :func:`bottom_table`).

    Raises
    ------
    FitRejected
        ``R^2`` below ``min_r2``.
    """
    W0 = W0 or bottom_table(g)
    lam0 = W0.lam
    if gaps is None:
        gaps = np.geomspace(1e-3, min(0.1, lam0), 16)
    gaps = np.asarray(sorted(gaps), float)
    if len(gaps) < 12:
        raise ValidationError("need at least 12 grid points")
    if gaps.min() < 1e-3 - 1e-15 or gaps.max() > 0.1 + 1e-15 or gaps.max() > lam0:
        raise ValidationError("gaps must lie in [1e-3, min(0.1, lambda_0)]")
    d1, d2 = [], []
    for gap in gaps:
        W = solve_weyl(g, lam0 - gap).require()
        j = green_jet(W, x, y)
        d1.append(float(j.d1))
        d2.append(float(j.d2))
    d1a, d2a = np.array(d1), np.array(d2)
    yv = 1.0 / d1a**2
    slope, icpt, r2 = _line(gaps, yv)
    if r2 < min_r2:
        raise FitRejected(f"R^2={r2:.4f} below {min_r2}")
    h = len(gaps) // 2
    La = 1.0 / math.sqrt(_line(gaps[:h], yv[:h])[0])
    Lb = 1.0 / math.sqrt(_line(gaps[h:], yv[h:])[0])
    L = 1.0 / math.sqrt(slope)
    # the second derivative limit is half the first-derivative one
    second = float(gaps[0] ** 1.5 * d2a[0]) / (0.5 * L)
    return TauberianFit(
        lam0, gaps.tolist(), d1, d2, slope, icpt, r2, L, (La, Lb), second, direct_limit(g, x, y, W0)
    )


def direct_limit(g: QuotientGraph, x: TreePoint, y: TreePoint, W0: WeylTable | None = None) -> float:
    """``lim sqrt(gap) dG/dlambda`` from gaps ``1e-6`` and ``1e-8``.

    The leading correction is linear in ``sqrt(gap)``, which one
    Richardson step removes.
    """
    W0 = W0 or bottom_table(g)
    g1, g2 = 1e-6, 1e-8
    v1 = math.sqrt(g1) * float(green_jet(solve_weyl(g, W0.lam - g1).require(), x, y).d1)
    v2 = math.sqrt(g2) * float(green_jet(solve_weyl(g, W0.lam - g2).require(), x, y).d1)
    r1, r2 = math.sqrt(g1), math.sqrt(g2)
    return v2 + (v2 - v1) * r2 / (r1 - r2)


# ---------------------------------------------------------------------------
# local limit fit
# ---------------------------------------------------------------------------
@dataclass
class LltFit:
    window: tuple[float, float]
    alpha_fit: float
    logC_free: float
    r2_free: float
    C_fit: float
    r2_pinned: float
    residual_rms: float
    decreasing: bool


def llt_fit(
    t: np.ndarray,
    p: np.ndarray,
    lambda0: float,
    window: tuple[float, float],
    tail: np.ndarray | None = None,
) -> LltFit:
    """Least squares of ``log p + lambda_0 t`` against ``log C - alpha log t``.

    ``tail`` optionally bounds the truncation error of ``p`` pointwise.

    Raises
    ------
    WindowContaminated
        The window leaves the sampled range or the truncation tail exceeds
        one percent of the signal inside it.
    """
    t = np.asarray(t, float)
    p = np.asarray(p, float)
    lo, hi = window
    if lo < t.min() - 1e-9 or hi > t.max() + 1e-9 or not lo < hi:
        raise WindowContaminated(f"window {window} outside the sampled range")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if tail is not None and np.any(np.asarray(tail)[sel] >= 0.01 * p[sel]):
        raise WindowContaminated("truncation tail above 1% of the signal")
    if np.any(p[sel] <= 0):
        raise WindowContaminated("non-positive heat values in the window")
    ts = t[sel]
    yv = np.log(p[sel]) + lambda0 * ts
    A = np.c_[np.ones_like(ts), -np.log(ts)]
    (logc, alpha), *_ = np.linalg.lstsq(A, yv, rcond=None)
    r2f = _r2(yv, A @ np.array([logc, alpha]))
    pinned = yv + 1.5 * np.log(ts)
    logc_p = float(pinned.mean())
    r2p = _r2(yv, logc_p - 1.5 * np.log(ts))
    return LltFit(
        (float(lo), float(hi)),
        float(alpha),
        float(logc),
        r2f,
        math.exp(logc_p),
        r2p,
        float(np.sqrt(np.mean((pinned - logc_p) ** 2))),
        bool(np.all(np.diff(yv) < 0)),
    )


def scaled_curve(t: np.ndarray, p: np.ndarray, lambda0: float) -> np.ndarray:
    """``t^{3/2} e^{lambda_0 t} p``."""
    t = np.asarray(t, float)
    return t**1.5 * np.exp(lambda0 * t) * np.asarray(p, float)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------
@dataclass
class FitReport:
    graph: str
    lambda0_used: float
    delta_at_lambda0: float
    alpha_fit: float
    C_fit: float
    L_fit: float
    predicted_C: float
    C_relative_error: float
    L_direct: float
    tauberian_r2: float
    llt_r2_free: float
    llt_r2_pinned: float
    window: tuple[float, float]
    tauberian_gaps: tuple[float, float]
    spectrum_flags: dict
    llt_label: bool
    acceptance_grade: bool
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def build_report(
    g: QuotientGraph,
    x: TreePoint,
    y: TreePoint,
    t: np.ndarray,
    p: np.ndarray,
    window: tuple[float, float],
    W0: WeylTable | None = None,
    tail: np.ndarray | None = None,
) -> FitReport:
    """Chain the Tauberian and heat-kernel constants for one pair ``(x, y)``.

    Refuses the local-limit label when the length spectrum is a lattice or
    not Diophantine, and checks ``delta(lambda_0) = 0`` first.
    """
    W0 = W0 or bottom_table(g)
    d0 = delta_lambda(W0)
    if abs(d0) > 5e-3:
        raise FitRejected(f"critical exponent at the bottom is {d0}, expected 0")
    tb = tauberian_limit(g, x, y, W0=W0, min_r2=0.0)
    ll = llt_fit(t, p, W0.lam, window, tail)
    flags = spectrum_flags(g)
    label = bool(flags["dense"] and flags["diophantine"])
    pred = tb.L_fit / math.sqrt(math.pi)
    notes = [CONSTANT_NOTE]
    if not label:
        notes.append("length spectrum is not dense and Diophantine: fit is not a local limit verification")
    return FitReport(
        g.name,
        W0.lam,
        d0,
        ll.alpha_fit,
        ll.C_fit,
        tb.L_fit,
        pred,
        abs(ll.C_fit / pred - 1.0),
        tb.L_direct,
        tb.r2,
        ll.r2_free,
        ll.r2_pinned,
        ll.window,
        (min(tb.gaps), max(tb.gaps)),
        flags,
        label,
        bool(tb.r2 >= 0.99 and ll.r2_free >= 0.99),
        notes,
    )


# ---------------------------------------------------------------------------
# lattice versus dense
# ---------------------------------------------------------------------------
def oscillation_report(t: np.ndarray, q: np.ndarray, degree: int = 2) -> dict:
    """Residual of ``q`` about a smooth trend in ``log t``.

    ``t`` must be uniformly spaced.  Returns the residual amplitude
    relative to the mean and the period of the strongest periodogram line.
    """
    t = np.asarray(t, float)
    q = np.asarray(q, float)
    lt = np.log(t)
    coef = np.polyfit(lt, q, degree)
    resid = q - np.polyval(coef, lt)
    freqs, power = signal.periodogram(resid, fs=1.0 / float(t[1] - t[0]))
    k = int(np.argmax(power[1:])) + 1
    return {
        "amplitude": float(np.max(np.abs(resid)) / np.mean(q)),
        "period": float(1.0 / freqs[k]) if freqs[k] > 0 else math.inf,
        "mean": float(np.mean(q)),
    }


def lattice_contrast(
    graphs: Sequence[QuotientGraph],
    window: tuple[float, float] = (20.0, 60.0),
    radius: float = 4.0,
    h: float = 0.02,
    dt: float = 0.01,
) -> list[dict]:
    """Side-by-side oscillation analysis of ``t^{3/2} e^{lambda_0 t} p(t, x, x)``.

    Every graph is solved with the same transparent-ball settings and the
    base vertex as ``x``.
    """
    from .heat_kernel import build_ball, heat_solve

    settings = {"radius": radius, "h": h, "dt": dt, "boundary": "transparent", "window": list(window)}
    out = []
    for g in graphs:
        W0 = bottom_table(g)
        x = TreePoint(())
        ball = build_ball(g, radius, h=h, boundary="transparent")
        f = heat_solve(ball, x, [window[1]], dt=dt, probes=[x])
        t = f.probe_times
        sel = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
        q = scaled_curve(t[sel], f.probe_values[sel, 0], W0.lam)
        rep = oscillation_report(t[sel], q)
        flags = spectrum_flags(g)
        rep.update(graph=g.name, lambda0=W0.lam, flags=flags, settings=dict(settings))
        out.append(rep)
    return out

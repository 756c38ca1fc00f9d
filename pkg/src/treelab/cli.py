"""Command-line pipelines.

Every subcommand reads one JSON configuration, writes its reports into the
output directory and embeds the configuration hash and package version.
Exit codes: 0 success, 1 numerical check failed, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .errors import NumericalError, TreelabError, ValidationError
from .graph_core import QuotientGraph, TreePoint, load_quotient_graph, reference_graph

EXIT_OK, EXIT_NUMERIC, EXIT_INVALID = 0, 1, 2

DEFAULTS: dict[str, dict[str, Any]] = {
    "spectrum": {"radius": 20.0, "h": 0.02, "tolerance": 2e-3},
    "green": {"x": "", "y": "", "lambdas": [0.0]},
    "pressure": {"n_lambda": 8, "k": 6},
    "measures": {"samples": 200, "cylinders": 50, "cylinder_length": 5, "shadow_depth": 8, "schedule_j": 8},
    "llt": {"x": "", "y": "", "window": [20.0, 60.0], "radius": 4.0, "h": 0.02, "dt": 0.01},
    "mc": {"x": "", "y": "", "lambda": 0.0, "paths": 100000, "step": 0.01, "time": 1.0, "bandwidth": 0.2, "depth_cap": 16.0},
    "diagnostics": {"samples": 200, "max_word_length": 6},
}

SAFE_RANGES: dict[str, tuple[float, float]] = {
    "radius": (1.0, 40.0),
    "h": (1e-4, 0.5),
    "dt": (1e-4, 0.05),
    "k": (2, 10),
    "n_lambda": (2, 200),
    "paths": (10, 10_000_000),
    "step": (1e-5, 0.1),
    "samples": (1, 100_000),
}


# ---------------------------------------------------------------------------
# deterministic output
# ---------------------------------------------------------------------------
def _fmt(x: Any) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v) or math.isinf(v):
            return json.dumps(str(v))
        return "%.17g" % v
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        items = sorted((str(k), v) for k, v in x.items())
        return "{" + ",".join(json.dumps(k) + ":" + _fmt(v) for k, v in items) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, 17 significant digits, no whitespace."""
    return _fmt(obj) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([("%.17g" % v) if isinstance(v, (float, np.floating)) else v for v in r])


class Cache:
    """Content-addressed store of ``.npz`` arrays; safe to delete."""

    def __init__(self, root: Path) -> None:
        self.root = root

    def _path(self, key: dict) -> Path:
        return self.root / f"{config_hash(key)}.npz"

    def get(self, key: dict) -> dict[str, np.ndarray] | None:
        p = self._path(key)
        if not p.exists():
            return None
        with np.load(p) as z:
            return {k: z[k] for k in z.files}

    def put(self, key: dict, **arrays: np.ndarray) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        np.savez(self._path(key), **arrays)

    def fetch(self, key: dict, compute: Callable[[], dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
        hit = self.get(key)
        if hit is None:
            hit = compute()
            self.put(key, **hit)
        return hit


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def _load_graph(spec: Any) -> QuotientGraph:
    if isinstance(spec, str) and not spec.strip().startswith("{") and not Path(spec).exists():
        return reference_graph(spec)
    return load_quotient_graph(spec)


def parse_point(g: QuotientGraph, spec: Any) -> TreePoint:
    """``"a.b'"`` (vertex) or ``{"word": ..., "edge": ..., "offset": ...}``."""
    if isinstance(spec, dict):
        return g.point(g.word(spec.get("word", "")), spec.get("edge"), float(spec.get("offset", 0.0)))
    return g.point(g.word(spec))


def _check_ranges(section: dict) -> None:
    for k, v in section.items():
        if k in SAFE_RANGES and isinstance(v, (int, float)):
            lo, hi = SAFE_RANGES[k]
            if not lo <= v <= hi:
                raise ValidationError(f"{k}={v} outside the safe range [{lo}, {hi}]")


def resolve_config(path: str | None, command: str, seed: int | None) -> tuple[dict, QuotientGraph]:
    raw: dict = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    g = _load_graph(raw.get("graph", "theta_unit"))
    section = dict(DEFAULTS[command])
    section.update(raw.get(command, {}))
    _check_ranges(section)
    cfg = {
        "command": command,
        "graph": g.to_config(),
        "graph_name": g.name,
        "params": section,
        "seed": int(raw.get("seed", 0) if seed is None else seed),
    }
    return cfg, g


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def cmd_spectrum(cfg: dict, g: QuotientGraph, out: Path, cache: Cache) -> tuple[dict, bool]:
    from .heat_kernel import lambda0_spectral
    from .resolvent import lambda0_resolvent

    p = cfg["params"]
    lr = lambda0_resolvent(g)
    key = {"op": "lambda0_spectral", "graph": cfg["graph"], "radius": p["radius"], "h": p["h"]}
    hit = cache.fetch(
        key,
        lambda: {k: np.asarray(v, float) for k, v in lambda0_spectral(g, p["radius"], p["h"]).items() if k != "monotone"},
    )
    ls = float(hit["estimate"])
    ok = abs(lr - ls) <= p["tolerance"]
    rep = {
        "lambda0_resolvent": lr,
        "lambda0_spectral": ls,
        "spectral_radii": hit["radii"].tolist(),
        "spectral_values": hit["values"].tolist(),
        "agreement": abs(lr - ls),
        "tolerance": p["tolerance"],
        "pass": ok,
    }
    return rep, ok


def cmd_green(cfg: dict, g: QuotientGraph, out: Path, cache: Cache) -> tuple[dict, bool]:
    from .resolvent import green_jet, solve_weyl

    p = cfg["params"]
    x, y = parse_point(g, p["x"]), parse_point(g, p["y"])
    rows = []
    for lam in p["lambdas"]:
        j = green_jet(solve_weyl(g, float(lam)).require(), x, y)
        rows.append([float(lam), float(j.value), float(j.d1), float(j.d2)])
    write_csv(out / "green.csv", ["lambda", "G", "dG", "d2G"], rows)
    return {"rows": rows}, True


def cmd_pressure(cfg: dict, g: QuotientGraph, out: Path, cache: Cache) -> tuple[dict, bool]:
    from .resolvent import bottom_table, solve_weyl
    from .thermo import delta_lambda, potential_grid, pressure_root

    p = cfg["params"]
    W0 = bottom_table(g)
    lams = np.linspace(0.0, W0.lam, int(p["n_lambda"]))
    rows = []
    for i, lam in enumerate(lams):
        W = W0 if i == len(lams) - 1 else solve_weyl(g, float(lam)).require()
        grid = potential_grid(W, int(p["k"]))
        rows.append([float(W.lam), delta_lambda(W), pressure_root(grid), grid.band])
    write_csv(out / "pressure.csv", ["lambda", "delta", "s_star", "band"], rows)
    deltas = [r[1] for r in rows]
    agree = all(abs(r[1] - r[2]) <= max(1e-3, r[3]) for r in rows)
    nonpos = all(d <= 1e-12 for d in deltas)
    mono = all(b >= a - 1e-12 for a, b in zip(deltas, deltas[1:]))
    bottom = abs(deltas[-1]) <= 5e-3
    ok = agree and nonpos and mono and bottom
    rep = {
        "rows": rows,
        "agreement": agree,
        "non_positive": nonpos,
        "monotone": mono,
        "zero_at_bottom": bottom,
        "verdict": "PASS" if ok else "FAIL",
    }
    return rep, ok


def cmd_measures(cfg: dict, g: QuotientGraph, out: Path, cache: Cache) -> tuple[dict, bool]:
    from .graph_core import random_vertex, tree_distance
    from .measures import conformality_check, gibbs_ratio, ps_density, shadow_lemma_ratio
    from .resolvent import bottom_table, solve_weyl
    from .thermo import CylinderSet, build_coding

    p = cfg["params"]
    rng = np.random.default_rng(cfg["seed"])
    W0 = bottom_table(g)
    x = TreePoint(())
    table, conf, gibbs = [], [], []
    cs = build_coding(g)
    words = cs.words(int(p["cylinder_length"]))
    picks = rng.choice(len(words), size=min(int(p["cylinders"]), len(words)), replace=False)
    for lam in (0.0, 0.5 * W0.lam, W0.lam):
        W = W0 if lam == W0.lam else solve_weyl(g, lam).require()
        mu = ps_density(W)
        for _ in range(int(p["samples"])):
            y = TreePoint(random_vertex(g, rng, 8).word)
            d = tree_distance(g, x, y)
            if 2.0 <= d <= 8.0:
                table.append([W.lam, g.format_word(y.anchor), d, shadow_lemma_ratio(mu, x, y)])
        w = _deep_vertex(g, int(p["shadow_depth"]))
        yv = TreePoint(w.anchor[:2])
        rep = conformality_check(W, x, yv, w, schedule=(int(p["schedule_j"]), None))
        conf.append({"lambda": W.lam, "factor": rep["factor"], "rows": rep["rows"]})
        for i in picks:
            gibbs.append([W.lam, g.format_word(words[i]), gibbs_ratio(W, CylinderSet(words[i]), mu)])
    write_csv(out / "shadow_ratios.csv", ["lambda", "y", "distance", "ratio"], table)
    write_csv(out / "gibbs_ratios.csv", ["lambda", "word", "ratio"], gibbs)
    ratios = np.array([r[3] for r in table])
    C = float(max(ratios.max(), 1.0 / ratios.min()))
    gr = np.array([r[2] for r in gibbs])
    Cg = float(max(gr.max(), 1.0 / gr.min()))
    dev = max(r["rows"][0]["deviation"] for r in conf)
    ok = dev < 0.1 and np.isfinite(C) and np.isfinite(Cg)
    return {"shadow_C": C, "gibbs_C": Cg, "conformality": conf, "max_conformality_deviation": dev}, bool(ok)


def _deep_vertex(g: QuotientGraph, depth: int) -> TreePoint:
    from .graph_core import extend_to_ray

    return TreePoint(extend_to_ray(g, ()).word(depth))


def cmd_llt(cfg: dict, g: QuotientGraph, out: Path, cache: Cache) -> tuple[dict, bool]:
    from .asymptotics import build_report, scaled_curve
    from .heat_kernel import build_ball, heat_solve
    from .resolvent import bottom_table

    p = cfg["params"]
    x, y = parse_point(g, p["x"]), parse_point(g, p["y"])
    window = (float(p["window"][0]), float(p["window"][1]))
    key = {
        "op": "heat_probe",
        "graph": cfg["graph"],
        "x": p["x"],
        "y": p["y"],
        "radius": p["radius"],
        "h": p["h"],
        "dt": p["dt"],
        "T": window[1],
    }

    def run() -> dict[str, np.ndarray]:
        ball = build_ball(g, float(p["radius"]), h=float(p["h"]), center=x, boundary="transparent")
        f = heat_solve(ball, x, [window[1]], dt=float(p["dt"]), probes=[y])
        return {"t": f.probe_times, "p": f.probe_values[:, 0]}

    series = cache.fetch(key, run)
    W0 = bottom_table(g)
    rep = build_report(g, x, y, series["t"][1:], series["p"][1:], window, W0=W0)
    t, pv = series["t"][1:], series["p"][1:]
    write_csv(out / "llt_curve.csv", ["t", "p", "scaled"], list(zip(t, pv, scaled_curve(t, pv, W0.lam))))
    d = rep.to_dict()
    d["label"] = "local limit verification" if rep.llt_label else "not a local limit verification (lattice or non-Diophantine spectrum)"
    ok = rep.acceptance_grade and 1.35 <= rep.alpha_fit <= 1.65 and rep.C_relative_error <= 0.2
    return d, bool(ok)


def cmd_mc(cfg: dict, g: QuotientGraph, out: Path, cache: Cache) -> tuple[dict, bool]:
    from .brownian_mc import McConfig, estimate_density, estimate_hitting_transform
    from .resolvent import heat_kernel_talbot, hitting_transform, solve_weyl

    p = cfg["params"]
    x, y = parse_point(g, p["x"]), parse_point(g, p["y"])
    mc = McConfig(step=float(p["step"]), n_paths=int(p["paths"]), seed=cfg["seed"])
    lam = float(p["lambda"])
    W = solve_weyl(g, lam).require()
    rep: dict[str, Any] = {}
    ok = True
    if y.is_vertex and y != x:
        hit = estimate_hitting_transform(g, x, y, lam, mc, depth_cap=float(p["depth_cap"]))
        ref = hitting_transform(W, x, y)
        z = abs(hit["estimate"] - ref) / hit["stderr"]
        rep["hitting"] = {**hit, "reference": ref, "z": z}
        ok &= z <= 3.0
    t = float(p["time"])
    dcfg = McConfig(step=min(float(p["step"]), 1e-3), n_paths=int(p["paths"]), seed=cfg["seed"], horizon=t)
    den = estimate_density(g, x, y, t, dcfg, float(p["bandwidth"]))
    ref_p = float(heat_kernel_talbot(g, x, y, np.array([t]))[0])
    zd = abs(den["estimate"] - ref_p) / den["stderr"]
    rep["density"] = {**den, "reference": ref_p, "z": zd}
    ok &= zd <= 3.0
    return rep, bool(ok)


def cmd_diagnostics(cfg: dict, g: QuotientGraph, out: Path, cache: Cache) -> tuple[dict, bool]:
    from .asymptotics import spectrum_flags
    from .resolvent import ancona_diagnostics, bottom_table, solve_weyl

    p = cfg["params"]
    W0 = bottom_table(g)
    rows = []
    for lam in (0.0, 0.5 * W0.lam, W0.lam):
        W = W0 if lam == W0.lam else solve_weyl(g, lam).require()
        d = ancona_diagnostics(W, samples=int(p["samples"]), seed=cfg["seed"])
        rows.append({"lambda": W.lam, **d})
    Cs = [r["C_ancona"] for r in rows]
    ok = max(Cs) / min(Cs) <= 2.0
    return {"spectrum": spectrum_flags(g, int(p["max_word_length"])), "ancona": rows}, bool(ok)


COMMANDS: dict[str, Callable[[dict, QuotientGraph, Path, Cache], tuple[dict, bool]]] = {
    "spectrum": cmd_spectrum,
    "green": cmd_green,
    "pressure": cmd_pressure,
    "measures": cmd_measures,
    "llt": cmd_llt,
    "mc": cmd_mc,
    "diagnostics": cmd_diagnostics,
}


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treelab", description="Spectral and stochastic experiments on metric trees.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--out", default="treelab_out", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="BLAS thread count")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, g = resolve_config(args.config, args.command, args.seed)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cache = Cache(out / "cache")
    h = config_hash(cfg)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            report, ok = COMMANDS[args.command](cfg, g, out, cache)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, TreelabError) as exc:
        report, ok = {"error": type(exc).__name__, "message": str(exc)}, False
    doc = {"command": args.command, "config_hash": h, "version": __version__, "threads": args.threads, "report": _jsonable(report), "ok": bool(ok)}
    text = dumps(doc)
    (out / f"{args.command}.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Compare three estimates of the bottom of the spectrum on both reference graphs."""

from __future__ import annotations

import math

from treelab import TreePoint, lambda0_resolvent, reference_graph
from treelab.heat_kernel import build_ball, decay_fit, heat_solve, lambda0_spectral


def main() -> None:
    for name in ("theta_unit", "theta_dio"):
        g = reference_graph(name)
        lr = lambda0_resolvent(g)
        ls = lambda0_spectral(g, 20.0, 0.02)["estimate"]
        ball = build_ball(g, 4.0, h=0.02, boundary="transparent")
        f = heat_solve(ball, TreePoint(()), [200.0], dt=0.02, probes=[TreePoint(())])
        t, p = f.series(TreePoint(()))
        sel = t >= 60.0
        lh = decay_fit(t[sel], p[sel])["lam"]
        print(f"{name:10s} resolvent {lr:.6f}  ball eigenvalue {ls:.6f}  heat slope {lh:.6f}")
    print(f"closed form for theta_unit: {math.acos(2 * math.sqrt(2) / 3) ** 2:.6f}")


if __name__ == "__main__":
    main()

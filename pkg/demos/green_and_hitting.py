"""Green function, hitting transform and a Monte Carlo cross-check."""

from __future__ import annotations

from treelab import TreePoint, green, hitting_transform, reference_graph, solve_weyl
from treelab.brownian_mc import McConfig, estimate_hitting_transform
from treelab.resolvent import bottom_table


def main() -> None:
    g = reference_graph("theta_dio")
    x, y = TreePoint(()), TreePoint(g.word("a b'"))
    lam = 0.5 * bottom_table(g).lam
    W = solve_weyl(g, lam).require()
    print(f"lambda = {lam:.5f}: G(x,y) = {green(W, x, y):.6f}, Phi(x,y) = {hitting_transform(W, x, y):.6f}")
    mc = estimate_hitting_transform(g, x, y, lam, McConfig(step=1e-2, n_paths=20_000, seed=1, horizon=200.0))
    print(f"Monte Carlo Phi = {mc['estimate']:.4f} +- {mc['stderr']:.4f}")


if __name__ == "__main__":
    main()

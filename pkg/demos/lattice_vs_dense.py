"""Rescaled heat kernel on a lattice and a dense length spectrum, side by side."""

from __future__ import annotations

from treelab import reference_graph
from treelab.asymptotics import lattice_contrast


def main() -> None:
    for rep in lattice_contrast([reference_graph("theta_unit"), reference_graph("theta_dio")]):
        print(
            f"{rep['graph']:10s} flag {rep['flags']['flag']:8s} mean {rep['mean']:.4f} "
            f"residual amplitude {rep['amplitude']:.2%} period {rep['period']:.2f}"
        )


if __name__ == "__main__":
    main()

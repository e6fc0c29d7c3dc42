#!/usr/bin/env python3
"""Regenerate data/fixture.csv, the synthetic 23-row indicator panel used by
the pipeline tests and the README walkthrough.

The panel mimics the shape of a global WDI extract: one row per year
(2000-2022), an FFPI-like target, and 104 indicator columns driven by a
handful of latent factors so that clustering has structure to find.
"""
import csv
import pathlib

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent
YEARS = list(range(2000, 2023))


def main() -> None:
    codes = []
    with open(ROOT / "data" / "indicator_dictionary.csv", newline="") as f:
        for row in csv.DictReader(f):
            if row["code"] not in ("year", "FFPI"):
                codes.append(row["code"])
    codes.append("AG.LND.AGRI.ZS")
    assert len(codes) == 104

    rng = np.random.default_rng(42)
    n = len(YEARS)
    t = np.linspace(0.0, 1.0, n)
    factors = np.stack(
        [
            t,                                   # secular growth
            np.sin(2.0 * np.pi * t * 1.5),       # commodity cycle
            (t - 0.5) ** 2,                      # curvature
            rng.standard_normal(n).cumsum() / 3, # random walk
            np.log1p(5.0 * t),                   # saturating
            rng.standard_normal(n),              # idiosyncratic
        ]
    )

    values = np.empty((n, len(codes)))
    for j in range(len(codes)):
        k = j % factors.shape[0]
        scale = 10.0 ** rng.uniform(-1, 3)
        offset = scale * rng.uniform(2, 10)
        sign = 1.0 if rng.uniform() < 0.7 else -1.0
        noise = rng.uniform(0.02, 0.4)
        values[:, j] = offset + scale * (sign * factors[k] + noise * rng.standard_normal(n))

    ffpi = (
        70.0
        + 45.0 * factors[0]
        + 18.0 * factors[1]
        + 6.0 * factors[3]
        + 3.0 * rng.standard_normal(n)
    )

    missing = rng.uniform(size=values.shape) < 0.02
    with open(ROOT / "data" / "fixture.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["year", "FFPI", *codes])
        for i, year in enumerate(YEARS):
            cells = [".." if missing[i, j] else f"{values[i, j]:.6g}" for j in range(len(codes))]
            w.writerow([year, f"{ffpi[i]:.4f}", *cells])


if __name__ == "__main__":
    main()

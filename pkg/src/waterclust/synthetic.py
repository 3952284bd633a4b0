"""Synthetic colonia-like table with planted clusters.

Two subsets (public water service Y / N), each made of two tight groups that
differ on most attributes, plus three noisy rows that filtering must drop.
The bundled ``fixtures/synthetic_colonias.csv`` is ``write_synthetic_csv``
output for the default seed.
"""

from __future__ import annotations

import csv
from importlib import resources

import numpy as np

from waterclust.data import SURVEY_ATTRIBUTES

HEADER = ["ID", "Name", "State", "County", "Latitude", "Longitude"] + [
    name for name, _ in SURVEY_ATTRIBUTES
]

# group -> (size, categorical answers, population range, ratio centres)
# ratio order: without water, without wastewater, with water, with wastewater.
# Groups inside a subset have equal, small sizes: the median similarity then
# falls well inside the cross-group pairs, which keeps damping 0.5 from
# oscillating. Centres sit off the [0, 1] bounds to avoid duplicate records.
GROUPS = {
    "A": (10, dict(source="Public utility", hauled="N", wells="N", public="Y",
                   adequacy="Y", hazard="N", sewer="Y"),
          (420, 470), (0.02, 0.02, 0.98, 0.98)),
    "B": (10, dict(source="Utility and private wells", hauled="N", wells="Y", public="Y",
                   adequacy="N", hazard="N", sewer="N"),
          (100, 140), (0.08, 0.95, 0.92, 0.05)),
    "C": (10, dict(source="Hauled water", hauled="Y", wells="N", public="N",
                   adequacy="N", hazard="Y", sewer="N"),
          (60, 120), (0.97, 0.97, 0.03, 0.03)),
    "D": (10, dict(source="Private wells", hauled="N", wells="Y", public="N",
                   adequacy="Partial", hazard="N", sewer="Y"),
          (250, 300), (0.97, 0.1, 0.03, 0.9)),
}
STATES = (("Arizona", "Pima"), ("California", "Imperial"), ("New Mexico", "Dona Ana"),
          ("Texas", "Hidalgo"), ("Texas", "El Paso"))


def _ratio(rng, centre, jitter=0.04):
    r = centre + rng.uniform(-jitter, jitter)
    return min(1.0, max(0.0, r))


def make_synthetic_rows(seed=0) -> list:
    """Rows (lists of strings, without header) plus their planted group letter."""
    rng = np.random.default_rng(seed)
    rows = []
    n = 0
    for group, (size, cat, (p_lo, p_hi), centres) in GROUPS.items():
        for _ in range(size):
            n += 1
            state, county = STATES[int(rng.integers(len(STATES)))]
            pop = int(rng.integers(p_lo, p_hi + 1))
            counts = [int(round(_ratio(rng, c) * pop)) for c in centres]
            lat = 31.0 + rng.uniform(0, 2.5)
            lon = -116.0 + rng.uniform(0, 18.0)
            rows.append((group, [
                f"C{n:04d}", f"Colonia {n}", state, county, f"{lat:.5f}", f"{lon:.5f}",
                cat["source"], cat["hauled"], cat["wells"], cat["public"],
                cat["adequacy"], cat["hazard"], cat["sewer"], str(pop),
                *(str(c) for c in counts),
            ]))
    base = rows[0][1]
    noisy = [
        ("noise", [*base[:6], *base[6:13], "100", "0", "0", "120", "100"]),
        ("noise", [*base[:6], *base[6:13], "0", "0", "0", "0", "0"]),
        ("noise", [*base[:6], base[6], "", *base[8:13], "200", "0", "0", "200", "200"]),
    ]
    for g, row in noisy:
        n += 1
        row[0], row[1] = f"C{n:04d}", f"Colonia {n}"
        rows.append((g, row))
    return rows


def write_synthetic_csv(path, seed=0):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for _, row in make_synthetic_rows(seed):
            w.writerow(row)
    return path


def planted_groups(seed=0) -> dict:
    """Record id -> planted group letter (``"noise"`` for the filtered rows)."""
    return {row[0]: g for g, row in make_synthetic_rows(seed)}


def fixture_path():
    return resources.files("waterclust").joinpath("fixtures/synthetic_colonias.csv")

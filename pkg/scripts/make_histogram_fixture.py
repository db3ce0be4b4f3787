#!/usr/bin/env python3
"""Build fixtures/truth_histogram.json: a 474-image ground-truth distribution.

The bin counts are hand-constructed to the target shape of a real
crowd-sourced hail corpus: 474 samples, diameters 2 to 11 cm on a 0.5 cm
grid, mean near 4.17 cm, inter-quartile range 3 to 5 cm, and 77.4 % close-up
images with the distant minority concentrated at small diameters. The script
re-derives the summary statistics with independent one-pass arithmetic and
refuses to write a fixture that violates any target.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

# diameter_cm -> (total, distant); close_up = total - distant
BIN_COUNTS = {
    2.0: (30, 22),
    2.5: (48, 30),
    3.0: (72, 28),
    3.5: (60, 12),
    4.0: (72, 8),
    4.5: (56, 4),
    5.0: (50, 2),
    5.5: (20, 1),
    6.0: (16, 0),
    6.5: (14, 0),
    7.0: (12, 0),
    7.5: (6, 0),
    8.0: (6, 0),
    8.5: (4, 0),
    9.0: (3, 0),
    9.5: (2, 0),
    10.0: (1, 0),
    10.5: (1, 0),
    11.0: (1, 0),
}

TARGET_N = 474
TARGET_MEAN = 4.17
MEAN_TOLERANCE = 0.05
TARGET_CLOSE_UP = 0.774
CLOSE_UP_TOLERANCE = 0.005


def expand() -> list[float]:
    values: list[float] = []
    for diameter, (total, _) in sorted(BIN_COUNTS.items()):
        values.extend([diameter] * total)
    return values


def one_pass_stats(values: list[float]) -> tuple[float, float]:
    total = 0.0
    total_sq = 0.0
    for v in values:
        total += v
        total_sq += v * v
    mean = total / len(values)
    return mean, math.sqrt(total_sq / len(values) - mean * mean)


def quartile(sorted_values: list[float], q: float) -> float:
    pos = q * (len(sorted_values) - 1)
    lower = math.floor(pos)
    upper = math.ceil(pos)
    frac = pos - lower
    return sorted_values[lower] * (1 - frac) + sorted_values[upper] * frac


def main() -> None:
    values = expand()
    n = len(values)
    assert n == TARGET_N, f"n={n}"
    assert min(values) == 2.0 and max(values) == 11.0
    assert all((v * 2) == int(v * 2) for v in values), "off the 0.5 cm grid"
    for diameter, (total, distant) in BIN_COUNTS.items():
        assert 0 <= distant <= total, f"bad split at {diameter}"
    mean, std = one_pass_stats(values)
    assert abs(mean - TARGET_MEAN) <= MEAN_TOLERANCE, f"mean={mean:.4f}"
    close_up = sum(total - distant for total, distant in BIN_COUNTS.values())
    fraction = close_up / n
    assert abs(fraction - TARGET_CLOSE_UP) <= CLOSE_UP_TOLERANCE, f"close_up={fraction:.4f}"
    values.sort()
    q1, q3 = quartile(values, 0.25), quartile(values, 0.75)
    assert (q1, q3) == (3.0, 5.0), f"IQR=({q1}, {q3})"

    fixture = {
        "n": n,
        "bins": [
            {
                "diameter_cm": diameter,
                "close_up": total - distant,
                "distant": distant,
            }
            for diameter, (total, distant) in sorted(BIN_COUNTS.items())
        ],
    }
    out = Path(__file__).resolve().parents[1] / "fixtures" / "truth_histogram.json"
    out.write_text(json.dumps(fixture, indent=2) + "\n", encoding="utf-8")
    print(
        f"wrote {out}: n={n} mean={mean:.4f} std={std:.4f} "
        f"IQR=({q1}, {q3}) close_up={fraction:.4f}"
    )


if __name__ == "__main__":
    main()

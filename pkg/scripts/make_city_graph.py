"""Regenerate the bundled synthetic city road graph.

A 10 x 10 block grid with 300 m spacing, jittered intersections, a few
one-way streets and two diagonal avenues.  Output is deterministic.

    python scripts/make_city_graph.py > src/evcharge/data/synthetic_city.graph
"""

from __future__ import annotations

import math

import numpy as np

SIZE = 10
SPACING = 300.0


def main() -> None:
    rng = np.random.default_rng(2024)
    pos = {}
    for r in range(SIZE):
        for c in range(SIZE):
            jx, jy = rng.uniform(-60, 60, 2)
            pos[f"n{r}{c}"] = (c * SPACING + jx, r * SPACING + jy)

    def length(a: str, b: str, detour: float) -> float:
        (x1, y1), (x2, y2) = pos[a], pos[b]
        return round(math.hypot(x2 - x1, y2 - y1) * detour, 1)

    lines = ["# synthetic city: 100 intersections, lengths in metres", "# N id x y / E from to length [D = one-way]"]
    lines += [f"N {k} {x:.1f} {y:.1f}" for k, (x, y) in pos.items()]
    for r in range(SIZE):
        for c in range(SIZE):
            a = f"n{r}{c}"
            if c + 1 < SIZE:
                b = f"n{r}{c + 1}"
                # rows 3 and 6 are one-way streets, alternating direction
                if r in (3, 6):
                    src, dst = (a, b) if r == 3 else (b, a)
                    lines.append(f"E {src} {dst} {length(src, dst, 1.05)} D")
                else:
                    lines.append(f"E {a} {b} {length(a, b, rng.uniform(1.0, 1.2))}")
            if r + 1 < SIZE:
                b = f"n{r + 1}{c}"
                lines.append(f"E {a} {b} {length(a, b, rng.uniform(1.0, 1.2))}")
    # two diagonal avenues
    for k in range(SIZE - 1):
        a, b = f"n{k}{k}", f"n{k + 1}{k + 1}"
        lines.append(f"E {a} {b} {length(a, b, 1.0)}")
        a, b = f"n{k}{SIZE - 1 - k}", f"n{k + 1}{SIZE - 2 - k}"
        lines.append(f"E {a} {b} {length(a, b, 1.0)}")
    print("\n".join(lines))


if __name__ == "__main__":
    main()

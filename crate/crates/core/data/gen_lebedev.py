"""Regenerate the embedded Lebedev tables (requires scipy >= 1.15).

Each output line is `x y z w` with weights summing to 4*pi.
"""
from scipy.integrate import lebedev_rule

RULES = {3: 6, 5: 14, 7: 26, 11: 50, 17: 110, 89: 2702}

for degree, points in RULES.items():
    xyz, w = lebedev_rule(degree)
    assert xyz.shape[1] == points
    with open(f"lebedev_{points:04d}.txt", "w", newline="\n") as f:
        f.write(f"# Lebedev rule, degree {degree}, {points} points: x y z weight\n")
        for (x, y, z), wi in zip(xyz.T, w):
            f.write(f"{float(x)!r} {float(y)!r} {float(z)!r} {float(wi)!r}\n")

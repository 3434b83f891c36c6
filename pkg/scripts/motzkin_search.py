"""Multiplier search on perturbed Motzkin forms.

For f = M + eps * (x1^2 + x2^2 + x3^2)^3 and g = x1^2 + x2^2 + x3^2, prints
the minimal r with f * g**r strictly SOS together with the full trace.

    python3 scripts/motzkin_search.py [eps ...]
"""
import sys
from fractions import Fraction

from sosmult.forms import motzkin, sphere_power
from sosmult.multiplier import find_min_r


def main(argv):
    epsilons = [Fraction(e) for e in argv] or [Fraction(1, 100), Fraction(1, 1000)]
    g = sphere_power(3, 1)
    for eps in epsilons:
        f = motzkin() + sphere_power(3, 3, eps)
        res = find_min_r(f, g, "strict", r_max=6)
        print(f"eps = {eps}: r_star = {res.r_star}, rank at r_star = {res.rank_at_r_star}/{res.basis_size}")
        for entry in res.trace:
            margin = "n/a" if entry.margin is None else f"{entry.margin:+.6f}"
            print(f"  r = {entry.r}: {entry.status.value:<18} margin {margin}  ({entry.seconds:.2f}s)")


if __name__ == "__main__":
    main(sys.argv[1:])

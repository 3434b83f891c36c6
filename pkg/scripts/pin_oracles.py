"""Independent oracle runs (cvxpy + Clarabel) used to freeze golden values.

Self-contained: polynomial expansion is done with sympy and the Gram SDP is
assembled here, so nothing from the package under test is reused.

    python scripts/pin_oracles.py
"""
import itertools

import cvxpy as cp
import numpy as np
import sympy as sp


def monomials(n, d):
    out = [e for e in itertools.product(range(d + 1), repeat=n) if sum(e) == d]
    return sorted(out, reverse=True)


def margin(expr, xs, d):
    """max t s.t. expr = m^T G m, G - t I psd."""
    poly = sp.Poly(sp.expand(expr), *xs)
    coeffs = {tuple(m): float(c) for m, c in zip(poly.monoms(), poly.coeffs())}
    basis = monomials(len(xs), d)
    s = len(basis)
    G = cp.Variable((s, s), symmetric=True)
    t = cp.Variable()
    rows = {}
    for i in range(s):
        for j in range(s):
            key = tuple(a + b for a, b in zip(basis[i], basis[j]))
            rows.setdefault(key, []).append((i, j))
    cons = [G - t * np.eye(s) >> 0]
    for key, pairs in rows.items():
        cons.append(sum(G[i, j] for i, j in pairs) == coeffs.get(key, 0.0))
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def main():
    x1, x2, x3 = sp.symbols("x1 x2 x3")
    motzkin = x1**4 * x2**2 + x1**2 * x2**4 + x3**6 - 3 * x1**2 * x2**2 * x3**2
    sphere = x1**2 + x2**2 + x3**2
    print("margin x1^4+x2^4          :", margin(x1**4 + x2**4, [x1, x2], 2))
    print("margin (x1^2+x2^2)^2      :", margin((x1**2 + x2**2) ** 2, [x1, x2], 2))
    print("margin (x1 x2)^2          :", margin((x1 * x2) ** 2, [x1, x2], 2))
    print("margin Motzkin            :", margin(motzkin, [x1, x2, x3], 3))
    f = motzkin + sp.Rational(1, 100) * sphere**3
    for r in range(3):
        print(f"margin (M + s^3/100) s^{r}   :",
              margin(f * sphere**r, [x1, x2, x3], 3 + r))
    h = (x1 * x2) ** 2 + sp.Rational(1, 10) * (x1**2 + x2**2) ** 2
    print("margin (x1x2)^2+(s^2)/10  :", margin(h, [x1, x2], 2))


if __name__ == "__main__":
    main()

"""Independent reference implementations used only by the tests.

Nothing here imports the package's numerics: expansions go through sympy and
SDPs through cvxpy with the Clarabel solver.
"""
from __future__ import annotations

import itertools

import cvxpy as cp
import numpy as np
import sympy as sp

# Frozen before the package was built (scripts/pin_oracles.py, Clarabel).
GOLDEN_MARGINS = {
    "x1^4+x2^4": 2 / 3,
    "(x1^2+x2^2)^2": 1.0,
    "x1^2*x2^2": 0.0,
    "motzkin": -0.006988557,
    "motzkin+s3/100": 0.0074220673,
    "(motzkin+s3/100)*s": 0.0099999996,
    "(x1x2)^2+(x1^2+x2^2)^2/10": 0.1,
    "motzkin+s3/1000": -0.0054023,
    "(motzkin+s3/1000)*s": 0.000999999,
}
GOLDEN_R_STAR = {
    ("motzkin+s3/100", "strict"): 0,
    ("motzkin+s3/100", "sos"): 0,
    ("motzkin+s3/1000", "strict"): 1,
}


def symbols(n):
    return sp.symbols(" ".join(f"x{i + 1}" for i in range(n)) + ("," if n == 1 else ""))


def to_sympy(form):
    xs = symbols(form.n)
    return sum((sp.Rational(c.numerator, c.denominator) if hasattr(c, "denominator") else c)
               * sp.Mul(*[x ** k for x, k in zip(xs, e)]) for e, c in form.terms.items()) + sp.Integer(0)


def coefficients(expr, n):
    """Exponent tuple -> sympy Rational, via sympy's own expansion."""
    xs = symbols(n)
    if expr == 0:
        return {}
    poly = sp.Poly(sp.expand(expr), *xs)
    return {tuple(m): c for m, c in zip(poly.monoms(), poly.coeffs()) if c != 0}


def _monomials(n, d):
    return sorted((e for e in itertools.product(range(d + 1), repeat=n) if sum(e) == d), reverse=True)


def margin(coeffs: dict, n: int, degree: int) -> float:
    """max t with sum(coeffs) = m^T G m, G - t I psd (cvxpy + Clarabel)."""
    basis = _monomials(n, degree // 2)
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
        cons.append(sum(G[i, j] for i, j in pairs) == float(coeffs.get(key, 0)))
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def form_margin(form) -> float:
    return margin({e: float(c) for e, c in form.terms.items()}, form.n, form.degree)


def sdp_value(C, A, b, sense="minimize") -> float:
    """Optimal value of the standard-form SDP via cvxpy."""
    m = C.shape[0]
    X = cp.Variable((m, m), symmetric=True)
    cons = [X >> 0] + [cp.trace(A[i] @ X) == b[i] for i in range(len(b))]
    obj = cp.Minimize(cp.trace(C @ X)) if sense == "minimize" else cp.Maximize(cp.trace(C @ X))
    prob = cp.Problem(obj, cons)
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)

"""Homogeneous polynomials (forms) with exact rational or float coefficients.

A :class:`Form` is an immutable map from exponent vectors to nonzero
coefficients, all of one total degree. Coefficients are uniformly either
:class:`fractions.Fraction` (exact) or ``float``; mixing the two raises.
Terms iterate in graded-lex order, which fixes Gram matrix indexing and
makes certificates reproducible.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Iterable, Mapping, Union

import numpy as np

Scalar = Union[Fraction, float]
Exponent = tuple[int, ...]


def grlex_key(e: Exponent) -> tuple:
    # x1^2 < x1*x2 < x2^2: within a degree, larger leading exponents come first
    return (sum(e), tuple(-k for k in e))


def _as_scalar(c, exact: bool) -> Scalar:
    if type(c) is Fraction and exact:
        return c
    if exact:
        if isinstance(c, float):
            raise TypeError("float coefficient in an exact form; convert explicitly")
        return Fraction(c)
    if isinstance(c, Fraction):
        raise TypeError("rational coefficient in a float form; use Form.to_float()")
    return float(c)


@dataclass(frozen=True, eq=False)
class Form:
    """A form in ``n`` variables of total degree ``degree``.

    ``exact`` is inferred from the coefficients when omitted (ints count as
    exact); pass it explicitly for the zero form.
    """

    n: int
    degree: int
    terms: Mapping[Exponent, Scalar] = field(default_factory=dict)
    exact: bool | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a form needs at least one variable")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        exact = self.exact
        if exact is None:
            exact = not any(isinstance(c, float) for c in self.terms.values())
        clean = {}
        for e, c in self.terms.items():
            if type(e) is not tuple or not all(type(k) is int for k in e):
                e = tuple(int(k) for k in e)
            if len(e) != self.n or min(e) < 0:
                raise ValueError(f"bad exponent vector {e} for n={self.n}")
            if sum(e) != self.degree:
                raise ValueError(f"term {e} has degree {sum(e)}, form has degree {self.degree}")
            c = _as_scalar(c, exact)
            if c != 0:
                clean[e] = c
        ordered = dict(sorted(clean.items(), key=lambda kv: grlex_key(kv[0])))
        object.__setattr__(self, "terms", MappingProxyType(ordered))
        object.__setattr__(self, "exact", exact)

    # construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, n: int, c=1) -> "Form":
        return cls(n, 0, {(0,) * n: c})

    @classmethod
    def zero(cls, n: int, degree: int, exact: bool = True) -> "Form":
        return cls(n, degree, {}, exact=exact)

    @classmethod
    def from_vector(cls, basis: Iterable[Exponent], coeffs, n: int, degree: int) -> "Form":
        """Float form with the given coefficients over a list of monomials."""
        return cls(n, degree, {tuple(e): float(c) for e, c in zip(basis, coeffs)}, exact=False)

    # value semantics ------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        return (self.n, self.degree, self.exact) == (other.n, other.degree, other.exact) and dict(
            self.terms
        ) == dict(other.terms)

    def __hash__(self):
        return hash((self.n, self.degree, self.exact, frozenset(self.terms.items())))

    def __repr__(self):
        kind = "exact" if self.exact else "float"
        return f"Form(n={self.n}, degree={self.degree}, {kind}, {render(self)!r})"

    def __len__(self):
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, e: Exponent) -> Scalar:
        return self.terms.get(tuple(e), Fraction(0) if self.exact else 0.0)

    def to_float(self) -> "Form":
        if not self.exact:
            return self
        return Form(self.n, self.degree, {e: float(c) for e, c in self.terms.items()}, exact=False)

    def coefficient_vector(self, monomials: Iterable[Exponent]) -> np.ndarray:
        return np.array([float(self.coefficient(e)) for e in monomials])

    def max_abs_coefficient(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    # arithmetic -----------------------------------------------------------

    def _check_compatible(self, other: "Form"):
        if self.n != other.n:
            raise ValueError(f"variable count mismatch: {self.n} vs {other.n}")
        if self.exact != other.exact:
            raise TypeError("cannot mix exact and float forms")

    def __add__(self, other: "Form") -> "Form":
        if not isinstance(other, Form):
            return NotImplemented
        self._check_compatible(other)
        if self.degree != other.degree:
            raise ValueError(f"cannot add forms of degree {self.degree} and {other.degree}")
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return Form(self.n, self.degree, out, exact=self.exact)

    def __neg__(self) -> "Form":
        return Form(self.n, self.degree, {e: -c for e, c in self.terms.items()}, exact=self.exact)

    def __sub__(self, other: "Form") -> "Form":
        if not isinstance(other, Form):
            return NotImplemented
        return self + (-other)

    def scale(self, c) -> "Form":
        c = _as_scalar(c, self.exact)
        return Form(self.n, self.degree, {e: c * v for e, v in self.terms.items()}, exact=self.exact)

    def __mul__(self, other):
        if isinstance(other, Form):
            return multiply(self, other)
        if isinstance(other, (int, Fraction, float)):
            return self.scale(other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction, float)):
            return self.scale(other)
        return NotImplemented

    def __pow__(self, r: int) -> "Form":
        return power(self, r)

    # evaluation -----------------------------------------------------------

    def _arrays(self):
        exps = np.array(list(self.terms.keys()), dtype=float).reshape(-1, self.n)
        coeffs = np.array([float(c) for c in self.terms.values()])
        return exps, coeffs

    def values(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``points`` (shape ``(N, n)``)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.n:
            raise ValueError(f"points have dimension {points.shape[1]}, form has n={self.n}")
        if not self.terms:
            return np.zeros(points.shape[0])
        exps, coeffs = self._arrays()
        mons = np.prod(points[:, None, :] ** exps[None, :, :], axis=2)
        return mons @ coeffs

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Gradient at each row of ``points``; shape ``(N, n)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros_like(points)
        if not self.terms:
            return out
        exps, coeffs = self._arrays()
        for k in range(self.n):
            lowered = exps.copy()
            lowered[:, k] = np.maximum(lowered[:, k] - 1, 0)
            mons = np.prod(points[:, None, :] ** lowered[None, :, :], axis=2)
            out[:, k] = mons @ (coeffs * exps[:, k])
        return out


def _exponents(n: int, d: int):
    """All exponent vectors of total degree d in n variables."""
    if n == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in _exponents(n - 1, d - first):
            yield (first,) + rest


class KroneckerRing:
    """Integer-coefficient forms in n variables packed into single integers.

    The last variable is dropped (forms are homogeneous) and the remaining
    exponents are read as digits in base ``max_degree + 1``; a form becomes
    the integer ``sum c_e * 2**(8 * width * index(e))``. Products and sums of
    packed forms are then plain big-integer products and sums, exact as long
    as no coefficient of any intermediate result exceeds ``bound`` in
    absolute value and no degree exceeds ``max_degree``.
    """

    def __init__(self, n: int, max_degree: int, bound: int):
        self.n = n
        self.base = max_degree + 1
        self.width = (int(bound).bit_length() + 2 + 7) // 8
        self.nslots = self.base ** (n - 1)
        self.half = 1 << (8 * self.width - 1)
        self._slot = b"\x00" * (self.width - 1) + b"\x80"
        self.offset = int.from_bytes(self._slot * self.nslots, "little")

    def index(self, e: Exponent) -> int:
        k = 0
        for x in reversed(e[:-1]):
            k = k * self.base + x
        return k

    def pack(self, terms: Mapping[Exponent, int]) -> int:
        buf = bytearray(self._slot * self.nslots)
        w = self.width
        for e, c in terms.items():
            k = self.index(e) * w
            buf[k:k + w] = (c + self.half).to_bytes(w, "little")
        return int.from_bytes(buf, "little") - self.offset

    def unpack(self, packed: int, degree: int) -> dict[Exponent, int]:
        w = self.width
        raw = (packed + self.offset).to_bytes(w * self.nslots, "little")
        out = {}
        for e in _exponents(self.n, degree):
            k = self.index(e) * w
            c = int.from_bytes(raw[k:k + w], "little") - self.half
            if c:
                out[e] = c
        return out


def integer_terms(a: Form) -> tuple[dict[Exponent, int], int]:
    """Integer coefficients and the least common denominator of an exact form."""
    den = math.lcm(*(c.denominator for c in a.terms.values())) if a.terms else 1
    return {e: int(c * den) for e, c in a.terms.items()}, den


def _kronecker_multiply(a: Form, b: Form) -> dict[Exponent, Fraction]:
    """Exact product through one big-integer multiplication."""
    A, da = integer_terms(a)
    B, db = integer_terms(b)
    bound = max(map(abs, A.values())) * max(map(abs, B.values())) * min(len(A), len(B))
    degree = a.degree + b.degree
    ring = KroneckerRing(a.n, degree, bound)
    prod = ring.unpack(ring.pack(A) * ring.pack(B), degree)
    den = da * db
    return {e: Fraction(c, den) for e, c in prod.items()}


def multiply(a: Form, b: Form) -> Form:
    """Exact (or float) product of two forms."""
    a._check_compatible(b)
    if a.exact and a.n > 1 and len(a) * len(b) > 256 and (a.degree + b.degree + 1) ** (a.n - 1) <= 64 * len(a) * len(b):
        return Form(a.n, a.degree + b.degree, _kronecker_multiply(a, b), exact=True)
    out: dict[Exponent, Scalar] = {}
    for ea, ca in a.terms.items():
        for eb, cb in b.terms.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0) + ca * cb
    return Form(a.n, a.degree + b.degree, out, exact=a.exact)


def power(a: Form, r: int) -> Form:
    """``a**r`` by repeated squaring; ``power(a, 0)`` is the constant 1."""
    if r < 0:
        raise ValueError("power must be non-negative")
    result = Form(a.n, 0, {(0,) * a.n: 1 if a.exact else 1.0}, exact=a.exact)
    base = a
    while r:
        if r & 1:
            result = multiply(result, base)
        r >>= 1
        if r:
            base = multiply(base, base)
    return result


def evaluate(a: Form, point) -> float:
    point = np.asarray(point, dtype=float).ravel()
    if point.shape[0] != a.n:
        raise ValueError(f"point has dimension {point.shape[0]}, form has n={a.n}")
    return float(a.values(point[None, :])[0])


def sphere_power(n: int, e: int, c=1) -> Form:
    """The form ``c * (x1^2 + ... + xn^2)^e``."""
    if e < 0:
        raise ValueError("exponent must be non-negative")
    c = c if isinstance(c, float) else Fraction(c)
    if c <= 0:
        raise ValueError("c must be positive")
    exact = not isinstance(c, float)
    one = 1 if exact else 1.0
    sphere = Form(n, 2, {tuple(2 if j == i else 0 for j in range(n)): one for i in range(n)})
    return power(sphere, e).scale(c)


def motzkin(n: int = 3) -> Form:
    """x1^4 x2^2 + x1^2 x2^4 + x3^6 - 3 x1^2 x2^2 x3^2, embedded in ``n >= 3`` variables."""
    if n < 3:
        raise ValueError("the Motzkin form needs at least 3 variables")

    def mono(*head):
        return tuple(head) + (0,) * (n - 3)

    return Form(n, 6, {mono(4, 2, 0): 1, mono(2, 4, 0): 1, mono(0, 0, 6): 1, mono(2, 2, 2): -3})


# text format ----------------------------------------------------------------


class FormParseError(ValueError):
    """Raised by :func:`parse_form`; ``kind`` is 'syntax', 'non-homogeneous' or 'variable'."""

    def __init__(self, message: str, pos: int, kind: str = "syntax"):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos
        self.kind = kind


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<var>x(?P<idx>\d+))|@(?P<name>[A-Za-z_]+)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start() + len(m.group(0)) - len(m.group(0).lstrip())
        for kind in ("num", "var", "name", "op"):
            if m.group(kind) is not None:
                value = m.group("idx") if kind == "var" else m.group(kind)
                tokens.append((kind, value, start))
                break
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = n

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, value, pos = self.take()
        if kind != "op" or value != op:
            raise FormParseError(f"expected {op!r}", pos)

    def parse(self) -> Form:
        form = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise FormParseError("unexpected trailing input", pos)
        return form

    def expr(self) -> Form:
        sign = 1
        kind, value, pos = self.peek()
        if kind == "op" and value in "+-":
            self.take()
            sign = -1 if value == "-" else 1
        acc = self.term().scale(sign)
        while True:
            kind, value, pos = self.peek()
            if not (kind == "op" and value in "+-"):
                return acc
            self.take()
            term_pos = self.peek()[2]
            rhs = self.term()
            if rhs.degree != acc.degree:
                raise FormParseError(
                    f"non-homogeneous: term of degree {rhs.degree} after degree {acc.degree}",
                    term_pos,
                    "non-homogeneous",
                )
            acc = acc + rhs if value == "+" else acc - rhs

    def term(self) -> Form:
        acc = self.factor()
        while True:
            kind, value, _ = self.peek()
            if not (kind == "op" and value == "*"):
                return acc
            self.take()
            acc = multiply(acc, self.factor())

    def factor(self) -> Form:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.take()
            kind, value, pos = self.take()
            if kind != "num" or not value.isdigit():
                raise FormParseError("exponent must be a non-negative integer", pos)
            base = power(base, int(value))
        return base

    def atom(self) -> Form:
        kind, value, pos = self.take()
        if kind == "num":
            c = self.number(value, pos)
            nkind, nvalue, npos = self.peek()
            if nkind == "op" and nvalue == "/":
                self.take()
                dkind, dvalue, dpos = self.take()
                if dkind != "num" or not dvalue.isdigit():
                    raise FormParseError("denominator must be an integer", dpos)
                if int(dvalue) == 0 or "." in value:
                    raise FormParseError("bad rational coefficient", dpos)
                c = c / int(dvalue)
            return Form.constant(self.n, c)
        if kind == "var":
            idx = int(value)
            if not 1 <= idx <= self.n:
                raise FormParseError(f"variable x{idx} out of range for n={self.n}", pos, "variable")
            return Form(self.n, 1, {tuple(int(j == idx - 1) for j in range(self.n)): 1})
        if kind == "name":
            return self.named(value, pos)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise FormParseError("expected a coefficient, variable, '@name' or '('", pos)

    def number(self, text: str, pos: int) -> Fraction:
        if "." in text and len(text.split(".")[1]) > 9:
            raise FormParseError("decimal coefficients allow at most 9 fractional digits", pos)
        return Fraction(text)

    def named(self, name: str, pos: int) -> Form:
        if name == "motzkin":
            if self.n < 3:
                raise FormParseError("@motzkin needs at least 3 variables", pos, "variable")
            return motzkin(self.n)
        if name == "sphere":
            return sphere_power(self.n, 1)
        raise FormParseError(f"unknown shorthand @{name}", pos)


def parse_form(text: str, n: int) -> Form:
    """Parse a homogeneous polynomial in ``x1..xn`` with exact coefficients.

    Besides ``+ - * ^`` and rational/decimal coefficients, parentheses and the
    shorthands ``@motzkin`` and ``@sphere`` (so ``@sphere^3``) are accepted.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    return _Parser(text, n).parse()


def _render_coeff(c: Scalar) -> str:
    if isinstance(c, Fraction):
        return str(abs(c)) if c.denominator != 1 else str(abs(c.numerator))
    return repr(abs(c))


def render(a: Form) -> str:
    """Canonical text: graded-lex order, explicit coefficients and ``^``."""
    if not a.terms:
        return f"0*x1^{a.degree}" if a.degree else "0"  # keep the degree of a zero form
    parts = []
    for k, (e, c) in enumerate(a.terms.items()):
        mono = "*".join(f"x{i + 1}^{p}" for i, p in enumerate(e) if p)
        body = _render_coeff(c) + (f"*{mono}" if mono else "")
        if k == 0:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    return " ".join(parts)


def num_monomials(n: int, d: int) -> int:
    return math.comb(n + d - 1, d)

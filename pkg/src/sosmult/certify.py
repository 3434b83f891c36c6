"""Exact rational SOS certificates.

A numerical Gram matrix is rounded to dyadic rationals, projected exactly
onto the affine space of Gram matrices of the target, and checked positive
semidefinite by an exact pivoted LDL^T factorization. The resulting
:class:`Certificate` is checked again from its JSON file alone, using
nothing but integer and rational arithmetic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .forms import Exponent, Form, grlex_key
from .sdp import SdpTolerances
from .sos import GramSystem, SosStatus, gram_system, monomial_basis, sos_feasible

DENOM_SCHEDULE = (8, 16, 32, 64)
CERT_SCHEMA = "1"

RationalMatrix = list[list[Fraction]]


class CertificationError(RuntimeError):
    """``reason`` is 'NumericallyInfeasible', 'RoundingFailed' or 'Indeterminate'."""

    def __init__(self, reason: str, message: str = ""):
        super().__init__(f"{reason}: {message}" if message else reason)
        self.reason = reason


class CertificateFormatError(ValueError):
    """The certificate file is not a well-formed, canonical certificate document."""


# rounding and projection --------------------------------------------------------


def _round_dyadic(x: float, bits: int) -> Fraction:
    return Fraction(round(Fraction(x) * (1 << bits)), 1 << bits)


def round_and_project(gram_float, system: GramSystem, denom_bits: int) -> RationalMatrix:
    """Round to denominators ``2**denom_bits`` and project onto the Gram system.

    The projection is orthogonal in the Frobenius norm on symmetric matrices.
    Each row of the system constrains a disjoint set of entries, so the
    least-squares correction shifts every entry of a row by the same amount:
    the row residual divided by the number of matrix entries in the row.
    """
    G = np.asarray(gram_float, dtype=float)
    s = system.size
    if G.shape != (s, s):
        raise ValueError(f"expected a {s}x{s} matrix, got {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValueError("non-finite Gram entries")
    if system.residual(G) > 1e-5:
        raise ValueError("the float Gram matrix is too far from the Gram system")
    out = [[Fraction(0)] * s for _ in range(s)]
    for i in range(s):
        for j in range(i, s):
            value = _round_dyadic(0.5 * (G[i, j] + G[j, i]), denom_bits)
            out[i][j] = out[j][i] = value
    for row in system.rows:
        have = sum((out[i][j] if i == j else 2 * out[i][j] for i, j in row.pairs), Fraction(0))
        shift = (Fraction(row.coefficient) - have) / system.entry_count(row)
        if shift:
            for i, j in row.pairs:
                out[i][j] += shift
                out[j][i] = out[i][j]
    return out


# exact LDL^T ----------------------------------------------------------------------


@dataclass(frozen=True)
class LdlWitness:
    """``P M P^T = L D L^T`` with ``P`` the permutation sending row k to ``perm[k]``."""

    perm: tuple[int, ...]
    L: tuple[tuple[Fraction, ...], ...]
    D: tuple[Fraction, ...]

    def reconstruct(self) -> RationalMatrix:
        """``P^T L D L^T P``, the matrix the witness speaks for."""
        s = len(self.perm)
        permuted = [[sum((self.L[i][k] * self.D[k] * self.L[j][k] for k in range(min(i, j) + 1)), Fraction(0))
                     for j in range(s)] for i in range(s)]
        out = [[Fraction(0)] * s for _ in range(s)]
        for a in range(s):
            for b in range(s):
                out[self.perm[a]][self.perm[b]] = permuted[a][b]
        return out


class PsdCheck(NamedTuple):
    psd: bool
    witness: LdlWitness | None
    reason: str = ""


def verify_psd_exact(m: Sequence[Sequence[Fraction]]) -> PsdCheck:
    """Exact symmetric-pivoted LDL^T.

    At each step the largest remaining diagonal entry is the pivot. A
    negative pivot, or a zero pivot whose column is not entirely zero, means
    the matrix is not psd. Columns of L under zero pivots are zero, so the
    witness is canonical.
    """
    s = len(m)
    A = [[Fraction(x) for x in row] for row in m]
    if any(len(row) != s for row in A):
        raise ValueError("matrix is not square")
    if any(A[i][j] != A[j][i] for i in range(s) for j in range(i)):
        return PsdCheck(False, None, "not symmetric")
    order = list(range(s))
    L = [[Fraction(0)] * s for _ in range(s)]
    D = [Fraction(0)] * s
    for k in range(s):
        p = max(range(k, s), key=lambda i: A[i][i])
        if p != k:
            A[k], A[p] = A[p], A[k]
            for row in A:
                row[k], row[p] = row[p], row[k]
            order[k], order[p] = order[p], order[k]
            L[k], L[p] = L[p], L[k]
        pivot = A[k][k]
        if pivot < 0:
            return PsdCheck(False, None, "negative pivot")
        L[k][k] = Fraction(1)
        if pivot == 0:
            if any(A[i][k] for i in range(k + 1, s)):
                return PsdCheck(False, None, "zero pivot with nonzero column")
            continue
        D[k] = pivot
        for i in range(k + 1, s):
            L[i][k] = A[i][k] / pivot
        for i in range(k + 1, s):
            lik = L[i][k]
            if lik:
                for j in range(k + 1, i + 1):
                    A[i][j] -= lik * A[k][j]
                    A[j][i] = A[i][j]
    witness = LdlWitness(tuple(order), tuple(tuple(r) for r in L), tuple(D))
    return PsdCheck(True, witness)


# certificates ---------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    """An exact Gram certificate that ``target`` is a sum of squares."""

    n: int
    degree: int
    basis: tuple[Exponent, ...]
    gram: tuple[tuple[Fraction, ...], ...]
    target: Form
    psd_witness: LdlWitness

    def to_json(self) -> str:
        doc = {
            "schema": CERT_SCHEMA,
            "n": self.n,
            "degree": self.degree,
            "basis": [list(e) for e in self.basis],
            "gram": [[str(x) for x in row] for row in self.gram],
            "target": [[list(e), str(c)] for e, c in self.target.terms.items()],
            "ldlt": {
                "perm": list(self.psd_witness.perm),
                "L": [[str(x) for x in row] for row in self.psd_witness.L],
                "D": [str(x) for x in self.psd_witness.D],
            },
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str | bytes) -> "Certificate":
        """Strict parser: any non-canonical field raises CertificateFormatError."""
        try:
            if isinstance(text, bytes):
                text = text.decode("utf-8")
            doc = json.loads(text)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CertificateFormatError(f"unreadable certificate: {exc}") from None
        _expect(isinstance(doc, dict) and set(doc) == {"schema", "n", "degree", "basis", "gram", "target", "ldlt"},
                "unexpected top-level fields")
        _expect(doc["schema"] == CERT_SCHEMA, "unsupported schema")
        n, degree = _int(doc["n"]), _int(doc["degree"])
        _expect(n >= 1 and degree >= 0 and degree % 2 == 0, "bad n or degree")
        basis = tuple(_exponent(e, n) for e in _list(doc["basis"]))
        s = len(basis)
        gram = _matrix(doc["gram"], s)
        terms = {}
        for item in _list(doc["target"]):
            _expect(isinstance(item, list) and len(item) == 2, "bad target term")
            e = _exponent(item[0], n)
            _expect(e not in terms, "repeated target term")
            terms[e] = _rational(item[1])
        exps = list(terms)
        _expect(exps == sorted(exps, key=grlex_key), "target terms out of order")
        _expect(all(c != 0 for c in terms.values()), "zero target coefficient")
        _expect(all(sum(e) == degree for e in exps), "target term of the wrong degree")
        target = Form(n, degree, terms, exact=True)
        ldlt = doc["ldlt"]
        _expect(isinstance(ldlt, dict) and set(ldlt) == {"perm", "L", "D"}, "bad ldlt fields")
        perm = tuple(_int(p) for p in _list(ldlt["perm"]))
        L = _matrix(ldlt["L"], s)
        D = tuple(_rational(x) for x in _list(ldlt["D"]))
        _expect(len(perm) == s and len(D) == s, "ldlt has the wrong size")
        return cls(n, degree, basis, gram, target, LdlWitness(perm, L, D))


def _expect(cond, message):
    if not cond:
        raise CertificateFormatError(message)


def _list(x) -> list:
    _expect(isinstance(x, list), "expected a list")
    return x


def _int(x) -> int:
    _expect(isinstance(x, int) and not isinstance(x, bool), "expected an integer")
    return x


def _rational(x) -> Fraction:
    _expect(isinstance(x, str), "expected a rational string")
    try:
        value = Fraction(x)
    except (ValueError, ZeroDivisionError):
        raise CertificateFormatError(f"bad rational {x!r}") from None
    _expect(str(value) == x, f"non-canonical rational {x!r}")
    return value


def _exponent(x, n) -> Exponent:
    e = tuple(_int(k) for k in _list(x))
    _expect(len(e) == n and all(k >= 0 for k in e), "bad exponent vector")
    return e


def _matrix(x, s) -> tuple[tuple[Fraction, ...], ...]:
    rows = _list(x)
    _expect(len(rows) == s, "matrix has the wrong size")
    out = []
    for row in rows:
        _expect(len(_list(row)) == s, "matrix has the wrong size")
        out.append(tuple(_rational(v) for v in row))
    return tuple(out)


class Verification(NamedTuple):
    ok: bool
    reason: str = ""


def _expand(basis, gram) -> dict[Exponent, Fraction]:
    out: dict[Exponent, Fraction] = {}
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            if gram[i][j]:
                e = tuple(x + y for x, y in zip(a, b))
                out[e] = out.get(e, Fraction(0)) + gram[i][j]
    return {e: c for e, c in out.items() if c}


def verify_certificate(cert: Certificate) -> Verification:
    """Re-check every certificate invariant with exact arithmetic only."""
    if cert.degree % 2 or cert.target.degree != cert.degree or cert.target.n != cert.n:
        return Verification(False, "inconsistent header")
    if cert.basis != monomial_basis(cert.n, cert.degree // 2).monomials:
        return Verification(False, "basis is not the graded-lex monomial basis")
    s = len(cert.basis)
    if _expand(cert.basis, cert.gram) != dict(cert.target.terms):
        return Verification(False, "re-expansion mismatch")
    if any(cert.gram[i][j] != cert.gram[j][i] for i in range(s) for j in range(i)):
        return Verification(False, "gram not symmetric")
    w = cert.psd_witness
    if sorted(w.perm) != list(range(s)):
        return Verification(False, "ldlt perm is not a permutation")
    for i in range(s):
        if w.L[i][i] != 1 or any(w.L[i][j] for j in range(i + 1, s)):
            return Verification(False, "ldlt L is not unit lower triangular")
    if any(d < 0 for d in w.D):
        return Verification(False, "negative ldlt pivot")
    for k in range(s):
        if w.D[k] == 0 and any(w.L[i][k] for i in range(k + 1, s)):
            return Verification(False, "ldlt L column under a zero pivot is not zero")
    if w.reconstruct() != [list(row) for row in cert.gram]:
        return Verification(False, "ldlt does not reconstruct gram")
    return Verification(True)


def verify_certificate_text(text: str | bytes) -> Verification:
    try:
        cert = Certificate.from_json(text)
    except CertificateFormatError as exc:
        return Verification(False, f"malformed certificate: {exc}")
    return verify_certificate(cert)


def certify_gram(f: Form, gram_float, system: GramSystem | None = None,
                 schedule: Sequence[int] = DENOM_SCHEDULE) -> tuple[Certificate, int]:
    """Round a float Gram matrix of f into a certificate; returns (certificate, bits)."""
    system = system or gram_system(f)
    for bits in schedule:
        gram = round_and_project(gram_float, system, bits)
        check = verify_psd_exact(gram)
        if check.psd:
            cert = Certificate(f.n, f.degree, system.basis.monomials,
                               tuple(tuple(row) for row in gram), f, check.witness)
            assert verify_certificate(cert).ok
            return cert, bits
    raise CertificationError("RoundingFailed", f"no psd projection at denominators 2^{tuple(schedule)}")


def certify_sos(f: Form, tols: SdpTolerances | None = None,
                schedule: Sequence[int] = DENOM_SCHEDULE) -> Certificate:
    """Exact certificate that f is SOS, or :class:`CertificationError`.

    The float Gram comes from the margin-optimal point of the spectrahedron,
    which is as far from the psd boundary as the form allows.
    """
    if not f.exact:
        raise TypeError("certify_sos needs a form with rational coefficients")
    if f.degree % 2:
        raise ValueError(f"odd degree {f.degree}")
    verdict = sos_feasible(f, tols)
    if verdict.status == SosStatus.INFEASIBLE:
        raise CertificationError("NumericallyInfeasible", f"margin {verdict.margin:.6g}")
    if verdict.status == SosStatus.INDETERMINATE:
        raise CertificationError("Indeterminate", verdict.note)
    cert, _ = certify_gram(f, verdict.gram, verdict.system, schedule)
    return cert

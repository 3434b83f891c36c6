"""Gram-matrix formulations of SOS and strict-SOS questions about forms.

A form f of degree 2d is SOS iff ``f = m^T G m`` for some psd G, where m is
the vector of all degree-d monomials. Every question here is posed as one
SDP over the moment side:

    minimize <G0, W>  s.t.  W is a moment matrix,  <P, W> = 1,  W psd

whose dual is ``maximize t  s.t.  Gram(f) - t P psd``. With ``P = I`` the
optimum is the interior margin of f; with ``P = v v^T`` it is the largest c
such that ``f - c p^2`` is SOS (v the coefficients of p). Both sides are
strictly feasible for the margin problem, so the solver always has an
optimum to converge to, and a negative margin hands back a moment matrix
that separates f from the SOS cone.
"""
from __future__ import annotations

import enum
import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .forms import Exponent, Form, grlex_key, multiply
from .sdp import SdpProblem, SdpSolution, SdpStatus, SdpTolerances, solve_sdp

STRICT_TOL = 1e-6
PSD_TOL = 1e-6
GRAM_RESIDUAL_TOL = 1e-7
RAY_EIG_TOL = 1e-7
RANK_TOL = 1e-7


class IndeterminateError(RuntimeError):
    """The solver could not decide the question at the working tolerances."""


class SosStatus(str, enum.Enum):
    FEASIBLE = "feasible"
    STRICTLY_FEASIBLE = "strictly_feasible"
    INFEASIBLE = "infeasible"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class MonomialBasis:
    n: int
    d: int
    monomials: tuple[Exponent, ...]

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __getitem__(self, i):
        return self.monomials[i]

    def index(self, e: Exponent) -> int:
        return self._positions()[tuple(e)]

    def _positions(self):
        pos = self.__dict__.get("_pos")
        if pos is None:
            pos = {e: i for i, e in enumerate(self.monomials)}
            object.__setattr__(self, "_pos", pos)
        return pos


@lru_cache(maxsize=None)
def monomial_basis(n: int, d: int) -> MonomialBasis:
    """All exponent vectors of total degree d in n variables, graded-lex."""
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total, -1, -1):
            for rest in compositions(total - first, parts - 1):
                yield (first,) + rest

    monos = tuple(sorted(compositions(d, n), key=grlex_key))
    assert len(monos) == math.comb(n + d - 1, d)
    return MonomialBasis(n, d, monos)


class GramRow(NamedTuple):
    monomial: Exponent
    pairs: tuple[tuple[int, int], ...]
    coefficient: object


@dataclass(frozen=True)
class GramSystem:
    """Affine conditions on a symmetric G for ``m^T G m`` to equal ``target``.

    One row per degree-2d monomial; each index pair (i <= j) belongs to the
    row of ``basis[i] + basis[j]``.
    """

    basis: MonomialBasis
    target: Form
    rows: tuple[GramRow, ...]

    @property
    def size(self) -> int:
        return len(self.basis)

    def expand(self, G) -> np.ndarray:
        """Coefficients of ``m^T G m``, one per row."""
        G = np.asarray(G, dtype=float)
        out = np.empty(len(self.rows))
        for r, row in enumerate(self.rows):
            out[r] = sum(G[i, i] if i == j else G[i, j] + G[j, i] for i, j in row.pairs)
        return out

    def target_vector(self) -> np.ndarray:
        return np.array([float(row.coefficient) for row in self.rows])

    def residual(self, G) -> float:
        return float(np.max(np.abs(self.expand(G) - self.target_vector())))

    def expand_form(self, G) -> Form:
        return Form.from_vector([row.monomial for row in self.rows], self.expand(G),
                                self.target.n, self.target.degree)

    def entry_count(self, row: GramRow) -> int:
        """Number of matrix entries (i, j) and (j, i) covered by a row."""
        return sum(1 if i == j else 2 for i, j in row.pairs)

    def particular(self) -> np.ndarray:
        """The minimum-Frobenius-norm Gram matrix: each row's coefficient spread evenly."""
        s = self.size
        G = np.zeros((s, s))
        for row in self.rows:
            share = float(row.coefficient) / self.entry_count(row)
            for i, j in row.pairs:
                G[i, j] = G[j, i] = share
        return G

    def null_directions(self) -> np.ndarray:
        """Symmetric matrices N with ``m^T N m = 0``, spanning all such matrices.

        ``<N, W> = 0`` for all of them says that W is a moment matrix, i.e.
        its entries agree along every row of the system.
        """
        s = self.size
        mats = []
        for row in self.rows:
            (i0, j0), *rest = row.pairs
            w0 = 1.0 if i0 == j0 else 2.0
            for i, j in rest:
                N = np.zeros((s, s))
                w = 1.0 if i == j else 2.0
                N[i, j] = N[j, i] = 1.0 / w
                N[i0, j0] = N[j0, i0] = -1.0 / w0
                mats.append(N)
        return np.array(mats).reshape(-1, s, s)

    def moment_matrix(self, values) -> np.ndarray:
        """Moment matrix with ``values[r]`` on every entry of row r."""
        s = self.size
        W = np.zeros((s, s))
        for value, row in zip(values, self.rows):
            for i, j in row.pairs:
                W[i, j] = W[j, i] = value
        return W

    def row_means(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        return np.array([np.mean([W[i, j] for i, j in row.pairs] + [W[j, i] for i, j in row.pairs])
                         for row in self.rows])


def gram_system(f: Form) -> GramSystem:
    if f.degree % 2:
        raise ValueError(f"odd degree {f.degree}: not a candidate for a sum of squares")
    basis = monomial_basis(f.n, f.degree // 2)
    by_mono: dict[Exponent, list[tuple[int, int]]] = {}
    for i, a in enumerate(basis):
        for j in range(i, len(basis)):
            e = tuple(x + y for x, y in zip(a, basis[j]))
            by_mono.setdefault(e, []).append((i, j))
    rows = tuple(
        GramRow(e, tuple(by_mono[e]), f.coefficient(e))
        for e in sorted(by_mono, key=grlex_key)
    )
    extra = set(f.terms) - set(by_mono)
    assert not extra, extra
    return GramSystem(basis, f, rows)


def gaussian_moments(system: GramSystem) -> np.ndarray:
    """Moment matrix of the standard Gaussian measure; positive definite."""

    def moment(e):
        out = 1
        for k in e:
            if k % 2:
                return 0.0
            out *= math.prod(range(k - 1, 0, -2))
        return float(out)

    return system.moment_matrix([moment(row.monomial) for row in system.rows])


@dataclass
class SosVerdict:
    status: SosStatus
    gram: np.ndarray | None = None
    margin: float | None = None
    dual_ray: np.ndarray | None = None
    system: GramSystem | None = field(default=None, repr=False)
    sdp: SdpSolution | None = field(default=None, repr=False)
    note: str = ""

    @property
    def basis(self) -> MonomialBasis | None:
        return self.system.basis if self.system is not None else None


def _moment_problem(system: GramSystem, P: np.ndarray) -> SdpProblem:
    N = system.null_directions()
    A = np.concatenate([N, P[None]], axis=0)
    b = np.zeros(len(A))
    b[-1] = 1.0
    return SdpProblem(system.particular(), A, b, "minimize")


def _gram_from_dual(system: GramSystem, sol: SdpSolution) -> np.ndarray:
    N = system.null_directions()
    z = sol.y[:-1]
    return system.particular() - np.einsum("k,kij->ij", z, N)


def margin_problem(f: Form | GramSystem) -> SdpProblem:
    """The SDP whose optimal value is the margin of f (see module docstring)."""
    system = f if isinstance(f, GramSystem) else gram_system(f)
    return _moment_problem(system, np.eye(system.size))


def separating_ray(system: GramSystem, W: np.ndarray, tol: float = RAY_EIG_TOL) -> np.ndarray | None:
    """Turn an approximate optimal moment matrix into a checked separator.

    The result is an exact-structure moment matrix with unit trace, smallest
    eigenvalue at least ``tol`` and negative pairing with every Gram matrix
    of the target; None if no such matrix can be obtained from W.
    """
    Wm = system.moment_matrix(system.row_means(W))
    Wm /= np.trace(Wm)
    Wg = gaussian_moments(system)
    Wg /= np.trace(Wg)
    f_vec = system.target_vector()
    value = float(f_vec @ system.row_means(Wm))
    if not value < 0:
        return None
    gauss_value = float(f_vec @ system.row_means(Wg))
    # mix in the interior point Wg, keeping the pairing with f below value / 2
    spread = max(gauss_value - value, 1e-300)
    s = min(0.5, -value / (2.0 * spread))
    ray = (1.0 - s) * Wm + s * Wg
    return ray if ray_is_separating(system, ray, tol) else None


def ray_is_separating(system: GramSystem, W: np.ndarray, tol: float = RAY_EIG_TOL) -> bool:
    """Independent eigenvalue check: W is (up to 1e-12) a moment matrix, has unit
    trace-normalized smallest eigenvalue >= tol, and pairs negatively with f."""
    W = np.asarray(W, dtype=float)
    moments = system.row_means(W)
    if np.max(np.abs(system.moment_matrix(moments) - W)) > 1e-12 * max(1.0, np.max(np.abs(W))):
        return False
    trace = float(np.trace(W))
    if not trace > 0:
        return False
    if np.linalg.eigvalsh(W / trace)[0] < tol:
        return False
    return float(system.target_vector() @ moments) < 0


def _margin_solve(system: GramSystem, tols: SdpTolerances | None):
    sol = solve_sdp(_moment_problem(system, np.eye(system.size)), tols)
    if sol.status != SdpStatus.OPTIMAL:
        return sol, None, None
    return sol, float(sol.y[-1]), _gram_from_dual(system, sol)


def _check_gram(system: GramSystem, G: np.ndarray) -> str:
    lam = float(np.linalg.eigvalsh(G)[0])
    if lam < -PSD_TOL:
        return f"gram smallest eigenvalue {lam:.3g} below -{PSD_TOL}"
    res = system.residual(G)
    if res > GRAM_RESIDUAL_TOL:
        return f"gram residual {res:.3g} above {GRAM_RESIDUAL_TOL}"
    return ""


def _infeasible_verdict(system, sol, t) -> SosVerdict:
    ray = separating_ray(system, sol.X)
    if ray is None:
        return SosVerdict(SosStatus.INDETERMINATE, margin=t, system=system, sdp=sol,
                          note="negative margin but the separating ray failed validation")
    return SosVerdict(SosStatus.INFEASIBLE, margin=t, dual_ray=ray, system=system, sdp=sol)


def sos_feasible(f: Form, tols: SdpTolerances | None = None) -> SosVerdict:
    """Decide whether f is a sum of squares.

    ``Feasible`` carries a Gram matrix (smallest eigenvalue >= -1e-6, system
    residual <= 1e-7); ``Infeasible`` carries a validated separating moment
    matrix in ``dual_ray``.
    """
    system = gram_system(f)
    sol, t, G = _margin_solve(system, tols)
    if t is None:
        return SosVerdict(SosStatus.INDETERMINATE, system=system, sdp=sol, note=sol.message)
    if t >= -STRICT_TOL:
        problem = _check_gram(system, G)
        if problem:
            return SosVerdict(SosStatus.INDETERMINATE, gram=G, margin=t, system=system, sdp=sol, note=problem)
        return SosVerdict(SosStatus.FEASIBLE, gram=G, margin=t, system=system, sdp=sol)
    return _infeasible_verdict(system, sol, t)


def strict_margin(f: Form, tols: SdpTolerances | None = None) -> SosVerdict:
    """Largest t such that some Gram matrix G of f has ``G - t I`` psd.

    t is measured against the identity in the monomial basis, so it scales
    with f; divide f by its largest coefficient first for a scale-free
    number. ``StrictlyFeasible`` iff t > 1e-6; margins in (-1e-6, 1e-6] are
    reported ``Indeterminate`` (numerically on the boundary of the cone).
    """
    system = gram_system(f)
    sol, t, G = _margin_solve(system, tols)
    if t is None:
        return SosVerdict(SosStatus.INDETERMINATE, system=system, sdp=sol, note=sol.message)
    if t > STRICT_TOL:
        problem = _check_gram(system, G)
        if not problem and np.linalg.eigvalsh(G)[0] < t - PSD_TOL:
            problem = "gram does not realize the margin"
        if problem:
            return SosVerdict(SosStatus.INDETERMINATE, gram=G, margin=t, system=system, sdp=sol, note=problem)
        return SosVerdict(SosStatus.STRICTLY_FEASIBLE, gram=G, margin=t, system=system, sdp=sol)
    if t > -STRICT_TOL:
        return SosVerdict(SosStatus.INDETERMINATE, gram=G, margin=t, system=system, sdp=sol,
                          note="margin within the boundary band (-1e-6, 1e-6]")
    return _infeasible_verdict(system, sol, t)


def extract_decomposition(verdict: SosVerdict, basis: MonomialBasis | None = None) -> list[Form]:
    """Forms f_i with ``sum f_i^2 = f`` from the verdict's Gram matrix.

    Uses the eigendecomposition ``G = sum lam_k q_k q_k^T``; components with
    negligible eigenvalue are dropped, so a strictly feasible verdict yields
    exactly ``len(basis)`` squares.
    """
    if verdict.gram is None:
        raise ValueError("verdict carries no Gram matrix")
    basis = basis or verdict.basis
    G = np.asarray(verdict.gram, dtype=float)
    lam, Q = np.linalg.eigh(G)
    if lam[0] < -PSD_TOL:
        raise ValueError(f"Gram matrix is indefinite (smallest eigenvalue {lam[0]:.3g})")
    cutoff = 1e-8 * max(1.0, lam[-1])
    n, d = basis.n, basis.d
    pieces = [
        Form.from_vector(basis.monomials, math.sqrt(lk) * Q[:, k], n, d)
        for k, lk in enumerate(lam) if lk > cutoff
    ]
    if verdict.system is not None:
        total = Form.zero(n, 2 * d, exact=False)
        for piece in pieces:
            total = total + multiply(piece, piece)
        diff = total - verdict.system.target.to_float()
        if diff.max_abs_coefficient() > 1e-5:
            raise ValueError(f"decomposition misses the target by {diff.max_abs_coefficient():.3g}")
    return pieces


def decomposition_rank(pieces: list[Form], basis: MonomialBasis, tol: float = RANK_TOL) -> int:
    """Rank of the coefficient vectors of ``pieces`` over ``basis``."""
    if not pieces:
        return 0
    mat = np.array([p.coefficient_vector(basis.monomials) for p in pieces])
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > tol))


class Membership(NamedTuple):
    member: bool
    c_max: float


def uf_membership(f: Form, p: Form, tols: SdpTolerances | None = None) -> Membership:
    """Is p in U_f, i.e. is ``f - c p^2`` SOS for some c > 0?

    Solves ``maximize c`` over Gram matrices of ``f - c p^2``; values at or
    below 1e-6 are reported as ``c_max = 0``.
    """
    if f.degree != 2 * p.degree:
        raise ValueError(f"degree mismatch: deg f = {f.degree}, deg p = {p.degree}")
    system = gram_system(f)
    v = p.coefficient_vector(system.basis.monomials)
    return _membership(system, v, tols)


def _membership_bound(system: GramSystem, W: np.ndarray, v: np.ndarray) -> float:
    """Upper bound on c_max from an approximate moment matrix W.

    W is projected onto exact moment structure and shifted towards the
    Gaussian moments until it is psd, which keeps the bound valid.
    """
    Wm = system.moment_matrix(system.row_means(W))
    Wg = gaussian_moments(system)
    lam = float(np.linalg.eigvalsh(Wm)[0])
    if lam < 0:
        Wm = Wm + (-lam / float(np.linalg.eigvalsh(Wg)[0])) * (1 + 1e-9) * Wg
    weight = float(v @ Wm @ v)
    if not weight > 0:
        return np.inf
    return float(system.target_vector() @ system.row_means(Wm)) / weight


def _point_bound(system: GramSystem, v: np.ndarray, samples: int = 1024, starts: int = 8) -> float:
    """Upper bound on c_max from point evaluations: ``min f(z) / p(z)^2``.

    f - c p^2 is nonnegative whenever it is SOS, so every z with p(z) != 0
    gives ``c_max <= f(z) / p(z)^2``. This certifies non-membership when f
    has a real zero at which p vanishes to lower order than f allows.
    """
    f = system.target.to_float()
    basis = system.basis
    p = Form.from_vector(basis.monomials, v, basis.n, basis.d)
    n = basis.n

    def ratio(z):
        pz = float(p.values(z[None])[0])
        return float(f.values(z[None])[0]) / pz**2 if pz != 0 else np.inf

    def ratio_grad(z):
        fz, pz = float(f.values(z[None])[0]), float(p.values(z[None])[0])
        if pz == 0:
            return np.zeros(n)
        return (f.gradients(z[None])[0] * pz - 2 * fz * p.gradients(z[None])[0]) / pz**3

    pts = qmc.Sobol(d=n, scramble=True, seed=0).random_base2(int(math.log2(samples)))
    pts = np.concatenate([np.eye(n), 2 * pts - 1])
    pv = p.values(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(pv != 0, f.values(pts) / pv**2, np.inf)
    best = float(np.min(vals))
    for i in np.argsort(vals, kind="stable")[:starts]:
        res = minimize(ratio, pts[i], jac=ratio_grad, method="BFGS", options={"gtol": 1e-14, "maxiter": 500})
        # re-evaluate: the bound is whatever the returned point really gives
        best = min(best, ratio(res.x))
    return best


def _membership(system: GramSystem, v: np.ndarray, tols) -> Membership:
    sol = solve_sdp(_moment_problem(system, np.outer(v, v)), tols)
    if sol.status == SdpStatus.UNBOUNDED:
        raise ValueError("f is not a sum of squares")
    if sol.status == SdpStatus.OPTIMAL:
        c = float(sol.objective_value)
        return Membership(c > STRICT_TOL, c if c > STRICT_TOL else 0.0)
    # On the boundary of the SOS cone no Gram matrix of f is positive
    # definite, the optimal moment matrices form an unbounded set and the
    # solver can stop early. A Gram-side iterate still settles membership
    # when G - c v v^T passes an independent eigenvalue check.
    if sol.y is not None and np.all(np.isfinite(sol.y)):
        c = float(sol.y[-1])
        G = _gram_from_dual(system, sol)
        if c > STRICT_TOL and np.linalg.eigvalsh(G - c * np.outer(v, v))[0] >= -PSD_TOL:
            return Membership(True, c)
    # Conversely every psd moment matrix W bounds c_max <= <f, W> / <v v^T, W>.
    if sol.X is not None and np.all(np.isfinite(sol.X)):
        bound = _membership_bound(system, sol.X, v)
        if bound <= STRICT_TOL:
            return Membership(False, 0.0)
    if _point_bound(system, v) <= STRICT_TOL:
        return Membership(False, 0.0)
    raise IndeterminateError(f"membership SDP did not converge: {sol.message}")


@dataclass
class SubspaceBasis:
    """Orthonormal coefficient vectors (rows of ``vectors``) over ``ambient``."""

    ambient: MonomialBasis
    vectors: np.ndarray
    probes: list[tuple[str, Membership]] = field(default_factory=list)
    strict_agrees: bool | None = None

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[0])

    def forms(self) -> list[Form]:
        n, d = self.ambient.n, self.ambient.d
        return [Form.from_vector(self.ambient.monomials, v, n, d) for v in self.vectors]

    def contains(self, v, tol: float = 1e-6) -> bool:
        v = np.asarray(v, dtype=float)
        resid = v - self.vectors.T @ (self.vectors @ v) if self.dim else v
        return bool(np.linalg.norm(resid) <= tol * max(1.0, np.linalg.norm(v)))


def uf_subspace(f: Form, tols: SdpTolerances | None = None, workers: int = 1) -> SubspaceBasis:
    """Span of the U_f members found among monomials and Gram-range directions.

    Every returned direction passed a membership SDP; completeness is not
    claimed beyond those candidates. When the span is the whole space the
    result is cross-checked against :func:`strict_margin`.
    """
    verdict = sos_feasible(f, tols)
    if verdict.status == SosStatus.INDETERMINATE:
        raise IndeterminateError(verdict.note or "SOS feasibility undecided")
    if verdict.status == SosStatus.INFEASIBLE:
        raise ValueError("f is not a sum of squares")
    system = verdict.system
    s = system.size
    candidates = [(f"monomial {system.basis[i]}", np.eye(s)[i]) for i in range(s)]
    lam, Q = np.linalg.eigh(verdict.gram)
    for k in range(s - 1, -1, -1):
        if lam[k] > STRICT_TOL * max(1.0, lam[-1]):
            candidates.append((f"gram range {s - 1 - k}", Q[:, k]))

    def probe(item):
        return _membership(system, item[1], tols)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(probe, candidates))
    else:
        results = [probe(c) for c in candidates]

    members = [vec / np.linalg.norm(vec) for (_, vec), res in zip(candidates, results) if res.member]
    if members:
        _, sv, Vt = np.linalg.svd(np.array(members), full_matrices=False)
        vectors = Vt[sv > STRICT_TOL]
        # fix signs so that each vector's largest entry is positive
        for v in vectors:
            if v[np.argmax(np.abs(v))] < 0:
                v *= -1
    else:
        vectors = np.zeros((0, s))
    out = SubspaceBasis(system.basis, vectors, [(name, r) for (name, _), r in zip(candidates, results)])
    if out.dim == s:
        out.strict_agrees = strict_margin(f, tols).status == SosStatus.STRICTLY_FEASIBLE
    return out


def gram_form(G, basis: MonomialBasis, exact: bool = False) -> Form:
    """The form ``m^T G m``."""
    terms: dict[Exponent, object] = {}
    s = len(basis)
    for i in range(s):
        for j in range(s):
            e = tuple(x + y for x, y in zip(basis[i], basis[j]))
            terms[e] = terms.get(e, 0) + G[i][j]
    if not exact:
        terms = {e: float(c) for e, c in terms.items()}
    return Form(basis.n, 2 * basis.d, terms, exact=exact)


def gram_sampled_form(n: int, d: int, rng: np.random.Generator, lam_min=Fraction(1, 10),
                      entry_range: int = 3) -> tuple[Form, list[list[Fraction]]]:
    """Exact form ``m^T G m`` with rational ``G = lam_min I + B B^T / (4 s)``.

    B has small random integer entries, so ``lambda_min(G) >= lam_min``
    holds exactly and the margin of the form is at least ``lam_min``.
    """
    basis = monomial_basis(n, d)
    s = len(basis)
    B = rng.integers(-entry_range, entry_range + 1, size=(s, s))
    BBt = B @ B.T
    G = [[Fraction(int(BBt[i, j]), 4 * s) + (lam_min if i == j else 0) for j in range(s)] for i in range(s)]
    return gram_form(G, basis, exact=True), G

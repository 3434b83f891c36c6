"""Dense primal-dual interior-point solver for standard-form SDPs.

Primal:  minimize <C, X>  s.t.  <A_i, X> = b_i,  X psd
Dual:    maximize b^T y   s.t.  Z = C - sum_i y_i A_i psd

The iteration runs on the homogeneous self-dual embedding, so it starts from
``X = Z = I`` without a feasible point and detects infeasibility from the
limit of the embedding variables (tau, kappa). Search directions use
Nesterov-Todd scaling with a Mehrotra predictor-corrector. Everything is dense; problems here have
side length at most a few dozen.
"""
from __future__ import annotations

import contextlib
import contextvars
import enum
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
import scipy.linalg as sla

TOLS_ENV = "SOSMULT_SDP_TOLS"

_trace_stream: contextvars.ContextVar[IO[str] | None] = contextvars.ContextVar(
    "sdp_trace_stream", default=None
)


class SdpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class SdpTolerances:
    feas_tol: float = 1e-9
    gap_tol: float = 1e-8
    max_iter: int = 200

    @classmethod
    def from_env(cls, environ: dict | None = None) -> "SdpTolerances":
        """Read overrides like ``feas_tol=1e-8,max_iter=300`` from ``SOSMULT_SDP_TOLS``."""
        raw = (os.environ if environ is None else environ).get(TOLS_ENV, "").strip()
        if not raw:
            return cls()
        values = {}
        for item in raw.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in ("feas_tol", "gap_tol", "max_iter"):
                raise ValueError(f"unknown tolerance {key!r} in {TOLS_ENV}")
            values[key] = int(value) if key == "max_iter" else float(value)
        return cls(**values)


@dataclass
class SdpProblem:
    """``A`` has shape ``(k, m, m)``; ``sense`` is 'minimize' or 'maximize'."""

    C: np.ndarray
    A: np.ndarray
    b: np.ndarray
    sense: str = "minimize"

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        m = self.C.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, m, m)
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"sense must be 'minimize' or 'maximize', got {self.sense!r}")

    @classmethod
    def from_constraints(
        cls, C, constraints: Iterable[tuple[np.ndarray, float]], sense: str = "minimize"
    ) -> "SdpProblem":
        constraints = list(constraints)
        m = np.asarray(C).shape[0]
        A = np.array([a for a, _ in constraints], dtype=float).reshape(-1, m, m)
        b = np.array([bi for _, bi in constraints], dtype=float)
        return cls(C, A, b, sense)

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def validate(self):
        m = self.m
        if m < 1 or self.C.shape != (m, m):
            raise ValueError("objective must be a square matrix with m >= 1")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("constraint count mismatch between A and b")
        for name, arr in (("C", self.C), ("A", self.A), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")
        scale = max(1.0, float(np.max(np.abs(self.C), initial=0.0)), float(np.max(np.abs(self.A), initial=0.0)))
        if np.max(np.abs(self.C - self.C.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("objective matrix is not symmetric")
        if self.A.size and np.max(np.abs(self.A - self.A.transpose(0, 2, 1))) > 1e-12 * scale:
            raise ValueError("constraint matrices are not symmetric")

    def apply(self, X: np.ndarray) -> np.ndarray:
        """The vector of <A_i, X>."""
        return np.einsum("kij,ij->k", self.A, X)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """sum_i y_i A_i."""
        return np.einsum("k,kij->ij", y, self.A)


@dataclass
class SdpSolution:
    status: SdpStatus
    X: np.ndarray | None = None
    y: np.ndarray | None = None
    Z: np.ndarray | None = None
    objective_value: float = float("nan")
    dual_value: float = float("nan")
    gap: float = float("inf")
    primal_residual: float = float("inf")
    dual_residual: float = float("inf")
    iterations: int = 0
    infeasibility_certificate: np.ndarray | None = None
    message: str = ""
    details: dict = field(default_factory=dict)


@contextlib.contextmanager
def trace_iterates(stream: IO[str]):
    """Dump one tab-separated line of floats per iteration to ``stream``.

    Columns: iteration, mu, tau, kappa, primal objective, dual objective,
    primal residual, dual residual, step length.
    """
    token = _trace_stream.set(stream)
    try:
        yield stream
    finally:
        _trace_stream.reset(token)


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(X, dX):
    """Largest alpha with X + alpha dX psd (X positive definite)."""
    L = np.linalg.cholesky(X)
    Li = sla.solve_triangular(L, np.eye(len(X)), lower=True)
    lam = np.linalg.eigvalsh(_sym(Li @ dX @ Li.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _drop_dependent(Avec, b, tol=1e-10):
    """Indices of a maximal independent constraint subset, plus a linear
    inconsistency ray if the dropped rows contradict the kept ones."""
    k = Avec.shape[0]
    if k == 0:
        return np.arange(0), None
    _, R, piv = sla.qr(Avec.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1e-300))) if diag.size else 0
    keep = np.sort(piv[:rank])
    dropped = np.setdiff1d(np.arange(k), keep)
    for j in dropped:
        w, *_ = np.linalg.lstsq(Avec[keep].T, Avec[j], rcond=None)
        resid = b[j] - w @ b[keep]
        if abs(resid) > 1e-9 * (1.0 + abs(b[j]) + np.abs(w) @ np.abs(b[keep])):
            ray = np.zeros(k)
            ray[j] = 1.0
            ray[keep] = -w
            return keep, ray * (-np.sign(resid))
    return keep, None


def solve_sdp(problem: SdpProblem, tols: SdpTolerances | None = None) -> SdpSolution:
    """Solve a standard-form SDP.

    ``Optimal`` guarantees ``|<A_i,X> - b_i| <= feas_tol`` for every i, X psd
    and a relative gap ``|pobj - dobj| / (1 + |pobj| + |dobj|) <= gap_tol``.
    ``Infeasible`` carries a ray ``y`` with ``b^T y = -1`` and
    ``sum y_i A_i`` having smallest eigenvalue ``>= feas_tol``; when the
    equality system itself is inconsistent the ray instead has
    ``sum y_i A_i ~ 0`` and ``b^T y < 0``. ``Unbounded`` carries a psd
    direction ``X`` with ``<C,X> = -1`` (in the minimization form) and
    ``A(X) ~ 0``. Anything else is ``Indeterminate``.
    """
    tols = tols or SdpTolerances()
    problem.validate()
    sign = 1.0 if problem.sense == "minimize" else -1.0
    C = sign * problem.C
    m = problem.m
    k_all = problem.A.shape[0]

    norms = np.linalg.norm(problem.A.reshape(k_all, -1), axis=1)
    zero_rows = norms == 0
    for i in np.flatnonzero(zero_rows):
        if problem.b[i] != 0:
            ray = np.zeros(k_all)
            ray[i] = -np.sign(problem.b[i])
            return SdpSolution(SdpStatus.INFEASIBLE, infeasibility_certificate=ray,
                               message=f"constraint {i} has zero matrix and nonzero rhs")
    safe = np.where(zero_rows, 1.0, norms)
    Avec_all = problem.A.reshape(k_all, -1) / safe[:, None]
    b_all = problem.b / safe
    nonzero = np.flatnonzero(~zero_rows)
    keep_local, ray = _drop_dependent(Avec_all[nonzero], b_all[nonzero])
    if ray is not None:
        full = np.zeros(k_all)
        full[nonzero] = ray / safe[nonzero]
        full /= -(problem.b @ full)
        return SdpSolution(SdpStatus.INFEASIBLE, infeasibility_certificate=full,
                           message="equality constraints are inconsistent")
    keep = nonzero[keep_local]
    Avec = Avec_all[keep]
    b = b_all[keep]
    A3 = Avec.reshape(-1, m, m)

    def A_op(X):
        return Avec @ X.ravel()

    def At_op(y):
        return (y @ Avec).reshape(m, m)

    def unscale_y(ys):
        y = np.zeros(k_all)
        y[keep] = ys / safe[keep]
        return y

    def original_residual(x):
        return float(np.max(np.abs(problem.apply(x) - problem.b), initial=0.0))

    stream = _trace_stream.get()
    X = np.eye(m)
    Z = np.eye(m)
    y = np.zeros(len(keep))
    tau = kappa = 1.0
    nu = m + 1
    normC = 1.0 + float(np.max(np.abs(C)))
    last = None
    stalls = 0
    reason = "iteration limit"

    AAt = Avec @ Avec.T
    AAt_factor = sla.cho_factor(AAt) if len(keep) else None

    def polish(x, ys):
        """Project x onto {A(X) = b} and rebuild Z from y, so both equality
        systems hold to rounding; psd-ness is then rechecked by the caller."""
        xp = x
        if AAt_factor is not None:
            xp = x + At_op(sla.cho_solve(AAt_factor, b - A_op(x)))
        return _sym(xp), _sym(C - At_op(ys))

    def try_optimal(x, ys, dobj, it):
        """An Optimal solution from the polished iterate, if it meets the contract."""
        xp, zp = polish(x, ys)
        pres_p = original_residual(xp)
        pobj_p = float(np.sum(C * xp))
        gap_p = abs(pobj_p - dobj) / (1.0 + abs(pobj_p) + abs(dobj))
        if (
            pres_p <= tols.feas_tol
            and gap_p <= tols.gap_tol
            and np.linalg.eigvalsh(xp)[0] >= -tols.feas_tol
            and np.linalg.eigvalsh(zp)[0] >= -tols.feas_tol * normC
        ):
            return SdpSolution(
                SdpStatus.OPTIMAL, X=xp, y=sign * unscale_y(ys), Z=zp,
                objective_value=sign * pobj_p, dual_value=sign * dobj, gap=gap_p,
                primal_residual=pres_p, dual_residual=0.0, iterations=it,
            )
        return None

    for it in range(tols.max_iter + 1):
        x, ys, z = X / tau, y / tau, Z / tau
        pobj = float(np.sum(C * x))
        dobj = float(b @ ys)
        pres = original_residual(x)
        dres = float(np.max(np.abs(C - At_op(ys) - z)))
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        mu = (float(np.sum(X * Z)) + tau * kappa) / nu
        last = (x, ys, z, pobj, dobj, pres, dres, gap)

        if gap <= tols.gap_tol and pres <= 1e3 * tols.feas_tol and dres <= 1e3 * tols.feas_tol * normC:
            done = try_optimal(x, ys, dobj, it)
            if done is not None:
                return done

        # infeasibility certificates, checked directly on the original data
        by = float(b @ y)
        if by > 0:
            cand = -unscale_y(y) / by
            S = problem.adjoint(cand)
            if np.linalg.eigvalsh(_sym(S))[0] >= tols.feas_tol:
                return SdpSolution(SdpStatus.INFEASIBLE, infeasibility_certificate=cand, iterations=it,
                                   message="primal infeasible: dual ray found")
        cx = float(np.sum(C * X))
        if cx < 0:
            Xr = _sym(X / -cx)
            if np.max(np.abs(problem.apply(Xr)), initial=0.0) <= tols.feas_tol:
                return SdpSolution(SdpStatus.UNBOUNDED, X=Xr, iterations=it,
                                   message="dual infeasible: primal improving ray found")

        if it == tols.max_iter:
            reason = "iteration limit"
            break
        if not (np.isfinite(mu) and mu > 1e-300):
            reason = "complementarity underflow"
            break

        F1 = A_op(X) - b * tau
        F2 = At_op(y) + Z - C * tau
        F3 = float(np.sum(C * X)) - float(b @ y) + kappa

        try:
            # Nesterov-Todd scaling: W = G G^T with W Z W = X and G^T Z G = G^-1 X G^-T = diag(s)
            stage = "X"
            Lx = np.linalg.cholesky(X)
            stage = "Z"
            Lz = np.linalg.cholesky(Z)
            stage = "M"
            U, s, Vt = np.linalg.svd(Lz.T @ Lx)
            G = Lx @ Vt.T / np.sqrt(s)[None, :]
            Gi = (U.T / np.sqrt(s)[:, None]) @ Lz.T
            W = _sym(G @ G.T)
            T = W[None] @ A3 @ W[None]
            M = _sym(Avec @ T.reshape(len(keep), -1).T)
            WF2W = W @ F2 @ W
            factor = None
            if len(keep):
                try:
                    factor = ("cho", sla.cho_factor(M))
                except sla.LinAlgError:
                    # M is psd in exact arithmetic but can lose definiteness to
                    # rounding near the optimum; pivoted LU still solves it
                    factor = ("lu", sla.lu_factor(M, check_finite=False))
        except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
            reason = f"Cholesky of {stage} failed: {exc}"
            break
        denom_s = s[:, None] + s[None, :]

        # With C = (A^T y + Zh) / tau the large y^T M y pieces of the bordered
        # system cancel analytically; only p = A(W Zh W) and q = <Zh, W Zh W> remain.
        Zh = C * tau - At_op(y)
        WZhW = W @ Zh @ W
        p = A_op(WZhW)
        q = float(np.sum(Zh * WZhW))

        def msolve(r):
            if factor is None:
                return np.zeros(0)
            kind, fac = factor
            return sla.cho_solve(fac, r) if kind == "cho" else sla.lu_solve(fac, r)

        Mb, Mp = msolve(b), msolve(p)
        D = (float(p @ Mp) - q) / tau**2 - float(b @ Mb) - kappa / tau
        v2 = Mb + (y + Mp) / tau

        def border_solve(r1, r2_reduced):
            """Solve the (dy, dtau) system given r1 and r2 - y^T r1 / tau."""
            Mr1 = msolve(r1)
            dtau = (r2_reduced - float(p @ Mr1) / tau + float(b @ Mr1)) / D
            return Mr1 + v2 * dtau, dtau

        def complementarity_rhs(sigma, corr=None):
            R = -np.diag(s * s) + sigma * mu * np.eye(m)
            if corr is not None:
                R = R - corr
            return _sym(G @ (2.0 * R / denom_s) @ G.T)

        def direction(sigma, corr_X=None, corr_k=0.0):
            eta = 1.0 - sigma
            Rc = complementarity_rhs(sigma, corr_X)
            rk = sigma * mu - tau * kappa - corr_k
            r1 = -eta * F1 - A_op(Rc) - eta * A_op(WF2W)
            r2_red = -eta * F3 - rk / tau + (
                eta * float(y @ F1) - float(np.sum(Zh * Rc)) - eta * float(np.sum(Zh * WF2W))
            ) / tau
            dy, dtau = border_solve(r1, r2_red)
            for _ in range(2):
                # refine against the residuals of the unreduced equations
                dZ = _sym(-eta * F2 - At_op(dy) + C * dtau)
                dX = _sym(Rc - W @ dZ @ W)
                dkappa = (rk - kappa * dtau) / tau
                e1 = A_op(dX) - b * dtau + eta * F1
                e3 = float(np.sum(C * dX)) - float(b @ dy) + dkappa + eta * F3
                ddy, ddtau = border_solve(-e1, -e3 + float(y @ e1) / tau)
                dy, dtau = dy + ddy, dtau + ddtau
            dZ = _sym(-eta * F2 - At_op(dy) + C * dtau)
            dX = _sym(Rc - W @ dZ @ W)
            dkappa = (rk - kappa * dtau) / tau
            return dX, dy, dZ, dtau, dkappa

        def step_length(dX, dZ, dtau, dkappa):
            alpha = min(_max_step(X, dX), _max_step(Z, dZ))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        try:
            pdX, pdy, pdZ, pdtau, pdkappa = direction(0.0)
            alpha_aff = min(1.0, step_length(pdX, pdZ, pdtau, pdkappa))
            mu_aff = (
                float(np.sum((X + alpha_aff * pdX) * (Z + alpha_aff * pdZ)))
                + (tau + alpha_aff * pdtau) * (kappa + alpha_aff * pdkappa)
            ) / nu
            sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
            corr = _sym((Gi @ pdX @ Gi.T) @ (G.T @ pdZ @ G))
            dX, dy, dZ, dtau, dkappa = direction(sigma, corr, pdtau * pdkappa)
            alpha = min(1.0, 0.95 * step_length(dX, dZ, dtau, dkappa))
        except (np.linalg.LinAlgError, sla.LinAlgError, ZeroDivisionError, ValueError) as exc:
            reason = f"search direction failed: {exc!r}"
            break
        if not np.isfinite(alpha):
            reason = "non-finite step"
            break

        if stream is not None:
            stream.write("\t".join(repr(float(v)) for v in
                                   (it, mu, tau, kappa, pobj, dobj, pres, dres, alpha)) + "\n")

        stalls = stalls + 1 if alpha < 1e-8 else 0
        if stalls >= 5:
            reason = "stalled steps"
            break
        # rounding can put the 0.95 step outside the cone on ill-conditioned
        # iterates; halve it until both new iterates factor
        for _ in range(30):
            X_new, Z_new = _sym(X + alpha * dX), _sym(Z + alpha * dZ)
            try:
                np.linalg.cholesky(X_new)
                np.linalg.cholesky(Z_new)
                break
            except np.linalg.LinAlgError:
                alpha *= 0.5
        else:
            reason = "no step keeps the iterates positive definite"
            break
        X, Z = X_new, Z_new
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa
        if tau <= 0 or kappa <= 0:
            reason = "embedding left the cone"
            break

    x, ys, z, pobj, dobj, pres, dres, gap = last
    # the loop may stop one step short of the acceptance pre-check; the
    # polished iterate is still returned when it meets the Optimal contract
    done = try_optimal(x, ys, dobj, it)
    if done is not None:
        return done
    return SdpSolution(
        SdpStatus.INDETERMINATE, X=_sym(x), y=sign * unscale_y(ys), Z=_sym(z),
        objective_value=sign * pobj, dual_value=sign * dobj, gap=gap,
        primal_residual=pres, dual_residual=dres, iterations=it,
        message=f"numerical breakdown: {reason}",
    )


def ray_is_valid(problem: SdpProblem, ray: np.ndarray, tol: float = 1e-9) -> bool:
    """Independent check of an infeasibility ray: b^T y < 0 and sum y_i A_i >= tol I
    (after normalizing b^T y = -1)."""
    by = float(problem.b @ ray)
    if not by < 0:
        return False
    S = problem.adjoint(ray / -by)
    return bool(np.linalg.eigvalsh(_sym(S))[0] >= tol)


def planted_instance(m: int, k: int, rng: np.random.Generator, sense: str = "minimize") -> tuple[SdpProblem, np.ndarray]:
    """Random feasible, bounded instance with a known strictly feasible X0."""
    A = rng.standard_normal((k, m, m))
    A = 0.5 * (A + A.transpose(0, 2, 1))
    A /= np.linalg.norm(A.reshape(k, -1), axis=1)[:, None, None]
    B = rng.standard_normal((m, m))
    X0 = B @ B.T / m + 0.1 * np.eye(m)
    b = np.einsum("kij,ij->k", A, X0)
    # C = Z0 + sum y0 A with Z0 > 0 makes the dual strictly feasible, so the optimum is attained
    W = rng.standard_normal((m, m))
    Z0 = W @ W.T / m + 0.1 * np.eye(m)
    y0 = rng.standard_normal(k)
    C = Z0 + np.einsum("k,kij->ij", y0, A)
    if sense == "maximize":
        C = -C
    return SdpProblem(C, A, b, sense), X0


def conjugate(problem: SdpProblem, Q: np.ndarray) -> SdpProblem:
    """The same problem in the basis Q: every matrix M becomes Q M Q^T."""
    return SdpProblem(Q @ problem.C @ Q.T, Q[None] @ problem.A @ Q.T[None], problem.b.copy(), problem.sense)


def stack(mats: Sequence[np.ndarray]) -> np.ndarray:
    return np.array(list(mats), dtype=float)

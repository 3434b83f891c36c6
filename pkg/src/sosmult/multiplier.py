"""Multiplier search: the smallest r with f * g**r (strictly) SOS.

For positive definite f and nonconstant positive definite g, f * g**r is
strictly SOS once r is large enough. :func:`find_min_r` scans r = 0, 1, ...
and records every verdict, so the reported r is minimal among the probed
values. The helpers :func:`construct_q` and :func:`telescoping_expand`
reproduce the two algebraic steps behind that fact: a multiple q of a power
of the sphere form with g - q still positive definite, and the identity

    g**r - q**r = sum_{j<r} (g - q) g**j q**(r-1-j).

Positive definiteness is only probed numerically (:func:`definiteness_probe`);
a LikelyPD report is evidence, not a proof.
"""
from __future__ import annotations

import enum
import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.stats import norm, qmc

from .forms import Form, KroneckerRing, integer_terms, multiply, sphere_power
from .sdp import SdpTolerances
from .sos import SosStatus, SosVerdict, decomposition_rank, extract_decomposition, sos_feasible, strict_margin

PROBE_TOL = 1e-9


class ProbeStatus(str, enum.Enum):
    LIKELY_PD = "likely_pd"
    NOT_PD = "not_pd"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class ProbeReport:
    min_estimate: float
    witness: np.ndarray
    status: ProbeStatus
    evaluations: int = 0


def _sphere_points(n: int, count: int, seed: int) -> np.ndarray:
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # non-power-of-two counts lose a little balance, which is fine
        u = sampler.random(count)
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    lengths = np.linalg.norm(z, axis=1, keepdims=True)
    return z / np.where(lengths > 0, lengths, 1.0)


def _canonical_sign(x: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(x) > 1e-12)
    return -x if nz.size and x[nz[0]] < 0 else x


def _descend(f: Form, x: np.ndarray, iters: int = 300) -> np.ndarray:
    """Projected gradient descent on the unit sphere with backtracking."""
    value = float(f.values(x[None])[0])
    step = 1.0
    for _ in range(iters):
        grad = f.gradients(x[None])[0]
        grad = grad - (grad @ x) * x  # tangential part; the radial part only rescales
        gnorm = float(np.linalg.norm(grad))
        if gnorm < 1e-14:
            break
        while step > 1e-14:
            trial = x - step * grad
            trial /= np.linalg.norm(trial)
            tv = float(f.values(trial[None])[0])
            if tv <= value - 1e-4 * step * gnorm ** 2:
                x, value = trial, tv
                step *= 2.0
                break
            step *= 0.5
        else:
            break
    return x


def definiteness_probe(f: Form, n_samples: int = 4096, n_descents: int = 16, seed: int = 0) -> ProbeReport:
    """Estimate the minimum of f on the unit sphere.

    Evaluates f at ``n_samples`` scrambled-Sobol sphere points and the
    coordinate points, then refines the ``n_descents`` best candidates by
    projected gradient descent. NotPD iff the estimate is below -1e-9,
    Boundary iff it is within 1e-9 of zero. Heuristic: a LikelyPD report
    does not prove positivity.
    """
    if f.degree < 1:
        raise ValueError("definiteness probing needs a form of degree >= 1")
    ff = f.to_float()
    n = f.n
    pts = np.concatenate([np.eye(n), -np.eye(n), _sphere_points(n, n_samples, seed)])
    vals = ff.values(pts)
    best = np.argsort(vals, kind="stable")[:n_descents]
    candidates = [pts[i] for i in best] + [_descend(ff, pts[i].copy()) for i in best]
    cvals = ff.values(np.array(candidates))
    k = int(np.argmin(cvals))
    witness = _canonical_sign(candidates[k] / np.linalg.norm(candidates[k]))
    m = float(ff.values(witness[None])[0])
    if m < -PROBE_TOL:
        status = ProbeStatus.NOT_PD
    elif m <= PROBE_TOL:
        status = ProbeStatus.BOUNDARY
    else:
        status = ProbeStatus.LIKELY_PD
    return ProbeReport(m, witness, status, len(pts))


class QChoice(NamedTuple):
    c: Fraction
    q: Form
    halvings: int


def construct_q(g: Form, probe: ProbeReport, max_halvings: int = 20) -> QChoice:
    """c * (x1^2 + ... + xn^2)^e with g - q still (probably) positive definite.

    c starts at half the probed sphere minimum of g, rounded to a multiple of
    2**-16, and is halved until the probe of g - q reports LikelyPD.
    """
    if g.degree < 2 or g.degree % 2:
        raise ValueError("g must have even degree >= 2")
    if probe.status != ProbeStatus.LIKELY_PD:
        raise ValueError(f"g is not probed positive definite ({probe.status.value})")
    e = g.degree // 2
    c = Fraction(round(Fraction(probe.min_estimate) / 2 * (1 << 16)), 1 << 16)
    if c <= 0:
        c = Fraction(1, 1 << 16)
    for halvings in range(max_halvings + 1):
        q = sphere_power(g.n, e, c if g.exact else float(c))
        if definiteness_probe(g - q).status == ProbeStatus.LIKELY_PD:
            return QChoice(c, q, halvings)
        c /= 2
    raise ValueError(f"no admissible c after {max_halvings} halvings")


def telescoping_expand(g: Form, q: Form, r: int) -> list[Form]:
    """The summands ``(g - q) g**j q**(r-1-j)``, j = 0..r-1, of ``g**r - q**r``.

    After clearing denominators all arithmetic is big-integer arithmetic on
    packed forms (:class:`~sosmult.forms.KroneckerRing`); the identity is
    asserted both on the packed integers and on the returned forms.
    """
    if g.degree != q.degree or g.n != q.n:
        raise ValueError("g and q must have equal degree and variable count")
    if not (g.exact and q.exact):
        raise TypeError("telescoping needs exact rational forms")
    if r < 1:
        raise ValueError("r must be >= 1")
    n, degree = g.n, g.degree * r
    den = math.lcm(*(c.denominator for c in (*g.terms.values(), *q.terms.values())))
    G, _ = integer_terms(g.scale(den))
    Q, _ = integer_terms(q.scale(den))
    diff = {e: G.get(e, 0) - Q.get(e, 0) for e in set(G) | set(Q)}
    # every coefficient below is bounded by a product of r one-norms, times r for the sums
    l1 = max(1, *(sum(map(abs, t.values())) for t in (G, Q, diff)))
    ring = KroneckerRing(n, degree, (r + 1) * l1 ** r)
    pg, pq, pd = ring.pack(G), ring.pack(Q), ring.pack(diff)
    g_pows, q_pows = [1], [1]
    for _ in range(r):
        g_pows.append(g_pows[-1] * pg)
        q_pows.append(q_pows[-1] * pq)
    packed = [pd * g_pows[j] * q_pows[r - 1 - j] for j in range(r)]
    assert sum(packed) == g_pows[r] - q_pows[r], "telescoping identity failed"
    scale = den ** r

    def to_form(p):
        return Form(n, degree, {e: Fraction(c, scale) for e, c in ring.unpack(p, degree).items()}, exact=True)

    summands = [to_form(p) for p in packed]
    total = Form.zero(n, degree)
    for s in summands:
        total = total + s
    assert total == to_form(g_pows[r] - q_pows[r]), "telescoping identity failed"
    return summands


class SearchMode(str, enum.Enum):
    SOS = "sos"
    STRICT = "strict"


class TraceEntry(NamedTuple):
    r: int
    status: SosStatus
    margin: float | None
    seconds: float


@dataclass
class SearchResult:
    mode: SearchMode
    r_star: int | None
    trace: list[TraceEntry]
    exhausted_at: int | None
    g_sos_feasible: bool
    regressions: list[int] = field(default_factory=list)
    verdict: SosVerdict | None = field(default=None, repr=False)
    rank_at_r_star: int | None = None
    basis_size: int | None = None
    f_probe: ProbeReport | None = field(default=None, repr=False)
    g_probe: ProbeReport | None = field(default=None, repr=False)

    @property
    def monotone(self) -> bool:
        return not self.regressions

    @property
    def minimality_certified(self) -> bool:
        """All r below r_star were decided (none Indeterminate)."""
        return self.r_star is not None and all(
            e.status != SosStatus.INDETERMINATE for e in self.trace if e.r < self.r_star)


def _qualifies(status: SosStatus, mode: SearchMode) -> bool:
    if mode == SearchMode.STRICT:
        return status == SosStatus.STRICTLY_FEASIBLE
    return status in (SosStatus.FEASIBLE, SosStatus.STRICTLY_FEASIBLE)


def find_min_r(f: Form, g: Form, mode: SearchMode | str = SearchMode.SOS, r_max: int = 25,
               confirm: int = 2, tols: SdpTolerances | None = None, probe: bool = True) -> SearchResult:
    """Linear scan r = 0, 1, ..., r_max for the first qualifying f * g**r.

    After the first success, ``confirm`` further values of r are probed (if
    within r_max). When g is itself SOS, an Infeasible verdict after any
    Feasible one is impossible mathematically and is recorded in
    ``regressions`` as a solver-accuracy diagnostic.
    """
    mode = SearchMode(mode)
    if g.degree == 0:
        raise ValueError("g must be nonconstant")
    if r_max < 0:
        raise ValueError("r_max must be >= 0")
    if f.n != g.n:
        raise ValueError("f and g must share the variable count")
    f_probe = g_probe = None
    if probe:
        f_probe, g_probe = definiteness_probe(f), definiteness_probe(g)
        for name, report in (("f", f_probe), ("g", g_probe)):
            if report.status == ProbeStatus.NOT_PD:
                raise ValueError(f"{name} is not positive definite: value {report.min_estimate:.3g} "
                                 f"at {np.round(report.witness, 6).tolist()}")
    g_sos = sos_feasible(g, tols).status in (SosStatus.FEASIBLE, SosStatus.STRICTLY_FEASIBLE)

    trace: list[TraceEntry] = []
    verdicts: dict[int, SosVerdict] = {}
    r_star = None
    g_power = Form.constant(f.n, 1 if g.exact else 1.0)
    if not g.exact:
        f = f.to_float()
    for r in range(r_max + 1):
        if r:
            g_power = multiply(g_power, g)  # cached exact powers, one product per step
        start = time.perf_counter()
        target = multiply(f, g_power)
        verdict = strict_margin(target, tols) if mode == SearchMode.STRICT else sos_feasible(target, tols)
        trace.append(TraceEntry(r, verdict.status, verdict.margin, time.perf_counter() - start))
        verdicts[r] = verdict
        if r_star is None and _qualifies(verdict.status, mode):
            r_star = r
        if r_star is not None and r >= r_star + confirm:
            break

    regressions = []
    if g_sos:
        seen_feasible = False
        for entry in trace:
            if entry.status == SosStatus.INFEASIBLE and seen_feasible:
                regressions.append(entry.r)
            seen_feasible |= entry.status in (SosStatus.FEASIBLE, SosStatus.STRICTLY_FEASIBLE)

    result = SearchResult(mode, r_star, trace, None if r_star is not None else r_max, g_sos,
                          regressions, f_probe=f_probe, g_probe=g_probe)
    if r_star is not None:
        verdict = verdicts[r_star]
        result.verdict = verdict
        result.basis_size = len(verdict.basis)
        if mode == SearchMode.STRICT:
            pieces = extract_decomposition(verdict)
            result.rank_at_r_star = decomposition_rank(pieces, verdict.basis)
    return result

"""Command-line interface: ``sosmult <command> ...`` prints one JSON report.

Exit codes: 0 the mathematical answer was determined (Infeasible counts),
1 a certificate was rejected by ``verify``, 2 bad input (parse error or a
violated precondition such as a non-definite form), 3 Indeterminate
(solver breakdown, boundary margin, exhausted search budget), 4 I/O error.

Solver tolerances can be overridden with ``SOSMULT_SDP_TOLS``, e.g.
``SOSMULT_SDP_TOLS="feas_tol=1e-8,max_iter=300"``.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .certify import CertificationError, certify_sos, verify_certificate_text
from .forms import Form, FormParseError, parse_form, render
from .multiplier import definiteness_probe, find_min_r
from .sdp import SdpTolerances, trace_iterates
from .sos import IndeterminateError, SosStatus, decomposition_rank, extract_decomposition, \
    sos_feasible, strict_margin, uf_subspace

SCHEMA = "1"
EXIT_OK, EXIT_REJECTED, EXIT_INPUT, EXIT_INDETERMINATE, EXIT_IO = 0, 1, 2, 3, 4


class _Indeterminate(Exception):
    pass


def _jsonable(x):
    """Recursively convert numpy values; non-finite floats become null."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, SosStatus):
        return x.value
    return x


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False)


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextlib.contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(1000 * (time.perf_counter() - start), 3)


def _verdict_payload(v) -> dict:
    out = {"status": v.status.value, "margin": v.margin, "note": v.note}
    if v.basis is not None:
        out["basis"] = [list(e) for e in v.basis]
    if v.gram is not None:
        out["gram"] = v.gram
    if v.dual_ray is not None:
        out["dual_ray"] = v.dual_ray
    return out


def _cmd_check(args, forms, timer, tols):
    with timer.stage("solve"):
        v = sos_feasible(forms["poly"], tols)
    if v.status == SosStatus.INDETERMINATE:
        raise _Indeterminate(_verdict_payload(v))
    return _verdict_payload(v)


def _cmd_margin(args, forms, timer, tols):
    with timer.stage("solve"):
        v = strict_margin(forms["poly"], tols)
    out = _verdict_payload(v)
    out["normalization"] = "identity in the monomial basis; f is not rescaled"
    if v.status == SosStatus.STRICTLY_FEASIBLE:
        with timer.stage("decompose"):
            pieces = extract_decomposition(v)
        out["decomposition_rank"] = decomposition_rank(pieces, v.basis)
        out["basis_size"] = len(v.basis)
    if v.status == SosStatus.INDETERMINATE:
        raise _Indeterminate(out)
    return out


def _probe_payload(p):
    return {"status": p.status.value, "min_estimate": p.min_estimate, "witness": p.witness}


def _cmd_min_r(args, forms, timer, tols):
    with timer.stage("search"):
        res = find_min_r(forms["f"], forms["g"], args.mode, r_max=args.r_max, tols=tols)
    out = {
        "mode": res.mode.value,
        "r_star": res.r_star,
        "exhausted_at": res.exhausted_at,
        "trace": [{"r": e.r, "status": e.status.value, "margin": e.margin, "seconds": round(e.seconds, 6)}
                  for e in res.trace],
        "g_sos_feasible": res.g_sos_feasible,
        "monotone": res.monotone,
        "regressions": res.regressions,
        "minimality_certified": res.minimality_certified,
        "rank_at_r_star": res.rank_at_r_star,
        "basis_size": res.basis_size,
        "f_probe": _probe_payload(res.f_probe),
        "g_probe": _probe_payload(res.g_probe),
    }
    if res.r_star is None:
        raise _Indeterminate(out)
    return out


def _cmd_certify(args, forms, timer, tols):
    try:
        with timer.stage("certify"):
            cert = certify_sos(forms["poly"], tols)
    except CertificationError as exc:
        out = {"certified": False, "reason": exc.reason, "message": str(exc)}
        if exc.reason == "NumericallyInfeasible":
            return out
        raise _Indeterminate(out) from None
    text = cert.to_json()
    with timer.stage("write"):
        Path(args.out).write_text(text)
    denom = max(x.denominator for row in cert.gram for x in row)
    return {"certified": True, "path": str(args.out), "bytes": len(text.encode()),
            "basis_size": len(cert.basis), "max_denominator": str(denom)}


def _cmd_verify(args, forms, timer, tols):
    with timer.stage("read"):
        data = Path(args.cert).read_bytes()
    with timer.stage("verify"):
        check = verify_certificate_text(data)
    return {"valid": check.ok, "reason": check.reason}


def _cmd_uf(args, forms, timer, tols):
    with timer.stage("solve"):
        sub = uf_subspace(forms["poly"], tols, workers=args.workers)
    return {
        "dimension": sub.dim,
        "ambient_dimension": len(sub.ambient),
        "basis": [list(e) for e in sub.ambient],
        "vectors": sub.vectors,
        "forms": [render(p) for p in sub.forms()],
        "probes": [{"candidate": name, "member": m.member, "c_max": m.c_max} for name, m in sub.probes],
        "strict_cross_check": sub.strict_agrees,
    }


def _cmd_probe(args, forms, timer, tols):
    with timer.stage("probe"):
        p = definiteness_probe(forms["poly"], args.samples, args.descents)
    return _probe_payload(p)


COMMANDS = {
    "check": (_cmd_check, ("poly",)),
    "margin": (_cmd_margin, ("poly",)),
    "min-r": (_cmd_min_r, ("f", "g")),
    "certify": (_cmd_certify, ("poly",)),
    "verify": (_cmd_verify, ()),
    "uf": (_cmd_uf, ("poly",)),
    "probe": (_cmd_probe, ("poly",)),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--sdp-trace", metavar="FILE", help="append SDP iterates (tab-separated floats) to FILE")
    parser = argparse.ArgumentParser(prog="sosmult", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def poly_cmd(name, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--poly", required=True)
        p.add_argument("--vars", type=int, required=True)
        return p

    poly_cmd("check", "is the form a sum of squares?")
    poly_cmd("margin", "interior margin of the form (strict SOS test)")
    p = sub.add_parser("min-r", parents=[common], help="minimal r with f*g^r (strictly) SOS")
    p.add_argument("--f", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--vars", type=int, required=True)
    p.add_argument("--mode", choices=["sos", "strict"], default="sos")
    p.add_argument("--r-max", type=int, default=25)
    p = poly_cmd("certify", "write an exact rational SOS certificate")
    p.add_argument("--out", required=True)
    p = sub.add_parser("verify", parents=[common], help="re-check a certificate file exactly, no solver")
    p.add_argument("--cert", required=True)
    p = poly_cmd("uf", "subspace U_f of directions p with f - c p^2 SOS")
    p.add_argument("--workers", type=int, default=1)
    p = poly_cmd("probe", "numerical positive-definiteness probe")
    p.add_argument("--samples", type=int, default=4096)
    p.add_argument("--descents", type=int, default=16)
    return parser


def _report(command, inputs, timer, **payload) -> dict:
    return {"schema": SCHEMA, "command": command, "inputs": inputs, "timings": timer.timings,
            "tool_version": __version__, **payload}


def run(argv: list[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    handler, poly_args = COMMANDS[args.command]
    timer = _Timer()
    inputs: dict = {}
    if hasattr(args, "vars"):
        inputs["vars"] = args.vars

    def emit(code, **payload):
        print(dumps(_report(args.command, inputs, timer, exit_code=code, **payload)), file=stdout)
        return code

    try:
        tols = SdpTolerances.from_env()
    except ValueError as exc:
        return emit(EXIT_INPUT, error={"kind": "tolerances", "message": str(exc)})
    forms: dict[str, Form] = {}
    with timer.stage("parse"):
        for name in poly_args:
            text = getattr(args, name)
            try:
                forms[name] = parse_form(text, args.vars)
            except FormParseError as exc:
                return emit(EXIT_INPUT, error={"kind": exc.kind, "message": str(exc), "field": name, "pos": exc.pos})
            except ValueError as exc:
                return emit(EXIT_INPUT, error={"kind": "input", "message": str(exc), "field": name})
            inputs[name] = render(forms[name])
    for key in ("mode", "r_max", "cert", "out"):
        if hasattr(args, key):
            inputs[key] = getattr(args, key)

    trace_cm = contextlib.nullcontext()
    trace_file = None
    try:
        if args.sdp_trace:
            trace_file = open(args.sdp_trace, "a")
            trace_cm = trace_iterates(trace_file)
        with trace_cm:
            result = handler(args, forms, timer, tols)
    except _Indeterminate as exc:
        return emit(EXIT_INDETERMINATE, result=exc.args[0], error={"kind": "indeterminate"})
    except IndeterminateError as exc:
        return emit(EXIT_INDETERMINATE, error={"kind": "indeterminate", "message": str(exc)})
    except OSError as exc:
        return emit(EXIT_IO, error={"kind": "io", "message": str(exc)})
    except (ValueError, TypeError) as exc:
        return emit(EXIT_INPUT, error={"kind": "input", "message": str(exc)})
    finally:
        if trace_file is not None:
            trace_file.close()
    code = EXIT_REJECTED if args.command == "verify" and not result["valid"] else EXIT_OK
    return emit(code, result=result)


def main() -> None:
    sys.exit(run())

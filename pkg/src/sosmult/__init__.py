"""Sums-of-squares certificates for forms, and the multiplier search for
the smallest r with f * g**r a (strict) sum of squares."""
__version__ = "0.1.0"

from .certify import Certificate, CertificationError, certify_sos, round_and_project, verify_certificate, \
    verify_psd_exact
from .forms import Form, FormParseError, evaluate, motzkin, multiply, parse_form, power, render, sphere_power
from .multiplier import ProbeReport, ProbeStatus, SearchMode, SearchResult, construct_q, definiteness_probe, \
    find_min_r, telescoping_expand
from .sdp import SdpProblem, SdpSolution, SdpStatus, SdpTolerances, solve_sdp
from .sos import GramSystem, MonomialBasis, SosStatus, SosVerdict, SubspaceBasis, extract_decomposition, \
    gram_system, monomial_basis, sos_feasible, strict_margin, uf_membership, uf_subspace

__all__ = [
    "Certificate", "CertificationError", "certify_sos", "round_and_project", "verify_certificate",
    "verify_psd_exact", "Form", "FormParseError", "evaluate", "motzkin", "multiply", "parse_form", "power",
    "render", "sphere_power", "ProbeReport", "ProbeStatus", "SearchMode", "SearchResult", "construct_q",
    "definiteness_probe", "find_min_r", "telescoping_expand", "SdpProblem", "SdpSolution", "SdpStatus",
    "SdpTolerances", "solve_sdp", "GramSystem", "MonomialBasis", "SosStatus", "SosVerdict", "SubspaceBasis",
    "extract_decomposition", "gram_system", "monomial_basis", "sos_feasible", "strict_margin",
    "uf_membership", "uf_subspace",
]

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import coefficients, to_sympy
from sosmult.forms import Form, FormParseError, evaluate, motzkin, multiply, parse_form, power, render, \
    sphere_power


@st.composite
def forms(draw, n=None, degree=None, max_terms=5):
    n = draw(st.integers(1, 3)) if n is None else n
    degree = draw(st.integers(0, 4)) if degree is None else degree
    exps = st.lists(st.integers(0, degree), min_size=n, max_size=n).filter(lambda e: sum(e) == degree) \
        if n > 1 else st.just([degree])
    terms = draw(st.dictionaries(exps.map(tuple), st.fractions(min_value=-5, max_value=5, max_denominator=7),
                                 max_size=max_terms))
    return Form(n, degree, terms, exact=True)


def test_parse_reads_terms():
    f = parse_form("x1^2 + 2*x1*x2 + x2^2", 2)
    assert f.degree == 2 and len(f) == 3
    assert f.coefficient((1, 1)) == 2


def test_parse_motzkin_text_matches_builtin():
    f = parse_form("x1^4*x2^2 + x1^2*x2^4 + x3^6 - 3*x1^2*x2^2*x3^2", 3)
    assert f == motzkin() and f.degree == 6 and len(f) == 4
    assert parse_form("@motzkin", 3) == f


@pytest.mark.parametrize("text,kind", [
    ("x1^2 + x1", "non-homogeneous"),
    ("x1^2 + x3^2", "variable"),
    ("x1^2 +* x2^2", "syntax"),
    ("x1^2 $ x2^2", "syntax"),
    ("0.1234567891*x1", "syntax"),
    ("x1^-1", "syntax"),
])
def test_parse_errors(text, kind):
    with pytest.raises(FormParseError) as info:
        parse_form(text, 2)
    assert info.value.kind == kind
    assert 0 <= info.value.pos <= len(text)


def test_parse_decimals_and_rationals_are_exact():
    f = parse_form("0.125*x1^2 - 3/7*x2^2 + 1.5*x1*x2", 2)
    assert f.coefficient((2, 0)) == Fraction(1, 8)
    assert f.coefficient((0, 2)) == Fraction(-3, 7)
    assert f.coefficient((1, 1)) == Fraction(3, 2)
    assert f.exact


def test_parse_shorthands_and_parentheses():
    s3 = parse_form("@sphere^3", 3)
    assert s3 == sphere_power(3, 3)
    assert parse_form("(x1 + x2)*(x1 - x2)", 2) == parse_form("x1^2 - x2^2", 2)


def test_multiply_examples():
    a, b = parse_form("x1+x2", 2), parse_form("x1-x2", 2)
    assert multiply(a, b) == parse_form("x1^2-x2^2", 2)
    s = parse_form("x1^2+x2^2", 2)
    assert multiply(s, s) == parse_form("x1^4+2*x1^2*x2^2+x2^4", 2)
    assert multiply(s, Form.constant(2, 3)) == s.scale(3)


def test_multiply_rejects_mismatch():
    with pytest.raises(ValueError):
        multiply(parse_form("x1", 1), parse_form("x1", 2))
    with pytest.raises(TypeError):
        multiply(parse_form("x1", 2), parse_form("x1", 2).to_float())


def test_power_examples():
    s = parse_form("x1^2+x2^2", 2)
    one = power(s, 0)
    assert one.degree == 0 and one == Form.constant(2, 1)
    assert power(s, 2) == parse_form("x1^4+2*x1^2*x2^2+x2^4", 2)
    cube = power(parse_form("x1+x2", 2), 3)
    assert [cube.coefficient((3 - k, k)) for k in range(4)] == [1, 3, 3, 1]


def test_evaluate_examples():
    assert evaluate(motzkin(), [1, 1, 1]) == 0
    assert evaluate(parse_form("x1^2+x2^2", 2), [3, 4]) == 25
    assert evaluate(motzkin(), [0, 0, 0]) == 0
    with pytest.raises(ValueError):
        evaluate(motzkin(), [1, 1])


def test_sphere_power_examples():
    assert sphere_power(2, 1, 1) == parse_form("x1^2+x2^2", 2)
    assert sphere_power(2, 2, Fraction(1, 4)) == parse_form("1/4*(x1^4+2*x1^2*x2^2+x2^4)", 2)
    five = sphere_power(3, 0, 5)
    assert five.degree == 0 and five.coefficient((0, 0, 0)) == 5
    with pytest.raises(ValueError):
        sphere_power(2, 1, 0)


def test_form_rejects_inhomogeneous_terms_and_drops_zeros():
    with pytest.raises(ValueError):
        Form(2, 2, {(1, 0): 1})
    f = Form(2, 2, {(2, 0): 1, (0, 2): 0})
    assert len(f) == 1


def test_float_conversion_is_lossless_for_dyadics():
    f = parse_form("3/4*x1^2 - 1/8*x2^2", 2)
    g = f.to_float()
    assert not g.exact and g.coefficient((2, 0)) == 0.75


@given(forms(), st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(-3, 3))
def test_homogeneity_under_evaluation(f, point, lam):
    xi = np.array(point[: f.n])
    lhs = evaluate(f, lam * xi)
    base = evaluate(f, xi)
    assert abs(lhs - lam ** f.degree * base) <= 1e-9 * (1 + abs(base)) * max(1.0, abs(lam) ** f.degree)


@given(st.data())
def test_multiply_commutative_associative_and_degree_additive(data):
    n = data.draw(st.integers(1, 3))
    a, b, c = (data.draw(forms(n=n)) for _ in range(3))
    assert multiply(a, b) == multiply(b, a)
    assert multiply(multiply(a, b), c) == multiply(a, multiply(b, c))
    if not a.is_zero() and not b.is_zero():
        assert multiply(a, b).degree == a.degree + b.degree


@given(forms(max_terms=3), st.integers(0, 6), st.integers(0, 6))
def test_power_law(a, r, s):
    assert power(a, r + s) == multiply(power(a, r), power(a, s))


@given(forms(max_terms=4), forms(max_terms=4))
def test_product_matches_sympy(a, b):
    if a.n != b.n:
        return
    got = multiply(a, b)
    ref = coefficients(to_sympy(a) * to_sympy(b), a.n)
    assert {e: Fraction(int(c.p), int(c.q)) for e, c in ref.items()} == dict(got.terms)


@given(forms())
def test_render_parse_round_trip(a):
    assert parse_form(render(a), a.n) == a


def test_render_parse_round_trip_on_100_random_forms():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 4))
        d = int(rng.integers(0, 5))
        terms = {}
        for _ in range(int(rng.integers(0, 6))):
            e = rng.multinomial(d, [1 / n] * n)
            terms[tuple(int(k) for k in e)] = Fraction(int(rng.integers(-20, 21)), int(rng.integers(1, 9)))
        a = Form(n, d, terms, exact=True)
        assert parse_form(render(a), n) == a


def test_render_is_canonical():
    assert render(parse_form("x2^2 + 2*x1*x2 - 3/4*x1^2", 2)) == "-3/4*x1^2 + 2*x1^1*x2^1 + 1*x2^2"
    assert render(Form.zero(2, 3)) == "0*x1^3"
    assert render(Form.zero(2, 0)) == "0"

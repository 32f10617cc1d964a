import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featforge.errors import ExpressionTooLarge, LengthMismatch, MalformedExpression, MissingColumn, UnknownToken
from featforge.expr import (OPERATORS, FeatureExpr, Token, canonical_key, check_caps, compose, evaluate,
                            parse_expression, parse_postfix, render_infix, render_postfix)

from conftest import random_expr

SCHEMA = ["f1", "f2", "f3", "f4", "f5"]


# ---- independent oracle: recursive tree built from the token list ----

def _sign(x):
    return np.where(x >= 0, 1.0, -1.0)


ORACLE_FUNCS = {
    "square": lambda x: x * x,
    "cube": lambda x: x * x * x,
    "sqrt_abs": lambda x: np.sqrt(np.abs(x)),
    "log_abs": lambda x: np.log(np.abs(x) + 1e-8),
    "exp_clip": lambda x: np.exp(np.minimum(x, 50.0)),
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "recip_guard": lambda x: 1.0 / (_sign(x) * (np.abs(x) + 1e-8)),
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div_guard": lambda a, b: a / (_sign(b) * (np.abs(b) + 1e-8)),
}
ARITY = {k: (2 if k in ("add", "sub", "mul", "div_guard") else 1) for k in ORACLE_FUNCS}


def build_tree(tokens):
    """Consume postfix tokens from the right into a nested (op, children) tree."""
    pos = [len(tokens) - 1]

    def take():
        tok = tokens[pos[0]]
        pos[0] -= 1
        if tok.kind == "feature":
            return ("leaf", tok.value)
        kids = [take() for _ in range(ARITY[tok.value])]
        return (tok.value, kids[::-1])

    tree = take()
    assert pos[0] == -1
    return tree


def eval_tree(tree, cols):
    op, arg = tree
    if op == "leaf":
        return np.asarray(cols[arg], dtype=np.float64)
    vals = [eval_tree(k, cols) for k in arg]
    with np.errstate(all="ignore"):
        out = ORACLE_FUNCS[op](*vals)
    return np.clip(out, -1e300, 1e300)


def test_sequence_parses_into_three():
    exprs = parse_postfix("f1 f2 *, f3 sin, f4 f5 -", SCHEMA)
    assert [e.tokens for e in exprs] == [
        (Token("feature", "f1"), Token("feature", "f2"), Token("binary", "mul")),
        (Token("feature", "f3"), Token("unary", "sin")),
        (Token("feature", "f4"), Token("feature", "f5"), Token("binary", "sub")),
    ]
    assert [render_postfix(e) for e in exprs] == ["f1 f2 *", "f3 sin", "f4 f5 -"]


def test_identity_and_malformed():
    (e,) = parse_postfix("f1", SCHEMA)
    assert e.is_base and e.name == "f1"
    with pytest.raises(MalformedExpression):
        parse_postfix("f1 f2", SCHEMA)
    with pytest.raises(MalformedExpression):
        parse_postfix("f1 *", SCHEMA)
    with pytest.raises(UnknownToken):
        parse_postfix("f1 zz +", SCHEMA)
    with pytest.raises(MalformedExpression):
        parse_postfix("  ", SCHEMA)


def test_caps():
    deep = "f1 sin sin sin sin sin"
    with pytest.raises(ExpressionTooLarge):
        parse_expression(deep, SCHEMA)
    assert parse_expression("f1 sin sin sin sin", SCHEMA).depth == 4
    long = " ".join(["f1"] * 13 + ["+"] * 12)
    with pytest.raises(ExpressionTooLarge):
        parse_expression(long + " sin", SCHEMA, max_depth=100)
    e = parse_expression(long, SCHEMA, max_depth=100, max_tokens=25)
    with pytest.raises(ExpressionTooLarge):
        check_caps(e, max_depth=100, max_tokens=24)


def test_render_infix():
    f = lambda s: render_infix(parse_expression(s, SCHEMA))  # noqa: E731
    assert f("f1 f2 *") == "(f1 * f2)"
    assert f("f3 sin") == "sin(f3)"
    assert f("f4 f5 - square") == "((f4 - f5))^2"
    assert f("f1 f2 / log_abs") == "log_abs((f1 / f2))"


def _infix_value(text, cols):
    """Independent recursive-descent parser/evaluator for the infix rendering."""
    names = {"sin": np.sin, "cos": np.cos, "tanh": np.tanh, "sqrt_abs": ORACLE_FUNCS["sqrt_abs"],
             "log_abs": ORACLE_FUNCS["log_abs"], "exp_clip": ORACLE_FUNCS["exp_clip"],
             "recip": ORACLE_FUNCS["recip_guard"]}
    binops = {"+": ORACLE_FUNCS["add"], "-": ORACLE_FUNCS["sub"], "*": ORACLE_FUNCS["mul"],
              "/": ORACLE_FUNCS["div_guard"]}
    pos = 0

    def word():
        nonlocal pos
        start = pos
        while pos < len(text) and (text[pos].isalnum() or text[pos] == "_"):
            pos += 1
        return text[start:pos]

    def atom():
        nonlocal pos
        if text[pos] == "(":
            pos += 1
            left = atom()
            if text[pos] == " ":
                op = text[pos + 1]
                pos += 3
                right = atom()
                val = binops[op](left, right)
            else:
                val = left
            assert text[pos] == ")"
            pos += 1
        else:
            w = word()
            if pos < len(text) and text[pos] == "(":
                pos += 1
                val = names[w](atom())
                assert text[pos] == ")"
                pos += 1
            else:
                val = cols[w]
        while text.startswith("^", pos):
            power = int(text[pos + 1])
            pos += 2
            val = val * val if power == 2 else val * val * val
        return np.clip(val, -1e300, 1e300)

    out = atom()
    assert pos == len(text)
    return out


def test_infix_reparses_to_same_values(rng):
    cols = {k: rng.uniform(-3, 3, 20) for k in SCHEMA}
    with np.errstate(all="ignore"):
        for _ in range(200):
            e = random_expr(rng, SCHEMA)
            np.testing.assert_array_equal(_infix_value(render_infix(e), cols), evaluate(e, cols))


def test_evaluate_examples():
    cols = {"f1": np.array([1.0, 2.0]), "f2": np.array([3.0, 4.0])}
    np.testing.assert_array_equal(evaluate(parse_expression("f1 f2 +", SCHEMA), cols), [4.0, 6.0])
    col = {"f1": np.array([1.0, 2.0, 3.0])}
    np.testing.assert_array_equal(evaluate(FeatureExpr.base("f1"), col), [1.0, 2.0, 3.0])


def test_div_guard_by_hand():
    a = np.array([1.0, -2.0, 3.0, 0.0, 5.0])
    b = np.array([0.0, 0.0, -1e-9, 2.0, -4.0])
    out = evaluate(parse_expression("f1 f2 /", SCHEMA), {"f1": a, "f2": b})
    expected = [1.0 / 1e-8, -2.0 / 1e-8, 3.0 / -(1e-9 + 1e-8), 0.0 / (2.0 + 1e-8), 5.0 / -(4.0 + 1e-8)]
    for got, want in zip(out, expected):
        assert got == pytest.approx(want, rel=1e-15)
    assert np.all(np.isfinite(out))


def test_evaluate_errors():
    e = parse_expression("f1 f2 +", SCHEMA)
    with pytest.raises(MissingColumn):
        evaluate(e, {"f1": np.zeros(3)})
    with pytest.raises(LengthMismatch):
        evaluate(e, {"f1": np.zeros(3), "f2": np.zeros(4)})


def test_canonical_key_commutativity():
    k = lambda s: canonical_key(parse_expression(s, SCHEMA))  # noqa: E731
    assert k("f2 f1 +") == k("f1 f2 +")
    assert k("f2 f1 *") == k("f1 f2 *")
    assert k("f1 f2 -") != k("f2 f1 -")
    assert k("f1 f2 /") != k("f2 f1 /")
    a = parse_expression("f2 f1 +", SCHEMA)
    assert a.name == parse_expression("f1 f2 +", SCHEMA).name
    assert a.name.startswith("g") and len(a.name) == 9


def _swap_commutative(expr, rng):
    """Randomly swap operands of commutative nodes; returns a new token list."""
    tree = build_tree(expr.tokens)

    def rebuild(node):
        op, arg = node
        if op == "leaf":
            return [Token.feature(arg)]
        parts = [rebuild(k) for k in arg]
        if op in ("add", "mul") and rng.random() < 0.5:
            parts = parts[::-1]
        return [t for p in parts for t in p] + [Token.op(op)]

    return FeatureExpr(tuple(rebuild(tree)))


def test_commutative_swaps_share_keys(rng):
    for _ in range(500):
        e = random_expr(rng, SCHEMA)
        s = _swap_commutative(e, rng)
        assert s.key == e.key
        assert s.name == e.name


def test_round_trip_and_oracle_1000(rng):
    cols = {k: rng.standard_normal(32) * 10 for k in SCHEMA}
    cols["f5"][:4] = 0.0
    for _ in range(1000):
        e = random_expr(rng, SCHEMA)
        text = render_postfix(e)
        back = parse_expression(text, SCHEMA)
        assert back.tokens == e.tokens
        assert render_postfix(back) == text
        got = evaluate(e, cols)
        want = eval_tree(build_tree(e.tokens), cols)
        np.testing.assert_array_equal(got, want)
        assert np.all(np.isfinite(got))


def test_compose_inlines_tokens():
    a = parse_expression("f1 f2 *", SCHEMA)
    b = compose("sin", a)
    assert render_postfix(b) == "f1 f2 * sin"
    c = compose("add", b, FeatureExpr.base("f3"))
    assert render_postfix(c) == "f1 f2 * sin f3 +"
    assert c.depth == 3


def test_aliases_substitute_derived_names():
    a = parse_expression("f1 f2 *", SCHEMA)
    e = parse_expression(f"{a.name} f3 +", SCHEMA, aliases={a.name: a})
    assert render_postfix(e) == "f1 f2 * f3 +"


STRESS = np.array([0.0, -0.0, 1e-12, -1e-12, 1.0, -1.0, 1e12, -1e12, 1e300, -1e300,
                   np.finfo(float).max, -np.finfo(float).max, 3.5, -7.25])


@pytest.mark.parametrize("op", list(OPERATORS), ids=lambda op: op.kind)
def test_guard_totality(op):
    if op.arity == 1:
        expr = FeatureExpr((Token.feature("f1"), Token.op(op.kind)))
        out = evaluate(expr, {"f1": STRESS})
        assert np.all(np.isfinite(out)), (op.kind, out)
    else:
        a, b = np.meshgrid(STRESS, STRESS)
        expr = FeatureExpr((Token.feature("f1"), Token.feature("f2"), Token.op(op.kind)))
        out = evaluate(expr, {"f1": a.ravel(), "f2": b.ravel()})
        assert np.all(np.isfinite(out)), op.kind


def test_guard_values():
    x = np.array([0.0, -4.0, 4.0])
    ev = lambda s: evaluate(parse_expression(s, SCHEMA), {"f1": x})  # noqa: E731
    np.testing.assert_allclose(ev("f1 sqrt_abs"), [0.0, 2.0, 2.0])
    np.testing.assert_allclose(ev("f1 log_abs"), [math.log(1e-8), math.log(4 + 1e-8), math.log(4 + 1e-8)])
    assert ev("f1 recip")[0] == pytest.approx(1e8)
    assert evaluate(parse_expression("f1 exp_clip", SCHEMA), {"f1": np.array([1000.0])})[0] == pytest.approx(math.exp(50))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
       st.integers(0, 2**31 - 1))
def test_property_finite_and_roundtrip(vals, seed):
    r = np.random.default_rng(seed)
    e = random_expr(r, SCHEMA)
    cols = {k: np.array(vals) for k in SCHEMA}
    assert np.all(np.isfinite(evaluate(e, cols)))
    assert parse_expression(render_postfix(e), SCHEMA).tokens == e.tokens

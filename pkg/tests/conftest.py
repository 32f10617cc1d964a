import numpy as np
import pytest

from featforge.expr import OPERATORS, FeatureExpr, Token


def random_expr(rng, schema, max_depth=4, leaf_p=0.3):
    """Random postfix expression grown top-down; depth never exceeds ``max_depth``."""
    def grow(depth):
        if depth == 0 or rng.random() < leaf_p:
            return [Token.feature(schema[rng.integers(len(schema))])]
        ops = list(OPERATORS)
        op = ops[rng.integers(len(ops))]
        tokens = []
        for _ in range(op.arity):
            tokens += grow(depth - 1)
        return tokens + [Token.op(op.kind)]

    while True:
        tokens = grow(max_depth)
        if len(tokens) <= 25:
            return FeatureExpr(tuple(tokens))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_frame():
    from featforge.data import Frame, Task

    r = np.random.default_rng(0)
    X = r.standard_normal((60, 3))
    return Frame({"a": X[:, 0], "b": X[:, 1], "c": X[:, 2]}, X[:, 0] * X[:, 1], Task.REGRESSION, name="small")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

"""Postfix feature expressions over a fixed operator roster.

A derived feature is a postfix token sequence such as ``f1 f2 *`` or
``f3 sin``.  Feature tokens always name base columns; composing two
derived features inlines their tokens.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    ExpressionTooLarge,
    LengthMismatch,
    MalformedExpression,
    MissingColumn,
    UnknownToken,
)

EPS = 1e-8
EXP_CAP = 50.0
# operator outputs saturate here so that overflow never yields inf/nan
SATURATION = 1e300

DEFAULT_MAX_DEPTH = 4
DEFAULT_MAX_TOKENS = 25

EXPR_SEP = ", "


def _sign(x):
    return np.where(x >= 0, 1.0, -1.0)


def _recip(x):
    return 1.0 / (_sign(x) * (np.abs(x) + EPS))


def _div(a, b):
    return a / (_sign(b) * (np.abs(b) + EPS))


class Operator(NamedTuple):
    kind: str
    spelling: str
    arity: int
    func: Callable
    commutative: bool = False
    infix: str | None = None


class OperatorSet:
    """Registry of unary and binary operators, keyed by kind and spelling."""

    def __init__(self, operators: Iterable[Operator] = ()):
        self._by_kind: dict[str, Operator] = {}
        self._by_spelling: dict[str, Operator] = {}
        for op in operators:
            self.register(op)

    def register(self, op: Operator) -> None:
        if op.arity not in (1, 2):
            raise ValueError(f"operator arity must be 1 or 2, got {op.arity}")
        if op.kind in self._by_kind or op.spelling in self._by_spelling:
            raise ValueError(f"operator {op.kind!r} already registered")
        self._by_kind[op.kind] = op
        self._by_spelling[op.spelling] = op

    def __getitem__(self, kind: str) -> Operator:
        return self._by_kind[kind]

    def __contains__(self, kind: str) -> bool:
        return kind in self._by_kind

    def __iter__(self):
        return iter(self._by_kind.values())

    def __len__(self):
        return len(self._by_kind)

    def by_spelling(self, spelling: str) -> Operator | None:
        return self._by_spelling.get(spelling)

    @property
    def unary(self) -> list[Operator]:
        return [op for op in self if op.arity == 1]

    @property
    def binary(self) -> list[Operator]:
        return [op for op in self if op.arity == 2]


OPERATORS = OperatorSet(
    [
        Operator("square", "square", 1, np.square),
        Operator("cube", "cube", 1, lambda x: x * x * x),
        Operator("sqrt_abs", "sqrt_abs", 1, lambda x: np.sqrt(np.abs(x))),
        Operator("log_abs", "log_abs", 1, lambda x: np.log(np.abs(x) + EPS)),
        Operator("exp_clip", "exp_clip", 1, lambda x: np.exp(np.minimum(x, EXP_CAP))),
        Operator("sin", "sin", 1, np.sin),
        Operator("cos", "cos", 1, np.cos),
        Operator("tanh", "tanh", 1, np.tanh),
        Operator("recip_guard", "recip", 1, _recip),
        Operator("add", "+", 2, np.add, commutative=True, infix="+"),
        Operator("sub", "-", 2, np.subtract, infix="-"),
        Operator("mul", "*", 2, np.multiply, commutative=True, infix="*"),
        Operator("div_guard", "/", 2, _div, infix="/"),
    ]
)


class Token(NamedTuple):
    """One postfix token: ``kind`` is ``"feature"``, ``"unary"`` or ``"binary"``."""

    kind: str
    value: str

    @classmethod
    def feature(cls, name: str) -> "Token":
        return cls("feature", name)

    @classmethod
    def op(cls, kind: str, operators: OperatorSet = OPERATORS) -> "Token":
        arity = operators[kind].arity
        return cls("unary" if arity == 1 else "binary", kind)

    @property
    def arity(self) -> int:
        return {"feature": 0, "unary": 1, "binary": 2}[self.kind]


def _stack_depths(tokens: Sequence[Token]) -> int:
    """Simulate the postfix stack and return the max nesting depth."""
    stack: list[int] = []
    for tok in tokens:
        if tok.arity == 0:
            stack.append(0)
        elif len(stack) < tok.arity:
            raise MalformedExpression(f"stack underflow at token {tok.value!r}")
        else:
            args = [stack.pop() for _ in range(tok.arity)]
            stack.append(max(args) + 1)
    if len(stack) != 1:
        raise MalformedExpression(f"expression leaves {len(stack)} values on the stack")
    return stack[0]


@dataclass(frozen=True)
class FeatureExpr:
    tokens: tuple[Token, ...]
    depth: int = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(Token(*t) for t in self.tokens))
        if not self.tokens:
            raise MalformedExpression("empty expression")
        object.__setattr__(self, "depth", _stack_depths(self.tokens))

    @classmethod
    def base(cls, name: str) -> "FeatureExpr":
        return cls((Token.feature(name),))

    @property
    def is_base(self) -> bool:
        return len(self.tokens) == 1

    @property
    def features(self) -> set[str]:
        return {t.value for t in self.tokens if t.kind == "feature"}

    @cached_property
    def key(self) -> str:
        return canonical_key(self)

    @cached_property
    def name(self) -> str:
        if self.is_base:
            return self.tokens[0].value
        digest = hashlib.sha1(self.key.encode("utf-8")).hexdigest()
        return "g" + digest[:8]

    def __str__(self):
        return render_postfix(self)


def check_caps(expr: FeatureExpr, max_depth: int = DEFAULT_MAX_DEPTH,
               max_tokens: int = DEFAULT_MAX_TOKENS) -> FeatureExpr:
    if expr.depth > max_depth:
        raise ExpressionTooLarge(f"depth {expr.depth} exceeds cap {max_depth}")
    if len(expr.tokens) > max_tokens:
        raise ExpressionTooLarge(f"{len(expr.tokens)} tokens exceed cap {max_tokens}")
    return expr


def compose(kind: str, *operands: FeatureExpr, operators: OperatorSet = OPERATORS) -> FeatureExpr:
    """Apply operator ``kind`` to operand expressions, inlining their tokens."""
    op = operators[kind]
    if len(operands) != op.arity:
        raise MalformedExpression(f"{kind} takes {op.arity} operand(s), got {len(operands)}")
    tokens = [t for e in operands for t in e.tokens]
    tokens.append(Token.op(kind, operators))
    return FeatureExpr(tuple(tokens))


def parse_expression(text: str, schema: Iterable[str],
                     aliases: Mapping[str, FeatureExpr] | None = None,
                     operators: OperatorSet = OPERATORS,
                     max_depth: int = DEFAULT_MAX_DEPTH,
                     max_tokens: int = DEFAULT_MAX_TOKENS) -> FeatureExpr:
    """Parse a single whitespace-separated postfix expression.

    ``aliases`` maps derived feature names to expressions whose tokens are
    substituted in place of the name.
    """
    columns = set(schema)
    aliases = aliases or {}
    tokens: list[Token] = []
    for raw in text.split():
        op = operators.by_spelling(raw)
        if raw in columns:
            tokens.append(Token.feature(raw))
        elif op is not None:
            tokens.append(Token.op(op.kind, operators))
        elif raw in aliases:
            tokens.extend(aliases[raw].tokens)
        else:
            raise UnknownToken(f"unknown token {raw!r}")
    if not tokens:
        raise MalformedExpression("empty expression")
    return check_caps(FeatureExpr(tuple(tokens)), max_depth, max_tokens)


def parse_postfix(text: str, schema: Iterable[str], **kwargs) -> list[FeatureExpr]:
    """Parse comma-separated postfix expressions, e.g. ``"f1 f2 *, f3 sin"``."""
    if not text or not text.strip():
        raise MalformedExpression("empty expression text")
    schema = list(schema)
    return [parse_expression(part, schema, **kwargs) for part in text.split(",")]


def render_postfix(expr: FeatureExpr, operators: OperatorSet = OPERATORS) -> str:
    return " ".join(
        t.value if t.kind == "feature" else operators[t.value].spelling
        for t in expr.tokens
    )


def _fold(expr: FeatureExpr, leaf, node, operators: OperatorSet):
    stack = []
    for tok in expr.tokens:
        if tok.kind == "feature":
            stack.append(leaf(tok.value))
        else:
            op = operators[tok.value]
            args = stack[-op.arity:]
            del stack[-op.arity:]
            stack.append(node(op, args))
    return stack[0]


def render_infix(expr: FeatureExpr, operators: OperatorSet = OPERATORS) -> str:
    """Fully parenthesized infix rendering, e.g. ``(f1 * f2)`` or ``sin(f3)``."""

    def node(op, args):
        if op.arity == 2:
            return f"({args[0]} {op.infix or op.spelling} {args[1]})"
        if op.kind == "square":
            return f"({args[0]})^2"
        if op.kind == "cube":
            return f"({args[0]})^3"
        return f"{op.spelling}({args[0]})"

    return _fold(expr, lambda name: name, node, operators)


def canonical_key(expr: FeatureExpr, operators: OperatorSet = OPERATORS) -> str:
    """Structural key; operands of commutative operators are sorted."""

    def node(op, args):
        if op.commutative:
            args = sorted(args)
        return f"{op.kind}({','.join(args)})"

    return _fold(expr, lambda name: name, node, operators)


def evaluate(expr: FeatureExpr, columns: Mapping[str, np.ndarray],
             operators: OperatorSet = OPERATORS) -> np.ndarray:
    """Evaluate ``expr`` column-wise; the result is finite for finite input."""
    n = None
    for name in expr.features:
        if name not in columns:
            raise MissingColumn(f"column {name!r} not found")
        size = len(columns[name])
        if n is None:
            n = size
        elif size != n:
            raise LengthMismatch(f"column {name!r} has length {size}, expected {n}")

    stack: list[np.ndarray] = []
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for tok in expr.tokens:
            if tok.kind == "feature":
                stack.append(np.asarray(columns[tok.value], dtype=np.float64))
                continue
            op = operators[tok.value]
            if op.arity == 1:
                out = op.func(stack.pop())
            else:
                b = stack.pop()
                a = stack.pop()
                out = op.func(a, b)
            stack.append(np.clip(out, -SATURATION, SATURATION))
    return stack[0].copy() if expr.is_base else stack[0]

"""Scalar-field expressions with exact first and second derivatives.

Expressions over variables ``x1..xn`` are parsed into an immutable AST and
evaluated with second-order forward-mode jets, so gradients and Hessians are
exact derivatives of the parsed formula (no finite differencing).

Grammar (standard precedence, left-associative within a level)::

    expr     := term (('+'|'-') term)*
    term     := unary (('*'|'/') unary)*
    unary    := '-' unary | power
    power    := primary ('^' exponent)*      # exponent: optionally signed integer
    primary  := NUMBER | 'pi' | 'x'INT | FUNC '(' expr ')' | '(' expr ')'
    FUNC     := sin | cos | exp | sqrt | log
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExpressionError",
    "FieldExpr",
    "parse_expression",
    "evaluate_jet",
]


class ExpressionError(ValueError):
    """Parse or evaluation failure, with byte offset / offending subexpression."""

    def __init__(self, message, offset=None, subexpr=None):
        parts = [message]
        if offset is not None:
            parts.append(f"at offset {offset}")
        if subexpr is not None:
            parts.append(f"in '{subexpr}'")
        super().__init__(" ".join(parts))
        self.offset = offset
        self.subexpr = subexpr


# ---------------------------------------------------------------------------
# AST nodes.  Spans are kept for diagnostics but excluded from equality so the
# parse -> pretty-print -> parse round trip compares structurally.

@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Num(Node):
    value: float
    span: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var(Node):
    index: int  # 0-based
    span: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg(Node):
    arg: Node
    span: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # '+', '-', '*', '/'
    lhs: Node
    rhs: Node
    span: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int
    span: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Func(Node):
    name: str  # sin, cos, exp, sqrt, log
    arg: Node
    span: int = field(default=0, compare=False)


_FUNCS = ("sin", "cos", "exp", "sqrt", "log")


# ---------------------------------------------------------------------------
# Tokenizer / recursive-descent parser.

class _Parser:
    def __init__(self, text, n):
        self.text = text
        self.n = n
        self.pos = 0

    def error(self, message, offset=None):
        raise ExpressionError(message, offset=self.pos if offset is None else offset)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def accept(self, ch):
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def expect(self, ch):
        if not self.accept(ch):
            self.error(f"expected '{ch}'")

    def parse(self):
        node = self.parse_expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected character '{self.text[self.pos]}'")
        return node

    def parse_expr(self):
        node = self.parse_term()
        while True:
            here = self.pos
            c = self.peek()
            if c and c in "+-":
                self.pos += 1
                rhs = self.parse_term()
                node = BinOp(c, node, rhs, span=here)
            else:
                return node

    def parse_term(self):
        node = self.parse_unary()
        while True:
            here = self.pos
            c = self.peek()
            if c and c in "*/":
                self.pos += 1
                rhs = self.parse_unary()
                node = BinOp(c, node, rhs, span=here)
            else:
                return node

    def parse_unary(self):
        here = self.pos
        if self.accept("-"):
            return Neg(self.parse_unary(), span=here)
        return self.parse_power()

    def parse_power(self):
        node = self.parse_primary()
        while self.peek() == "^":
            here = self.pos
            self.pos += 1
            node = Pow(node, self.parse_exponent(), span=here)
        return node

    def parse_exponent(self):
        self.skip_ws()
        start = self.pos
        sign = 1
        if self.accept("-"):
            sign = -1
        self.skip_ws()
        digits = ""
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            digits += self.text[self.pos]
            self.pos += 1
        if not digits:
            self.error("exponent must be an integer literal", offset=start)
        return sign * int(digits)

    def parse_primary(self):
        self.skip_ws()
        start = self.pos
        if self.pos >= len(self.text):
            self.error("unexpected end of expression")
        c = self.text[self.pos]
        if c == "(":
            self.pos += 1
            node = self.parse_expr()
            self.expect(")")
            return node
        if c.isdigit() or c == ".":
            return self.parse_number()
        if c.isalpha() or c == "_":
            name = ""
            while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
                name += self.text[self.pos]
                self.pos += 1
            if name == "pi":
                return Num(math.pi, span=start)
            if name in _FUNCS:
                self.expect("(")
                arg = self.parse_expr()
                self.expect(")")
                return Func(name, arg, span=start)
            if name.startswith("x") and name[1:].isdigit():
                idx = int(name[1:])
                if not 1 <= idx <= self.n:
                    raise ExpressionError(
                        f"variable index out of range: {name} with dimension {self.n}",
                        offset=start,
                    )
                return Var(idx - 1, span=start)
            raise ExpressionError(f"unknown identifier '{name}'", offset=start)
        self.error(f"unexpected character '{c}'")

    def parse_number(self):
        start = self.pos
        text = self.text
        while self.pos < len(text) and (text[self.pos].isdigit() or text[self.pos] == "."):
            self.pos += 1
        if self.pos < len(text) and text[self.pos] in "eE":
            mark = self.pos
            self.pos += 1
            if self.pos < len(text) and text[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(text) and text[self.pos].isdigit():
                while self.pos < len(text) and text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = mark  # 'e' was not an exponent
        try:
            return Num(float(text[start:self.pos]), span=start)
        except ValueError:
            self.error("malformed number", offset=start)


# ---------------------------------------------------------------------------
# Pretty printer (minimal parentheses).

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "pow": 4, "atom": 5}


def _pretty(node, parent_prec=0, right=False):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Func):
        return f"{node.name}({_pretty(node.arg)})"
    if isinstance(node, Neg):
        s = "-" + _pretty(node.arg, _PREC["neg"])
        return f"({s})" if parent_prec > _PREC["neg"] or (parent_prec == _PREC["neg"] and right) else s
    if isinstance(node, Pow):
        base = _pretty(node.base, _PREC["pow"] + 1)
        s = f"{base}^{node.exponent}" if node.exponent >= 0 else f"{base}^-{-node.exponent}"
        return s
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        lhs = _pretty(node.lhs, prec, right=False)
        rhs = _pretty(node.rhs, prec + (1 if node.op in "-/" else 0), right=True)
        # '+' and '*' still need the rhs guarded against equal-precedence ops
        # that do not commute with them textually (a - (b + c) etc. handled above;
        # a + b - c is fine left-assoc).
        if node.op in "+*":
            rhs = _pretty(node.rhs, prec, right=True)
        s = f"{lhs} {node.op} {rhs}"
        return f"({s})" if parent_prec > prec or (parent_prec == prec and right) else s
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Forward-mode evaluation.  Order 0 = value, 1 = +gradient, 2 = +Hessian.
# Gradients are tuples, Hessians dense (n, n) ndarrays; both exact.

def _domain_error(node, message):
    raise ExpressionError(f"domain error: {message}", subexpr=_pretty(node))


def _value(node, x):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x[node.index]
    if isinstance(node, Neg):
        return -_value(node.arg, x)
    if isinstance(node, BinOp):
        a = _value(node.lhs, x)
        b = _value(node.rhs, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0.0:
            _domain_error(node, "division by zero")
        return a / b
    if isinstance(node, Pow):
        a = _value(node.base, x)
        if a == 0.0 and node.exponent < 0:
            _domain_error(node, "zero to a negative power")
        return a ** node.exponent
    if isinstance(node, Func):
        a = _value(node.arg, x)
        if node.name == "sin":
            return math.sin(a)
        if node.name == "cos":
            return math.cos(a)
        if node.name == "exp":
            return math.exp(a)
        if node.name == "sqrt":
            if a < 0.0:
                _domain_error(node, "sqrt of a negative value")
            return math.sqrt(a)
        if a <= 0.0:
            _domain_error(node, "log of a non-positive value")
        return math.log(a)
    raise TypeError(f"unknown node {node!r}")


def _value_grad(node, x, n):
    """Recursive (value, gradient-tuple) evaluation; the integrator hot path."""
    if isinstance(node, Num):
        return node.value, (0.0,) * n
    if isinstance(node, Var):
        g = [0.0] * n
        g[node.index] = 1.0
        return x[node.index], tuple(g)
    if isinstance(node, Neg):
        v, g = _value_grad(node.arg, x, n)
        return -v, tuple(-gi for gi in g)
    if isinstance(node, BinOp):
        va, ga = _value_grad(node.lhs, x, n)
        vb, gb = _value_grad(node.rhs, x, n)
        if node.op == "+":
            return va + vb, tuple(a + b for a, b in zip(ga, gb))
        if node.op == "-":
            return va - vb, tuple(a - b for a, b in zip(ga, gb))
        if node.op == "*":
            return va * vb, tuple(vb * a + va * b for a, b in zip(ga, gb))
        if vb == 0.0:
            _domain_error(node, "division by zero")
        inv = 1.0 / vb
        v = va * inv
        return v, tuple((a - v * b) * inv for a, b in zip(ga, gb))
    if isinstance(node, Pow):
        va, ga = _value_grad(node.base, x, n)
        k = node.exponent
        if va == 0.0 and k < 0:
            _domain_error(node, "zero to a negative power")
        if k == 0:
            return 1.0, (0.0,) * n
        vk1 = va ** (k - 1)
        return vk1 * va, tuple(k * vk1 * a for a in ga)
    if isinstance(node, Func):
        va, ga = _value_grad(node.arg, x, n)
        if node.name == "sin":
            v, d = math.sin(va), math.cos(va)
        elif node.name == "cos":
            v, d = math.cos(va), -math.sin(va)
        elif node.name == "exp":
            v = d = math.exp(va)
        elif node.name == "sqrt":
            if va <= 0.0:
                _domain_error(node, "sqrt of a non-positive value (derivative undefined)")
            v = math.sqrt(va)
            d = 0.5 / v
        else:  # log
            if va <= 0.0:
                _domain_error(node, "log of a non-positive value")
            v, d = math.log(va), 1.0 / va
        return v, tuple(d * a for a in ga)
    raise TypeError(f"unknown node {node!r}")


def _jet2(node, x, n):
    """Recursive (value, grad ndarray, hess ndarray) evaluation."""
    if isinstance(node, Num):
        return node.value, np.zeros(n), np.zeros((n, n))
    if isinstance(node, Var):
        g = np.zeros(n)
        g[node.index] = 1.0
        return x[node.index], g, np.zeros((n, n))
    if isinstance(node, Neg):
        v, g, h = _jet2(node.arg, x, n)
        return -v, -g, -h
    if isinstance(node, BinOp):
        va, ga, ha = _jet2(node.lhs, x, n)
        vb, gb, hb = _jet2(node.rhs, x, n)
        if node.op == "+":
            return va + vb, ga + gb, ha + hb
        if node.op == "-":
            return va - vb, ga - gb, ha - hb
        if node.op == "*":
            cross = np.outer(ga, gb)
            return va * vb, va * gb + vb * ga, va * hb + vb * ha + cross + cross.T
        if vb == 0.0:
            _domain_error(node, "division by zero")
        # a / b = a * (1/b)
        iv = 1.0 / vb
        gi = -gb * iv * iv
        hi = -hb * iv * iv + 2.0 * iv ** 3 * np.outer(gb, gb)
        cross = np.outer(ga, gi)
        return va * iv, va * gi + iv * ga, va * hi + iv * ha + cross + cross.T
    if isinstance(node, Pow):
        va, ga, ha = _jet2(node.base, x, n)
        k = node.exponent
        if va == 0.0 and k < 2 and k != 0:
            if k < 0:
                _domain_error(node, "zero to a negative power")
            return 0.0, ga.copy(), ha.copy()  # k == 1
        if k == 0:
            return 1.0, np.zeros(n), np.zeros((n, n))
        vk2 = va ** (k - 2) if k != 1 else 0.0
        vk1 = vk2 * va if k != 1 else 1.0
        v = vk1 * va
        g = k * vk1 * ga
        h = k * vk1 * ha + k * (k - 1) * vk2 * np.outer(ga, ga)
        return v, g, h
    if isinstance(node, Func):
        va, ga, ha = _jet2(node.arg, x, n)
        if node.name == "sin":
            v, d1, d2 = math.sin(va), math.cos(va), -math.sin(va)
        elif node.name == "cos":
            v, d1, d2 = math.cos(va), -math.sin(va), -math.cos(va)
        elif node.name == "exp":
            v = d1 = d2 = math.exp(va)
        elif node.name == "sqrt":
            if va <= 0.0:
                _domain_error(node, "sqrt of a non-positive value (derivative undefined)")
            v = math.sqrt(va)
            d1 = 0.5 / v
            d2 = -0.25 / (v * va)
        else:  # log
            if va <= 0.0:
                _domain_error(node, "log of a non-positive value")
            v, d1, d2 = math.log(va), 1.0 / va, -1.0 / (va * va)
        return v, d1 * ga, d1 * ha + d2 * np.outer(ga, ga)
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Public surface.

@dataclass(frozen=True)
class FieldExpr:
    """An immutable parsed scalar field on R^n.

    Safe to evaluate concurrently; all evaluation state is local.
    """

    root: Node
    n: int
    source: str = field(default="", compare=False)

    def pretty(self):
        return _pretty(self.root)

    def value(self, x):
        return _value(self.root, x)

    def value_grad(self, x):
        v, g = _value_grad(self.root, x, self.n)
        return v, g

    def jet(self, x):
        return _jet2(self.root, x, self.n)


def parse_expression(text: str, n: int) -> FieldExpr:
    """Parse ``text`` over variables x1..xn into a :class:`FieldExpr`."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    if n < 1:
        raise ExpressionError(f"dimension must be >= 1, got {n}")
    root = _Parser(text, n).parse()
    return FieldExpr(root, n, source=text)


def evaluate_jet(expr: FieldExpr, x):
    """Return (value, gradient, hessian) of ``expr`` at ``x``.

    The gradient is an (n,) array, the Hessian an (n, n) symmetric array;
    both are exact forward-mode derivatives of the AST.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (expr.n,):
        raise ExpressionError(f"expected a point in R^{expr.n}, got shape {x.shape}")
    v, g, h = _jet2(expr.root, x, expr.n)
    return v, g, 0.5 * (h + h.T)

"""Small arithmetic expression language for inline problem definitions.

Grammar (standard precedence, ^ binds tightest and associates right):

    expr    := term (("+" | "-") term)*
    term    := factor (("*" | "/") factor)*
    factor  := "-" factor | power
    power   := primary ("^" factor)?
    primary := NUMBER | VAR | FUNC "(" expr ("," expr)* ")" | "(" expr ")"

Variables are `x` (scalar problems) or `x0` .. `x{d-1}`. Functions: exp,
abs, tanh, sin, cos, sqrt (unary) and min, max (binary). Note `-x^2`
parses as `-(x^2)` and `2^-3` is accepted (the exponent is a factor).

Evaluation is total on finite inputs except division by zero, sqrt of a
negative, and a negative base under a fractional `^`, which raise
evaluation errors. exp and ^ overflow to inf rather than raising, matching
the engine's treatment of divergence as an observable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import ExpressionError, ExpressionEvalError

# ---------------------------------------------------------------------------
# AST

Node = Union["Num", "Var", "Unary", "Binary", "Call"]


@dataclass(frozen=True)
class Num:
    value: float  # nonnegative; negative literals parse as Unary(Num)


@dataclass(frozen=True)
class Var:
    name: str  # the spelling: "x" or "x<k>"
    index: int


@dataclass(frozen=True)
class Unary:
    operand: Node


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    left: Node
    right: Node


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple[Node, ...]


FUNCTIONS = {
    "exp": 1,
    "abs": 1,
    "tanh": 1,
    "sin": 1,
    "cos": 1,
    "sqrt": 1,
    "min": 2,
    "max": 2,
}

_VAR_RE = re.compile(r"^x(0|[1-9][0-9]*)?$")
_NUM_RE = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


# ---------------------------------------------------------------------------
# lexer


@dataclass(frozen=True)
class _Token:
    kind: str  # NUM IDENT OP LPAREN RPAREN COMMA END
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            m = _NUM_RE.match(text, i)
            if not m:
                raise ExpressionError(f"malformed number near {text[i:i+8]!r}", i)
            tokens.append(_Token("NUM", m.group(0), i))
            i = m.end()
            continue
        if ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(text, i)
            tokens.append(_Token("IDENT", m.group(0), i))
            i = m.end()
            continue
        if ch in "+-*/^":
            tokens.append(_Token("OP", ch, i))
            i += 1
            continue
        if ch == "(":
            tokens.append(_Token("LPAREN", ch, i))
            i += 1
            continue
        if ch == ")":
            tokens.append(_Token("RPAREN", ch, i))
            i += 1
            continue
        if ch == ",":
            tokens.append(_Token("COMMA", ch, i))
            i += 1
            continue
        raise ExpressionError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("END", "", n))
    return tokens


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.cur
        self.i += 1
        return t

    def expect(self, kind: str, what: str) -> _Token:
        if self.cur.kind != kind:
            raise ExpressionError(f"expected {what}", self.cur.pos)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.cur.kind != "END":
            raise ExpressionError(
                f"unexpected {self.cur.text!r} after expression", self.cur.pos
            )
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.cur.kind == "OP" and self.cur.text in "+-":
            op = self.advance().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.cur.kind == "OP" and self.cur.text in "*/":
            op = self.advance().text
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.cur.kind == "OP" and self.cur.text == "-":
            self.advance()
            return Unary(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.cur.kind == "OP" and self.cur.text == "^":
            self.advance()
            return Binary("^", base, self.factor())  # right associative
        return base

    def primary(self) -> Node:
        tok = self.cur
        if tok.kind == "NUM":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "IDENT":
            self.advance()
            if self.cur.kind == "LPAREN":
                if tok.text not in FUNCTIONS:
                    raise ExpressionError(
                        f"unknown function {tok.text!r}", tok.pos
                    )
                self.advance()
                args = [self.expr()]
                while self.cur.kind == "COMMA":
                    self.advance()
                    args.append(self.expr())
                self.expect("RPAREN", "')'")
                arity = FUNCTIONS[tok.text]
                if len(args) != arity:
                    raise ExpressionError(
                        f"{tok.text} takes {arity} argument(s), got {len(args)}",
                        tok.pos,
                    )
                return Call(tok.text, tuple(args))
            m = _VAR_RE.match(tok.text)
            if not m:
                raise ExpressionError(f"unknown identifier {tok.text!r}", tok.pos)
            index = int(m.group(1)) if m.group(1) is not None else 0
            return Var(tok.text, index)
        if tok.kind == "LPAREN":
            self.advance()
            node = self.expr()
            self.expect("RPAREN", "')'")
            return node
        if tok.kind == "END":
            raise ExpressionError("unexpected end of expression", tok.pos)
        raise ExpressionError(f"unexpected {tok.text!r}", tok.pos)


def parse_expression(text: str) -> Node:
    """Parse to an AST; raises ExpressionError with a character offset."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# pretty printer (minimal parentheses; parse(pretty(ast)) == ast)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "unary": 3, "^": 4, "atom": 5}


def _prec(node: Node) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["unary"]
    return _PREC["atom"]


def _fmt_num(v: float) -> str:
    # integral literals render without the trailing .0; both spellings
    # parse back to the same Num
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def pretty(node: Node) -> str:
    """Render with the fewest parentheses that preserve the tree."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        inner = pretty(node.operand)
        if _prec(node.operand) < _PREC["unary"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(pretty(a) for a in node.args)})"
    # Binary
    mine = _PREC[node.op]
    left, right = pretty(node.left), pretty(node.right)
    if node.op == "^":
        # right associative; also wrap a unary-minus base, which would
        # otherwise rebind as -(base^exp)
        if _prec(node.left) <= mine:
            left = f"({left})"
        if _prec(node.right) < mine and not isinstance(node.right, Unary):
            right = f"({right})"
    else:
        if _prec(node.left) < mine:
            left = f"({left})"
        if _prec(node.right) <= mine:
            right = f"({right})"
    return f"{left} {node.op} {right}" if node.op in "+-" else f"{left}{node.op}{right}"


# ---------------------------------------------------------------------------
# evaluation


def _f_exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def _f_sqrt(v: float) -> float:
    if v < 0.0:
        raise ExpressionEvalError(f"sqrt of negative value {v}")
    return math.sqrt(v)


def _f_pow(a: float, b: float) -> float:
    try:
        return math.pow(a, b)
    except OverflowError:
        return math.inf
    except ValueError:
        raise ExpressionEvalError(
            f"invalid power {a} ^ {b} (negative base, fractional exponent)"
        ) from None


def _f_div(a: float, b: float) -> float:
    if b == 0.0:
        raise ExpressionEvalError("division by zero")
    return a / b


_ENV: dict[str, Callable] = {
    "exp": _f_exp,
    "abs": abs,
    "tanh": math.tanh,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": _f_sqrt,
    "min": min,
    "max": max,
    "_pow": _f_pow,
    "_div": _f_div,
}


def max_var_index(node: Node) -> int:
    """Largest variable index referenced; -1 when the expression is constant."""
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Unary):
        return max_var_index(node.operand)
    if isinstance(node, Binary):
        return max(max_var_index(node.left), max_var_index(node.right))
    if isinstance(node, Call):
        return max((max_var_index(a) for a in node.args), default=-1)
    return -1


def uses_bare_x(node: Node) -> bool:
    """True when the spelling `x` (no index) appears anywhere."""
    if isinstance(node, Var):
        return node.name == "x"
    if isinstance(node, Unary):
        return uses_bare_x(node.operand)
    if isinstance(node, Binary):
        return uses_bare_x(node.left) or uses_bare_x(node.right)
    if isinstance(node, Call):
        return any(uses_bare_x(a) for a in node.args)
    return False


def _codegen(node: Node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x[{node.index}]"
    if isinstance(node, Unary):
        return f"(-{_codegen(node.operand)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(_codegen(a) for a in node.args)})"
    l, r = _codegen(node.left), _codegen(node.right)
    if node.op == "^":
        return f"_pow({l}, {r})"
    if node.op == "/":
        return f"_div({l}, {r})"
    return f"({l} {node.op} {r})"


def compile_scalar(node: Node, dimension: int) -> Callable[[np.ndarray], float]:
    """Compile to a float-valued function of the state vector."""
    top = max_var_index(node)
    if top >= dimension:
        raise ExpressionError(
            f"expression uses x{top} but the problem has dimension {dimension}"
        )
    if dimension > 1 and uses_bare_x(node):
        raise ExpressionError(
            f"bare `x` is only valid in dimension 1; use x0..x{dimension - 1}"
        )
    src = f"def _f(x): return {_codegen(node)}"
    ns = dict(_ENV)
    exec(src, ns)
    return ns["_f"]


def compile_vector(
    components: list[Node], dimension: int
) -> Callable[[np.ndarray], np.ndarray]:
    """Compile component expressions to a vector-valued function."""
    if len(components) != dimension:
        raise ExpressionError(
            f"need {dimension} component expression(s), got {len(components)}"
        )
    fns = [compile_scalar(c, dimension) for c in components]
    if dimension == 1:
        f0 = fns[0]

        def _vec1(x: np.ndarray) -> np.ndarray:
            return np.array([f0(x)])

        return _vec1

    def _vec(x: np.ndarray) -> np.ndarray:
        return np.array([f(x) for f in fns])

    return _vec


def eval_expression(node: Node, x) -> float:
    """Direct AST evaluation (reference semantics for the compiled form)."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        if node.index >= len(xv):
            raise ExpressionEvalError(
                f"variable {node.name} out of range for a state of length {len(xv)}"
            )
        return float(xv[node.index])
    if isinstance(node, Unary):
        return -eval_expression(node.operand, x)
    if isinstance(node, Call):
        args = [eval_expression(a, x) for a in node.args]
        return float(_ENV[node.func](*args))
    l = eval_expression(node.left, x)
    r = eval_expression(node.right, x)
    if node.op == "+":
        return l + r
    if node.op == "-":
        return l - r
    if node.op == "*":
        return l * r
    if node.op == "/":
        return _f_div(l, r)
    return _f_pow(l, r)

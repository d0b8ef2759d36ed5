"""A tiny expression language for Lagrangians, probe functions and fields.

Grammar (``^`` binds tighter than unary minus and is right associative)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | NAME "[" INT "]"
            | "(" expr ")"

Variables are ``x1 .. xn`` (the point), ``u`` (the function value) and
``z1 .. zk`` (the gradient slot); ``x[1]`` and ``z[2]`` are accepted
spellings of the same variables. ``pi`` and ``e`` are constants.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, UnknownIdentifierError

FUNCTIONS = {
    "exp": (1, np.exp),
    "log": (1, np.log),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tan": (1, np.tan),
    "tanh": (1, np.tanh),
    "min": (None, lambda *a: np.minimum.reduce(np.broadcast_arrays(*a))),
    "max": (None, lambda *a: np.maximum.reduce(np.broadcast_arrays(*a))),
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),\[\]]))"
)
_VAR = re.compile(r"^(x|z)([1-9]\d*)$")


# Expression tree ----------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "x", "u" or "z"
    index: int = 0  # 1-based for x and z


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


# Tokenizer / parser -------------------------------------------------------

def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if m is None:
            bad = len(source) - len(source[pos:].lstrip())
            raise ParseError(f"unexpected character {source[bad]!r}", bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                return self.call(text, pos)
            if nxt[0] == "op" and nxt[1] == "[":
                return self.indexed(text, pos)
            return self.name(text, pos)
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected a number, name or '(', found {found}", pos)

    def call(self, name, pos):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r}", pos)
        self.take()
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = FUNCTIONS[name][0]
        if arity is not None and len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s), got {len(args)}", pos)
        if arity is None and len(args) < 2:
            raise ParseError(f"{name} needs at least two arguments", pos)
        return Call(name, tuple(args))

    def indexed(self, name, pos):
        if name not in ("x", "z"):
            raise UnknownIdentifierError(f"{name!r} cannot be indexed", pos)
        self.take()
        kind, text, ipos = self.take()
        if kind != "num" or not text.isdigit() or int(text) < 1:
            raise ParseError("index must be a positive integer", ipos)
        self.expect("]")
        return Var(name, int(text))

    def name(self, text, pos):
        if text == "u":
            return Var("u")
        if text in CONSTANTS:
            # kept symbolic so the printer writes the name back
            return Call(text, ())
        m = _VAR.match(text)
        if m:
            return Var(m.group(1), int(m.group(2)))
        raise UnknownIdentifierError(f"unknown identifier {text!r}", pos)


def parse(source):
    """Parse ``source`` into an expression tree."""
    if not isinstance(source, str) or not source.strip():
        raise ParseError("empty expression", 0)
    return _Parser(source).parse()


# Printing -----------------------------------------------------------------

def to_source(node):
    """Canonical, fully parenthesized text that parses back to ``node``."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return "u" if node.kind == "u" else f"{node.kind}{node.index}"
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        if not node.args:
            return node.name
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


# Analysis -----------------------------------------------------------------

def variables(node):
    """Set of ``Var`` nodes used in ``node``."""
    out = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Var):
            out.add(cur)
        elif isinstance(cur, Neg):
            stack.append(cur.operand)
        elif isinstance(cur, BinOp):
            stack.extend((cur.left, cur.right))
        elif isinstance(cur, Call):
            stack.extend(cur.args)
    return out


def max_index(node, kind):
    return max((v.index for v in variables(node) if v.kind == kind), default=0)


def uses(node, kind):
    return any(v.kind == kind for v in variables(node))


# Evaluation ---------------------------------------------------------------

def evaluate(node, x=None, u=None, z=None):
    """Evaluate ``node`` with NumPy broadcasting.

    ``x`` has shape ``(k, n)``, ``u`` shape ``(k,)`` and ``z`` shape
    ``(k, d)``. Missing arguments are only an error if the expression
    actually reads them.
    """
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        if node.kind == "u":
            if u is None:
                raise UnknownIdentifierError("expression reads u but no u was supplied")
            return u
        arr = x if node.kind == "x" else z
        if arr is None:
            raise UnknownIdentifierError(f"expression reads {node.kind}{node.index} but none was supplied")
        if node.index > arr.shape[-1]:
            raise UnknownIdentifierError(
                f"{node.kind}{node.index} is out of range: only {arr.shape[-1]} component(s) available"
            )
        return arr[..., node.index - 1]
    if isinstance(node, Neg):
        return -evaluate(node.operand, x, u, z)
    if isinstance(node, BinOp):
        a = evaluate(node.left, x, u, z)
        b = evaluate(node.right, x, u, z)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        return np.power(a, b)
    if isinstance(node, Call):
        if node.name in CONSTANTS:
            return np.float64(CONSTANTS[node.name])
        return FUNCTIONS[node.name][1](*(evaluate(a, x, u, z) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


class Expression:
    """A parsed expression bundled with its source text.

    Calling it evaluates over a batch and always returns a float array of the
    batch shape, so constants broadcast like everything else.
    """

    def __init__(self, source):
        self.source = source
        self.tree = parse(source)

    def __repr__(self):
        return f"Expression({self.source!r})"

    @property
    def canonical(self):
        return to_source(self.tree)

    def __call__(self, x=None, u=None, z=None):
        shape = None
        for arr, trim in ((x, 1), (u, 0), (z, 1)):
            if arr is not None:
                arr = np.asarray(arr)
                shape = arr.shape[: arr.ndim - trim]
                break
        with np.errstate(all="ignore"):
            out = evaluate(
                self.tree,
                None if x is None else np.asarray(x, dtype=float),
                None if u is None else np.asarray(u, dtype=float),
                None if z is None else np.asarray(z, dtype=float),
            )
        out = np.asarray(out, dtype=float)
        if shape is not None:
            out = np.broadcast_to(out, shape).copy()
        return out

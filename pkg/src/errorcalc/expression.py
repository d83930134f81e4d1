"""Expression trees over named base variables.

Parsing uses precedence climbing with the following binding strengths,
tightest first::

    ^            right associative
    unary -
    * /          left associative
    + -          left associative

Function calls are ``name(expr)`` for the unary functions in
:data:`FUNCTIONS`; ``pi`` is a built-in constant.  The canonical printer
emits a fully parenthesized form that parses back to an identical tree.

Evaluation is forward propagation over a postorder tape.  :func:`eval2`
carries dense (value, gradient, hessian) triples through every node so the
propagation engine gets exact second derivatives; :func:`evaluate_batch`
and :func:`jet1_batch` are the vectorized value / first-order versions used
by the Monte Carlo paths.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from .errors import DomainError, ParseError, PreconditionError, UnknownIdentifierError

MAX_DIM = 64
INTEGER_EXPONENT_TOL = 1e-12

UNARY_OPS = ("neg", "exp", "log", "sin", "cos", "sqrt", "abs")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt", "abs")
CONSTANTS = {"pi": math.pi}

_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")


@dataclass(frozen=True)
class Const:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"constant must be finite, got {self.value!r}")
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Var:
    name: str
    index: int


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {self.op!r}")


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")


Expr = Union[Const, Var, Unary, Binary]


def validate_names(names: Sequence[str]) -> tuple[str, ...]:
    names = tuple(names)
    if not names:
        raise PreconditionError("variable list must be non-empty")
    if len(names) > MAX_DIM:
        raise PreconditionError(f"at most {MAX_DIM} variables are supported, got {len(names)}")
    if len(set(names)) != len(names):
        raise PreconditionError(f"variable names must be distinct: {list(names)}")
    for name in names:
        if not isinstance(name, str) or not _IDENT.fullmatch(name):
            raise PreconditionError(f"invalid variable name {name!r}")
        if name in FUNCTIONS or name in CONSTANTS:
            raise PreconditionError(f"variable name {name!r} is reserved")
    return names


# ---------------------------------------------------------------------------
# traversal


def postorder(e: Expr) -> list[Expr]:
    """Nodes of ``e`` children-first, without recursion (series can be deep)."""
    out: list[Expr] = []
    stack: list[tuple[Expr, bool]] = [(e, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded or isinstance(node, (Const, Var)):
            out.append(node)
            continue
        stack.append((node, True))
        if isinstance(node, Binary):
            stack.append((node.right, False))
            stack.append((node.left, False))
        else:
            stack.append((node.child, False))
    return out


class _Step(NamedTuple):
    node: Expr
    a: int  # slot of first child, -1 if leaf
    b: int  # slot of second child, -1 if not binary


class _Tape(NamedTuple):
    steps: list[_Step]
    has_var: list[bool]
    roots: list[int]
    last_use: list[int]  # last step reading each slot


def _build_tape(roots: Sequence[Expr]) -> _Tape:
    """Postorder tape over the DAG of ``roots``; shared subtrees get one slot."""
    steps: list[_Step] = []
    has_var: list[bool] = []
    slot_of: dict[int, int] = {}
    root_slots: list[int] = []
    for root in roots:
        stack: list[tuple[Expr, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in slot_of:
                continue
            if not expanded and isinstance(node, (Unary, Binary)):
                stack.append((node, True))
                if isinstance(node, Binary):
                    stack.append((node.right, False))
                    stack.append((node.left, False))
                else:
                    stack.append((node.child, False))
                continue
            if isinstance(node, Const):
                step, hv = _Step(node, -1, -1), False
            elif isinstance(node, Var):
                step, hv = _Step(node, -1, -1), True
            elif isinstance(node, Unary):
                a = slot_of[id(node.child)]
                step, hv = _Step(node, a, -1), has_var[a]
            else:
                a, b = slot_of[id(node.left)], slot_of[id(node.right)]
                step, hv = _Step(node, a, b), has_var[a] or has_var[b]
            slot_of[id(node)] = len(steps)
            steps.append(step)
            has_var.append(hv)
        root_slots.append(slot_of[id(root)])
    last_use = list(range(len(steps)))
    for i, st in enumerate(steps):
        if st.a >= 0:
            last_use[st.a] = i
        if st.b >= 0:
            last_use[st.b] = i
    for r in root_slots:
        last_use[r] = len(steps)
    return _Tape(steps, has_var, root_slots, last_use)


def _tape(e: Expr) -> _Tape:
    cached = e.__dict__.get("_tape")
    if cached is None:
        cached = _build_tape((e,))
        object.__setattr__(e, "_tape", cached)
    return cached


def variables(e: Expr) -> set[int]:
    """Indices of the variables referenced by ``e``."""
    return {n.index for n in postorder(e) if isinstance(n, Var)}


def max_index(e: Expr) -> int:
    return max(variables(e), default=-1)


def substitute(e: Expr, replacements: Sequence[Expr]) -> Expr:
    """Replace ``Var(index=i)`` by ``replacements[i]``; builds ``e ∘ u``."""
    built: list[Expr] = []
    steps = _tape(e).steps
    for step in steps:
        node = step.node
        if isinstance(node, Const):
            built.append(node)
        elif isinstance(node, Var):
            if node.index >= len(replacements):
                raise PreconditionError(
                    f"no replacement for variable {node.name!r} (index {node.index})"
                )
            built.append(replacements[node.index])
        elif isinstance(node, Unary):
            built.append(Unary(node.op, built[step.a]))
        else:
            built.append(Binary(node.op, built[step.a], built[step.b]))
    return built[-1]


def total(terms: Sequence[Expr]) -> Expr:
    """Left-nested sum of ``terms``."""
    if not terms:
        return Const(0.0)
    acc = terms[0]
    for t in terms[1:]:
        acc = Binary("add", acc, t)
    return acc


# ---------------------------------------------------------------------------
# parsing


class _Token(NamedTuple):
    kind: str  # "num", "ident", "op", "end"
    text: str
    offset: int  # byte offset


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    byte = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            byte += len(c.encode("utf-8"))
            continue
        m = _NUMBER.match(text, i)
        if m:
            tokens.append(_Token("num", m.group(), byte))
        else:
            m = _IDENT.match(text, i)
            if m:
                tokens.append(_Token("ident", m.group(), byte))
            elif c in "+-*/^()":
                tokens.append(_Token("op", c, byte))
                i += 1
                byte += 1
                continue
            else:
                raise ParseError(f"unexpected character {c!r}", byte)
        i = m.end()
        byte += len(m.group())
    tokens.append(_Token("end", "", byte))
    return tokens


class _Parser:
    def __init__(self, text: str, names: tuple[str, ...]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.index = {name: i for i, name in enumerate(names)}

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.take()
        if tok.text != text or tok.kind != "op":
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ParseError(f"expected {text!r}, found {found}", tok.offset)

    def parse(self) -> Expr:
        e = self.additive()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected token {tok.text!r}", tok.offset)
        return e

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = "add" if self.take().text == "+" else "sub"
            left = Binary(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = "mul" if self.take().text == "*" else "div"
            left = Binary(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            nxt, after = self.peek(), self.peek(1)
            # "-<literal>" is a negative constant unless the literal is a base of "^"
            if nxt.kind == "num" and not (after.kind == "op" and after.text == "^"):
                self.take()
                return Const(-float(nxt.text))
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return Binary("pow", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            return Const(float(tok.text))
        if tok.kind == "ident":
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.additive()
                self.expect(")")
                return Unary(tok.text, arg)
            if tok.text in self.index:
                return Var(tok.text, self.index[tok.text])
            if tok.text in CONSTANTS:
                return Const(CONSTANTS[tok.text])
            raise UnknownIdentifierError(tok.text, tok.offset)
        if tok.kind == "op" and tok.text == "(":
            inner = self.additive()
            self.expect(")")
            return inner
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ParseError(f"expected an operand, found {found}", tok.offset)


def parse(text: str, names: Sequence[str]) -> Expr:
    """Parse ``text`` into an :data:`Expr` over the ordered variable ``names``.

    >>> parse("x + y*z", ["x", "y", "z"]) == Binary(
    ...     "add", Var("x", 0), Binary("mul", Var("y", 1), Var("z", 2)))
    True
    """
    names = validate_names(names)
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text, names).parse()


def print_canonical(e: Expr) -> str:
    """Fully parenthesized text of ``e``; ``parse`` inverts it exactly."""
    out: list[str] = []
    steps = _tape(e).steps
    for step in steps:
        node = step.node
        if isinstance(node, Const):
            text = repr(node.value)
            out.append(f"({text})" if text.startswith("-") else text)
        elif isinstance(node, Var):
            out.append(node.name)
        elif isinstance(node, Unary):
            child = out[step.a]
            if node.op == "neg":
                # a bare non-negative literal after "-" would be folded into a constant
                if isinstance(steps[step.a].node, Const) and not child.startswith("("):
                    child = f"({child})"
                out.append(f"(-{child})")
            else:
                out.append(f"{node.op}({child})")
        else:
            out.append(f"({out[step.a]} {_SYMBOL[node.op]} {out[step.b]})")
    return out[-1]


# ---------------------------------------------------------------------------
# second-order evaluation


class Jet2(NamedTuple):
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    nondifferentiable: bool


def _integer_exponent(c: float) -> int | None:
    k = round(c)
    return int(k) if abs(c - k) < INTEGER_EXPONENT_TOL else None


def _power_coeffs(a: float, c: float) -> tuple[float, float, float]:
    """f(a), f'(a), f''(a) for f(a) = a**c with constant exponent ``c``."""
    k = _integer_exponent(c)
    if k is not None:
        if a == 0.0 and k < 0:
            raise DomainError("0 raised to a negative power")
        f0 = a**k
        f1 = k * a ** (k - 1) if k != 0 else 0.0
        f2 = k * (k - 1) * a ** (k - 2) if k not in (0, 1) else 0.0
        return f0, f1, f2
    if a <= 0.0:
        raise DomainError(f"non-integer power {c!r} of non-positive base {a!r}")
    return a**c, c * a ** (c - 1.0), c * (c - 1.0) * a ** (c - 2.0)


def _unary_coeffs(op: str, v: float) -> tuple[float, float, float, bool]:
    if op == "neg":
        return -v, -1.0, 0.0, False
    if op == "exp":
        ev = math.exp(v) if v < 709.0 else math.inf
        return ev, ev, ev, False
    if op == "log":
        if v <= 0.0:
            raise DomainError(f"log of non-positive argument {v!r}")
        return math.log(v), 1.0 / v, -1.0 / (v * v), False
    if op == "sin":
        s, c = math.sin(v), math.cos(v)
        return s, c, -s, False
    if op == "cos":
        s, c = math.sin(v), math.cos(v)
        return c, -s, -c, False
    if op == "sqrt":
        if v <= 0.0:
            # sqrt(0) has an infinite derivative
            raise DomainError(f"sqrt needs a positive argument for derivatives, got {v!r}")
        r = math.sqrt(v)
        return r, 0.5 / r, -0.25 / (r * v), False
    if op == "abs":
        if v == 0.0:
            return 0.0, 0.0, 0.0, True
        return abs(v), math.copysign(1.0, v), 0.0, False
    raise AssertionError(op)


def eval2(e: Expr, point) -> Jet2:
    """Value, gradient and hessian of ``e`` at ``point``.

    The hessian is symmetric by construction.  ``abs`` at 0 contributes a zero
    derivative and sets ``nondifferentiable``.
    """
    x = np.asarray(point, dtype=float)
    n = x.shape[0]
    if x.ndim != 1 or n == 0 or n > MAX_DIM:
        raise PreconditionError(f"point must be a vector of length 1..{MAX_DIM}")
    tape = _tape(e)
    steps, has_var = tape.steps, tape.has_var
    vals: list[float] = [0.0] * len(steps)
    grads: list[np.ndarray] = [None] * len(steps)  # type: ignore[list-item]
    hess: list[np.ndarray] = [None] * len(steps)  # type: ignore[list-item]
    zero_g = np.zeros(n)
    zero_h = np.zeros((n, n))
    kink = False
    with np.errstate(all="ignore"):  # non-finite results are rejected below
        for slot, (node, a, b) in enumerate(steps):
            if isinstance(node, Const):
                vals[slot], grads[slot], hess[slot] = node.value, zero_g, zero_h
                continue
            if isinstance(node, Var):
                if node.index >= n:
                    raise PreconditionError(
                        f"variable {node.name!r} has index {node.index} but point has length {n}"
                    )
                g = np.zeros(n)
                g[node.index] = 1.0
                vals[slot], grads[slot], hess[slot] = float(x[node.index]), g, zero_h
                continue
            if isinstance(node, Unary):
                f0, f1, f2, flag = _unary_coeffs(node.op, vals[a])
                kink |= flag
                ga = grads[a]
                vals[slot] = f0
                grads[slot] = f1 * ga
                hess[slot] = f1 * hess[a] + f2 * np.outer(ga, ga)
            else:
                va, vb = vals[a], vals[b]
                ga, gb, Ha, Hb = grads[a], grads[b], hess[a], hess[b]
                op = node.op
                if op == "add":
                    vals[slot], grads[slot], hess[slot] = va + vb, ga + gb, Ha + Hb
                elif op == "sub":
                    vals[slot], grads[slot], hess[slot] = va - vb, ga - gb, Ha - Hb
                elif op == "mul":
                    cross = np.outer(ga, gb)
                    vals[slot] = va * vb
                    grads[slot] = va * gb + vb * ga
                    hess[slot] = va * Hb + vb * Ha + (cross + cross.T)
                elif op == "div":
                    if vb == 0.0:
                        raise DomainError("division by zero")
                    q = va / vb
                    gq = (ga - q * gb) / vb
                    cross = np.outer(gb, gq)
                    vals[slot] = q
                    grads[slot] = gq
                    hess[slot] = (Ha - q * Hb - (cross + cross.T)) / vb
                elif not has_var[b]:
                    f0, f1, f2 = _power_coeffs(va, vb)
                    vals[slot] = f0
                    grads[slot] = f1 * ga
                    hess[slot] = f1 * Ha + f2 * np.outer(ga, ga)
                else:
                    if va <= 0.0:
                        raise DomainError(f"variable exponent needs a positive base, got {va!r}")
                    la = math.log(va)
                    gl = ga / va
                    Hl = Ha / va - np.outer(gl, gl)
                    cross = np.outer(gb, gl)
                    gw = vb * gl + la * gb
                    Hw = vb * Hl + la * Hb + (cross + cross.T)
                    v = math.exp(vb * la)
                    vals[slot] = v
                    grads[slot] = v * gw
                    hess[slot] = v * (Hw + np.outer(gw, gw))
            if not math.isfinite(vals[slot]):
                raise DomainError("overflow: non-finite intermediate value", point=x)
    g, H = grads[-1], hess[-1]
    H = 0.5 * (H + H.T)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        raise DomainError("overflow: non-finite derivative", point=x)
    return Jet2(vals[-1], g.copy(), H, kink)


def evaluate(e: Expr, point) -> float:
    return eval2(e, point).value


# ---------------------------------------------------------------------------
# vectorized evaluation


def _raise_first(bad: np.ndarray, message: str, points: np.ndarray) -> None:
    i = int(np.argmax(bad))
    raise DomainError(message, sample_index=i, point=points[i])


def _batch_unary(op: str, v: np.ndarray, points: np.ndarray):
    """Vectorized f, f' for one unary op; raises on the first bad sample."""
    if op == "neg":
        return -v, np.full_like(v, -1.0)
    if op == "exp":
        ev = np.exp(v)
        return ev, ev
    if op == "log":
        bad = ~(v > 0.0)
        if bad.any():
            _raise_first(bad, "log of non-positive argument", points)
        return np.log(v), 1.0 / v
    if op == "sin":
        return np.sin(v), np.cos(v)
    if op == "cos":
        return np.cos(v), -np.sin(v)
    if op == "sqrt":
        bad = ~(v > 0.0)
        if bad.any():
            _raise_first(bad, "sqrt needs a positive argument for derivatives", points)
        r = np.sqrt(v)
        return r, 0.5 / r
    if op == "abs":
        return np.abs(v), np.sign(v)
    raise AssertionError(op)


def _batch_pow_const(va: np.ndarray, c: float, points: np.ndarray):
    k = _integer_exponent(c)
    if k is not None:
        if k < 0:
            bad = va == 0.0
            if bad.any():
                _raise_first(bad, "0 raised to a negative power", points)
        f0 = va**k
        f1 = k * va ** (k - 1) if k != 0 else np.zeros_like(va)
        return f0, f1
    bad = ~(va > 0.0)
    if bad.any():
        _raise_first(bad, f"non-integer power {c!r} of non-positive base", points)
    return va**c, c * va ** (c - 1.0)


def _batch(roots: Sequence[Expr], points, order: int):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise PreconditionError("points must be a 2-d array (samples x dimension)")
    N, n = pts.shape
    tape = _build_tape(roots) if len(roots) > 1 else _tape(roots[0])
    steps, has_var, last_use = tape.steps, tape.has_var, tape.last_use
    vals: list[np.ndarray | None] = [None] * len(steps)
    grads: list[np.ndarray | None] = [None] * len(steps)
    kinks: list[np.ndarray | None] = [None] * len(steps)
    no_kink = np.zeros(N, dtype=bool)
    zero_g = np.zeros((N, n)) if order else None
    with np.errstate(all="ignore"):
        for slot, (node, a, b) in enumerate(steps):
            kink = no_kink
            if isinstance(node, Const):
                vals[slot] = np.full(N, node.value)
                grads[slot] = zero_g
                kinks[slot] = kink
                continue
            if isinstance(node, Var):
                if node.index >= n:
                    raise PreconditionError(
                        f"variable {node.name!r} has index {node.index} but points have dimension {n}"
                    )
                vals[slot] = pts[:, node.index]
                if order:
                    g = np.zeros((N, n))
                    g[:, node.index] = 1.0
                    grads[slot] = g
                kinks[slot] = kink
                continue
            if isinstance(node, Unary):
                f0, f1 = _batch_unary(node.op, vals[a], pts)
                kink = kinks[a]
                if node.op == "abs":
                    kink = kink | (vals[a] == 0.0)
                vals[slot] = f0
                if order:
                    grads[slot] = f1[:, None] * grads[a]
            else:
                va, vb = vals[a], vals[b]
                kink = kinks[a] | kinks[b]
                op = node.op
                if op == "add":
                    vals[slot] = va + vb
                    if order:
                        grads[slot] = grads[a] + grads[b]
                elif op == "sub":
                    vals[slot] = va - vb
                    if order:
                        grads[slot] = grads[a] - grads[b]
                elif op == "mul":
                    vals[slot] = va * vb
                    if order:
                        grads[slot] = va[:, None] * grads[b] + vb[:, None] * grads[a]
                elif op == "div":
                    bad = vb == 0.0
                    if bad.any():
                        _raise_first(bad, "division by zero", pts)
                    q = va / vb
                    vals[slot] = q
                    if order:
                        grads[slot] = (grads[a] - q[:, None] * grads[b]) / vb[:, None]
                elif not has_var[b]:
                    c = float(vb[0]) if N else 0.0
                    f0, f1 = _batch_pow_const(va, c, pts)
                    vals[slot] = f0
                    if order:
                        grads[slot] = f1[:, None] * grads[a]
                else:
                    bad = ~(va > 0.0)
                    if bad.any():
                        _raise_first(bad, "variable exponent needs a positive base", pts)
                    la = np.log(va)
                    v = np.exp(vb * la)
                    vals[slot] = v
                    if order:
                        gw = (vb / va)[:, None] * grads[a] + la[:, None] * grads[b]
                        grads[slot] = v[:, None] * gw
            kinks[slot] = kink
            bad = ~np.isfinite(vals[slot])
            if bad.any():
                _raise_first(bad, "overflow: non-finite value", pts)
            for child in (a, b):
                if child >= 0 and last_use[child] == slot:
                    vals[child] = grads[child] = kinks[child] = None
    out = []
    for r in tape.roots:
        g = grads[r]
        if order:
            bad = ~np.all(np.isfinite(g), axis=1)
            if bad.any():
                _raise_first(bad, "overflow: non-finite derivative", pts)
        out.append((np.array(vals[r], dtype=float, copy=True), g, kinks[r]))
    return out


def evaluate_batch(e: Expr, points) -> np.ndarray:
    """Values of ``e`` at each row of ``points`` (shape ``(N, n)``).

    Raises :class:`DomainError` carrying the index of the first offending row.
    """
    return _batch((e,), points, order=0)[0][0]


def jet1_batch(e: Expr, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values ``(N,)``, gradients ``(N, n)`` and the abs-kink mask ``(N,)``."""
    return _batch((e,), points, order=1)[0]


def jet1_batch_many(exprs: Sequence[Expr], points) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """:func:`jet1_batch` for several expressions, sharing common subtrees."""
    if not exprs:
        return []
    return _batch(tuple(exprs), points, order=1)

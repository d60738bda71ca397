"""Polynomial expression trees over the variables xi1, xi2 and kappa.

The integrands handled by this package are finite sums of terms

    A(xi) * prod_j  g_j(xi; kappa)^(-mu_j),

where the amplitudes ``A`` and the defining functions ``g_j`` are
polynomials with complex coefficients.  This module provides the small
expression core for those polynomials: parsing, printing, evaluation at
complex arguments (scalars or numpy arrays), and exact symbolic
differentiation.  Division never appears inside an expression; all
singular structure lives in the per-term exponents of
:class:`WaveFunctionModel`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ExpressionSyntaxError, UnknownIdentifierError

__all__ = [
    "Expr",
    "Const",
    "Var",
    "parse_expression",
    "evaluate_jet",
    "Jet",
    "SingularComponent",
    "Term",
    "WaveFunctionModel",
    "check_real_property",
    "RealPropertyReport",
]

VARIABLES = ("xi1", "xi2", "kappa")


# ---------------------------------------------------------------------------
# expression nodes
# ---------------------------------------------------------------------------

class Expr:
    """Immutable expression node.

    Subclasses: :class:`Const`, :class:`Var`, :class:`Sum`, :class:`Prod`,
    :class:`Pow` (non-negative integer exponents) and :class:`Neg`.
    Evaluation is total on C^3 and accepts numpy arrays.
    """

    __slots__ = ()

    def evaluate(self, xi1, xi2, kappa=0.0):
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    # --- operator sugar, used by tests and programmatic model building ---

    def __add__(self, other):
        return _sum([self, _coerce(other)])

    def __radd__(self, other):
        return _sum([_coerce(other), self])

    def __sub__(self, other):
        return _sum([self, Neg(_coerce(other))])

    def __rsub__(self, other):
        return _sum([_coerce(other), Neg(self)])

    def __mul__(self, other):
        return _prod([self, _coerce(other)])

    def __rmul__(self, other):
        return _prod([_coerce(other), self])

    def __neg__(self):
        return Neg(self)

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("expression exponents must be non-negative integers")
        return Pow(self, n)

    def __call__(self, xi1, xi2, kappa=0.0):
        return self.evaluate(xi1, xi2, kappa)

    def __repr__(self):
        return f"{type(self).__name__}<{self}>"


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, complex)):
        return Const(complex(value))
    raise TypeError(f"cannot use {value!r} in an expression")


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: complex):
        object.__setattr__(self, "value", complex(value))

    def evaluate(self, xi1, xi2, kappa=0.0):
        return self.value

    def diff(self, var):
        return Const(0.0)

    def __str__(self):
        return _format_const(self.value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if name not in VARIABLES:
            raise ValueError(f"unknown variable {name!r}")
        object.__setattr__(self, "name", name)

    def evaluate(self, xi1, xi2, kappa=0.0):
        return {"xi1": xi1, "xi2": xi2, "kappa": kappa}[self.name]

    def diff(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def __str__(self):
        return self.name


class Sum(Expr):
    __slots__ = ("operands",)

    def __init__(self, operands: Iterable[Expr]):
        object.__setattr__(self, "operands", tuple(operands))

    def evaluate(self, xi1, xi2, kappa=0.0):
        total = self.operands[0].evaluate(xi1, xi2, kappa)
        for op in self.operands[1:]:
            total = total + op.evaluate(xi1, xi2, kappa)
        return total

    def diff(self, var):
        return _sum([op.diff(var) for op in self.operands])

    def __str__(self):
        return " + ".join(_wrap(op, inside="sum") for op in self.operands)


class Prod(Expr):
    __slots__ = ("operands",)

    def __init__(self, operands: Iterable[Expr]):
        object.__setattr__(self, "operands", tuple(operands))

    def evaluate(self, xi1, xi2, kappa=0.0):
        total = self.operands[0].evaluate(xi1, xi2, kappa)
        for op in self.operands[1:]:
            total = total * op.evaluate(xi1, xi2, kappa)
        return total

    def diff(self, var):
        pieces = []
        for k, op in enumerate(self.operands):
            d = op.diff(var)
            if _is_zero(d):
                continue
            factors = list(self.operands)
            factors[k] = d
            pieces.append(_prod(factors))
        return _sum(pieces)

    def __str__(self):
        return "*".join(_wrap(op, inside="prod") for op in self.operands)


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: int):
        if exponent < 0:
            raise ValueError("expression exponents must be non-negative integers")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", int(exponent))

    def evaluate(self, xi1, xi2, kappa=0.0):
        if self.exponent == 0:
            return 1.0 + 0.0j
        return self.base.evaluate(xi1, xi2, kappa) ** self.exponent

    def diff(self, var):
        if self.exponent == 0:
            return Const(0.0)
        d = self.base.diff(var)
        if _is_zero(d):
            return Const(0.0)
        if self.exponent == 1:
            return d
        return _prod([Const(self.exponent), Pow(self.base, self.exponent - 1), d])

    def __str__(self):
        return f"{_wrap(self.base, inside='pow')}^{self.exponent}"


class Neg(Expr):
    __slots__ = ("operand",)

    def __init__(self, operand: Expr):
        object.__setattr__(self, "operand", operand)

    def evaluate(self, xi1, xi2, kappa=0.0):
        return -self.operand.evaluate(xi1, xi2, kappa)

    def diff(self, var):
        d = self.operand.diff(var)
        return Const(0.0) if _is_zero(d) else Neg(d)

    def __str__(self):
        return f"-{_wrap(self.operand, inside='prod')}"


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0


def _is_one(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 1


def _sum(terms) -> Expr:
    kept = [t for t in terms if not _is_zero(t)]
    if not kept:
        return Const(0.0)
    if len(kept) == 1:
        return kept[0]
    flat = []
    for t in kept:
        flat.extend(t.operands if isinstance(t, Sum) else (t,))
    return Sum(flat)


def _prod(factors) -> Expr:
    if any(_is_zero(f) for f in factors):
        return Const(0.0)
    kept = [f for f in factors if not _is_one(f)]
    if not kept:
        return Const(1.0)
    if len(kept) == 1:
        return kept[0]
    flat = []
    for f in kept:
        flat.extend(f.operands if isinstance(f, Prod) else (f,))
    return Prod(flat)


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

def _format_const(v: complex) -> str:
    re_, im_ = v.real, v.imag
    if im_ == 0.0:
        s = repr(re_)
        return f"({s})" if re_ < 0 else s
    if re_ == 0.0:
        if im_ == 1.0:
            return "i"
        s = f"{repr(im_)}*i"
        return f"({s})" if im_ < 0 else s
    return f"({repr(re_)} + {repr(im_)}*i)" if im_ >= 0 else f"({repr(re_)} - {repr(-im_)}*i)"


def _wrap(e: Expr, inside: str) -> str:
    s = str(e)
    if inside == "sum":
        return s
    if inside == "prod":
        return f"({s})" if isinstance(e, Sum) else s
    # pow: parenthesise everything but bare variables and simple constants
    if isinstance(e, (Var,)) or (isinstance(e, Const) and s[0] != "("):
        return s
    return f"({s})"


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            at = len(text) - len(stripped)
            raise ExpressionSyntaxError(f"unexpected character {text[at]!r}", at)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        elif m.group("op") is not None:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k]

    def next(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ExpressionSyntaxError(f"expected {op!r}", pos)
        return self.next()

    def parse(self) -> Expr:
        e = self.parse_sum()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {val!r}", pos)
        return e

    def parse_sum(self) -> Expr:
        terms = [self.parse_term()]
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "+":
                self.next()
                terms.append(self.parse_term())
            elif kind == "op" and val == "-":
                self.next()
                terms.append(Neg(self.parse_term()))
            else:
                return terms[0] if len(terms) == 1 else Sum(terms)

    def parse_term(self) -> Expr:
        factors = [self.parse_unary()]
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.next()
                factors.append(self.parse_unary())
            else:
                return factors[0] if len(factors) == 1 else Prod(factors)

    def parse_unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.next()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.next()
            kind, val, pos = self.peek()
            if kind == "op" and val == "-":
                raise ExpressionSyntaxError(
                    "negative exponents are not allowed inside expressions", pos
                )
            if kind != "num":
                raise ExpressionSyntaxError("expected an integer exponent", pos)
            if not re.fullmatch(r"\d+", val):
                raise ExpressionSyntaxError(
                    f"exponent must be a plain integer, got {val!r}", pos
                )
            self.next()
            return Pow(base, int(val))
        return base

    def parse_atom(self) -> Expr:
        kind, val, pos = self.next()
        if kind == "num":
            return Const(complex(float(val)))
        if kind == "ident":
            if val == "i":
                return Const(1j)
            if val in VARIABLES:
                return Var(val)
            raise UnknownIdentifierError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            e = self.parse_sum()
            self.expect_op(")")
            return e
        raise ExpressionSyntaxError(
            f"expected a number, identifier or '(', got {val!r}" if val else "unexpected end of input",
            pos,
        )


def parse_expression(text: str) -> Expr:
    """Parse arithmetic over xi1, xi2, kappa, i with + - * ^ and parentheses.

    Exponents must be non-negative integer literals; whitespace is ignored.
    Raises :class:`ExpressionSyntaxError` (with position) on malformed input
    and :class:`UnknownIdentifierError` for identifiers other than the three
    variables and the imaginary unit ``i``.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------

class Jet(NamedTuple):
    """Value and exact derivatives of an expression at one point."""

    value: complex
    d1: complex
    d2: complex
    dkappa: complex
    hessian: np.ndarray  # 2x2, xi-derivatives only


def evaluate_jet(e: Expr, xi, kappa=0.0) -> Jet:
    """Evaluate ``e`` together with its gradient, kappa-derivative and
    xi-Hessian at a (possibly complex) point ``xi = (xi1, xi2)``.

    All derivatives are symbolic, evaluated at the point; nothing is
    approximated by finite differences.
    """
    xi1, xi2 = xi
    d1e = e.diff("xi1")
    d2e = e.diff("xi2")
    hess = np.array(
        [
            [complex(d1e.diff("xi1").evaluate(xi1, xi2, kappa)),
             complex(d1e.diff("xi2").evaluate(xi1, xi2, kappa))],
            [complex(d2e.diff("xi1").evaluate(xi1, xi2, kappa)),
             complex(d2e.diff("xi2").evaluate(xi1, xi2, kappa))],
        ]
    )
    return Jet(
        value=complex(e.evaluate(xi1, xi2, kappa)),
        d1=complex(d1e.evaluate(xi1, xi2, kappa)),
        d2=complex(d2e.evaluate(xi1, xi2, kappa)),
        dkappa=complex(e.diff("kappa").evaluate(xi1, xi2, kappa)),
        hessian=hess,
    )


# ---------------------------------------------------------------------------
# singular components and integrand models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingularComponent:
    """One irreducible singularity, defined by ``g(xi; kappa) = 0``.

    ``kind`` records whether the associated factor is of polar or branching
    type; the geometry code only uses ``g`` and its derivatives, which are
    precomputed here so repeated jet evaluations stay cheap.
    """

    id: str
    g: Expr
    kind: str = "branch"  # "pole" | "branch"

    def __post_init__(self):
        if self.kind not in ("pole", "branch"):
            raise ValueError(f"kind must be 'pole' or 'branch', got {self.kind!r}")
        d1 = self.g.diff("xi1")
        d2 = self.g.diff("xi2")
        object.__setattr__(self, "_d1", d1)
        object.__setattr__(self, "_d2", d2)
        object.__setattr__(self, "_dk", self.g.diff("kappa"))
        object.__setattr__(self, "_d11", d1.diff("xi1"))
        object.__setattr__(self, "_d12", d1.diff("xi2"))
        object.__setattr__(self, "_d22", d2.diff("xi2"))

    # vectorised helpers; results are broadcast to the argument shape so
    # constant derivatives behave like any other field ------------------

    @staticmethod
    def _shaped(value, xi1, xi2):
        shape = np.broadcast(np.asarray(xi1), np.asarray(xi2)).shape
        arr = np.asarray(value, dtype=complex)
        if arr.shape == shape:
            return arr
        if shape == ():
            return complex(arr)
        return np.broadcast_to(arr, shape).copy()

    def value(self, xi1, xi2, kappa=0.0):
        return self._shaped(self.g.evaluate(xi1, xi2, kappa), xi1, xi2)

    def grad(self, xi1, xi2, kappa=0.0):
        return (self._shaped(self._d1.evaluate(xi1, xi2, kappa), xi1, xi2),
                self._shaped(self._d2.evaluate(xi1, xi2, kappa), xi1, xi2))

    def dkappa(self, xi1, xi2, kappa=0.0):
        return self._shaped(self._dk.evaluate(xi1, xi2, kappa), xi1, xi2)

    def hessian(self, xi1, xi2, kappa=0.0):
        return (self._shaped(self._d11.evaluate(xi1, xi2, kappa), xi1, xi2),
                self._shaped(self._d12.evaluate(xi1, xi2, kappa), xi1, xi2),
                self._shaped(self._d22.evaluate(xi1, xi2, kappa), xi1, xi2))

    def jet(self, xi, kappa=0.0) -> Jet:
        h11, h12, h22 = self.hessian(xi[0], xi[1], kappa)
        return Jet(
            value=complex(self.value(xi[0], xi[1], kappa)),
            d1=complex(self._d1.evaluate(xi[0], xi[1], kappa)),
            d2=complex(self._d2.evaluate(xi[0], xi[1], kappa)),
            dkappa=complex(self._dk.evaluate(xi[0], xi[1], kappa)),
            hessian=np.array([[h11, h12], [h12, h22]], dtype=complex),
        )


@dataclass(frozen=True)
class Term:
    """One additive term: amplitude times a product of component powers.

    ``factors`` maps component ids to the exponent ``mu`` in
    ``g^(-mu)``; a strictly positive ``mu`` makes the term singular on
    that component.
    """

    amplitude: Expr
    factors: tuple[tuple[str, float], ...]

    def exponent(self, component_id: str) -> float:
        for cid, mu in self.factors:
            if cid == component_id:
                return mu
        return 0.0


@dataclass(frozen=True)
class WaveFunctionModel:
    """A finite sum of terms ``A(xi) * prod_j g_j(xi; kappa)^(-mu_j)``."""

    components: tuple[SingularComponent, ...]
    terms: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "terms", tuple(self.terms))
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ValueError("component ids must be unique")
        known = set(ids)
        for t in self.terms:
            for cid, _ in t.factors:
                if cid not in known:
                    raise ValueError(f"term references undeclared component {cid!r}")

    @property
    def component_map(self) -> dict[str, SingularComponent]:
        return {c.id: c for c in self.components}

    def component(self, cid: str) -> SingularComponent:
        return self.component_map[cid]


# ---------------------------------------------------------------------------
# real-property verification
# ---------------------------------------------------------------------------

@dataclass
class RealPropertyReport:
    """Outcome of the sampled real-property check for one component."""

    component_id: str
    passed: bool
    failures: list = field(default_factory=list)  # (check, point, magnitude)
    worst: tuple | None = None

    def __bool__(self):
        return self.passed


def check_real_property(
    component: SingularComponent,
    window: tuple[float, float, float, float],
    samples: int = 400,
    tol: float = 1e-12,
    seed: int = 0,
) -> RealPropertyReport:
    """Sampled verification that a component behaves like a real curve.

    At random real points of ``window`` the function value and both
    xi-derivatives must be real (at kappa = 0) and the kappa-derivative
    must be purely imaginary.  On points projected onto the zero curve the
    gradient must not degenerate.  Violations are collected in the report,
    never raised.
    """
    x0, x1, y0, y1 = window
    if not (x1 > x0 and y1 > y0):
        raise ValueError("window must be a nonempty rectangle")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x0, x1, samples)
    ys = rng.uniform(y0, y1, samples)

    report = RealPropertyReport(component_id=component.id, passed=True)

    def record(name, magnitudes, px, py):
        worst_k = int(np.argmax(magnitudes))
        bad = magnitudes > tol
        for k in np.flatnonzero(bad)[:5]:
            report.failures.append((name, (float(px[k]), float(py[k])), float(magnitudes[k])))
        if np.any(bad):
            report.passed = False
        cand = (name, (float(px[worst_k]), float(py[worst_k])), float(magnitudes[worst_k]))
        if report.worst is None or cand[2] > report.worst[2]:
            report.worst = cand

    g0 = np.asarray(component.value(xs, ys, 0.0), dtype=complex)
    a, b = component.grad(xs, ys, 0.0)
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    dk = np.asarray(component.dkappa(xs, ys, 0.0), dtype=complex)

    record("imag_value", np.abs(g0.imag), xs, ys)
    record("imag_dxi1", np.abs(a.imag), xs, ys)
    record("imag_dxi2", np.abs(b.imag), xs, ys)
    record("real_dkappa", np.abs(dk.real), xs, ys)

    # regularity on the zero curve: Newton-project a subset of the samples
    px, py = xs[: samples // 2].copy(), ys[: samples // 2].copy()
    for _ in range(40):
        val = np.asarray(component.value(px, py, 0.0), dtype=complex).real
        ga, gb = component.grad(px, py, 0.0)
        ga = np.asarray(ga, dtype=complex).real
        gb = np.asarray(gb, dtype=complex).real
        norm2 = ga * ga + gb * gb
        safe = norm2 > 1e-30
        step = np.where(safe, val / np.where(safe, norm2, 1.0), 0.0)
        px = px - step * ga
        py = py - step * gb
    val = np.abs(np.asarray(component.value(px, py, 0.0), dtype=complex))
    on_curve = val <= 1e-8
    if np.any(on_curve):
        ga, gb = component.grad(px[on_curve], py[on_curve], 0.0)
        norm2 = np.abs(np.asarray(ga)) ** 2 + np.abs(np.asarray(gb)) ** 2
        record("degenerate_gradient",
               np.where(norm2 <= 1e-20, 1.0, 0.0),
               px[on_curve], py[on_curve])

    return report

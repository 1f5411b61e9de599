"""Sparse multivariate polynomials over named state, uncertainty and time variables."""

from __future__ import annotations

import ast
import json
import re
from collections.abc import Iterable, Mapping
from enum import IntEnum
from typing import NamedTuple, Union

import numpy as np

SCRUB_TOL = 1e-14


class Kind(IntEnum):
    STATE = 0
    UNCERTAIN = 1
    TIME = 2


class Var(NamedTuple):
    kind: Kind
    index: int = 0

    @property
    def name(self) -> str:
        if self.kind is Kind.TIME:
            return "t"
        prefix = "x" if self.kind is Kind.STATE else "w"
        return f"{prefix}{self.index + 1}"

    def __repr__(self) -> str:
        return self.name


T = Var(Kind.TIME, 0)


def x(i: int) -> Var:
    """State variable x_i, 1-based like the expression grammar."""
    return Var(Kind.STATE, i - 1)


def w(i: int) -> Var:
    return Var(Kind.UNCERTAIN, i - 1)


_NAME_RE = re.compile(r"^(?:(x|w)([1-9][0-9]*)|t)$")


def parse_var(name: str) -> Var:
    m = _NAME_RE.match(name)
    if m is None:
        raise ParseError(f"unknown variable {name!r} (expected x<i>, w<i> or t)")
    if name == "t":
        return T
    kind = Kind.STATE if m.group(1) == "x" else Kind.UNCERTAIN
    return Var(kind, int(m.group(2)) - 1)


class PolyError(ValueError):
    pass


class ParseError(PolyError):
    pass


class MissingVariable(PolyError, KeyError):
    pass


class IncompatibleUniverse(PolyError):
    pass


# A monomial is a sorted tuple of (Var, exponent>0) pairs; () is the constant.
Monomial = tuple


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    out = dict(a)
    for v, e in b:
        out[v] = out.get(v, 0) + e
    return tuple(sorted(out.items()))


def mono_degree(m: Monomial) -> int:
    return sum(e for _, e in m)


def mono_key(m: Monomial):
    """Graded lexicographic order: x1 before x2 before w1 before t, higher powers first."""
    return (mono_degree(m), tuple((v, -e) for v, e in m))


def mono_str(m: Monomial) -> str:
    return "*".join(v.name if e == 1 else f"{v.name}^{e}" for v, e in m)


Number = Union[int, float]


class Polynomial:
    """Immutable sparse polynomial with real coefficients.

    ``variables`` is the declared universe; it always contains every variable that
    appears in a term. ``scope`` optionally tags the scenario a polynomial belongs to;
    combining two polynomials with different non-empty scopes raises.
    """

    __slots__ = ("_terms", "_vars", "_scope", "_hash")

    def __init__(self, terms: Mapping[Monomial, float] | None = None,
                 variables: Iterable[Var] = (), scope: str | None = None):
        clean = {}
        for m, c in (terms or {}).items():
            c = float(c)
            if abs(c) >= SCRUB_TOL:
                clean[tuple(m)] = c
        self._terms = dict(sorted(clean.items(), key=lambda kv: mono_key(kv[0])))
        vs = set(variables)
        for m in self._terms:
            vs.update(v for v, _ in m)
        self._vars = frozenset(vs)
        self._scope = scope
        self._hash = None

    # -- constructors -------------------------------------------------------
    @classmethod
    def const(cls, c: Number, variables: Iterable[Var] = (), scope=None) -> Polynomial:
        return cls({(): c}, variables, scope)

    @classmethod
    def var(cls, v: Var, scope=None) -> Polynomial:
        return cls({((v, 1),): 1.0}, (v,), scope)

    @classmethod
    def parse(cls, text: str, scope=None) -> Polynomial:
        return parse(text, scope)

    # -- accessors ----------------------------------------------------------
    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    @property
    def variables(self) -> frozenset:
        return self._vars

    @property
    def scope(self) -> str | None:
        return self._scope

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, m: Monomial) -> float:
        return self._terms.get(tuple(m), 0.0)

    @property
    def constant(self) -> float:
        return self._terms.get((), 0.0)

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((mono_degree(m) for m in self._terms), default=-1)

    def degree_in(self, which: Var | Kind) -> int:
        def part(m):
            if isinstance(which, Var):
                return sum(e for v, e in m if v == which)
            return sum(e for v, e in m if v.kind == which)
        return max((part(m) for m in self._terms), default=0)

    def free_variables(self) -> frozenset:
        """Variables that actually occur in some term."""
        return frozenset(v for m in self._terms for v, _ in m)

    def has_kind(self, kind: Kind) -> bool:
        return any(v.kind == kind for v in self.free_variables())

    # -- arithmetic ---------------------------------------------------------
    def _merge_scope(self, other: Polynomial) -> str | None:
        if self._scope and other._scope and self._scope != other._scope:
            raise IncompatibleUniverse(
                f"cannot combine polynomials from scopes {self._scope!r} and {other._scope!r}")
        return self._scope or other._scope

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.const(float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        scope = self._merge_scope(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(out, self._vars | other._vars, scope)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self._terms.items()}, self._vars, self._scope)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        scope = self._merge_scope(other)
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(out, self._vars | other._vars, scope)

    __rmul__ = __mul__

    def __truediv__(self, other: Number):
        return self * (1.0 / float(other))

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise PolyError("polynomial powers must be nonnegative integers")
        result = Polynomial.const(1.0, self._vars, self._scope)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def scale(self, c: float) -> Polynomial:
        return Polynomial({m: c * v for m, v in self._terms.items()}, self._vars, self._scope)

    def with_scope(self, scope: str | None) -> Polynomial:
        return Polynomial(self._terms, self._vars, scope)

    # -- comparison ---------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.const(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    def allclose(self, other: Polynomial, atol: float = 1e-12, rtol: float = 0.0) -> bool:
        keys = set(self._terms) | set(other._terms)
        for m in keys:
            a, b = self.coefficient(m), other.coefficient(m)
            if abs(a - b) > atol + rtol * max(abs(a), abs(b)):
                return False
        return True

    # -- calculus and composition ------------------------------------------
    def derivative(self, v: Var) -> Polynomial:
        out: dict = {}
        for m, c in self._terms.items():
            d = dict(m)
            e = d.get(v, 0)
            if e == 0:
                continue
            if e == 1:
                del d[v]
            else:
                d[v] = e - 1
            key = tuple(sorted(d.items()))
            out[key] = out.get(key, 0.0) + c * e
        return Polynomial(out, self._vars, self._scope)

    def substitute(self, bindings: Mapping[Var, Polynomial | Number]) -> Polynomial:
        """Exact composition; variables without a binding pass through unchanged."""
        if not bindings:
            return self
        bound = {v: (b if isinstance(b, Polynomial) else Polynomial.const(b))
                 for v, b in bindings.items()}
        powers: dict = {}

        def power(v, e):
            key = (v, e)
            if key not in powers:
                powers[key] = bound[v] ** e
            return powers[key]

        universe = set(self._vars) - set(bound)
        for b in bound.values():
            universe |= b._vars
        acc: dict = {}
        scope = self._scope
        for b in bound.values():
            if b._scope and scope and b._scope != scope:
                raise IncompatibleUniverse(
                    f"cannot combine polynomials from scopes {scope!r} and {b._scope!r}")
            scope = scope or b._scope
        for m, c in self._terms.items():
            keep = tuple((v, e) for v, e in m if v not in bound)
            part = Polynomial({keep: c})
            for v, e in m:
                if v in bound:
                    part = part * power(v, e)
            for mm, cc in part._terms.items():
                acc[mm] = acc.get(mm, 0.0) + cc
        return Polynomial(acc, universe, scope)

    def __call__(self, assignment: Mapping[Var, float | np.ndarray]):
        return self.eval(assignment)

    def eval(self, assignment: Mapping[Var, float | np.ndarray]):
        """Term-wise evaluation; values may be numpy arrays (broadcast together)."""
        needed = self.free_variables()
        missing = [v.name for v in needed if v not in assignment]
        if missing:
            raise MissingVariable(f"no value for {', '.join(sorted(missing))}")
        cache: dict = {}

        def power(v, e):
            key = (v, e)
            if key not in cache:
                cache[key] = np.asarray(assignment[v], dtype=float) ** e
            return cache[key]

        total = 0.0
        for m, c in self._terms.items():
            term = c
            for v, e in m:
                term = term * power(v, e)
            total = total + term
        if isinstance(total, np.ndarray) and total.ndim == 0:
            return float(total)
        return total

    def split(self, keep: Iterable[Var]) -> dict[Monomial, Polynomial]:
        """Group terms by their monomial in ``keep``: p = sum_k mono_k * coeff_k."""
        keep = set(keep)
        groups: dict = {}
        for m, c in self._terms.items():
            inner = tuple((v, e) for v, e in m if v in keep)
            rest = tuple((v, e) for v, e in m if v not in keep)
            groups.setdefault(inner, {})[rest] = c
        return {k: Polynomial(v, self._vars - keep, self._scope) for k, v in groups.items()}

    def univariate(self, v: Var) -> np.ndarray:
        """Ascending coefficient vector of a polynomial in the single variable ``v``."""
        extra = self.free_variables() - {v}
        if extra:
            raise PolyError(f"not univariate in {v.name}: also depends on "
                            f"{', '.join(sorted(u.name for u in extra))}")
        out = np.zeros(max(self.degree(), 0) + 1)
        for m, c in self._terms.items():
            out[mono_degree(m)] += c
        return out

    @classmethod
    def from_univariate(cls, coeffs: Iterable[float], v: Var = T) -> Polynomial:
        return cls({(((v, k),) if k else ()): c for k, c in enumerate(coeffs)}, (v,))

    # -- serialization ------------------------------------------------------
    def to_string(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for i, (m, c) in enumerate(self._terms.items()):
            sign = "-" if c < 0 else "+"
            a = abs(c)
            if not m:
                body = _fmt(a)
            elif a == 1.0:
                body = mono_str(m)
            else:
                body = f"{_fmt(a)}*{mono_str(m)}"
            if i == 0:
                parts.append(body if sign == "+" else f"-{body}")
            else:
                parts.append(f"{sign} {body}")
        return " ".join(parts)

    __str__ = to_string

    def __repr__(self) -> str:
        return f"Polynomial({self.to_string()!r})"

    def to_json(self) -> dict:
        return {
            "variables": [v.name for v in sorted(self._vars)],
            "terms": [{"exponents": {v.name: e for v, e in m}, "coeff": c}
                      for m, c in self._terms.items()],
        }

    @classmethod
    def from_json(cls, data: Mapping | str, scope=None) -> Polynomial:
        if isinstance(data, str):
            data = json.loads(data)
        terms: dict = {}
        for term in data["terms"]:
            m = tuple(sorted((parse_var(k), int(e)) for k, e in term["exponents"].items() if e))
            terms[m] = terms.get(m, 0.0) + float(term["coeff"])
        return cls(terms, (parse_var(n) for n in data.get("variables", ())), scope)


def _fmt(a: float) -> str:
    if a.is_integer() and a < 1e15:
        return str(int(a))
    return repr(a)


def var_poly(v: Var) -> Polynomial:
    return Polynomial.var(v)


def const(c: float) -> Polynomial:
    return Polynomial.const(c)


def parse(text: str, scope: str | None = None) -> Polynomial:
    """Parse an expression like ``"w1^2 - x1^2 - x2^2"``.

    Grammar: numbers, variables x<i>/w<i>/t, binary + - *, ``^`` with a
    nonnegative integer exponent, unary minus and parentheses.
    """
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as exc:
        raise ParseError(f"cannot parse {text!r}: {exc.msg} at column {exc.offset}") from None

    def build(node) -> Polynomial:
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return Polynomial.const(float(node.value))
        if isinstance(node, ast.Name):
            return Polynomial.var(parse_var(node.id))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exp = node.right
                neg = False
                if isinstance(exp, ast.UnaryOp) and isinstance(exp.op, ast.USub):
                    neg, exp = True, exp.operand
                if not (isinstance(exp, ast.Constant) and isinstance(exp.value, int)) or neg:
                    raise ParseError(f"exponent must be a nonnegative integer in {text!r} "
                                     f"(column {node.right.col_offset})")
                return build(node.left) ** exp.value
            left, right = build(node.left), build(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
        raise ParseError(f"unsupported syntax {ast.dump(node)[:40]!r} in {text!r} "
                         f"(column {getattr(node, 'col_offset', 0)})")

    p = build(tree)
    return p.with_scope(scope) if scope else p


def affine_poly(offset: Iterable[float], slope: Iterable[float], v: Var = T) -> list[Polynomial]:
    """Per-dimension polynomials offset_i + slope_i * v."""
    return [Polynomial({(): a, ((v, 1),): b}, (v,)) for a, b in zip(offset, slope)]

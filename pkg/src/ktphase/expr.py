"""Exact-rational symbolic expressions over jet variables.

Expressions are normalized sums of monomials; a monomial is a rational
coefficient times a product of integer powers of jet variables and of applied
scalar functions.  The normal form is canonical: two expressions are equal as
functions of the jet variables exactly when their normal forms are identical,
so all downstream derivations (variations, integration by parts, boundary
restriction) reduce to syntactic identities.

Design constraints honoured here:

* coefficients are `fractions.Fraction`; no floating point ever enters the
  symbolic layer;
* monomials are kept sorted under a fixed total order (lexicographic on
  ``(field, component, derivative multi-index)``), so rendered output is
  byte-stable;
* `sqrt` is the only irrational built-in; ``sqrt(x)^2 -> x`` fires only when
  the argument is certifiably nonnegative (structurally, or because the
  symbols involved were declared positive).

Everything in this module is immutable and side-effect free; values can be
shared freely between threads.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .errors import (
    DomainError,
    OrderLimitError,
    ParseError,
    ResourceLimitError,
    UnboundVariableError,
    UndeclaredSymbolError,
)

__all__ = [
    "SymbolMeta",
    "JetVar",
    "Expr",
    "normalize",
    "diff_jet",
    "total_derivative",
    "evaluate",
    "sqrt",
    "apply_fn",
    "Context",
    "parse_expr",
    "eval_ast",
    "ast_to_expr",
    "DEFAULT_MAX_JET_ORDER",
]

DEFAULT_MAX_JET_ORDER = 3

# Guard rails for exact arithmetic (spec: resource-limit error, not a hang).
MAX_TERMS = 2_000_000
MAX_COEFF_BITS = 1_000_000


class SymbolMeta:
    """Non-identity attributes of a symbol: how it varies and what it depends on.

    ``background`` symbols are never hit by the vertical differential.
    ``excluded`` lists base-coordinate indices the symbol does not depend on
    (so its total derivative in those directions vanishes); ``constant`` kills
    all of them.  ``positive`` admits the symbol to sqrt-simplification.

    Metadata is deliberately excluded from equality and ordering of jet
    variables: it travels with construction but never affects normal forms.
    """

    __slots__ = ("background", "constant", "excluded", "positive")

    def __init__(self, background=False, constant=False, excluded=frozenset(), positive=False):
        self.background = bool(background)
        self.constant = bool(constant)
        self.excluded = frozenset(excluded)
        self.positive = bool(positive)

    def depends_on(self, coord: int) -> bool:
        return not self.constant and coord not in self.excluded

    def __repr__(self):
        return (f"SymbolMeta(background={self.background}, constant={self.constant}, "
                f"excluded={set(self.excluded) or '{}'}, positive={self.positive})")


_DYNAMIC = SymbolMeta()


class JetVar:
    """A field component together with a derivative multi-index.

    ``deriv`` is stored sorted, which encodes the commutativity of total
    derivatives.  Identity (equality, hashing, ordering) is the triple
    ``(field, comp, deriv)``; ``meta`` rides along without affecting it.
    """

    __slots__ = ("field", "comp", "deriv", "meta", "_hash")

    def __init__(self, field: str, comp: tuple = (), deriv: tuple = (), meta: SymbolMeta = _DYNAMIC):
        self.field = field
        self.comp = tuple(comp)
        self.deriv = tuple(sorted(deriv))
        self.meta = meta
        self._hash = hash((field, self.comp, self.deriv))

    @property
    def key(self):
        return (self.field, self.comp, self.deriv)

    def with_deriv(self, coord: int, max_order: int) -> "JetVar":
        if len(self.deriv) + 1 > max_order:
            raise OrderLimitError(
                f"jet order {len(self.deriv) + 1} of {self.field} exceeds the configured maximum {max_order}")
        return JetVar(self.field, self.comp, self.deriv + (coord,), self.meta)

    def order(self) -> int:
        return len(self.deriv)

    def __eq__(self, other):
        return isinstance(other, JetVar) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.key < other.key

    def __repr__(self):
        return f"JetVar({self.field!r}, {self.comp!r}, {self.deriv!r})"


# A monomial is ``(vars, fns)`` with
#   vars: tuple of (JetVar, int exponent), sorted by JetVar.key
#   fns:  tuple of ((name, order, Expr argument), int exponent), sorted
_EMPTY_MONO = ((), ())


def _mono_key(mono):
    vars_, fns = mono
    return (tuple((v.key, e) for v, e in vars_),
            tuple(((name, order, arg.sort_key()), e) for (name, order, arg), e in fns))


class Expr:
    """A normalized exact-rational expression; immutable."""

    __slots__ = ("terms", "_hash", "_key")

    def __init__(self, terms=()):
        # Internal: callers must pass already-normalized term tuples.
        self.terms = terms
        self._hash = None
        self._key = None

    # -- constructors -------------------------------------------------------

    @staticmethod
    def const(value) -> "Expr":
        q = Fraction(value)
        if q == 0:
            return ZERO
        if q.numerator.bit_length() > MAX_COEFF_BITS or q.denominator.bit_length() > MAX_COEFF_BITS:
            raise ResourceLimitError("rational coefficient exceeds the configured bit-length limit")
        return Expr(((_EMPTY_MONO, q),))

    @staticmethod
    def var(v: JetVar) -> "Expr":
        mono = (((v, 1),), ())
        return Expr(((mono, Fraction(1)),))

    @staticmethod
    def _from_map(acc: dict) -> "Expr":
        items = [(m, c) for m, c in acc.items() if c != 0]
        if len(items) > MAX_TERMS:
            raise ResourceLimitError(f"expression exceeds {MAX_TERMS} monomials")
        for _, c in items:
            if c.numerator.bit_length() > MAX_COEFF_BITS or c.denominator.bit_length() > MAX_COEFF_BITS:
                raise ResourceLimitError("rational coefficient exceeds the configured bit-length limit")
        items.sort(key=lambda t: _mono_key(t[0]))
        return Expr(tuple(items))

    # -- basic protocol ------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def sort_key(self):
        if self._key is None:
            self._key = tuple((_mono_key(m), (c.numerator, c.denominator)) for m, c in self.terms)
        return self._key

    def __eq__(self, other):
        if not isinstance(other, Expr):
            return NotImplemented
        return self.sort_key() == other.sort_key()

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.sort_key())
        return self._hash

    def __repr__(self):
        return f"Expr({to_text(self)})"

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x):
        if isinstance(x, Expr):
            return x
        if isinstance(x, (int, Fraction)):
            return Expr.const(x)
        return NotImplemented

    def __add__(self, other):
        other = Expr._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        acc = dict(self.terms)
        for m, c in other.terms:
            acc[m] = acc.get(m, Fraction(0)) + c
        return _resimplify(acc)

    __radd__ = __add__

    def __neg__(self):
        return Expr(tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other):
        other = Expr._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return Expr._coerce(other) - self

    def __mul__(self, other):
        other = Expr._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        acc = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = _mono_mul(m1, m2)
                c = c1 * c2
                if m in acc:
                    acc[m] += c
                else:
                    acc[m] = c
        return _resimplify(acc)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if not isinstance(n, int):
            return NotImplemented
        if n == 0:
            return ONE
        if n < 0:
            return self._invert() ** (-n)
        result = ONE
        base = self
        k = n
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def _invert(self) -> "Expr":
        if not self.terms:
            raise ZeroDivisionError("division by zero expression")
        if len(self.terms) != 1:
            raise ZeroDivisionError("can only invert a single-monomial expression")
        (vars_, fns), c = self.terms[0]
        mono = (tuple((v, -e) for v, e in vars_), tuple((f, -e) for f, e in fns))
        return _resimplify({mono: 1 / c})

    def __truediv__(self, other):
        other = Expr._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self * other._invert()

    def __rtruediv__(self, other):
        return Expr._coerce(other) / self

    # -- structure queries ----------------------------------------------------

    def jet_vars(self) -> list:
        """All distinct jet variables in the expression, including those
        buried inside scalar-function arguments."""
        seen = {}
        stack = [self]
        while stack:
            e = stack.pop()
            for (vars_, fns), _ in e.terms:
                for v, _e in vars_:
                    seen.setdefault(v.key, v)
                for (name, order, arg), _e in fns:
                    stack.append(arg)
        return sorted(seen.values())

    def max_order(self) -> int:
        return max((v.order() for v in self.jet_vars()), default=0)


ZERO = Expr()
ONE = Expr(((_EMPTY_MONO, Fraction(1)),))


def _mono_mul(m1, m2):
    v1, f1 = m1
    v2, f2 = m2
    if not v2 and not f2:
        return m1
    if not v1 and not f1:
        return m2
    vd = {}
    for v, e in v1 + v2:
        vd[v] = vd.get(v, 0) + e
    fd = {}
    for f, e in f1 + f2:
        fd[f] = fd.get(f, 0) + e
    vars_ = tuple(sorted(((v, e) for v, e in vd.items() if e != 0), key=lambda t: t[0].key))
    fns = tuple(sorted((((name, order, arg), e) for (name, order, arg), e in fd.items() if e != 0),
                       key=lambda t: (t[0][0], t[0][1], t[0][2].sort_key())))
    return (vars_, fns)


def _certified_nonneg(e: Expr) -> bool:
    """True when every monomial is manifestly >= 0 wherever it is defined.

    A term qualifies if its coefficient is positive and every jet-variable
    factor either carries an even exponent or was declared positive; sqrt
    factors are nonnegative by definition.  Opaque functions never qualify.
    """
    if not e.terms:
        return False
    for (vars_, fns), c in e.terms:
        if c < 0:
            return False
        for v, ex in vars_:
            if ex % 2 != 0 and not v.meta.positive:
                return False
        for (name, order, arg), ex in fns:
            if name != "sqrt":
                return False  # opaque functions are not certified
    return True


def _resimplify(acc: dict) -> Expr:
    """Drop zeros, then rewrite reducible sqrt powers; returns a frozen Expr."""
    out = {}
    pending = [(m, c) for m, c in acc.items() if c != 0]
    while pending:
        mono, coeff = pending.pop()
        vars_, fns = mono
        reduced = None
        for i, ((name, order, arg), ex) in enumerate(fns):
            if name != "sqrt" or order != 0:
                continue
            k, r = divmod(ex, 2)
            if k == 0:
                continue
            if not _certified_nonneg(arg):
                continue
            if k < 0 and len(arg.terms) != 1:
                continue  # cannot fold a negative power of a sum back in
            if r:
                rest = fns[:i] + (((name, order, arg), r),) + fns[i + 1:]
            else:
                rest = fns[:i] + fns[i + 1:]
            reduced = (vars_, rest, arg, k)
            break
        if reduced is None:
            key = (vars_, fns)
            out[key] = out.get(key, Fraction(0)) + coeff
            continue
        rvars, rfns, arg, k = reduced
        base = Expr((((rvars, rfns), coeff),))
        folded = base * (arg ** k)
        for m, c in folded.terms:
            pending.append((m, c))
    return Expr._from_map(out)


# -- scalar functions ---------------------------------------------------------

def apply_fn(name: str, order: int, arg: Expr) -> Expr:
    """The expression ``f^(order)(arg)`` for an opaque scalar function f."""
    mono = ((), (((name, order, arg), 1),))
    return _resimplify({mono: Fraction(1)})


def sqrt(arg: Expr) -> Expr:
    """Square root as a first-class factor; collapses on perfect squares of
    certified-nonnegative arguments via the normal form."""
    return apply_fn("sqrt", 0, arg)


def _fn_factor_derivative(name: str, order: int, arg: Expr) -> Expr:
    """d f^(order)/d(arg) as an expression.

    sqrt rewrites in terms of itself; everything else is opaque and just bumps
    the derivative order.
    """
    if name == "sqrt":
        if order != 0:
            raise ValueError("sqrt factors never carry a derivative order")
        return Expr.const(Fraction(1, 2)) * apply_fn("sqrt", 0, arg) ** (-1)
    return apply_fn(name, order + 1, arg)


# -- the four spec operations -------------------------------------------------

def normalize(e: Expr) -> Expr:
    """Return the canonical form of ``e``.

    Expressions are normalized on construction, so this re-runs the
    simplification pass and is (verifiably) idempotent.
    """
    return _resimplify({m: c for m, c in e.terms})


def diff_jet(e: Expr, v: JetVar) -> Expr:
    """Partial derivative with respect to a single jet variable.

    Linear, Leibniz, and chain rules; jet variables are independent
    coordinates, so a variable absent from ``e`` differentiates to zero.
    """
    acc = {}

    def _add(expr: Expr, scale: Fraction):
        for m, c in expr.terms:
            acc[m] = acc.get(m, Fraction(0)) + c * scale

    for (vars_, fns), coeff in e.terms:
        for i, (w, ex) in enumerate(vars_):
            if w == v:
                rest = vars_[:i] + ((w, ex - 1),) + vars_[i + 1:] if ex != 1 else vars_[:i] + vars_[i + 1:]
                _add(Expr((((rest, fns), coeff * ex),)), Fraction(1))
        for i, ((name, order, arg), ex) in enumerate(fns):
            darg = diff_jet(arg, v)
            if darg.is_zero():
                continue
            rest = fns[:i] + (((name, order, arg), ex - 1),) + fns[i + 1:] if ex != 1 else fns[:i] + fns[i + 1:]
            partial = Expr((((vars_, rest), coeff * ex),))
            _add(partial * _fn_factor_derivative(name, order, arg) * darg, Fraction(1))
    return _resimplify(acc)


def total_derivative(e: Expr, coord: int, max_order: int = DEFAULT_MAX_JET_ORDER) -> Expr:
    """Total derivative along base coordinate ``coord``.

    Chains through every jet variable (bumping its multi-index) and through
    scalar-function arguments.  Symbols whose metadata excludes ``coord``
    contribute nothing.  Raises OrderLimitError past ``max_order``.
    """
    acc = {}

    def _add(expr: Expr):
        for m, c in expr.terms:
            acc[m] = acc.get(m, Fraction(0)) + c

    for (vars_, fns), coeff in e.terms:
        for i, (w, ex) in enumerate(vars_):
            if not w.meta.depends_on(coord):
                continue
            rest = vars_[:i] + ((w, ex - 1),) + vars_[i + 1:] if ex != 1 else vars_[:i] + vars_[i + 1:]
            bumped = w.with_deriv(coord, max_order)
            partial = Expr((((rest, fns), coeff * ex),))
            _add(partial * Expr.var(bumped))
        for i, ((name, order, arg), ex) in enumerate(fns):
            darg = total_derivative(arg, coord, max_order)
            if darg.is_zero():
                continue
            rest = fns[:i] + (((name, order, arg), ex - 1),) + fns[i + 1:] if ex != 1 else fns[:i] + fns[i + 1:]
            partial = Expr((((vars_, rest), coeff * ex),))
            _add(partial * _fn_factor_derivative(name, order, arg) * darg)
    return _resimplify(acc)


def _eval_sqrt(x):
    if isinstance(x, Fraction):
        if x < 0:
            raise DomainError(f"sqrt of negative rational {x}")
        rn, rd = math.isqrt(x.numerator), math.isqrt(x.denominator)
        if rn * rn == x.numerator and rd * rd == x.denominator:
            return Fraction(rn, rd)
        return math.sqrt(float(x))
    if x < 0:
        raise DomainError(f"sqrt of negative value {x}")
    return math.sqrt(x)


def evaluate(e: Expr, point: Mapping[JetVar, object], fns: Mapping | None = None):
    """Evaluate at a point binding every jet variable to a rational or float.

    Exact Fraction arithmetic is preserved whenever all inputs are rational
    and every scalar function returns rationals; otherwise the result decays
    to float.  ``fns`` maps ``(name, order)`` to a callable for opaque
    functions; sqrt is built in.
    """
    fns = fns or {}
    total = Fraction(0)
    for (vars_, fxs), coeff in e.terms:
        val = coeff
        for v, ex in vars_:
            try:
                x = point[v]
            except KeyError:
                raise UnboundVariableError(f"no binding for jet variable {v.field}{v.comp}{v.deriv}") from None
            val = val * _ipow(x, ex)
        for (name, order, arg), ex in fxs:
            a = evaluate(arg, point, fns)
            if name == "sqrt":
                y = _eval_sqrt(a)
            else:
                try:
                    fn = fns[(name, order)]
                except KeyError:
                    raise UnboundVariableError(f"no callable bound for {name!r} (derivative order {order})") from None
                y = fn(a)
            val = val * _ipow(y, ex)
        total = total + val
    return total


def esum(exprs: Iterable[Expr]) -> Expr:
    """Sum many expressions in one accumulation pass (avoids quadratic rebuilds)."""
    acc: dict = {}
    for e in exprs:
        for m, c in e.terms:
            if m in acc:
                acc[m] += c
            else:
                acc[m] = c
    return _resimplify(acc)


def map_vars(e: Expr, f: Callable[[JetVar], JetVar]) -> Expr:
    """Rebuild ``e`` with every jet variable replaced by ``f(var)``.

    Used for boundary restriction (renaming transversal jets); recurses into
    scalar-function arguments.
    """
    out = ZERO
    for (vars_, fns), coeff in e.terms:
        term = Expr.const(coeff)
        for v, ex in vars_:
            term = term * Expr.var(f(v)) ** ex
        for (name, order, arg), ex in fns:
            term = term * apply_fn(name, order, map_vars(arg, f)) ** ex
        out = out + term
    return out


def substitute(e: Expr, images: Mapping[tuple, Expr], max_order: int = DEFAULT_MAX_JET_ORDER) -> Expr:
    """Substitute expressions for base symbols, chaining through derivatives.

    ``images`` maps ``(field, comp)`` of an underived symbol to its defining
    expression; a jet variable carrying derivative indices is replaced by the
    corresponding total derivatives of the image.  Exponents of substituted
    variables must be nonnegative.
    """
    out = ZERO
    for (vars_, fns), coeff in e.terms:
        term = Expr.const(coeff)
        for v, ex in vars_:
            key = (v.field, v.comp)
            if key in images:
                if ex < 0:
                    raise ValueError(f"cannot substitute into negative power of {v.field}{v.comp}")
                img = images[key]
                for i in v.deriv:
                    img = total_derivative(img, i, max_order)
                term = term * img ** ex
            else:
                term = term * Expr.var(v) ** ex
        for (name, order, arg), ex in fns:
            term = term * apply_fn(name, order, substitute(arg, images, max_order)) ** ex
        out = out + term
    return out


def _ipow(x, e: int):
    if e >= 0:
        return x ** e
    if x == 0:
        raise ZeroDivisionError("negative power of zero during evaluation")
    if isinstance(x, Fraction):
        return Fraction(1) / x ** (-e)
    return x ** e


# =============================================================================
# Expression text grammar
# =============================================================================
#
#   expr   := term (('+'|'-') term)*
#   term   := signed (('*'|'/') signed)*
#   signed := '-'* power
#   power  := atom ('^' ('-'? INT))?
#   atom   := RATIONAL | NAME trailer | NAME '(' expr ')' | '(' expr ')'
#           | 'd' '[' IDX ']' atom
#   trailer: optional '[' IDX (',' IDX)* ']' then zero or more "'"
#
# Primes denote transversal derivatives, d[i] tangential/spatial ones; IDX is
# a coordinate name or a bare integer.

_TOKEN_RE = re.compile(r"""
    (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[()\[\],+\-*/^'])
  | (?P<ws>\s+)
""", re.VERBOSE)


def _tokenize(text: str):
    pos = 0
    out = []
    line, col = 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        val = m.group()
        if kind != "ws":
            out.append((kind, val, line, col))
        for ch in val:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        pos = m.end()
    out.append(("eof", "", line, col))
    return out


class Context:
    """Declarations needed to resolve an expression string.

    Maps names to fields (with component index ranges and metadata), to scalar
    functions, and coordinate names to indices; knows which coordinate is
    transversal so primes can be resolved.
    """

    def __init__(self, coords: Iterable[str] = ("t",), transversal: int = 0):
        self.coords = list(coords)
        self.transversal = transversal
        self.fields: dict[str, tuple[tuple[int, ...], SymbolMeta]] = {}
        self.functions: dict[str, int] = {}

    def declare_field(self, name: str, index_ranges: tuple[int, ...] = (), meta: SymbolMeta = _DYNAMIC):
        if name in self.fields or name in self.functions:
            raise ParseError(f"duplicate declaration of {name!r}")
        self.fields[name] = (tuple(index_ranges), meta)
        return self

    def declare_function(self, name: str, arity: int = 1):
        if name in self.fields or name in self.functions:
            raise ParseError(f"duplicate declaration of {name!r}")
        self.functions[name] = arity
        return self

    def coord_index(self, token: str, line=None, col=None) -> int:
        if token in self.coords:
            return self.coords.index(token)
        if token.isdigit():
            i = int(token)
            if i < len(self.coords):
                return i
        raise ParseError(f"unknown coordinate {token!r}", line, col)

    def jetvar(self, name: str, comps: tuple, nprimes: int, tangential: tuple) -> JetVar:
        ranges, meta = self.fields[name]
        if len(comps) != len(ranges):
            raise ParseError(f"{name!r} takes {len(ranges)} component indices, got {len(comps)}")
        for c, r in zip(comps, ranges):
            if not (0 <= c < r):
                raise ParseError(f"component index {c} out of range for {name!r}")
        deriv = tuple(tangential) + (self.transversal,) * nprimes
        return JetVar(name, comps, deriv, meta)


def parse_expr(text: str, ctx: Context):
    """Parse to a raw AST (the unnormalized tree; see eval_ast / ast_to_expr)."""
    toks = _tokenize(text)
    pos = [0]

    def peek():
        return toks[pos[0]]

    def take(expect=None):
        kind, val, line, col = toks[pos[0]]
        if expect is not None and val != expect:
            raise ParseError(f"expected {expect!r}, found {val or 'end of input'!r}", line, col)
        pos[0] += 1
        return kind, val, line, col

    def parse_sum():
        node = parse_term()
        while peek()[1] in ("+", "-"):
            _, op, _, _ = take()
            rhs = parse_term()
            node = ("add", node, rhs) if op == "+" else ("sub", node, rhs)
        return node

    def parse_term():
        node = parse_signed()
        while peek()[1] in ("*", "/"):
            _, op, _, _ = take()
            rhs = parse_signed()
            node = ("mul", node, rhs) if op == "*" else ("div", node, rhs)
        return node

    def parse_signed():
        neg = False
        while peek()[1] in ("+", "-"):
            _, op, _, _ = take()
            if op == "-":
                neg = not neg
        node = parse_power()
        return ("neg", node) if neg else node

    def parse_power():
        node = parse_atom()
        if peek()[1] == "^":
            take()
            sign = 1
            if peek()[1] == "-":
                take()
                sign = -1
            kind, val, line, col = take()
            if kind != "num":
                raise ParseError("exponent must be an integer", line, col)
            node = ("pow", node, sign * int(val))
        return node

    def parse_index(line, col):
        kind, val, l, c = take()
        if kind not in ("num", "name"):
            raise ParseError("expected an index", l, c)
        return val, l, c

    def parse_atom():
        kind, val, line, col = peek()
        if kind == "num":
            take()
            return ("num", Fraction(int(val)))
        if val == "(":
            take()
            node = parse_sum()
            take(")")
            return node
        if kind == "name":
            if val == "d" and toks[pos[0] + 1][1] == "[":
                take()  # d
                take("[")
                tok, l, c = parse_index(line, col)
                take("]")
                idx = ctx.coord_index(tok, l, c)
                inner = parse_atom()
                if inner[0] != "var":
                    raise ParseError("d[...] must apply to a jet variable", line, col)
                _, name, comps, nprimes, tang = inner
                return ("var", name, comps, nprimes, tang + (idx,))
            take()
            if val in ctx.functions:
                order = 0
                while peek()[1] == "'":
                    take()
                    order += 1
                take("(")
                arg = parse_sum()
                take(")")
                return ("call", val, order, arg)
            if val not in ctx.fields:
                raise UndeclaredSymbolError(f"undeclared symbol {val!r}", line, col)
            comps = ()
            if peek()[1] == "[":
                take("[")
                idxs = []
                while True:
                    kindi, vi, li, ci = take()
                    if kindi != "num":
                        raise ParseError("component indices must be integers", li, ci)
                    idxs.append(int(vi))
                    if peek()[1] == ",":
                        take()
                        continue
                    break
                take("]")
                comps = tuple(idxs)
            nprimes = 0
            while peek()[1] == "'":
                take()
                nprimes += 1
            return ("var", val, comps, nprimes, ())
        raise ParseError(f"unexpected token {val or 'end of input'!r}", line, col)

    node = parse_sum()
    kind, val, line, col = peek()
    if kind != "eof":
        raise ParseError(f"trailing input {val!r}", line, col)
    return node


def eval_ast(node, ctx: Context, point, fns=None):
    """Direct recursive evaluation of the raw parse tree.

    Serves as the independent oracle for ``evaluate(normalize(...))``: no
    normalization, no simplification, just the tree.
    """
    fns = fns or {}
    op = node[0]
    if op == "num":
        return node[1]
    if op == "neg":
        return -eval_ast(node[1], ctx, point, fns)
    if op in ("add", "sub", "mul", "div"):
        a = eval_ast(node[1], ctx, point, fns)
        b = eval_ast(node[2], ctx, point, fns)
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if isinstance(a, Fraction) and isinstance(b, Fraction):
            return a / b
        return a / b
    if op == "pow":
        return _ipow(eval_ast(node[1], ctx, point, fns), node[2])
    if op == "call":
        a = eval_ast(node[3], ctx, point, fns)
        if node[1] == "sqrt":
            if node[2]:
                raise ValueError("sqrt carries no derivative order")
            return _eval_sqrt(a)
        return fns[(node[1], node[2])](a)
    if op == "var":
        _, name, comps, nprimes, tang = node
        v = ctx.jetvar(name, comps, nprimes, tang)
        try:
            return point[v]
        except KeyError:
            raise UnboundVariableError(f"no binding for {name}{comps}") from None
    raise ValueError(f"unknown AST node {op!r}")


def ast_to_expr(node, ctx: Context) -> Expr:
    op = node[0]
    if op == "num":
        return Expr.const(node[1])
    if op == "neg":
        return -ast_to_expr(node[1], ctx)
    if op == "add":
        return ast_to_expr(node[1], ctx) + ast_to_expr(node[2], ctx)
    if op == "sub":
        return ast_to_expr(node[1], ctx) - ast_to_expr(node[2], ctx)
    if op == "mul":
        return ast_to_expr(node[1], ctx) * ast_to_expr(node[2], ctx)
    if op == "div":
        return ast_to_expr(node[1], ctx) / ast_to_expr(node[2], ctx)
    if op == "pow":
        return ast_to_expr(node[1], ctx) ** node[2]
    if op == "call":
        return apply_fn(node[1], node[2], ast_to_expr(node[3], ctx))
    if op == "var":
        _, name, comps, nprimes, tang = node
        return Expr.var(ctx.jetvar(name, comps, nprimes, tang))
    raise ValueError(f"unknown AST node {op!r}")


def parse(text: str, ctx: Context) -> Expr:
    return ast_to_expr(parse_expr(text, ctx), ctx)


# -- rendering ----------------------------------------------------------------

def _var_text(v: JetVar, ctx: Context | None) -> str:
    base = v.field
    if v.comp:
        base += "[" + ",".join(str(c) for c in v.comp) + "]"
    primes = 0
    tangential = []
    for i in v.deriv:
        if ctx is not None and i == ctx.transversal:
            primes += 1
        else:
            tangential.append(i)
    prefix = "".join(f"d[{i}]" for i in tangential)
    return prefix + base + "'" * primes


def _fn_text(name, order, arg, ctx):
    return name + "'" * order + "(" + to_text(arg, ctx) + ")"


def to_text(e: Expr, ctx: Context | None = None) -> str:
    """Canonical text; re-parses to the same expression under the same context."""
    if not e.terms:
        return "0"
    parts = []
    for (vars_, fns), coeff in e.terms:
        factors = []
        for v, ex in vars_:
            t = _var_text(v, ctx)
            factors.append(t if ex == 1 else f"{t}^{ex}")
        for (name, order, arg), ex in fns:
            t = _fn_text(name, order, arg, ctx)
            factors.append(t if ex == 1 else f"{t}^{ex}")
        mag = abs(coeff)
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = str(mag) + "*" + "*".join(factors)
        parts.append(("-" if coeff < 0 else "+", body))
    sign, body = parts[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


_LATEX_GREEK = {"phi": r"\phi", "omega": r"\omega", "lam": r"\lambda", "Lam": r"\Lambda",
                "eps": r"\varepsilon", "rho": r"\rho", "xi": r"\xi", "eta": r"\eta",
                "sigma": r"\sigma", "mu": r"\mu", "alpha": r"\alpha", "delta": r"\delta"}


def _latex_name(name: str) -> str:
    return _LATEX_GREEK.get(name, name)


def var_latex(v: JetVar, ctx: Context | None = None) -> str:
    base = _latex_name(v.field)
    primes = 0
    tangential = []
    for i in v.deriv:
        if ctx is not None and i == ctx.transversal:
            primes += 1
        else:
            tangential.append(i)
    if primes == 1:
        base = r"\dot " + base
    elif primes == 2:
        base = r"\ddot " + base
    elif primes > 2:
        base = base + "^{(%d)}" % primes
    if v.comp:
        base += "_{" + ",".join(str(c) for c in v.comp) + "}"
    for i in tangential:
        base = r"\partial_{%d}" % i + base
    return base


def to_latex(e: Expr, ctx: Context | None = None) -> str:
    if not e.terms:
        return "0"
    parts = []
    for (vars_, fns), coeff in e.terms:
        factors = []
        for v, ex in vars_:
            t = var_latex(v, ctx)
            factors.append(t if ex == 1 else t + "^{%d}" % ex)
        for (name, order, arg), ex in fns:
            if name == "sqrt":
                t = r"\sqrt{%s}" % to_latex(arg, ctx)
                if ex != 1:
                    t = "(" + t + ")^{%d}" % ex
            else:
                t = _latex_name(name) + "'" * order + "(" + to_latex(arg, ctx) + ")"
                if ex != 1:
                    t = t + "^{%d}" % ex
            factors.append(t)
        mag = abs(coeff)
        if not factors:
            body = _frac_latex(mag)
        elif mag == 1:
            body = factors[0] + "".join(factors[1:])
        else:
            body = _frac_latex(mag) + factors[0] + "".join(factors[1:])
        parts.append(("-" if coeff < 0 else "+", body))
    sign, body = parts[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in parts[1:]:
        out += sign + body
    return out


def _frac_latex(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator)
    return r"\frac{%d}{%d}" % (q.numerator, q.denominator)

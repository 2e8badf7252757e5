"""Quantifier-free formulas over integer and boolean program variables.

Atoms are linear integer constraints (kept canonical: a term compared
against zero, tightened and gcd-reduced) and boolean literals.  Connectives
are n-ary conjunction/disjunction; negation is *applied*, not represented,
so every formula built through the smart constructors is in negation normal
form with complement-free atoms.  That makes syntactic deduplication do a
lot of semantic work for free, which the proof-generalisation code relies
on when it merges equal propositions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Iterable, Mapping, Optional, Union


# ---------------------------------------------------------------------------
# linear integer terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntTerm:
    """A linear term  sum(coeff * var) + const  with integer coefficients.

    ``coeffs`` is sorted by variable name and never contains a zero
    coefficient, so structural equality is semantic equality.
    """

    coeffs: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @staticmethod
    def make(coeffs: Mapping[str, int], const: int = 0) -> "IntTerm":
        items = tuple(sorted((v, c) for v, c in coeffs.items() if c != 0))
        return IntTerm(items, const)

    def __add__(self, other: "IntTerm") -> "IntTerm":
        acc = dict(self.coeffs)
        for v, c in other.coeffs:
            acc[v] = acc.get(v, 0) + c
        return IntTerm.make(acc, self.const + other.const)

    def __neg__(self) -> "IntTerm":
        return IntTerm(tuple((v, -c) for v, c in self.coeffs), -self.const)

    def __sub__(self, other: "IntTerm") -> "IntTerm":
        return self + (-other)

    def scale(self, k: int) -> "IntTerm":
        if k == 0:
            return IntTerm((), 0)
        return IntTerm(tuple((v, k * c) for v, c in self.coeffs), k * self.const)

    def subst(self, var: str, repl: "IntTerm") -> "IntTerm":
        c = dict(self.coeffs).get(var)
        if c is None:
            return self
        rest = IntTerm.make({v: k for v, k in self.coeffs if v != var}, self.const)
        return rest + repl.scale(c)

    def coeff(self, var: str) -> int:
        return dict(self.coeffs).get(var, 0)

    def vars(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.coeffs)

    def eval(self, state: Mapping[str, object]) -> int:
        total = self.const
        for v, c in self.coeffs:
            total += c * int(state[v])  # type: ignore[arg-type]
        return total

    def __str__(self) -> str:
        if not self.coeffs:
            return str(self.const)
        parts: list[str] = []
        for v, c in self.coeffs:
            if c == 1:
                mono = v
            elif c == -1:
                mono = f"-{v}"
            else:
                mono = f"{c}*{v}"
            if parts and not mono.startswith("-"):
                parts.append(f"+ {mono}")
            elif parts:
                parts.append(f"- {mono[1:]}")
            else:
                parts.append(mono)
        if self.const > 0:
            parts.append(f"+ {self.const}")
        elif self.const < 0:
            parts.append(f"- {-self.const}")
        return " ".join(parts)


TermLike = Union["IntTerm", int, str]


def as_term(x: TermLike) -> IntTerm:
    if isinstance(x, IntTerm):
        return x
    if isinstance(x, bool):
        raise TypeError("boolean used where an integer term is expected")
    if isinstance(x, int):
        return IntTerm((), x)
    if isinstance(x, str):
        return IntTerm(((x, 1),), 0)
    raise TypeError(f"cannot coerce {x!r} to IntTerm")


def ivar(name: str) -> IntTerm:
    return IntTerm(((name, 1),), 0)


# ---------------------------------------------------------------------------
# formulas
# ---------------------------------------------------------------------------

class Formula:
    """Base class; all nodes are frozen dataclasses."""

    __slots__ = ()


@dataclass(frozen=True)
class TrueF(Formula):
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseF(Formula):
    def __str__(self) -> str:
        return "false"


TRUE = TrueF()
FALSE = FalseF()


@dataclass(frozen=True)
class BoolLit(Formula):
    """A boolean program variable or its negation."""

    name: str
    positive: bool = True

    def __str__(self) -> str:
        return self.name if self.positive else f"!{self.name}"


# comparison kinds, all against zero
LE = "<="   # term <= 0
EQ = "=="   # term == 0
NE = "!="   # term != 0


@dataclass(frozen=True)
class Cmp(Formula):
    """term op 0, canonicalised (gcd-reduced, tightened, sign-normalised)."""

    term: IntTerm
    op: str

    def __str__(self) -> str:
        return _render_cmp(self)


@dataclass(frozen=True)
class And(Formula):
    args: tuple[Formula, ...]

    def __str__(self) -> str:
        return " && ".join(_paren(a, self) for a in self.args)


@dataclass(frozen=True)
class Or(Formula):
    args: tuple[Formula, ...]

    def __str__(self) -> str:
        return " || ".join(_paren(a, self) for a in self.args)


def _paren(child: Formula, parent: Formula) -> str:
    if isinstance(parent, And) and isinstance(child, Or):
        return f"({child})"
    if isinstance(parent, Or) and isinstance(child, And):
        return f"({child})"
    return str(child)


def _render_cmp(a: Cmp) -> str:
    # move negative monomials and the constant to the right-hand side
    lhs = {v: c for v, c in a.term.coeffs if c > 0}
    rhs = {v: -c for v, c in a.term.coeffs if c < 0}
    left = IntTerm.make(lhs, 0)
    right = IntTerm.make(rhs, -a.term.const)
    if not lhs and rhs:
        # prefer "C >= 1" over "0 <= C - 1" when everything sits on one side
        sym = {LE: ">=", EQ: "=", NE: "!="}[a.op]
        return f"{IntTerm.make(rhs, 0)} {sym} {a.term.const}"
    sym = {LE: "<=", EQ: "=", NE: "!="}[a.op]
    return f"{left} {sym} {right}"


# ---------------------------------------------------------------------------
# smart constructors (the only way formulas should be built)
# ---------------------------------------------------------------------------

def _cmp(term: IntTerm, op: str) -> Formula:
    if not term.coeffs:
        c = term.const
        if op == LE:
            return TRUE if c <= 0 else FALSE
        if op == EQ:
            return TRUE if c == 0 else FALSE
        return TRUE if c != 0 else FALSE
    g = 0
    for _, c in term.coeffs:
        g = gcd(g, abs(c))
    if op == LE:
        if g > 1:
            # g*s + c <= 0  <=>  s <= floor(-c/g)
            new_const = -((-term.const) // g)
            term = IntTerm(tuple((v, c // g) for v, c in term.coeffs), new_const)
    else:
        if term.const % g != 0:
            return FALSE if op == EQ else TRUE
        if g > 1:
            term = IntTerm(tuple((v, c // g) for v, c in term.coeffs), term.const // g)
        if term.coeffs[0][1] < 0:
            term = -term
    return Cmp(term, op)


def le(a: TermLike, b: TermLike) -> Formula:
    return _cmp(as_term(a) - as_term(b), LE)


def lt(a: TermLike, b: TermLike) -> Formula:
    return _cmp(as_term(a) - as_term(b) + IntTerm((), 1), LE)


def ge(a: TermLike, b: TermLike) -> Formula:
    return le(b, a)


def gt(a: TermLike, b: TermLike) -> Formula:
    return lt(b, a)


def eq(a: TermLike, b: TermLike) -> Formula:
    return _cmp(as_term(a) - as_term(b), EQ)


def ne(a: TermLike, b: TermLike) -> Formula:
    return _cmp(as_term(a) - as_term(b), NE)


def bvar(name: str) -> Formula:
    return BoolLit(name, True)


def _key(f: Formula):
    """Deterministic total order on formulas, used to canonicalise arg lists."""
    if isinstance(f, TrueF):
        return (0,)
    if isinstance(f, FalseF):
        return (1,)
    if isinstance(f, BoolLit):
        return (2, f.name, f.positive)
    if isinstance(f, Cmp):
        return (3, f.op, f.term.coeffs, f.term.const)
    if isinstance(f, And):
        return (4, tuple(_key(a) for a in f.args))
    return (5, tuple(_key(a) for a in f.args))


def _absorb_cmps(cmps: list["Cmp"], conj: bool) -> Optional[list[Formula]]:
    """Resolve comparison atoms sharing one linear base into interval facts.
    Returns None when the atoms alone force the absorbing element (false for
    a conjunction, true for a disjunction)."""
    groups: dict[tuple, dict] = {}
    out: list[Formula] = []
    for a in cmps:
        coeffs, const = a.term.coeffs, a.term.const
        if not coeffs:  # foreign non-canonical atom: keep untouched
            out.append(a)
            continue
        if a.op == LE and coeffs[0][1] < 0:
            key = tuple((v, -c) for v, c in coeffs)
            g = groups.setdefault(key, {"ub": [], "lb": [], "eq": set(), "ne": set()})
            g["lb"].append(const)  # -base + const <= 0  <=>  base >= const
        else:
            key = coeffs
            g = groups.setdefault(key, {"ub": [], "lb": [], "eq": set(), "ne": set()})
            if a.op == LE:
                g["ub"].append(-const)  # base + const <= 0  <=>  base <= -const
            elif a.op == EQ:
                g["eq"].add(-const)
            else:
                g["ne"].add(-const)

    def upper(key, v):
        return _cmp(IntTerm(key, -v), LE)

    def lower(key, v):
        return _cmp(IntTerm(tuple((x, -c) for x, c in key), v), LE)

    for key, g in groups.items():
        eqs, nes = g["eq"], g["ne"]
        if conj:
            ub = min(g["ub"]) if g["ub"] else None
            lb = max(g["lb"]) if g["lb"] else None
            if len(eqs) > 1:
                return None
            if eqs:
                e = next(iter(eqs))
                if (ub is not None and e > ub) or (lb is not None and e < lb) or e in nes:
                    return None
                out.append(_cmp(IntTerm(key, -e), EQ))
                continue
            changed = True
            while changed:  # boundary exclusions tighten the interval
                changed = False
                if ub is not None and ub in nes:
                    ub -= 1
                    changed = True
                if lb is not None and lb in nes:
                    lb += 1
                    changed = True
            if ub is not None and lb is not None:
                if lb > ub:
                    return None
                if lb == ub:
                    out.append(_cmp(IntTerm(key, -lb), EQ))
                    continue
            if ub is not None:
                out.append(upper(key, ub))
            if lb is not None:
                out.append(lower(key, lb))
            out.extend(
                _cmp(IntTerm(key, -v), NE)
                for v in nes
                if (ub is None or v < ub) and (lb is None or v > lb)
            )
        else:
            ub = max(g["ub"]) if g["ub"] else None
            lb = min(g["lb"]) if g["lb"] else None
            if len(nes) > 1:
                return None
            if nes:
                v = next(iter(nes))
                if (ub is not None and v <= ub) or (lb is not None and v >= lb) or v in eqs:
                    return None
                out.append(_cmp(IntTerm(key, -v), NE))
                continue
            changed = True
            while changed:  # adjacent equalities extend the covered rays
                changed = False
                if ub is not None and ub + 1 in eqs:
                    ub += 1
                    changed = True
                if lb is not None and lb - 1 in eqs:
                    lb -= 1
                    changed = True
            if ub is not None and lb is not None and lb <= ub + 1:
                return None
            if ub is not None:
                out.append(upper(key, ub))
            if lb is not None:
                out.append(lower(key, lb))
            out.extend(
                _cmp(IntTerm(key, -e), EQ)
                for e in eqs
                if (ub is None or e > ub) and (lb is None or e < lb)
            )
    return out


def _assoc(parts: Iterable[Formula], unit: Formula, zero: Formula, node):
    flat: list[Formula] = []
    for p in parts:
        if p == zero:
            return zero
        if p == unit:
            continue
        if isinstance(p, node):
            flat.extend(p.args)
        else:
            flat.append(p)
    seen: dict[tuple, Formula] = {}
    for p in flat:
        seen.setdefault(_key(p), p)
    items = [seen[k] for k in sorted(seen)]
    # complementary atom pair => contradiction / tautology
    keys = set(seen)
    for p in items:
        if isinstance(p, (BoolLit, Cmp)) and _key(fnot(p)) in keys:
            return zero
    cmps = [p for p in items if isinstance(p, Cmp)]
    if len(cmps) > 1:
        absorbed = _absorb_cmps(cmps, conj=node is And)
        if absorbed is None:
            return zero
        rest = [p for p in items if not isinstance(p, Cmp)]
        merged = {_key(p): p for p in rest + absorbed}
        items = [merged[k] for k in sorted(merged)]
    if not items:
        return unit
    if len(items) == 1:
        return items[0]
    return node(tuple(items))


def fand(*parts: Formula) -> Formula:
    return _assoc(parts, TRUE, FALSE, And)


def for_(*parts: Formula) -> Formula:
    return _assoc(parts, FALSE, TRUE, Or)


def fnot(f: Formula) -> Formula:
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, BoolLit):
        return BoolLit(f.name, not f.positive)
    if isinstance(f, Cmp):
        if f.op == LE:
            # not(t <= 0)  <=>  t >= 1  <=>  -t + 1 <= 0
            return _cmp(-f.term + IntTerm((), 1), LE)
        return _cmp(f.term, NE if f.op == EQ else EQ)
    if isinstance(f, And):
        return for_(*(fnot(a) for a in f.args))
    if isinstance(f, Or):
        return fand(*(fnot(a) for a in f.args))
    raise TypeError(f"not a formula: {f!r}")


def fimplies(a: Formula, b: Formula) -> Formula:
    return for_(fnot(a), b)


def simplify(f: Formula) -> Formula:
    """Rebuild through the smart constructors (canonical form)."""
    if isinstance(f, And):
        return fand(*(simplify(a) for a in f.args))
    if isinstance(f, Or):
        return for_(*(simplify(a) for a in f.args))
    if isinstance(f, Cmp):
        return _cmp(f.term, f.op)
    return f


# ---------------------------------------------------------------------------
# substitution / variables / evaluation
# ---------------------------------------------------------------------------

def subst_int(f: Formula, var: str, repl: IntTerm) -> Formula:
    if isinstance(f, Cmp):
        return _cmp(f.term.subst(var, repl), f.op)
    if isinstance(f, And):
        return fand(*(subst_int(a, var, repl) for a in f.args))
    if isinstance(f, Or):
        return for_(*(subst_int(a, var, repl) for a in f.args))
    return f


def subst_bool(f: Formula, name: str, repl: Formula) -> Formula:
    if isinstance(f, BoolLit) and f.name == name:
        return repl if f.positive else fnot(repl)
    if isinstance(f, And):
        return fand(*(subst_bool(a, name, repl) for a in f.args))
    if isinstance(f, Or):
        return for_(*(subst_bool(a, name, repl) for a in f.args))
    return f


def int_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, Cmp):
        return f.term.vars()
    if isinstance(f, (And, Or)):
        out: frozenset[str] = frozenset()
        for a in f.args:
            out |= int_vars(a)
        return out
    return frozenset()


def bool_vars(f: Formula) -> frozenset[str]:
    if isinstance(f, BoolLit):
        return frozenset({f.name})
    if isinstance(f, (And, Or)):
        out: frozenset[str] = frozenset()
        for a in f.args:
            out |= bool_vars(a)
        return out
    return frozenset()


def feval(f: Formula, state: Mapping[str, object]) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, BoolLit):
        val = bool(state[f.name])
        return val if f.positive else not val
    if isinstance(f, Cmp):
        v = f.term.eval(state)
        if f.op == LE:
            return v <= 0
        if f.op == EQ:
            return v == 0
        return v != 0
    if isinstance(f, And):
        return all(feval(a, state) for a in f.args)
    if isinstance(f, Or):
        return any(feval(a, state) for a in f.args)
    raise TypeError(f"not a formula: {f!r}")


def atoms(f: Formula) -> list[Formula]:
    """Positive occurrences of atoms (literals), deterministic order."""
    out: dict[tuple, Formula] = {}

    def walk(g: Formula) -> None:
        if isinstance(g, (BoolLit, Cmp)):
            out.setdefault(_key(g), g)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)

    walk(f)
    return [out[k] for k in sorted(out)]


# ---------------------------------------------------------------------------
# SMT-LIB 2 rendering
# ---------------------------------------------------------------------------

def _smt_term(t: IntTerm) -> str:
    monos: list[str] = []
    for v, c in t.coeffs:
        if c == 1:
            monos.append(v)
        elif c == -1:
            monos.append(f"(- {v})")
        elif c < 0:
            monos.append(f"(* (- {-c}) {v})")
        else:
            monos.append(f"(* {c} {v})")
    if t.const != 0 or not monos:
        monos.append(str(t.const) if t.const >= 0 else f"(- {-t.const})")
    if len(monos) == 1:
        return monos[0]
    return "(+ " + " ".join(monos) + ")"


def to_smt2(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, BoolLit):
        return f.name if f.positive else f"(not {f.name})"
    if isinstance(f, Cmp):
        t = _smt_term(f.term)
        if f.op == LE:
            return f"(<= {t} 0)"
        if f.op == EQ:
            return f"(= {t} 0)"
        return f"(not (= {t} 0))"
    if isinstance(f, And):
        return "(and " + " ".join(to_smt2(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(or " + " ".join(to_smt2(a) for a in f.args) + ")"
    raise TypeError(f"not a formula: {f!r}")


def smt2_decls(f: Formula) -> list[str]:
    decls = [f"(declare-const {v} Int)" for v in sorted(int_vars(f))]
    decls += [f"(declare-const {v} Bool)" for v in sorted(bool_vars(f))]
    return decls

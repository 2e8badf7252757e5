"""Brute-force ground truth on bounded domains.

Computes the exact violation probability of a deterministic PCFA by value
iteration over (remaining steps, location, concrete state): coins average,
action choices maximize, the accepting location scores the postcondition.
Truncation at the step bound yields a sound interval — the unresolved mass
goes entirely to the upper end — so callers can compare certified bounds
against it without ever trusting a point estimate.

Everything here is deliberately independent of the verification pipeline:
no transformers, no solver, no automata algebra beyond walking edges.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Mapping, Optional, Sequence

from .cfa import Assign, Assume, Label, PCFA, Pb, action_of
from .formula import Formula, IntTerm, bool_vars, feval, int_vars

DEFAULT_RANGE = (-4, 4)


@dataclass(frozen=True)
class StateDomain:
    ranges: tuple[tuple[str, tuple[int, int]], ...] = ()
    limit: int = 10**6

    @staticmethod
    def of(ranges: Mapping[str, tuple[int, int]], limit: int = 10**6) -> "StateDomain":
        for v, (a, b) in ranges.items():
            if a > b:
                raise ValueError(f"empty range for {v}: [{a}, {b}]")
        return StateDomain(tuple(sorted(ranges.items())), limit)

    def range_of(self, var: str) -> tuple[int, int]:
        for v, r in self.ranges:
            if v == var:
                return r
        return DEFAULT_RANGE


def _variables(P: PCFA, spec) -> tuple[list[str], list[str]]:
    """Integer and boolean variable names mentioned anywhere."""
    ints: set[str] = set()
    bools: set[str] = set()
    for f in (spec.pre, spec.post):
        ints |= int_vars(f)
        bools |= bool_vars(f)
    for _, lab, _ in P.transitions:
        if isinstance(lab, Assign):
            if isinstance(lab.expr, IntTerm):
                ints.add(lab.var)
                ints |= lab.expr.vars()
            else:
                bools.add(lab.var)
                ints |= int_vars(lab.expr)
                bools |= bool_vars(lab.expr)
        elif isinstance(lab, Assume):
            ints |= int_vars(lab.cond)
            bools |= bool_vars(lab.cond)
    return sorted(ints), sorted(bools)


def _initial_states(P: PCFA, spec, dom: StateDomain):
    ints, bools = _variables(P, spec)
    count = 2 ** len(bools)
    for v in ints:
        a, b = dom.range_of(v)
        count *= b - a + 1
        if count > dom.limit:
            raise ValueError(
                f"initial-state domain exceeds limit ({count} > {dom.limit}); "
                "narrow the ranges or raise the limit"
            )
    int_axes = [range(dom.range_of(v)[0], dom.range_of(v)[1] + 1) for v in ints]
    for ivals in product(*int_axes):
        for bvals in product((False, True), repeat=len(bools)):
            state = dict(zip(ints, ivals))
            state.update(zip(bools, bvals))
            if feval(spec.pre, state):
                yield state


Interval = tuple[Fraction, Fraction]

_ZERO = (Fraction(0), Fraction(0))
_UNKNOWN = (Fraction(0), Fraction(1))


def exact_violation_probability(
    P: PCFA, spec, dom: Optional[StateDomain] = None, step_bound: int = 64
) -> Interval:
    """Interval containing the worst-case violation probability over all
    initial states in the domain that satisfy the precondition."""
    if not P.is_deterministic():
        raise ValueError("oracle expects a deterministic automaton")
    dom = dom or StateDomain()
    neg_post_holds = lambda s: not feval(spec.post, s)

    memo: dict[tuple, Interval] = {}
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 3 * step_bound + 500))

    def value(k: int, loc: int, state: tuple) -> Interval:
        if loc == P.accepting:
            s = dict(state)
            one = Fraction(int(neg_post_holds(s)))
            return (one, one)
        edges = P.out_edges(loc)
        if not edges:
            return _ZERO
        if k == 0:
            return _UNKNOWN
        key = (k, loc, state)
        hit = memo.get(key)
        if hit is not None:
            return hit
        sdict = dict(state)
        by_action: dict = {}
        for lab, tgt in edges:
            by_action.setdefault(action_of(lab), []).append((lab, tgt))
        lo_best, hi_best = _ZERO
        for act in sorted(by_action):
            labs = by_action[act]
            if act[0] == "pb":
                sides = {lab.side: tgt for lab, tgt in labs}
                lo = hi = Fraction(0)
                for side in ("L", "R"):
                    if side in sides:
                        l, h = value(k - 1, sides[side], state)
                        lo += l / 2
                        hi += h / 2
                    # a missing side accepts no trace: contributes exactly 0
                v = (lo, hi)
            else:
                (lab, tgt), = labs
                if isinstance(lab, Assume):
                    v = value(k - 1, tgt, state) if feval(lab.cond, sdict) else _ZERO
                elif isinstance(lab, Assign):
                    new = dict(sdict)
                    if isinstance(lab.expr, IntTerm):
                        new[lab.var] = lab.expr.eval(sdict)
                    else:
                        new[lab.var] = feval(lab.expr, sdict)
                    v = value(k - 1, tgt, tuple(sorted(new.items())))
                else:
                    v = value(k - 1, tgt, state)
            if v[0] > lo_best:
                lo_best = v[0]
            if v[1] > hi_best:
                hi_best = v[1]
        out = (lo_best, hi_best)
        memo[key] = out
        return out

    best = _ZERO
    seen_any = False
    for s0 in _initial_states(P, spec, dom):
        seen_any = True
        lo, hi = value(step_bound, P.initial, tuple(sorted(s0.items())))
        best = (max(best[0], lo), max(best[1], hi))
    if not seen_any:
        return _ZERO
    return best


def enumerate_traces(P: PCFA, max_len: int) -> list[tuple[Label, ...]]:
    return P.enumerate_traces(max_len)

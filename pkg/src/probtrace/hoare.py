"""Floyd-Hoare automata: generalizing single traces into certified languages.

A Floyd-Hoare automaton pairs a plain labelled automaton with a proposition
per location such that every edge (l, sigma, l') is a valid Hoare triple
{lam(l)} sigma {lam(l')}.  Generalization turns one classified trace into
such an automaton in three phases: proposition insertion along the trace,
merging of locations that carry the same proposition, and edge saturation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .cfa import PCFA, Label
from .formula import FALSE, Formula, fand, fnot, simplify
from .semantics import (
    NonViolating,
    Violating,
    classify,
    hoare_valid,
    pre_exists,
)
from .solver import Solver, sequence_interpolants


@dataclass(frozen=True, eq=False)
class FloydHoareAutomaton:
    base: PCFA
    lam: dict  # location -> Formula

    def proposition(self, loc: int) -> Formula:
        return self.lam[loc]

    def renumbered(self) -> "FloydHoareAutomaton":
        order = sorted(self.base.locations)
        remap = {loc: i for i, loc in enumerate(order)}
        return FloydHoareAutomaton(
            PCFA(
                {(remap[s], lab, remap[t]) for s, lab, t in self.base.transitions},
                remap[self.base.initial],
                remap[self.base.accepting],
                locations=set(remap.values()),
            ),
            {remap[l]: f for l, f in self.lam.items()},
        )

    def dump(self) -> str:
        lines = [self.base.dump()]
        for loc in sorted(self.base.locations):
            lines.append(f"lam({loc}) = {self.lam[loc]}")
        return "\n".join(lines)


def check_floyd_hoare(fha: FloydHoareAutomaton, solver: Solver) -> bool:
    """Re-verify the defining invariant on every edge."""
    if set(fha.lam) != set(fha.base.locations):
        return False
    return all(
        hoare_valid(fha.lam[s], lab, fha.lam[t], solver)
        for s, lab, t in fha.base.transitions
    )


def _chain(props: Sequence[Formula], labels: Sequence[Label]) -> FloydHoareAutomaton:
    base = PCFA(
        {(k, lab, k + 1) for k, lab in enumerate(labels)},
        initial=0,
        accepting=len(labels),
    )
    return FloydHoareAutomaton(base, dict(enumerate(props)))


def merge_same_proposition(fha: FloydHoareAutomaton) -> FloydHoareAutomaton:
    """Quotient locations whose propositions are syntactically equal after
    simplification.  Preserves every accepted trace (may add more)."""
    rep: dict[Formula, int] = {}
    remap: dict[int, int] = {}
    for loc in sorted(fha.base.locations):
        f = simplify(fha.lam[loc])
        if f not in rep:
            rep[f] = loc
        remap[loc] = rep[f]
    base = PCFA(
        {(remap[s], lab, remap[t]) for s, lab, t in fha.base.transitions},
        remap[fha.base.initial],
        remap[fha.base.accepting],
        locations=set(remap.values()),
    )
    lam = {rep[f]: f for f in rep}
    return FloydHoareAutomaton(base, lam).renumbered()


def saturate_edges(
    fha: FloydHoareAutomaton, alphabet: Iterable[Label], solver: Solver
) -> FloydHoareAutomaton:
    """Add every edge (l, sigma, l') whose Hoare triple holds.  Idempotent."""
    labels = sorted(set(alphabet) | set(fha.base.alphabet), key=_label_sort)
    trans = set(fha.base.transitions)
    locs = sorted(fha.base.locations)
    for s in locs:
        for lab in labels:
            for t in locs:
                if (s, lab, t) not in trans and hoare_valid(
                    fha.lam[s], lab, fha.lam[t], solver
                ):
                    trans.add((s, lab, t))
    base = PCFA(trans, fha.base.initial, fha.base.accepting, fha.base.locations)
    return FloydHoareAutomaton(base, dict(fha.lam))


def _label_sort(lab: Label):
    from .cfa import label_key

    return label_key(lab)


def generalize_nonviolating(
    trace: Sequence[Label],
    spec,
    alphabet: Iterable[Label],
    solver: Solver,
) -> FloydHoareAutomaton:
    """Generalize a trace that satisfies the contract into an automaton all
    of whose accepted traces satisfy it.

    Head proposition is the precondition; interior propositions come from
    sequence interpolation; the accepting proposition is False when the
    trace's final step is unreachable (infeasible trace), otherwise the
    postcondition.
    """
    if not isinstance(classify(trace, spec, solver), NonViolating):
        raise ValueError("trace does not satisfy the contract")
    labels = list(trace)
    head = simplify(spec.pre)
    if not labels:
        fha = FloydHoareAutomaton(PCFA((), 0, 0), {0: head})
        return saturate_edges(merge_same_proposition(fha), alphabet, solver)
    interiors = sequence_interpolants(solver, spec.pre, labels, fnot(spec.post))
    last = interiors[-1] if interiors else head
    if hoare_valid(last, labels[-1], FALSE, solver):
        acc = FALSE
    else:
        acc = simplify(spec.post)
    props = [head] + interiors + [acc]
    fha = _chain(props, labels)
    return saturate_edges(merge_same_proposition(fha), alphabet, solver)


def generalize_violating(
    trace: Sequence[Label],
    spec,
    alphabet: Iterable[Label],
    solver: Solver,
) -> FloydHoareAutomaton:
    """Generalize a violating trace.  Propositions are backward existential
    preconditions of the negated postcondition, so the head equals the
    trace's violation precondition exactly.  Accepted traces need not all be
    violating; only the per-edge Hoare invariant is promised.
    """
    if not isinstance(classify(trace, spec, solver), Violating):
        raise ValueError("trace does not violate the contract")
    labels = list(trace)
    acc = simplify(fnot(spec.post))
    props = [acc]
    cur = acc
    for lab in reversed(labels):
        cur = simplify(pre_exists(lab, cur))
        props.append(cur)
    props.reverse()
    props[0] = simplify(fand(spec.pre, props[0]))
    fha = _chain(props, labels)
    return saturate_edges(merge_same_proposition(fha), alphabet, solver)

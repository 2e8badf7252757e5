"""Quantitative examination of a violating module.

Given a violating module (a CFMDP over-approximating the violating traces,
already intersected with the program), decide whether its violation mass is
at most the threshold, or extract a counterexample: a set of mutually
compatible violating traces whose shared precondition makes them all fire,
with total weight above the threshold.

The procedure mines traces in order of weight from the sub-CFMDP of
value-optimal actions, classifies each one, and accumulates either a
growing mainstream (compatible violating traces) or a certificate that the
current optimum cannot be realized (fake / incompatible mass); certificates
trigger erasures and a split of the initial-state space, and the loop
continues on the refined module.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Sequence

from .cfa import (
    PCFA,
    Assume,
    Label,
    Pb,
    difference,
    is_empty,
    minimize,
    normalize,
    trace_key,
    trim,
    union,
)
from .formula import Formula, fand, fnot, simplify
from .hoare import FloydHoareAutomaton, generalize_nonviolating
from .markov import analyze_mdp, check_cfmdp, merge_traces
from .semantics import path_condition, pre_exists_trace, weight
from .solver import Solver

Trace = tuple[Label, ...]


# ---------------------------------------------------------------------------
# outcome types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mainstream:
    """Mutually compatible violating traces with their shared precondition."""

    traces: tuple[Trace, ...]
    total_pre: Formula
    total_weight: Fraction


@dataclass(frozen=True)
class Counterexample:
    traces: tuple[Trace, ...]
    error_pre: Formula
    total_vp: Fraction


@dataclass(frozen=True)
class Verified:
    upper_bound: Fraction


@dataclass(frozen=True)
class CounterexampleFound:
    counterexample: Counterexample


@dataclass(frozen=True)
class Certificate:
    """Fake/incompatible mass covering the gap between bound and threshold."""

    fakes: tuple[Trace, ...]
    incompatibles: tuple[Trace, ...]
    mass: Fraction


@dataclass(frozen=True)
class Exhausted:
    reason: str


ExamineOutcome = object  # Verified | CounterexampleFound | Exhausted


# ---------------------------------------------------------------------------
# strongest-evidence enumeration
# ---------------------------------------------------------------------------

def enumerate_by_weight(m: PCFA) -> Iterator[Trace]:
    """Accepted traces in non-increasing weight order; ties broken by length,
    then by the label order.  Best-first search; the stream may be infinite.

    Works for any CFMDP (in particular any CFMC): determinism makes partial
    traces identify unique paths, so the ordering is total.
    """
    check_cfmdp(m)
    counter = itertools.count()
    heap = [(0, 0, (), next(counter), m.initial, ())]
    while heap:
        npb, length, _, _, loc, trace = heapq.heappop(heap)
        if loc == m.accepting:
            yield trace
            continue
        for lab, tgt in m.out_edges(loc):
            ext = trace + (lab,)
            heapq.heappush(
                heap,
                (
                    npb + (1 if isinstance(lab, Pb) else 0),
                    length + 1,
                    trace_key(ext),
                    next(counter),
                    tgt,
                    ext,
                ),
            )


def _weight_batches(stream: Iterator[Trace], budget: int) -> Iterator[list[Trace]]:
    """Group the stream into maximal runs of equal weight; stop after budget
    traces in total (possibly mid-run — the consumer must treat the stream
    as truncated when the budget is hit)."""
    batch: list[Trace] = []
    used = 0
    for tr in stream:
        if batch and weight(tr) != weight(batch[0]):
            yield batch
            batch = []
        batch.append(tr)
        used += 1
        if used >= budget:
            break
    if batch:
        yield batch


def compatible(solver: Solver, total_pre: Formula, pc: Formula) -> bool:
    return solver.is_sat(fand(total_pre, pc))


# ---------------------------------------------------------------------------
# split conditions (materialized form)
# ---------------------------------------------------------------------------

def add_split_condition(a: PCFA, h: Formula, solver: Solver) -> PCFA:
    """Partition the module's initial states on a predicate: a fresh initial
    location with assume(h) / assume(not h) edges into the old one.  If the
    module is already split this way, the existing assumption edges are
    refined in place (each guard g becomes g and h / g and not h) instead of
    stacking another layer."""
    h = simplify(h)
    if not solver.is_sat(h) or not solver.is_sat(fnot(h)):
        raise ValueError("split condition must be neither valid nor unsatisfiable")
    out_labels = a.out_edges(a.initial)
    already_split = bool(out_labels) and all(
        isinstance(lab, Assume) for lab, _ in out_labels
    ) and not any(t == a.initial for _, t in out_labels)
    if already_split:
        trans = set(a.transitions)
        for lab, tgt in out_labels:
            trans.discard((a.initial, lab, tgt))
            for part in (fand(lab.cond, h), fand(lab.cond, fnot(h))):
                part = simplify(part)
                if solver.is_sat(part):
                    trans.add((a.initial, Assume(part), tgt))
        return PCFA(trans, a.initial, a.accepting).renumber()
    fresh = max(a.locations) + 1
    trans = set(a.transitions)
    trans.add((fresh, Assume(h), a.initial))
    trans.add((fresh, Assume(simplify(fnot(h))), a.initial))
    return PCFA(trans, fresh, a.accepting).renumber()


# ---------------------------------------------------------------------------
# the examine loop
# ---------------------------------------------------------------------------

@dataclass
class _Cell:
    """One compartment of the split initial-state space."""

    guard: Formula
    aut: PCFA
    mined: bool = False


def _linear(trace: Sequence[Label]) -> PCFA:
    return PCFA({(i, lab, i + 1) for i, lab in enumerate(trace)}, 0, len(trace))


def _erase_traces(aut: PCFA, traces: Sequence[Trace]) -> PCFA:
    out = aut
    for tr in traces:
        out = difference(out, _linear(tr))
    return out


def _optimal_subcfmdp(aut: PCFA, optimal_actions: dict) -> PCFA:
    keep = set()
    for s, lab, t in aut.transitions:
        acts = optimal_actions.get(s)
        if acts is None:
            continue
        act = lab.pid if isinstance(lab, Pb) else lab
        if act in acts:
            keep.add((s, lab, t))
    return trim(PCFA(keep, aut.initial, aut.accepting))


def _tidy(aut: PCFA) -> PCFA:
    aut = trim(aut)
    if is_empty(aut):
        return aut
    return normalize(minimize(aut))


def examine(
    a: PCFA,
    spec,
    beta: Fraction,
    solver: Solver,
    *,
    alphabet: Optional[Iterable[Label]] = None,
    trace_budget: int = 10_000,
    round_cap: int = 64,
    events: Optional[list] = None,
) -> tuple[ExamineOutcome, PCFA, list[FloydHoareAutomaton]]:
    """Decide the violating module quantitatively.

    Returns (outcome, cover automaton, certified non-violating automata).
    The cover automaton is the union of all surviving compartments with
    guards stripped: erasures only ever remove words that are infeasible
    from the compartment's own initial states, so it still covers every
    feasibly violating trace of the input and can stand in for the module
    in the outer covering check.  The returned Floyd-Hoare automata certify
    the fake traces found along the way; the caller should add them to the
    certified side.
    """
    if events is None:
        events = []
    sigma = frozenset(alphabet) if alphabet is not None else a.alphabet
    cells = [_Cell(simplify(spec.pre), _tidy(a))]
    q_new: list[FloydHoareAutomaton] = []

    def cover() -> PCFA:
        live = [c.aut for c in cells if not is_empty(c.aut)]
        if not live:
            return trim(PCFA((), 0, 1))
        out = live[0]
        for part in live[1:]:
            out = union(out, part)
        return _tidy(out)

    for round_no in range(1, round_cap + 1):
        analyses = [
            None if is_empty(c.aut) else analyze_mdp(c.aut) for c in cells
        ]
        values = [Fraction(0) if r is None else r.bound for r in analyses]
        p = max(values, default=Fraction(0))
        if p <= beta:
            events.append(("verified", p))
            return Verified(p), cover(), q_new

        pick_from = [i for i, c in enumerate(cells) if not c.mined and values[i] > beta]
        if not pick_from:
            pick_from = list(range(len(cells)))
        idx = max(pick_from, key=lambda i: (values[i], -i))
        cell, analysis = cells[idx], analyses[idx]
        events.append(("round", round_no, p, idx, cell.guard))

        sub = _optimal_subcfmdp(cell.aut, analysis.optimal_actions)
        mainstream_traces: list[Trace] = []
        mainstream_pcs: list[Formula] = []
        total_pre = simplify(fand(spec.pre, cell.guard))
        pc_core: Optional[Formula] = None  # conjunction of mainstream pcs
        mainstream_mass = Fraction(0)
        incompat: list[tuple[Trace, Formula]] = []
        fakes: list[Trace] = []
        accum = Fraction(0)
        found: Optional[Counterexample] = None

        stream = enumerate_by_weight(sub)
        for batch in _weight_batches(stream, trace_budget):
            for tr in batch:
                w = weight(tr)
                pc = path_condition(tr, spec)
                guarded = simplify(fand(cell.guard, pc))
                if not solver.is_sat(guarded):
                    if solver.is_sat(pc):
                        # violating outside this compartment only
                        incompat.append((tr, pc))
                        accum += w
                        events.append(("incompatible", tr, pc, accum))
                    else:
                        fakes.append(tr)
                        accum += w
                        events.append(("fake", tr, accum))
                    continue
                if compatible(solver, total_pre, pc) and merge_traces(
                    mainstream_traces + [tr]
                ) is not None:
                    mainstream_traces.append(tr)
                    mainstream_pcs.append(pc)
                    total_pre = simplify(fand(total_pre, pc))
                    pc_core = pc if pc_core is None else simplify(fand(pc_core, pc))
                    mainstream_mass += w
                    events.append(("mainstream", tr, pc, mainstream_mass))
                    if mainstream_mass > beta:
                        found = Counterexample(
                            tuple(mainstream_traces), total_pre, mainstream_mass
                        )
                        break
                else:
                    incompat.append((tr, pc))
                    accum += w
                    events.append(("incompatible", tr, pc, accum))
            if found is not None or accum >= p - beta:
                break

        if found is not None:
            events.append(("counterexample", found))
            return CounterexampleFound(found), cover(), q_new
        if accum < p - beta:
            reason = f"trace budget ({trace_budget}) exhausted in round {round_no}"
            events.append(("exhausted", reason))
            return Exhausted(reason), cover(), q_new

        cert = Certificate(
            tuple(fakes), tuple(tr for tr, _ in incompat), accum
        )
        events.append(("certificate", cert))

        # fake erasure: certify each fake's whole generalization and remove
        # its language from every compartment
        fresh_fhas: list[FloydHoareAutomaton] = []
        for tr in fakes:
            if any(f.base.accepts(tr) for f in q_new + fresh_fhas):
                continue
            fresh_fhas.append(generalize_nonviolating(tr, spec, sigma, solver))
        if fresh_fhas:
            q_new.extend(fresh_fhas)
            for c in cells:
                if is_empty(c.aut):
                    continue
                out = c.aut
                for f in fresh_fhas:
                    out = difference(out, f.base)
                c.aut = _tidy(out)

        # split on the mainstream's shared precondition, erasing each trace
        # only from compartments whose states cannot run it
        incompat_traces = [tr for tr, _ in incompat]
        if mainstream_traces:
            h = simplify(fand(cell.guard, pc_core))
            events.append(("split", pc_core))
            mined_aut = _tidy(_erase_traces(cells[idx].aut, incompat_traces))
            new_cells = [_Cell(h, mined_aut, mined=True)]
            other_guard = simplify(fand(cell.guard, fnot(pc_core)))
            if solver.is_sat(other_guard):
                erasable = [
                    tr
                    for tr, pc in zip(mainstream_traces, mainstream_pcs)
                    if not solver.is_sat(fand(other_guard, pc))
                ]
                other_aut = _tidy(_erase_traces(cells[idx].aut, erasable))
                new_cells.append(_Cell(other_guard, other_aut, mined=False))
            cells[idx : idx + 1] = new_cells
        else:
            cells[idx].aut = _tidy(_erase_traces(cells[idx].aut, incompat_traces))
            cells[idx].mined = True

    reason = f"round cap ({round_cap}) exhausted"
    events.append(("exhausted", reason))
    return Exhausted(reason), cover(), q_new


# ---------------------------------------------------------------------------
# counterexample validation
# ---------------------------------------------------------------------------

def validate_counterexample(
    p: PCFA, spec, beta: Fraction, cex: Counterexample, solver: Solver
) -> tuple[bool, list[str]]:
    """Re-check every defining property of a counterexample; on failure the
    reasons list says which ones broke."""
    reasons: list[str] = []
    if not solver.is_sat(cex.error_pre):
        reasons.append("error precondition unsatisfiable")
    if not solver.entails(cex.error_pre, spec.pre):
        reasons.append("error precondition does not entail the precondition")
    total = sum((weight(tr) for tr in cex.traces), Fraction(0))
    if total != cex.total_vp:
        reasons.append(f"stated probability {cex.total_vp} != recomputed {total}")
    if not cex.total_vp > beta:
        reasons.append(f"total probability {cex.total_vp} not above {beta}")
    if merge_traces(cex.traces) is None:
        reasons.append("trace set is not mergeable into one structure")
    for i, tr in enumerate(cex.traces):
        if not p.accepts(tr):
            reasons.append(f"trace {i} is not a program trace")
        cond = pre_exists_trace(tr, fnot(spec.post))
        if not solver.entails(cex.error_pre, cond):
            reasons.append(f"trace {i} not violating under the error precondition")
    return (not reasons, reasons)

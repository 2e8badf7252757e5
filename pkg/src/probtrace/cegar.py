"""Top-level verification loops and decomposition certificates.

The main loop maintains two tracked objects: a growing list of certified
Floyd-Hoare automata (languages proven to satisfy the contract) and a
violating module (an automaton of candidate violating traces whose
violation mass the examination loop has bounded).  Each iteration either
declares the program covered — yielding a certified upper bound — or picks
the shortest uncovered trace and dispatches on its classification.

The refutational variant never generalizes violating traces: it keeps them
verbatim in a repository, so that a genuinely violated contract is always
eventually refuted, at the price of possible divergence on satisfied ones.

Certificate files (see ``dump_certificate``) bundle the certified automata
with their propositions, the violating module, and the threshold, in a
line-oriented text format:

    beta 1/2

    module A
    initial 0
    accepting 2
    edge 0 1 X := 0
    edge 1 2 sigma
    edge 2 2 sigma \\ {X := X + 1; skip}

    hoare Q1
    initial 0
    accepting 1
    prop 0 true
    prop 1 X = 0
    edge 0 1 X := 0

``sigma`` in an edge's label position stands for every label of the
program's alphabet; ``sigma \\ {...}`` excludes the ``;``-separated labels
listed in the braces.  ``#`` and ``//`` start comments.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .cfa import (
    PCFA,
    difference_all,
    difference_nfa,
    intersect,
    is_empty,
    label_key,
    minimize,
    nfa_is_empty,
    nfa_shortest,
    normalize,
    union,
)
from .evidence import (
    Counterexample,
    CounterexampleFound,
    Verified,
    examine,
    validate_counterexample,
)
from .formula import Formula, fand, simplify
from .hoare import FloydHoareAutomaton, check_floyd_hoare, generalize_nonviolating, generalize_violating
from .lang import ParseError, parse_formula, parse_label
from .markov import mdp_upper_bound, merge_traces
from .semantics import NonViolating, classify, weight
from .solver import Solver, SolverUnknown


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sat:
    upper_bound: Fraction
    iterations: int


@dataclass(frozen=True)
class Unsat:
    counterexample: Counterexample
    iterations: int


@dataclass(frozen=True)
class Inconclusive:
    reason: str
    iterations: int


Verdict = object  # Sat | Unsat | Inconclusive


def _checked(p: PCFA, spec, beta: Fraction, cex: Counterexample, solver: Solver) -> Counterexample:
    ok, reasons = validate_counterexample(p, spec, beta, cex, solver)
    if not ok:
        raise RuntimeError(
            "internal error: counterexample failed validation: " + "; ".join(reasons)
        )
    return cex


# ---------------------------------------------------------------------------
# the main loop
# ---------------------------------------------------------------------------

def verify(
    p: PCFA,
    spec,
    beta: Optional[Fraction] = None,
    solver: Optional[Solver] = None,
    *,
    max_iters: int = 500,
    trace_budget: int = 10_000,
    round_cap: int = 64,
    events: Optional[list] = None,
) -> Verdict:
    """Decide whether the probability of violating the contract is at most
    the threshold: Sat carries a certified upper bound, Unsat a validated
    counterexample, Inconclusive an honest resource/decidability report."""
    solver = solver or Solver()
    beta = spec.beta if beta is None else beta
    if events is None:
        events = []
    sigma = p.alphabet
    qs: list[FloydHoareAutomaton] = []
    a_lang: Optional[PCFA] = None
    last_bound = Fraction(0)
    iters = 0
    try:
        while iters < max_iters:
            bases = [q.base for q in qs]
            if a_lang is not None and not is_empty(a_lang):
                bases.append(a_lang)
            uncovered = difference_nfa(p, bases, sigma)
            if nfa_is_empty(uncovered):
                events.append(("sat", last_bound))
                return Sat(last_bound, iters)
            tau = nfa_shortest(uncovered)
            iters += 1
            events.append(("pick", iters, tau))
            cls = classify(tau, spec, solver)
            if isinstance(cls, NonViolating):
                qs.append(generalize_nonviolating(tau, spec, sigma, solver))
                continue
            w = weight(tau)
            if w > beta:
                cex = Counterexample((tuple(tau),), cls.error_pre, w)
                events.append(("counterexample", cex))
                return Unsat(_checked(p, spec, beta, cex, solver), iters)
            gv = generalize_violating(tau, spec, sigma, solver)
            cand = gv.base if a_lang is None else union(a_lang, gv.base, sigma)
            a_cand = normalize(minimize(intersect(cand, p)))
            outcome, cover_aut, new_q = examine(
                a_cand,
                spec,
                beta,
                solver,
                alphabet=sigma,
                trace_budget=trace_budget,
                round_cap=round_cap,
                events=events,
            )
            qs.extend(new_q)
            if isinstance(outcome, Verified):
                a_lang = cover_aut
                last_bound = outcome.upper_bound
                continue
            if isinstance(outcome, CounterexampleFound):
                cex = outcome.counterexample
                return Unsat(_checked(p, spec, beta, cex, solver), iters)
            return Inconclusive(outcome.reason, iters)
        return Inconclusive(f"iteration cap ({max_iters}) reached", iters)
    except SolverUnknown as exc:
        return Inconclusive(f"solver gave up: {exc}", iters)


# ---------------------------------------------------------------------------
# refutationally complete variant
# ---------------------------------------------------------------------------

def _trie(traces: Sequence[tuple]) -> PCFA:
    """Prefix tree of complete program traces (prefix-free, since the
    accepting location is a sink), with one shared accepting node."""
    acc = 0
    nxt = 2
    children: dict[tuple, int] = {}
    trans = set()
    for tr in traces:
        cur = 1
        for lab in tr[:-1]:
            key = (cur, lab)
            tgt = children.get(key)
            if tgt is None:
                tgt = nxt
                nxt += 1
                children[key] = tgt
                trans.add((cur, lab, tgt))
            cur = tgt
        trans.add((cur, tr[-1], acc))
    return PCFA(trans, 1, acc)


def _greedy_counterexample(
    found: list[tuple[tuple, Formula]], beta: Fraction, solver: Solver
) -> Optional[Counterexample]:
    """Best-effort compatible subset with mass above the threshold: anchor on
    each found trace in turn and greedily add compatible, mergeable traces in
    weight order."""
    order = sorted(found, key=lambda fp: (-weight(fp[0]), len(fp[0])))
    for i, (anchor, anchor_pc) in enumerate(order):
        traces = [anchor]
        pre = anchor_pc
        mass = weight(anchor)
        if mass > beta:
            return Counterexample((tuple(anchor),), pre, mass)
        for j, (tr, pc) in enumerate(order):
            if j == i:
                continue
            joint = simplify(fand(pre, pc))
            if not solver.is_sat(joint):
                continue
            if merge_traces(traces + [tr]) is None:
                continue
            traces.append(tr)
            pre = joint
            mass += weight(tr)
            if mass > beta:
                return Counterexample(tuple(tuple(t) for t in traces), pre, mass)
    return None


def verify_refutational(
    p: PCFA,
    spec,
    beta: Optional[Fraction] = None,
    solver: Optional[Solver] = None,
    *,
    max_iters: int = 500,
    events: Optional[list] = None,
) -> Verdict:
    """Variant that keeps every violating trace verbatim: complete for
    refutation (a violated contract is eventually refuted) but may diverge
    on satisfied ones, reported honestly via the iteration cap."""
    solver = solver or Solver()
    beta = spec.beta if beta is None else beta
    if events is None:
        events = []
    sigma = p.alphabet
    qs: list[FloydHoareAutomaton] = []
    found: list[tuple[tuple, Formula]] = []
    found_mass = Fraction(0)
    iters = 0
    try:
        while iters < max_iters:
            bases = [q.base for q in qs]
            if found:
                bases.append(_trie([t for t, _ in found]))
            residual = difference_all(p, bases, sigma)
            if is_empty(residual):
                bound = found_mass
            else:
                bound, _ = mdp_upper_bound(normalize(minimize(residual)))
                bound += found_mass
            if bound <= beta:
                events.append(("sat", bound))
                return Sat(bound, iters)
            if is_empty(residual):
                return Inconclusive(
                    "all traces classified, but the found violating traces are "
                    "not jointly realizable above the threshold",
                    iters,
                )
            tau = nfa_shortest(difference_nfa(p, bases, sigma))
            iters += 1
            events.append(("pick", iters, tau))
            cls = classify(tau, spec, solver)
            if isinstance(cls, NonViolating):
                qs.append(generalize_nonviolating(tau, spec, sigma, solver))
                continue
            found.append((tuple(tau), cls.error_pre))
            found_mass += weight(tau)
            cex = _greedy_counterexample(found, beta, solver)
            if cex is not None:
                events.append(("counterexample", cex))
                return Unsat(_checked(p, spec, beta, cex, solver), iters)
        return Inconclusive(f"iteration cap ({max_iters}) reached", iters)
    except SolverUnknown as exc:
        return Inconclusive(f"solver gave up: {exc}", iters)


# ---------------------------------------------------------------------------
# decomposition checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Certified:
    upper_bound: Fraction


@dataclass(frozen=True)
class Rejected:
    reason: str


def check_decomposition(
    p: PCFA,
    spec,
    beta: Fraction,
    qs: Sequence[FloydHoareAutomaton],
    a: PCFA,
    solver: Optional[Solver] = None,
):
    """Check a claimed decomposition directly against the proof rule: every
    certified component is a valid Floyd-Hoare automaton for the contract,
    the components and the violating module jointly cover the program, and
    the module's residual violation mass stays within the threshold."""
    solver = solver or Solver()
    try:
        for i, q in enumerate(qs):
            if not check_floyd_hoare(q, solver):
                return Rejected(f"component {i}: an edge is not Hoare-valid")
            head = q.lam[q.base.initial]
            if not solver.entails(spec.pre, head):
                return Rejected(
                    f"component {i}: initial proposition not implied by the precondition"
                )
            accp = q.lam[q.base.accepting]
            if solver.is_sat(accp) and not solver.entails(accp, spec.post):
                return Rejected(
                    f"component {i}: accepting proposition satisfiable "
                    "but not implying the postcondition"
                )
        sigma = frozenset(p.alphabet) | frozenset(a.alphabet)
        bases = [q.base for q in qs]
        if not nfa_is_empty(difference_nfa(p, bases + [a], sigma)):
            return Rejected("program traces escape the certified union")
        residual = difference_all(a, bases, sigma) if bases else a
        core = intersect(residual, p)
        if is_empty(core):
            bound = Fraction(0)
        else:
            bound, _ = mdp_upper_bound(normalize(minimize(core)))
        if bound <= beta:
            return Certified(bound)
        return Rejected(f"violating mass bound {bound} exceeds threshold {beta}")
    except SolverUnknown as exc:
        return Rejected(f"solver gave up: {exc}")


# ---------------------------------------------------------------------------
# certificate files
# ---------------------------------------------------------------------------

def dump_certificate(
    beta: Optional[Fraction],
    a: Optional[PCFA],
    qs: Sequence[FloydHoareAutomaton],
) -> str:
    lines: list[str] = []
    if beta is not None:
        lines.append(f"beta {beta.numerator}/{beta.denominator}")
        lines.append("")
    if a is not None:
        lines.append("module A")
        lines.append(f"initial {a.initial}")
        lines.append(f"accepting {a.accepting}")
        for s, lab, t in sorted(a.transitions, key=lambda e: (e[0], label_key(e[1]), e[2])):
            lines.append(f"edge {s} {t} {lab}")
        lines.append("")
    for i, q in enumerate(qs):
        lines.append(f"hoare Q{i + 1}")
        lines.append(f"initial {q.base.initial}")
        lines.append(f"accepting {q.base.accepting}")
        for loc in sorted(q.lam):
            lines.append(f"prop {loc} {q.lam[loc]}")
        for s, lab, t in sorted(
            q.base.transitions, key=lambda e: (e[0], label_key(e[1]), e[2])
        ):
            lines.append(f"edge {s} {t} {lab}")
        lines.append("")
    return "\n".join(lines)


def _parse_edge_label(text: str, sorts, alphabet) -> list:
    s = text.strip()
    if s == "sigma":
        return sorted(alphabet, key=label_key)
    if s.startswith("sigma"):
        rest = s[len("sigma"):].strip()
        if rest.startswith("\\") :
            rest = rest[1:].strip()
            if not (rest.startswith("{") and rest.endswith("}")):
                raise ParseError(f"malformed label set in {text!r}")
            excluded = {
                parse_label(part, sorts)
                for part in rest[1:-1].split(";")
                if part.strip()
            }
            return sorted(set(alphabet) - excluded, key=label_key)
        raise ParseError(f"cannot parse label {text!r}")
    return [parse_label(s, sorts)]


def load_certificate(
    text: str, program
) -> tuple[Optional[Fraction], Optional[PCFA], list[FloydHoareAutomaton]]:
    """Parse a certificate bundle against a program: the program supplies the
    variable sorts and the alphabet that ``sigma`` edges expand over."""
    from .lang import to_pcfa

    sorts = dict(program.declarations)
    alphabet = to_pcfa(program).alphabet

    beta: Optional[Fraction] = None
    a: Optional[PCFA] = None
    qs: list[FloydHoareAutomaton] = []
    section: Optional[dict] = None
    sections: list[dict] = []

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].split("//", 1)[0].strip()
        if not line:
            continue
        word, _, rest = line.partition(" ")
        rest = rest.strip()
        if word == "beta":
            num, _, den = rest.partition("/")
            beta = Fraction(int(num), int(den) if den else 1)
        elif word in ("module", "hoare"):
            section = {"kind": word, "name": rest, "trans": set(), "props": {},
                       "initial": None, "accepting": None}
            sections.append(section)
        elif section is None:
            raise ParseError(f"certificate line outside any section: {line!r}")
        elif word == "initial":
            section["initial"] = int(rest)
        elif word == "accepting":
            section["accepting"] = int(rest)
        elif word == "prop":
            loc, _, f = rest.partition(" ")
            section["props"][int(loc)] = parse_formula(f, sorts)
        elif word == "edge":
            src, _, rest2 = rest.partition(" ")
            dst, _, lab_text = rest2.partition(" ")
            for lab in _parse_edge_label(lab_text, sorts, alphabet):
                section["trans"].add((int(src), lab, int(dst)))
        else:
            raise ParseError(f"unknown certificate directive {word!r}")

    for sec in sections:
        if sec["initial"] is None or sec["accepting"] is None:
            raise ParseError(f"section {sec['name']!r} lacks initial/accepting")
        base = PCFA(sec["trans"], sec["initial"], sec["accepting"])
        if sec["kind"] == "module":
            if a is not None:
                raise ParseError("multiple module sections")
            a = base
        else:
            lam = {loc: sec["props"].get(loc) for loc in base.locations}
            missing = [loc for loc, f in lam.items() if f is None]
            if missing:
                raise ParseError(
                    f"section {sec['name']!r} lacks propositions for {missing}"
                )
            qs.append(FloydHoareAutomaton(base, lam))
    return beta, a, qs

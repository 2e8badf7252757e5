"""Control-flow automata over program labels, and their boolean algebra.

The central value type is :class:`PCFA`: a finite automaton with a single
initial and a single accepting location, labelled by program labels
(assignments, assumptions, skip, tagged probabilistic branches, tagged
nondeterministic branches).  Program trace languages are prefix-free, which
is what makes the single-accepting shape closed under the operations here;
boolean combinations are computed on an internal multi-accepting
representation and coerced back at the end.

Also here: the normalization procedure that forces paired probabilistic
branches to target distinct locations (needed by the strategy
constructions), and the fixed total order on labels that makes every
enumeration in the package reproducible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .formula import Formula, IntTerm, _key as formula_key


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

class Label:
    __slots__ = ()


@dataclass(frozen=True)
class Assign(Label):
    var: str
    expr: Union[IntTerm, Formula]  # Formula when the variable is boolean

    def __str__(self) -> str:
        return f"{self.var} := {self.expr}"


@dataclass(frozen=True)
class Assume(Label):
    cond: Formula

    def __str__(self) -> str:
        return f"assume {self.cond}"


@dataclass(frozen=True)
class SkipL(Label):
    def __str__(self) -> str:
        return "skip"


SKIP = SkipL()


@dataclass(frozen=True)
class Pb(Label):
    pid: int
    side: str  # "L" or "R"

    def __str__(self) -> str:
        return f"pb({self.pid},{self.side})"


@dataclass(frozen=True)
class Nd(Label):
    tag: int

    def __str__(self) -> str:
        return f"nd({self.tag})"


def label_key(lab: Label):
    """Fixed total order: Assign < Assume < Skip < Pb < Nd, then operands."""
    if isinstance(lab, Assign):
        if isinstance(lab.expr, IntTerm):
            ek = (0, lab.expr.coeffs, lab.expr.const)
        else:
            ek = (1, formula_key(lab.expr))
        return (0, lab.var, ek)
    if isinstance(lab, Assume):
        return (1, formula_key(lab.cond))
    if isinstance(lab, SkipL):
        return (2,)
    if isinstance(lab, Pb):
        return (3, lab.pid, 0 if lab.side == "L" else 1)
    if isinstance(lab, Nd):
        return (4, lab.tag)
    raise TypeError(f"not a label: {lab!r}")


def trace_key(trace: Sequence[Label]):
    return tuple(label_key(l) for l in trace)


def is_probabilistic(lab: Label) -> bool:
    return isinstance(lab, Pb)


def action_of(lab: Label):
    """The CFMDP action a label belongs to: both sides of a coin share one."""
    if isinstance(lab, Pb):
        return ("pb", lab.pid)
    return ("lab", label_key(lab))


# ---------------------------------------------------------------------------
# the automaton
# ---------------------------------------------------------------------------

Transition = tuple[int, Label, int]


class PCFA:
    """Single-initial / single-accepting automaton over labels.

    Treated as immutable; all operations return fresh values.
    """

    def __init__(
        self,
        transitions: Iterable[Transition],
        initial: int,
        accepting: int,
        locations: Optional[Iterable[int]] = None,
    ):
        self.transitions = frozenset(transitions)
        self.initial = initial
        self.accepting = accepting
        locs = {initial, accepting}
        for s, _, t in self.transitions:
            locs.add(s)
            locs.add(t)
        if locations is not None:
            locs |= set(locations)
        self.locations = frozenset(locs)
        self._out: dict[int, list[tuple[Label, int]]] = {l: [] for l in self.locations}
        for s, lab, t in sorted(self.transitions, key=lambda e: (e[0], label_key(e[1]), e[2])):
            self._out[s].append((lab, t))

    # -- basic views --------------------------------------------------------

    def out_edges(self, loc: int) -> list[tuple[Label, int]]:
        return self._out.get(loc, [])

    @property
    def alphabet(self) -> frozenset[Label]:
        return frozenset(lab for _, lab, _ in self.transitions)

    def successors(self, loc: int, lab: Label) -> list[int]:
        return [t for l, t in self.out_edges(loc) if l == lab]

    def is_deterministic(self) -> bool:
        for loc in self.locations:
            seen = set()
            for lab, _ in self.out_edges(loc):
                k = label_key(lab)
                if k in seen:
                    return False
                seen.add(k)
        return True

    def is_cfmdp(self) -> bool:
        return self.is_deterministic() and not self.out_edges(self.accepting)

    def is_cfmc(self) -> bool:
        if not self.is_cfmdp():
            return False
        for loc in self.locations:
            if len({action_of(lab) for lab, _ in self.out_edges(loc)}) > 1:
                return False
        return True

    def accepts(self, trace: Sequence[Label]) -> bool:
        states = {self.initial}
        for lab in trace:
            states = {t for s in states for t in self.successors(s, lab)}
            if not states:
                return False
        return self.accepting in states

    def enumerate_traces(self, max_len: int) -> list[tuple[Label, ...]]:
        """All accepted traces of length <= max_len, in (length, label-order)."""
        out: list[tuple[Label, ...]] = []
        frontier: list[tuple[int, tuple[Label, ...]]] = [(self.initial, ())]
        for _ in range(max_len + 1):
            nxt: list[tuple[int, tuple[Label, ...]]] = []
            for state, trace in frontier:
                if state == self.accepting:
                    out.append(trace)
                for lab, t in self.out_edges(state):
                    if len(trace) < max_len:
                        nxt.append((t, trace + (lab,)))
            frontier = nxt
            if not frontier:
                break
        return sorted(out, key=lambda tr: (len(tr), trace_key(tr)))

    def renumber(self) -> "PCFA":
        order = sorted(self.locations)
        remap = {loc: i for i, loc in enumerate(order)}
        return PCFA(
            {(remap[s], lab, remap[t]) for s, lab, t in self.transitions},
            remap[self.initial],
            remap[self.accepting],
            locations={remap[l] for l in self.locations},
        )

    def dump(self) -> str:
        lines = [f"init: {self.initial}", f"accept: {self.accepting}"]
        for s, lab, t in sorted(
            self.transitions, key=lambda e: (e[0], label_key(e[1]), e[2])
        ):
            lines.append(f"{s} -[{lab}]-> {t}")
        return "\n".join(lines)

    def __repr__(self) -> str:
        return (
            f"PCFA(|L|={len(self.locations)}, |T|={len(self.transitions)}, "
            f"init={self.initial}, acc={self.accepting})"
        )


def empty_pcfa(alphabet: Iterable[Label] = ()) -> PCFA:
    """The empty-language automaton (accepting unreachable)."""
    return PCFA((), 0, 1)


# ---------------------------------------------------------------------------
# reachability / trimming
# ---------------------------------------------------------------------------

def _forward_reach(a: PCFA) -> set[int]:
    seen = {a.initial}
    todo = [a.initial]
    while todo:
        s = todo.pop()
        for _, t in a.out_edges(s):
            if t not in seen:
                seen.add(t)
                todo.append(t)
    return seen


def _backward_reach(a: PCFA, targets: set[int]) -> set[int]:
    rev: dict[int, set[int]] = {}
    for s, _, t in a.transitions:
        rev.setdefault(t, set()).add(s)
    seen = set(targets)
    todo = list(targets)
    while todo:
        s = todo.pop()
        for p in rev.get(s, ()):
            if p not in seen:
                seen.add(p)
                todo.append(p)
    return seen


def trim(a: PCFA) -> PCFA:
    """Keep only locations on some initial-to-accepting path."""
    live = _forward_reach(a) & _backward_reach(a, {a.accepting})
    if a.initial not in live or a.accepting not in live:
        return empty_pcfa()
    return PCFA(
        {(s, lab, t) for s, lab, t in a.transitions if s in live and t in live},
        a.initial,
        a.accepting,
        locations=live,
    )


def is_empty(a: PCFA) -> bool:
    return a.accepting not in _forward_reach(a)


def shortest_accepted_trace(a: PCFA) -> Optional[tuple[Label, ...]]:
    """Minimal-length accepted trace; ties broken by the label order."""
    if is_empty(a):
        return None
    # BFS where each frontier state remembers the best (lexicographically
    # least) trace reaching it at the current depth.
    best: dict[int, tuple] = {a.initial: ()}
    while True:
        if a.accepting in best:
            return best[a.accepting]
        nxt: dict[int, tuple] = {}
        for s, tr in best.items():
            for lab, t in a.out_edges(s):
                cand = tr + (lab,)
                if t not in nxt or trace_key(cand) < trace_key(nxt[t]):
                    nxt[t] = cand
        best = nxt
        if not best:
            return None


# ---------------------------------------------------------------------------
# internal multi-accepting layer
# ---------------------------------------------------------------------------

@dataclass
class _NFA:
    transitions: set[tuple[int, Label, int]]
    initials: set[int]
    accepting: set[int]
    states: set[int]


def _nfa_of(a: PCFA) -> _NFA:
    return _NFA(
        set(a.transitions), {a.initial}, {a.accepting}, set(a.locations)
    )


def _nfa_union(parts: list[_NFA]) -> _NFA:
    trans: set[tuple[int, Label, int]] = set()
    inits: set[int] = set()
    accs: set[int] = set()
    states: set[int] = set()
    base = 0
    for n in parts:
        remap = {s: base + i for i, s in enumerate(sorted(n.states))}
        trans |= {(remap[s], lab, remap[t]) for s, lab, t in n.transitions}
        inits |= {remap[s] for s in n.initials}
        accs |= {remap[s] for s in n.accepting}
        states |= set(remap.values())
        base += len(n.states)
    return _NFA(trans, inits, accs, states)


def _nfa_determinize(n: _NFA) -> _NFA:
    """Subset construction; result states are renumbered ints."""
    start = frozenset(n.initials)
    index = {start: 0}
    todo = [start]
    out: dict[int, dict[Label, int]] = {}
    adj: dict[int, dict[Label, set[int]]] = {}
    for s, lab, t in n.transitions:
        adj.setdefault(s, {}).setdefault(lab, set()).add(t)
    while todo:
        cur = todo.pop()
        ci = index[cur]
        table: dict[Label, set[int]] = {}
        for s in cur:
            for lab, ts in adj.get(s, {}).items():
                table.setdefault(lab, set()).update(ts)
        row = {}
        for lab, ts in table.items():
            key = frozenset(ts)
            if key not in index:
                index[key] = len(index)
                todo.append(key)
            row[lab] = index[key]
        out[ci] = row
    trans = {(s, lab, t) for s, row in out.items() for lab, t in row.items()}
    accs = {i for subset, i in index.items() if subset & n.accepting}
    return _NFA(trans, {0}, accs, set(index.values()))


def _nfa_product(a: _NFA, b: _NFA, accept_pair) -> _NFA:
    """Synchronous product of two deterministic _NFAs (b complete-ized by the
    caller when needed); accept_pair decides acceptance from memberships."""
    a_adj: dict[int, dict[Label, int]] = {}
    for s, lab, t in a.transitions:
        a_adj.setdefault(s, {})[lab] = t
    b_adj: dict[int, dict[Label, int]] = {}
    for s, lab, t in b.transitions:
        b_adj.setdefault(s, {})[lab] = t
    ai = next(iter(a.initials))
    bi = next(iter(b.initials))
    index = {(ai, bi): 0}
    todo = [(ai, bi)]
    trans: set[tuple[int, Label, int]] = set()
    accs: set[int] = set()
    while todo:
        pair = todo.pop()
        pa, pb = pair
        if accept_pair(pa in a.accepting, pb in b.accepting):
            accs.add(index[pair])
        for lab, ta in a_adj.get(pa, {}).items():
            tb = b_adj.get(pb, {}).get(lab)
            if tb is None:
                continue
            npair = (ta, tb)
            if npair not in index:
                index[npair] = len(index)
                todo.append(npair)
            trans.add((index[pair], lab, index[npair]))
    return _NFA(trans, {0}, accs, set(index.values()))


def _nfa_complete(n: _NFA, alphabet: frozenset[Label]) -> _NFA:
    """Add a dead sink so every state has a transition for every label."""
    sink = max(n.states, default=-1) + 1
    adj: dict[int, set[Label]] = {}
    for s, lab, _ in n.transitions:
        adj.setdefault(s, set()).add(lab)
    trans = set(n.transitions)
    states = set(n.states)
    used_sink = False
    for s in list(states):
        for lab in alphabet:
            if lab not in adj.get(s, set()):
                trans.add((s, lab, sink))
                used_sink = True
    if used_sink:
        states.add(sink)
        for lab in alphabet:
            trans.add((sink, lab, sink))
    return _NFA(trans, set(n.initials), set(n.accepting), states)


def _nfa_trim(n: _NFA) -> _NFA:
    adj: dict[int, list[int]] = {}
    radj: dict[int, list[int]] = {}
    for s, _, t in n.transitions:
        adj.setdefault(s, []).append(t)
        radj.setdefault(t, []).append(s)

    def reach(starts: set[int], table: dict[int, list[int]]) -> set[int]:
        seen = set(starts)
        todo = list(starts)
        while todo:
            s = todo.pop()
            for t in table.get(s, ()):
                if t not in seen:
                    seen.add(t)
                    todo.append(t)
        return seen

    live = reach(set(n.initials), adj) & reach(set(n.accepting), radj)
    return _NFA(
        {(s, lab, t) for s, lab, t in n.transitions if s in live and t in live},
        n.initials & live,
        n.accepting & live,
        live or {0},
    )


class NotRepresentable(Exception):
    """A language that the single-accepting shape cannot carry (ε plus more)."""


def _to_pcfa(n: _NFA) -> PCFA:
    """Coerce a trimmed multi-accepting automaton to the single-accepting
    shape.  Exact when accepted words are prefix-free (accepting states are
    dead ends after trimming) — the case for program trace languages; general
    ε-free languages are handled with a fresh final (may lose determinism,
    fine for membership/emptiness uses)."""
    n = _nfa_trim(n)
    if not n.accepting or not n.initials:
        return empty_pcfa()
    has_out = {s for s, _, _ in n.transitions}
    eps = bool(n.initials & n.accepting)
    if eps and (n.transitions or len(n.accepting - n.initials) > 0):
        # ε together with other words cannot be expressed with one
        # accepting location that equals the initial one only when the
        # language is exactly {ε}.
        if any(s in has_out for s in n.initials):
            raise NotRepresentable("language contains ε and longer words")
    # single initial?
    inits = sorted(n.initials)
    trans = set(n.transitions)
    states = set(n.states)
    if len(inits) > 1:
        fresh = max(states) + 1
        for s, lab, t in list(trans):
            if s in n.initials:
                trans.add((fresh, lab, t))
        states.add(fresh)
        init = fresh
        if n.initials & n.accepting:
            n.accepting.add(fresh)
    else:
        init = inits[0]
    accs = set(n.accepting)
    if init in accs and not trans:
        return PCFA((), init, init, locations={init})
    if all(s not in has_out for s in accs):
        # merge accepting dead-ends (exact, determinism-preserving)
        target = min(accs)
        remap = {s: (target if s in accs else s) for s in states}
        out = {(remap[s], lab, remap[t]) for s, lab, t in trans}
        return PCFA(out, remap[init], target).renumber()
    # fresh final with duplicated in-edges
    final = max(states) + 1
    extra = {(s, lab, final) for s, lab, t in trans if t in accs}
    return PCFA(trans | extra, init, final).renumber()


# ---------------------------------------------------------------------------
# the public boolean algebra
# ---------------------------------------------------------------------------

def determinize(a: PCFA) -> PCFA:
    if a.is_deterministic():
        return trim(a)
    return _to_pcfa(_nfa_determinize(_nfa_of(trim(a))))


def intersect(a: PCFA, b: PCFA) -> PCFA:
    da = _nfa_determinize(_nfa_of(a))
    db = _nfa_determinize(_nfa_of(b))
    return _to_pcfa(_nfa_product(da, db, lambda x, y: x and y))


def union(a: PCFA, b: PCFA, alphabet: Iterable[Label] = ()) -> PCFA:
    return _to_pcfa(
        _nfa_determinize(_nfa_union([_nfa_of(a), _nfa_of(b)]))
    )


def difference(a: PCFA, b: PCFA, alphabet: Iterable[Label] = ()) -> PCFA:
    return _to_pcfa(difference_nfa(a, [b], alphabet))


def difference_all(a: PCFA, bs: list["PCFA"], alphabet: Iterable[Label] = ()) -> PCFA:
    """L(a) minus the union of the bs."""
    return _to_pcfa(difference_nfa(a, bs, alphabet))


def difference_nfa(a: PCFA, bs: list[PCFA], alphabet: Iterable[Label] = ()) -> _NFA:
    """L(a) minus the union of the bs, as a deterministic internal value."""
    sigma = frozenset(alphabet) | a.alphabet
    for b in bs:
        sigma |= b.alphabet
    da = _nfa_determinize(_nfa_of(a))
    db = _nfa_determinize(_nfa_union([_nfa_of(b) for b in bs])) if bs else _NFA(set(), {0}, set(), {0})
    db = _nfa_complete(db, sigma)
    return _nfa_product(da, db, lambda x, y: x and not y)


def nfa_is_empty(n: _NFA) -> bool:
    n = _nfa_trim(n)
    return not n.accepting


def nfa_shortest(n: _NFA) -> Optional[tuple[Label, ...]]:
    """Shortest accepted word of an internal automaton, same tie-break as
    shortest_accepted_trace."""
    best: dict[int, tuple] = {s: () for s in n.initials}
    adj: dict[int, list[tuple[Label, int]]] = {}
    for s, lab, t in n.transitions:
        adj.setdefault(s, []).append((lab, t))
    for s in adj:
        adj[s].sort(key=lambda e: (label_key(e[0]), e[1]))
    while best:
        hits = [s for s in best if s in n.accepting]
        if hits:
            return min((best[s] for s in hits), key=trace_key)
        nxt: dict[int, tuple] = {}
        for s, tr in best.items():
            for lab, t in adj.get(s, ()):
                cand = tr + (lab,)
                if t not in nxt or trace_key(cand) < trace_key(nxt[t]):
                    nxt[t] = cand
        best = nxt
    return None


def minimize(a: PCFA) -> PCFA:
    """Language-preserving state minimization (Moore refinement on the
    determinized, trimmed automaton)."""
    a = determinize(a)
    if is_empty(a):
        return empty_pcfa()
    sigma = sorted(a.alphabet, key=label_key)
    states = sorted(a.locations)
    # class 0: non-accepting, class 1: accepting; dead = implicit class -1
    cls = {s: (1 if s == a.accepting else 0) for s in states}
    adj: dict[int, dict[Label, int]] = {s: {} for s in states}
    for s, lab, t in a.transitions:
        adj[s][lab] = t
    while True:
        sig = {}
        for s in states:
            sig[s] = (
                cls[s],
                tuple(cls.get(adj[s].get(lab), -1) if adj[s].get(lab) is not None else -1 for lab in sigma),
            )
        mapping: dict[tuple, int] = {}
        new_cls = {}
        for s in states:
            if sig[s] not in mapping:
                mapping[sig[s]] = len(mapping)
            new_cls[s] = mapping[sig[s]]
        if new_cls == cls:
            break
        cls = new_cls
    trans = {(cls[s], lab, cls[t]) for s, lab, t in a.transitions}
    out = PCFA(trans, cls[a.initial], cls[a.accepting])
    return trim(out).renumber()


def language_equal_bounded(a: PCFA, b: PCFA, depth: int) -> bool:
    return a.enumerate_traces(depth) == b.enumerate_traces(depth)


# ---------------------------------------------------------------------------
# normalization (distinct targets for paired probabilistic branches)
# ---------------------------------------------------------------------------

def _pb_pairs(a: PCFA):
    """(loc, pid, L-target, R-target) for every paired coin at a location."""
    out = []
    for loc in sorted(a.locations):
        coins: dict[int, dict[str, int]] = {}
        for lab, t in a.out_edges(loc):
            if isinstance(lab, Pb):
                coins.setdefault(lab.pid, {})[lab.side] = t
        for pid in sorted(coins):
            sides = coins[pid]
            if "L" in sides and "R" in sides:
                out.append((loc, pid, sides["L"], sides["R"]))
    return out


def is_normalized(a: PCFA) -> bool:
    return all(lt != rt for _, _, lt, rt in _pb_pairs(a))


def normalize(a: PCFA) -> PCFA:
    """Appendix procedure: first rewrite self-loop coin pairs (case 1), then
    duplicate shared non-self targets (case 2) until none remain."""
    if not a.is_cfmdp():
        raise ValueError("normalize expects a CFMDP")
    trans = set(a.transitions)
    next_loc = max(a.locations, default=0) + 1

    def out_of(loc: int) -> list[tuple[Label, int]]:
        return [(lab, t) for s, lab, t in trans if s == loc]

    # case 1: both branches loop back to their origin
    while True:
        hit = None
        for loc, pid, lt, rt in _pb_pairs(PCFA(trans, a.initial, a.accepting)):
            if lt == rt == loc:
                hit = (loc, pid)
                break
        if hit is None:
            break
        loc, pid = hit
        l1, l2 = next_loc, next_loc + 1
        next_loc += 2
        pl, pr = Pb(pid, "L"), Pb(pid, "R")
        trans.discard((loc, pl, loc))
        trans.discard((loc, pr, loc))
        others = [(lab, t) for lab, t in out_of(loc)]
        trans |= {
            (loc, pl, l1),
            (loc, pr, l2),
            (l1, pr, l2),
            (l1, pl, loc),
            (l2, pr, loc),
            (l2, pl, l1),
        }
        for lab, t in others:
            trans.add((l1, lab, t))
            trans.add((l2, lab, t))

    # case 2: both branches reach the same non-origin location
    guard = 0
    while True:
        guard += 1
        if guard > 10_000:
            raise RuntimeError("normalization did not converge")
        cur = PCFA(trans, a.initial, a.accepting)
        hit = None
        for loc, pid, lt, rt in _pb_pairs(cur):
            if lt == rt and lt != loc:
                hit = (loc, pid, lt)
                break
        if hit is None:
            break
        loc, pid, tgt = hit
        if tgt == a.accepting:
            raise ValueError(
                "cannot normalize a coin pair that enters the accepting "
                "location directly (not produced by program automata)"
            )
        dup = next_loc
        next_loc += 1
        trans.discard((loc, Pb(pid, "R"), tgt))
        trans.add((loc, Pb(pid, "R"), dup))
        for lab, t in cur.out_edges(tgt):
            trans.add((dup, lab, t))

    out = PCFA(trans, a.initial, a.accepting)
    return trim(out).renumber()

"""Strategies over control-flow MDPs, exact max-reachability, trace merging.

A CFMDP is a deterministic PCFA with no edges out of the accepting location;
its actions are coin identifiers (owning both branch edges) plus the
non-random labels.  A strategy resolves, per location and memory state, which
action to play; applying it yields a CFMC whose language refines the CFMDP's.

The upper-bound computation casts the CFMDP to a plain MDP — coins become
half/half distributions, a coin with a missing partner branch loses half its
mass to a dead sink — and runs exact policy iteration over rationals, so
results like 1/2 or 7/16 come out as the precise dyadic they are.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .cfa import (
    PCFA,
    Label,
    Pb,
    difference_nfa,
    is_normalized,
    label_key,
    nfa_is_empty,
    trim,
)

Action = Union[int, Label]  # coin identifier, or a non-random label


def _action_key(act: Action):
    if isinstance(act, int):
        return (1, act)
    return (0, label_key(act))


def actions_at(a: PCFA, loc: int) -> dict:
    """Available actions at a location: action -> {side: target} for coins,
    action -> target for plain labels."""
    coins: dict[int, dict[str, int]] = {}
    plain: dict[Label, int] = {}
    for lab, tgt in a.out_edges(loc):
        if isinstance(lab, Pb):
            coins.setdefault(lab.pid, {})[lab.side] = tgt
        else:
            plain[lab] = tgt
    out: dict[Action, object] = {}
    out.update(coins)
    out.update(plain)
    return out


def check_cfmdp(a: PCFA) -> PCFA:
    if not a.is_cfmdp():
        raise ValueError("expected a CFMDP (deterministic, accepting is a sink)")
    return a


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------

@dataclass
class Strategy:
    """Finite-memory strategy: partial map (location, memory) -> (action, memory)."""

    delta: dict  # (loc, q) -> (Action, q')
    q0: object

    def states(self) -> set:
        qs = {self.q0}
        for (_, q), (_, q2) in self.delta.items():
            qs.add(q)
            qs.add(q2)
        return qs


def memoryless(policy: dict) -> Strategy:
    """Lift a location -> action map to a single-memory-state strategy."""
    return Strategy({(loc, 0): (act, 0) for loc, act in policy.items()}, 0)


def apply_strategy(a: PCFA, psi: Strategy) -> PCFA:
    """Product of a CFMDP with a strategy, with a fresh accepting location.

    Paired coin edges survive together only when both targets are live; a
    branch whose partner is missing or dead is kept alone (the run then
    carries the stuck partner's mass away).  A pair's target counts as live
    when the strategy continues there or it is the CFMDP's accepting
    location — acceptance ends the play, so no strategy entry can be
    demanded for it.
    """
    check_cfmdp(a)
    if a.initial == a.accepting:
        raise ValueError("cannot apply a strategy to an automaton accepting ε")

    def live(loc: int, q) -> bool:
        return loc == a.accepting or (loc, q) in psi.delta

    index: dict = {}
    fresh = [0]

    def state_id(loc: int, q) -> int:
        # T transform: every entry into the old accepting location lands in
        # one shared new accepting location
        key = "acc" if loc == a.accepting else (loc, q)
        if key not in index:
            index[key] = fresh[0]
            fresh[0] += 1
        return index[key]

    init = state_id(a.initial, psi.q0)
    acc = state_id(a.accepting, None)
    trans: set[tuple[int, Label, int]] = set()
    todo = [(a.initial, psi.q0)]
    seen = {(a.initial, psi.q0)}
    while todo:
        loc, q = todo.pop()
        entry = psi.delta.get((loc, q))
        if entry is None:
            continue
        act, q2 = entry
        here = actions_at(a, loc)
        if isinstance(act, int):
            sides = here.get(act)
            if not isinstance(sides, dict):
                raise ValueError(f"strategy plays coin {act} not present at {loc}")
            lt, rt = sides.get("L"), sides.get("R")
            both = (
                lt is not None and rt is not None
                and live(lt, q2) and live(rt, q2)
            )
            for side, tgt in (("L", lt), ("R", rt)):
                if tgt is None:
                    continue
                partner = rt if side == "L" else lt
                if both or partner is None or not live(partner, q2):
                    trans.add((state_id(loc, q), Pb(act, side), state_id(tgt, q2)))
                    if tgt != a.accepting and (tgt, q2) not in seen:
                        seen.add((tgt, q2))
                        todo.append((tgt, q2))
        else:
            tgt = here.get(act)
            if tgt is None or isinstance(tgt, dict):
                raise ValueError(f"strategy plays label {act} not present at {loc}")
            trans.add((state_id(loc, q), act, state_id(tgt, q2)))
            if tgt != a.accepting and (tgt, q2) not in seen:
                seen.add((tgt, q2))
                todo.append((tgt, q2))

    out = trim(PCFA(trans, init, acc))
    assert out.is_cfmc(), "strategy application must yield a CFMC"
    return out


# ---------------------------------------------------------------------------
# a strategy carving a sub-CFMC out of a normalized CFMDP
# ---------------------------------------------------------------------------

_BOT = None  # dummy symbol outside both location sets


def strategy_for_sublanguage(a: PCFA, m: PCFA) -> Strategy:
    """Build a strategy on `a` whose application accepts exactly L(m).

    Memory states are m's locations plus resolver states ("dual", T, l2, l3):
    after playing coin i, the strategy cannot know which branch the coin
    took, so the resolver compares the actual location against T — the
    target a's L-branch had — and continues with l2 on the L side, l3 on
    the R side.  A side m does not contain stores ⊥ there and goes dead.
    Normalization of `a` (paired branches reach distinct locations) is what
    makes the comparison against T unambiguous.
    """
    check_cfmdp(a)
    if not m.is_cfmc():
        raise ValueError("the sublanguage argument must be a CFMC")
    if not is_normalized(a):
        raise ValueError("strategy construction needs a normalized CFMDP")
    if not nfa_is_empty(difference_nfa(m, [a])):
        raise ValueError("the CFMC's language is not a sublanguage")

    def m_step(loc_m: int):
        """m's unique action at loc_m: (kind, payload)."""
        acts = actions_at(m, loc_m)
        if not acts:
            return None
        (act, payload), = acts.items()
        return act, payload

    def delta_minus(loc_a: int, loc_m: int):
        step = m_step(loc_m)
        if step is None:
            return None
        act, payload = step
        if not isinstance(act, int):
            return (act, payload)  # (label, next m-location)
        sides = payload  # {side: m-target}
        a_sides = actions_at(a, loc_a).get(act)
        l_target = a_sides.get("L") if isinstance(a_sides, dict) else None
        t = l_target if l_target is not None else _BOT
        l2 = sides.get("L", _BOT)
        l3 = sides.get("R", _BOT)
        return (act, ("dual", t, l2, l3))

    def resolve(loc_a: int, q):
        """The m-location a memory state stands for at an actual a-location."""
        if isinstance(q, tuple) and q and q[0] == "dual":
            _, t, l2, l3 = q
            if loc_a == t:
                return l2  # may be ⊥: this side is not in m
            return l3
        return q

    delta: dict = {}
    q0 = m.initial
    todo = [(a.initial, q0)]
    seen = {(a.initial, q0)}
    while todo:
        loc_a, q = todo.pop()
        loc_m = resolve(loc_a, q)
        if loc_m is _BOT or loc_a == a.accepting:
            continue
        entry = delta_minus(loc_a, loc_m)
        if entry is None:
            continue
        act, q2 = entry
        delta[(loc_a, q)] = (act, q2)
        here = actions_at(a, loc_a)
        nexts: list[int] = []
        if isinstance(act, int):
            sides = here.get(act)
            if isinstance(sides, dict):
                nexts = [t for t in sides.values()]
        else:
            tgt = here.get(act)
            if tgt is not None and not isinstance(tgt, dict):
                nexts = [tgt]
        for t in nexts:
            if (t, q2) not in seen:
                seen.add((t, q2))
                todo.append((t, q2))
    return Strategy(delta, q0)


# ---------------------------------------------------------------------------
# exact maximum reachability
# ---------------------------------------------------------------------------

@dataclass
class MdpAnalysis:
    bound: Fraction
    values: dict  # location -> Fraction
    policy: dict  # location -> chosen Action
    optimal_actions: dict  # location -> list of value-maximal Actions


def _policy_value(a: PCFA, policy: dict) -> dict:
    """Exact value of a fixed policy: probability of reaching the accepting
    location.  States that cannot reach it under the policy get 0, which
    pins down the unique (least) solution of the linear system."""
    succ: dict[int, list[tuple[Fraction, int]]] = {}
    for loc, act in policy.items():
        here = actions_at(a, loc)
        if isinstance(act, int):
            sides = here[act]
            half = Fraction(1, 2)
            succ[loc] = [(half, t) for t in sides.values()]  # missing side: mass lost
        else:
            succ[loc] = [(Fraction(1), here[act])]

    reach = {a.accepting}
    changed = True
    while changed:
        changed = False
        for loc, outs in succ.items():
            if loc not in reach and any(t in reach for _, t in outs):
                reach.add(loc)
                changed = True

    values = {loc: Fraction(0) for loc in a.locations}
    values[a.accepting] = Fraction(1)
    unknowns = sorted(reach - {a.accepting})
    if not unknowns:
        return values
    idx = {loc: i for i, loc in enumerate(unknowns)}
    n = len(unknowns)
    mat = [[Fraction(0)] * (n + 1) for _ in range(n)]
    for loc in unknowns:
        i = idx[loc]
        mat[i][i] = Fraction(1)
        for p, t in succ[loc]:
            if t == a.accepting:
                mat[i][n] += p
            elif t in idx:
                mat[i][idx[t]] -= p
            # targets outside `reach` hold value 0
    # gaussian elimination with partial (first-nonzero) pivoting
    row = 0
    for col in range(n):
        piv = next((r for r in range(row, n) if mat[r][col] != 0), None)
        if piv is None:
            continue
        mat[row], mat[piv] = mat[piv], mat[row]
        pv = mat[row][col]
        mat[row] = [x / pv for x in mat[row]]
        for r in range(n):
            if r != row and mat[r][col] != 0:
                f = mat[r][col]
                mat[r] = [x - f * y for x, y in zip(mat[r], mat[row])]
        row += 1
    for loc in unknowns:
        values[loc] = mat[idx[loc]][n]
    return values


def _q_value(a: PCFA, values: dict, loc: int, act: Action) -> Fraction:
    here = actions_at(a, loc)
    if isinstance(act, int):
        sides = here[act]
        total = Fraction(0)
        for t in sides.values():
            total += Fraction(1, 2) * values[t]
        return total
    return values[here[act]]


def analyze_mdp(a: PCFA) -> MdpAnalysis:
    check_cfmdp(a)
    locs_with_actions = [
        loc for loc in sorted(a.locations)
        if loc != a.accepting and a.out_edges(loc)
    ]
    policy = {
        loc: min(actions_at(a, loc), key=_action_key) for loc in locs_with_actions
    }
    values = _policy_value(a, policy)
    for _ in range(10_000):
        improved = False
        for loc in locs_with_actions:
            best_act, best_q = policy[loc], values[loc]
            for act in sorted(actions_at(a, loc), key=_action_key):
                q = _q_value(a, values, loc, act)
                if q > best_q:
                    best_act, best_q = act, q
            if best_act != policy[loc] and best_q > values[loc]:
                policy[loc] = best_act
                improved = True
        if not improved:
            break
        new_values = _policy_value(a, policy)
        assert all(new_values[l] >= values[l] for l in a.locations)
        values = new_values
    else:
        raise RuntimeError("policy iteration did not converge")

    optimal = {
        loc: [
            act
            for act in sorted(actions_at(a, loc), key=_action_key)
            if _q_value(a, values, loc, act) == values[loc]
        ]
        for loc in locs_with_actions
    }
    return MdpAnalysis(values.get(a.initial, Fraction(0)), values, policy, optimal)


def mdp_upper_bound(a: PCFA) -> tuple[Fraction, Strategy]:
    r = analyze_mdp(a)
    return r.bound, memoryless(r.policy)


def reason_cfmc(a: PCFA) -> PCFA:
    bound, psi = mdp_upper_bound(a)
    return apply_strategy(a, psi)


# ---------------------------------------------------------------------------
# merging trace sets into one CFMC
# ---------------------------------------------------------------------------

def merge_traces(traces: Sequence[Sequence[Label]]) -> Optional[PCFA]:
    """Prefix tree of the traces as a CFMC with one shared accepting leaf.

    Succeeds only when every branching point is the two sides of a single
    coin; a proper-prefix relation between traces or branching on other
    labels makes the set unmergeable (returns None).
    """
    if not traces:
        raise ValueError("empty trace set")
    root: dict = {}
    ENDS = "$end"
    for tr in traces:
        node = root
        for lab in tr:
            node = node.setdefault(lab, {})
        node[ENDS] = True

    trans: set[tuple[int, Label, int]] = set()
    counter = [2]  # 0 root, 1 accepting

    def build(node: dict, here: int) -> bool:
        labs = [k for k in node if k != ENDS]
        ended = ENDS in node
        if ended and labs:
            return False  # a trace is a proper prefix of another
        if ended:
            return True  # caller wires the edge into the accepting location
        if len(labs) > 1:
            if len(labs) != 2 or not all(isinstance(l, Pb) for l in labs):
                return False
            i, j = labs[0].pid, labs[1].pid
            if i != j or {labs[0].side, labs[1].side} != {"L", "R"}:
                return False
        for lab in labs:
            child = node[lab]
            if ENDS in child and len(child) == 1:
                trans.add((here, lab, 1))
            else:
                nxt = counter[0]
                counter[0] += 1
                trans.add((here, lab, nxt))
                if not build(child, nxt):
                    return False
        return True

    if ENDS in root and len(root) == 1:
        return None  # only the empty trace: not a CFMC over programs
    if not build(root, 0):
        return None
    out = PCFA(trans, 0, 1)
    assert out.is_cfmc()
    return out

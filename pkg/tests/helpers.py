"""Shared helpers for the test suite: seeded random generators for
automata and programs, bounded-language utilities, and small runners."""

from __future__ import annotations

import random
from fractions import Fraction
from pathlib import Path
from typing import Optional

from probtrace.cfa import PCFA, Assign, Assume, Pb, SkipL, trim
from probtrace.formula import as_term, eq, ge, ivar, le
from probtrace.lang import parse, to_pcfa
from probtrace.markov import actions_at

DATA_DIR = Path(__file__).parent / "data"
BENCH_DIR = Path(__file__).parent.parent / "benchmarks"


def load_program(name: str):
    """Parse one of the checked-in data programs."""
    return parse((DATA_DIR / name).read_text())


def bounded_language(a: PCFA, depth: int) -> set:
    return set(a.enumerate_traces(depth))


def bounded_equal_deterministic(a: PCFA, b: PCFA, depth: int) -> bool:
    """Depth-bounded language equality for deterministic automata via a
    product walk (no path enumeration, so deep bounds stay cheap).

    A pair state tracks where each side is, or None once that side has
    died.  Divergence = exactly one side alive at an accepting/step point.
    """
    assert a.is_deterministic() and b.is_deterministic()

    def accepting(side: PCFA, loc) -> bool:
        return loc is not None and loc == side.accepting

    def steps(side: PCFA, loc):
        if loc is None:
            return {}
        return {lab: t for lab, t in side.out_edges(loc)}

    seen = set()
    frontier = {(a.initial, b.initial)}
    for _ in range(depth + 1):
        nxt = set()
        for la, lb in frontier:
            if accepting(a, la) != accepting(b, lb):
                return False
            if (la, lb) in seen:
                continue
            seen.add((la, lb))
            ea, eb = steps(a, la), steps(b, lb)
            for lab in set(ea) | set(eb):
                nxt.add((ea.get(lab), eb.get(lab)))
        frontier = nxt - seen
        if not frontier:
            return True
    # the walk only decides divergence up to `depth` steps; anything beyond
    # is out of scope for a bounded check
    return True


# ---------------------------------------------------------------------------
# random CFMDPs (for normalization and strategy round-trip suites)

_X = ivar("X")

_DET_LABELS = [
    SkipL(),
    Assign("X", _X + as_term(1)),
    Assign("X", _X - as_term(1)),
    Assign("X", as_term(0)),
    Assume(ge(_X, 0)),
    Assume(le(_X, 0)),
    Assume(eq(_X, 1)),
]


def random_cfmdp(rng: random.Random, max_locs: int = 8) -> PCFA:
    """A random CFMDP: deterministic, accepting location is a sink.

    Locations 0..n-1 with 0 initial and n-1 accepting.  Every other
    location gets one to three actions: plain labels or a fresh coin
    (whose two branch targets may coincide, so that normalization has
    real work to do).  Coin sides are occasionally dropped.
    """
    n = rng.randint(2, max_locs)
    init, acc = 0, n - 1
    trans: set = set()
    pid = 0
    for loc in range(n):
        if loc == acc:
            continue
        labels = rng.sample(_DET_LABELS, len(_DET_LABELS))
        for _ in range(rng.randint(1, 3)):
            if rng.random() < 0.45:
                lt = rng.randrange(n)
                # a *shared* coin target must not be the accepting location:
                # splitting it would need a second accepting location, which
                # the single-accepting automaton shape cannot carry (program
                # construction never produces that case)
                if rng.random() < 0.4 and lt != acc:
                    rt = lt
                else:
                    rt = rng.randrange(n)
                    if rt == lt == acc:
                        rt = rng.randrange(n - 1)
                if rng.random() < 0.15:
                    # single-sided coin: the other branch's mass is lost
                    side = rng.choice("LR")
                    trans.add((loc, Pb(pid, side), lt))
                else:
                    trans.add((loc, Pb(pid, "L"), lt))
                    trans.add((loc, Pb(pid, "R"), rt))
                pid += 1
            elif labels:
                trans.add((loc, labels.pop(), rng.randrange(n)))
    a = PCFA(trans, init, acc, locations=set(range(n)))
    assert a.is_cfmdp()
    return a


def random_sub_cfmc(rng: random.Random, a: PCFA) -> PCFA:
    """Carve a sub-CFMC out of a CFMDP by fixing one action per location
    (sometimes dropping one side of the chosen coin), then trimming."""
    trans: set = set()
    for loc in sorted(a.locations):
        if loc == a.accepting:
            continue
        acts = actions_at(a, loc)
        if not acts:
            continue
        act = rng.choice(sorted(acts, key=repr))
        tgt = acts[act]
        if isinstance(tgt, dict):
            sides = sorted(tgt)
            if len(sides) > 1 and rng.random() < 0.3:
                sides = [rng.choice(sides)]
            for side in sides:
                trans.add((loc, Pb(act, side), tgt[side]))
        else:
            trans.add((loc, act, tgt))
    m = trim(PCFA(trans, a.initial, a.accepting, locations=set(a.locations)))
    assert m.is_cfmc()
    return m


# ---------------------------------------------------------------------------
# random loop-free programs (oracle-equivalence suite)


def random_loopfree_program(rng: random.Random) -> str:
    """A loop-free program over one or two integer variables in [-4, 4]
    with at most three fair coins, branching, and linear updates."""
    nvars = rng.choice([1, 2])
    names = ["X", "Y"][:nvars]

    def term(depth: int = 0) -> str:
        r = rng.random()
        if r < 0.45:
            return str(rng.randint(-3, 3))
        v = rng.choice(names)
        if r < 0.75 or depth > 0:
            return v
        return f"{v} {rng.choice(['+', '-'])} {term(depth + 1)}"

    def cond() -> str:
        lhs = rng.choice(names)
        op = rng.choice(["<=", ">=", "=", "!=", "<", ">"])
        return f"{lhs} {op} {rng.randint(-2, 2)}"

    def assign() -> str:
        return f"{rng.choice(names)} := {term()};"

    def simple() -> str:
        return assign() if rng.random() < 0.85 else "skip;"

    coins = rng.randint(1, 3)
    lines: list[str] = []
    for _ in range(rng.randint(2, 4)):
        r = rng.random()
        if coins and r < 0.55:
            coins -= 1
            lines.append(f"{{ {simple()} }} <+> {{ {simple()} }};")
        elif r < 0.75:
            lines.append(f"if ({cond()}) {{ {simple()} }} else {{ {simple()} }}")
        else:
            lines.append(assign())

    pre_parts = []
    for v in names:
        lo = rng.randint(-4, 0)
        hi = rng.randint(lo, 4)
        if lo == hi:
            pre_parts.append(f"{v} = {lo}")
        else:
            pre_parts.append(f"{v} >= {lo} && {v} <= {hi}")
    post = cond()

    decls = "\n".join(f"int {v};" for v in names)
    body = "\n".join(lines)
    return (
        f"@pre {' && '.join(pre_parts)}\n"
        f"@post {post}\n"
        f"@beta 1/2\n"
        f"{decls}\n{body}\n"
    )


def program_pcfa(text: str):
    program, spec = parse(text)
    return to_pcfa(program), spec


HALF = Fraction(1, 2)

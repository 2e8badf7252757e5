"""Satisfiability backends.

Two backends sit behind the :class:`Solver` facade:

* :class:`BuiltinSolver` — a complete decision procedure for the fragment
  the verifier actually emits: quantifier-free boolean combinations of
  linear integer constraints and boolean variables.  Boolean structure is
  handled by semantic branching on atoms; each closed branch's theory cube
  is decided with an exact integer Omega test (equality elimination by
  unit substitution / coefficient shrinking, inequality elimination by
  real+dark shadows with splinter fallback).  All arithmetic is bignum
  integer arithmetic, so answers are exact.

* :class:`ExternalSolver` — an SMT-LIB 2 session over a solver subprocess
  (persistent, push/pop scoped, sentinel-framed, restarted on hang).  Used
  automatically when a solver binary is available; also the only backend
  that can supply sequence interpolants, when the binary supports
  ``get-interpolants``.

``Solver`` picks the external backend when a binary is configured
(explicit path, ``PROBTRACE_SOLVER``, or a PATH probe) and falls back to
the builtin procedure otherwise.
"""

from __future__ import annotations

import os
import queue
import shutil
import subprocess
import threading
import time
from typing import Iterable, Optional

from .formula import (
    EQ,
    FALSE,
    LE,
    NE,
    TRUE,
    And,
    BoolLit,
    Cmp,
    Formula,
    _cmp,
    IntTerm,
    Or,
    atoms,
    bool_vars,
    bvar,
    eq,
    fand,
    fnot,
    for_,
    ge,
    int_vars,
    ivar,
    le,
    simplify,
    smt2_decls,
    subst_bool,
    subst_int,
    to_smt2,
)


class SolverError(Exception):
    """The backend misbehaved (crashed, produced garbage, ...)."""


class SolverUnknown(Exception):
    """The backend could not decide a query (timeout / resource cap)."""


# ---------------------------------------------------------------------------
# exact linear integer arithmetic: the Omega test
# ---------------------------------------------------------------------------
#
# Constraints are dicts {var: coeff} plus a constant, read as
#   sum(coeff * var) + const  (= 0 | <= 0)

Lin = tuple[dict, int]

_MAX_ELIM_ROUNDS = 10_000
_MAX_SPLINTER_DEPTH = 60


def _lin_of_term(t: IntTerm) -> Lin:
    return (dict(t.coeffs), t.const)


def _subst_lin(lin: Lin, var: str, repl: Lin) -> Lin:
    coeffs, const = lin
    c = coeffs.get(var)
    if not c:
        return ({v: k for v, k in coeffs.items() if k != 0}, const)
    rcoeffs, rconst = repl
    out = {v: k for v, k in coeffs.items() if v != var}
    for v, k in rcoeffs.items():
        out[v] = out.get(v, 0) + c * k
    out = {v: k for v, k in out.items() if k != 0}
    return (out, const + c * rconst)


def _gcd_all(vals: Iterable[int]) -> int:
    g = 0
    for v in vals:
        g = _gcd(g, abs(v))
    return g


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _tighten(lin: Lin) -> Optional[Lin]:
    """Normalise an inequality (<= 0); None means trivially true."""
    coeffs, const = lin
    coeffs = {v: c for v, c in coeffs.items() if c != 0}
    if not coeffs:
        if const <= 0:
            return None
        return ({}, 1)  # canonical false
    g = _gcd_all(coeffs.values())
    if g > 1:
        coeffs = {v: c // g for v, c in coeffs.items()}
        const = -((-const) // g)
    return (coeffs, const)


def _modhat(a: int, m: int) -> int:
    r = a % m
    if r > m // 2:
        r -= m
    return r


class _Fresh:
    def __init__(self) -> None:
        self.n = 0

    def __call__(self) -> str:
        self.n += 1
        return f"_w{self.n}"


def omega_feasible(eqs: list[Lin], ineqs: list[Lin], _depth: int = 0) -> bool:
    """Does the conjunction of eqs (= 0) and ineqs (<= 0) have an integer
    solution?  Complete; raises SolverUnknown only on absurd blowup."""
    if _depth > _MAX_SPLINTER_DEPTH:
        raise SolverUnknown("omega: splinter recursion too deep")
    eqs = [({v: c for v, c in cs.items() if c != 0}, k) for cs, k in eqs]
    ineqs = list(ineqs)
    fresh = _Fresh()

    # --- phase 1: eliminate equalities ------------------------------------
    rounds = 0
    while eqs:
        rounds += 1
        if rounds > _MAX_ELIM_ROUNDS:
            raise SolverUnknown("omega: equality elimination did not converge")
        coeffs, const = eqs.pop()
        coeffs = {v: c for v, c in coeffs.items() if c != 0}
        if not coeffs:
            if const != 0:
                return False
            continue
        g = _gcd_all(coeffs.values())
        if const % g != 0:
            return False
        if g > 1:
            coeffs = {v: c // g for v, c in coeffs.items()}
            const //= g
        unit = next((v for v, c in coeffs.items() if abs(c) == 1), None)
        if unit is not None:
            a = coeffs[unit]
            # a*unit = -(const + rest)  =>  unit = -a * (const + rest)
            repl_coeffs = {v: -a * c for v, c in coeffs.items() if v != unit}
            repl: Lin = (repl_coeffs, -a * const)
            eqs = [_subst_lin(e, unit, repl) for e in eqs]
            ineqs = [_subst_lin(i, unit, repl) for i in ineqs]
            continue
        # no unit coefficient: shrink via Pugh's symmetric-mod trick.
        # The auxiliary equation has coefficient -sign(ak) on xk, so xk can
        # be solved out immediately; substituting back into the original
        # equation shrinks its coefficients.
        k = min(coeffs, key=lambda v: (abs(coeffs[v]), v))
        ak = coeffs[k]
        m = abs(ak) + 1
        u = -1 if ak > 0 else 1  # = _modhat(ak, m)
        s = fresh()
        repl_coeffs = {
            v: -u * _modhat(c, m) for v, c in coeffs.items() if v != k
        }
        repl_coeffs = {v: c for v, c in repl_coeffs.items() if c != 0}
        repl_coeffs[s] = u * m
        repl = (repl_coeffs, -u * _modhat(const, m))
        eqs.append(_subst_lin((coeffs, const), k, repl))
        eqs = [_subst_lin(e, k, repl) for e in eqs]
        ineqs = [_subst_lin(i, k, repl) for i in ineqs]

    # --- phase 2: eliminate variables from inequalities -------------------
    work: list[Lin] = []
    for lin in ineqs:
        t = _tighten(lin)
        if t is None:
            continue
        if not t[0]:
            return False
        work.append(t)
    return _ineqs_feasible(work, _depth)


def _ineqs_feasible(ineqs: list[Lin], depth: int) -> bool:
    rounds = 0
    while True:
        rounds += 1
        if rounds > _MAX_ELIM_ROUNDS:
            raise SolverUnknown("omega: inequality elimination did not converge")
        seen: set[tuple] = set()
        clean: list[Lin] = []
        for lin in ineqs:
            t = _tighten(lin)
            if t is None:
                continue
            if not t[0]:
                return False
            key = (tuple(sorted(t[0].items())), t[1])
            if key not in seen:
                seen.add(key)
                clean.append(t)
        ineqs = clean
        if not ineqs:
            return True
        variables = sorted({v for cs, _ in ineqs for v in cs})

        def score(v: str) -> tuple:
            lowers = [cs[v] for cs, _ in ineqs if cs.get(v, 0) < 0]
            uppers = [cs[v] for cs, _ in ineqs if cs.get(v, 0) > 0]
            exact = all(c == -1 for c in lowers) or all(c == 1 for c in uppers)
            return (not exact, len(lowers) * len(uppers), v)

        x = min(variables, key=score)
        rest: list[Lin] = []
        low: list[tuple[dict, int, int]] = []  # b <= beta*x
        up: list[tuple[dict, int, int]] = []   # alpha*x <= A
        for cs, k in ineqs:
            c = cs.get(x, 0)
            if c == 0:
                rest.append((cs, k))
            elif c < 0:
                b = {v: q for v, q in cs.items() if v != x}
                low.append((b, k, -c))
            else:
                a = {v: -q for v, q in cs.items() if v != x}
                up.append((a, -k, c))
        if not low or not up:
            ineqs = rest
            continue

        exact = all(beta == 1 for _, _, beta in low) or all(
            alpha == 1 for _, _, alpha in up
        )

        def combine(extra: bool) -> list[Lin]:
            out = list(rest)
            for b, bk, beta in low:
                for a, ak_, alpha in up:
                    # alpha*b <= alpha*beta*x <= beta*A
                    cs = {v: alpha * c for v, c in b.items()}
                    for v, c in a.items():
                        cs[v] = cs.get(v, 0) - beta * c
                    k = alpha * bk - beta * ak_
                    if extra:
                        k += (alpha - 1) * (beta - 1)
                    out.append((cs, k))
            return out

        if exact:
            ineqs = combine(False)
            continue
        if not _ineqs_feasible(combine(False), depth):
            return False
        if _ineqs_feasible(combine(True), depth):
            return True
        # splinters: some lower bound must be nearly tight
        alpha_hat = max(alpha for _, _, alpha in up)
        original = ineqs
        for b, bk, beta in low:
            top = (alpha_hat * beta - alpha_hat - beta) // alpha_hat
            for i in range(top + 1):
                eq_coeffs = dict(b)
                eq_coeffs[x] = eq_coeffs.get(x, 0) - beta
                if omega_feasible([(eq_coeffs, bk + i)], original, depth + 1):
                    return True
        return False


# ---------------------------------------------------------------------------
# witness search (only called once feasibility is established)
# ---------------------------------------------------------------------------

_MAX_WITNESS_POINTS = 4_000_000


def _find_point(constraints: list[tuple[Lin, str]], variables: list[str]) -> dict:
    """Concrete integer point satisfying constraints ((lin, op) with op in
    {LE, EQ}).  Expanding-shell search centred on single-variable bounds;
    the caller guarantees a solution exists."""
    if not variables:
        return {}
    centre = {}
    for v in variables:
        lo, hi = None, None
        for (cs, k), op in constraints:
            if set(cs) == {v}:
                c = cs[v]
                if op == EQ and k % c == 0:
                    lo = hi = -k // c
                    break
                if c > 0:
                    bound = (-k) // c
                    hi = bound if hi is None else min(hi, bound)
                else:
                    # c*v + k <= 0 with c < 0  =>  v >= k / (-c), rounded up
                    q, r = divmod(k, -c)
                    bound = q + (1 if r else 0)
                    lo = bound if lo is None else max(lo, bound)
        if lo is not None and hi is not None:
            centre[v] = min(max(0, lo), hi)
        elif lo is not None:
            centre[v] = max(0, lo)
        elif hi is not None:
            centre[v] = min(0, hi)
        else:
            centre[v] = 0

    def ok(pt: dict) -> bool:
        for (cs, k), op in constraints:
            total = k + sum(c * pt[v] for v, c in cs.items() if v in pt)
            if any(v not in pt for v in cs):
                return False
            if op == LE and total > 0:
                return False
            if op == EQ and total != 0:
                return False
        return True

    tried = 0
    r = 0
    while True:
        for offs in _shell(len(variables), r):
            pt = {v: centre[v] + o for v, o in zip(variables, offs)}
            tried += 1
            if tried > _MAX_WITNESS_POINTS:
                raise SolverUnknown("witness search exceeded point budget")
            if ok(pt):
                return pt
        r = r + 1 if r < 8 else r + max(1, r // 2)


def _shell(n: int, r: int):
    """All offset tuples with max-norm exactly r (all tuples when r == 0)."""
    if r == 0:
        yield (0,) * n
        return

    def rec(i: int, on_shell: bool, acc: list[int]):
        if i == n:
            if on_shell:
                yield tuple(acc)
            return
        for o in range(-r, r + 1):
            acc.append(o)
            yield from rec(i + 1, on_shell or abs(o) == r, acc)
            acc.pop()

    yield from rec(0, False, [])


# ---------------------------------------------------------------------------
# builtin backend: semantic branching + Omega cubes
# ---------------------------------------------------------------------------

def _replace_atom(f: Formula, atom: Formula, value: bool) -> Formula:
    tv = TRUE if value else FALSE
    if f == atom:
        return tv
    if isinstance(f, BoolLit) and isinstance(atom, BoolLit) and f.name == atom.name:
        return tv if f.positive == atom.positive else (FALSE if value else TRUE)
    if isinstance(f, And):
        return fand(*(_replace_atom(a, atom, value) for a in f.args))
    if isinstance(f, Or):
        return for_(*(_replace_atom(a, atom, value) for a in f.args))
    return f


def _theory_model(cmps: list[tuple[Cmp, bool]]) -> Optional[dict]:
    les: list[Lin] = []
    eqs: list[Lin] = []
    nes: list[Lin] = []
    for cmp_, val in cmps:
        lin = _lin_of_term(cmp_.term)
        if cmp_.op == LE:
            if val:
                les.append(lin)
            else:
                les.append(({v: -c for v, c in lin[0].items()}, -lin[1] + 1))
        elif cmp_.op == EQ:
            (eqs if val else nes).append(lin)
        else:  # NE
            (nes if val else eqs).append(lin)

    def attempt(les_: list[Lin], nes_: list[Lin]) -> Optional[dict]:
        if nes_:
            cs, k = nes_[0]
            rest = nes_[1:]
            # t != 0  <=>  t <= -1  or  -t <= -1
            m = attempt(les_ + [(cs, k + 1)], rest)
            if m is not None:
                return m
            return attempt(les_ + [({v: -c for v, c in cs.items()}, -k + 1)], rest)
        if not omega_feasible(eqs, les_):
            return None
        cons = [((cs, k), EQ) for cs, k in eqs] + [((cs, k), LE) for cs, k in les_]
        variables = sorted({v for (cs, _), _ in cons for v in cs})
        return _find_point(cons, variables)

    return attempt(les, nes)


class BuiltinSolver:
    """Complete decision procedure for QF boolean + linear integer atoms."""

    name = "builtin"
    supports_interpolation = False

    def check(self, formula: Formula) -> tuple[str, Optional[dict]]:
        f = simplify(formula)
        model = self._search(f, {}, [])
        if model is None:
            return ("unsat", None)
        for v in sorted(int_vars(f)):
            model.setdefault(v, 0)
        for v in sorted(bool_vars(f)):
            model.setdefault(v, False)
        # Omega may have introduced auxiliary variables; hide them
        return ("sat", {k: v for k, v in model.items() if not k.startswith("_w")})

    def _search(
        self,
        f: Formula,
        bools: dict,
        cmps: list[tuple[Cmp, bool]],
    ) -> Optional[dict]:
        if f == FALSE:
            return None
        if f == TRUE:
            theory = _theory_model(cmps)
            if theory is None:
                return None
            theory.update(bools)
            return theory
        atom = atoms(f)[0]
        for value in (True, False):
            g = _replace_atom(f, atom, value)
            if isinstance(atom, BoolLit):
                b2 = dict(bools)
                b2[atom.name] = value if atom.positive else not value
                m = self._search(g, b2, cmps)
            else:
                m = self._search(g, bools, cmps + [(atom, value)])
            if m is not None:
                return m
        return None

    def interpolants(self, parts: list[Formula]) -> Optional[list[Formula]]:
        return None

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# s-expression utilities for the external backend
# ---------------------------------------------------------------------------

def sexp_tokens(text: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "()":
            out.append(ch)
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == "|":
            j = text.index("|", i + 1)
            out.append(text[i : j + 1])
            i = j + 1
        elif ch == '"':
            j = i + 1
            while j < len(text) and text[j] != '"':
                j += 1
            out.append(text[i : j + 1])
            i = j + 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            out.append(text[i:j])
            i = j
    return out


def parse_sexp(tokens: list[str], pos: int = 0):
    if tokens[pos] != "(":
        return tokens[pos], pos + 1
    pos += 1
    items = []
    while tokens[pos] != ")":
        item, pos = parse_sexp(tokens, pos)
        items.append(item)
    return items, pos + 1


def _sexp_to_term(s) -> IntTerm:
    if isinstance(s, str):
        if s.lstrip("-").isdigit():
            return IntTerm((), int(s))
        return IntTerm(((s, 1),), 0)
    head = s[0]
    args = [_sexp_to_term(a) for a in s[1:]]
    if head == "+":
        out = IntTerm((), 0)
        for a in args:
            out = out + a
        return out
    if head == "-":
        if len(args) == 1:
            return -args[0]
        out = args[0]
        for a in args[1:]:
            out = out - a
        return out
    if head == "*":
        consts = [a for a in args if not a.coeffs]
        rest = [a for a in args if a.coeffs]
        k = 1
        for c in consts:
            k *= c.const
        if not rest:
            return IntTerm((), k)
        if len(rest) == 1:
            return rest[0].scale(k)
    raise SolverError(f"cannot read term {s!r}")


def sexp_to_formula(s, bool_names: frozenset[str]) -> Formula:
    """Read a solver-produced formula back into the IR (best effort: raises
    SolverError on constructs outside the fragment)."""
    if isinstance(s, str):
        if s == "true":
            return TRUE
        if s == "false":
            return FALSE
        if s in bool_names:
            return BoolLit(s, True)
        raise SolverError(f"unknown symbol {s!r}")
    head = s[0]
    if head == "and":
        return fand(*(sexp_to_formula(a, bool_names) for a in s[1:]))
    if head == "or":
        return for_(*(sexp_to_formula(a, bool_names) for a in s[1:]))
    if head == "not":
        return fnot(sexp_to_formula(s[1], bool_names))
    if head == "=>":
        parts = [sexp_to_formula(a, bool_names) for a in s[1:]]
        out = parts[-1]
        for p in reversed(parts[:-1]):
            out = for_(fnot(p), out)
        return out
    if head in ("<=", "<", ">=", ">", "="):
        try:
            lhs = _sexp_to_term(s[1])
            rhs = _sexp_to_term(s[2])
        except SolverError:
            if head == "=":
                a = sexp_to_formula(s[1], bool_names)
                b = sexp_to_formula(s[2], bool_names)
                return for_(fand(a, b), fand(fnot(a), fnot(b)))
            raise
        from . import formula as _f

        ops = {"<=": _f.le, "<": _f.lt, ">=": _f.ge, ">": _f.gt, "=": _f.eq}
        return ops[head](lhs, rhs)
    raise SolverError(f"cannot read formula {s!r}")


# ---------------------------------------------------------------------------
# external backend: SMT-LIB 2 over a subprocess
# ---------------------------------------------------------------------------

_SENTINEL = "@@probtrace-sync@@"

_KNOWN_ARGS = {
    "z3": ["-in"],
    "cvc5": ["--incremental", "--lang", "smt2"],
    "cvc4": ["--incremental", "--lang", "smt2"],
    "mathsat": [],
    "yices-smt2": ["--incremental"],
    "smtinterpol": ["-q"],
}


class ExternalSolver:
    """Persistent SMT-LIB 2 session with sentinel framing and hang recovery."""

    supports_interpolation: Optional[bool]

    def __init__(self, path: str, timeout: float = 20.0, extra_args: Optional[list[str]] = None):
        self.path = path
        self.timeout = timeout
        base = os.path.basename(path)
        for known, args in _KNOWN_ARGS.items():
            if known in base:
                self.args = list(args)
                break
        else:
            self.args = []
        if extra_args:
            self.args += extra_args
        self.name = base
        self.supports_interpolation = None  # probed lazily
        self._proc: Optional[subprocess.Popen] = None
        self._queue: "queue.Queue[Optional[str]]" = queue.Queue()
        self._start()

    # -- process plumbing ---------------------------------------------------

    def _start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                [self.path] + self.args,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SolverError(f"cannot start solver {self.path!r}: {exc}") from exc
        self._queue = queue.Queue()
        t = threading.Thread(
            target=self._pump, args=(self._proc, self._queue), daemon=True
        )
        t.start()
        self._send("(set-option :print-success false)")
        self._send("(set-logic ALL)")
        self._sync()

    def _pump(self, proc: subprocess.Popen, q: "queue.Queue[Optional[str]]") -> None:
        # each pump owns the queue it was born with; after a restart the old
        # pump's EOF must not leak into the fresh session's queue
        assert proc.stdout is not None
        for line in proc.stdout:
            q.put(line.rstrip("\n"))
        q.put(None)

    def _send(self, line: str) -> None:
        proc = self._proc
        if proc is None or proc.stdin is None or proc.poll() is not None:
            raise SolverError("solver process is gone")
        try:
            proc.stdin.write(line + "\n")
            proc.stdin.flush()
        except OSError as exc:
            raise SolverError(f"solver pipe broke: {exc}") from exc

    def _sync(self) -> list[str]:
        """Flush pending output up to the echoed sentinel."""
        self._send(f'(echo "{_SENTINEL}")')
        lines: list[str] = []
        deadline = time.monotonic() + self.timeout
        while True:
            budget = deadline - time.monotonic()
            if budget <= 0:
                self._restart()
                raise SolverUnknown(f"solver {self.name} timed out")
            try:
                line = self._queue.get(timeout=budget)
            except queue.Empty:
                continue
            if line is None:
                raise SolverError(f"solver {self.name} exited unexpectedly")
            if line.strip().strip('"') == _SENTINEL:
                return lines
            lines.append(line)

    def _restart(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
        self._start()

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
            self._proc = None

    # -- queries ------------------------------------------------------------

    def check(self, formula: Formula) -> tuple[str, Optional[dict]]:
        f = simplify(formula)
        self._send("(push 1)")
        try:
            for d in smt2_decls(f):
                self._send(d)
            self._send(f"(assert {to_smt2(f)})")
            self._send("(check-sat)")
            lines = [l for l in self._sync() if l.strip()]
            if not lines:
                raise SolverError("no answer to check-sat")
            verdict = lines[-1].strip()
            if verdict == "unsat":
                return ("unsat", None)
            if verdict == "unknown":
                raise SolverUnknown(f"solver {self.name} answered unknown")
            if verdict != "sat":
                raise SolverError(f"unexpected check-sat answer {verdict!r}")
            names = sorted(int_vars(f)) + sorted(bool_vars(f))
            if not names:
                return ("sat", {})
            self._send("(get-value (" + " ".join(names) + "))")
            lines = [l for l in self._sync() if l.strip()]
            return ("sat", self._parse_values(" ".join(lines)))
        finally:
            try:
                self._send("(pop 1)")
            except SolverError:
                pass

    @staticmethod
    def _parse_values(text: str) -> dict:
        sexp, _ = parse_sexp(sexp_tokens(text))
        model: dict = {}
        for pair in sexp:
            name, value = pair[0], pair[1]
            if value == "true":
                model[name] = True
            elif value == "false":
                model[name] = False
            elif isinstance(value, str):
                model[name] = int(value)
            elif isinstance(value, list) and value and value[0] == "-":
                model[name] = -int(value[1])
            else:
                raise SolverError(f"unreadable model value {value!r}")
        return model

    def interpolants(self, parts: list[Formula]) -> Optional[list[Formula]]:
        """Sequence interpolants for an unsatisfiable chain, or None when the
        binary does not support them."""
        if self.supports_interpolation is False:
            return None
        bools: frozenset[str] = frozenset()
        for p in parts:
            bools |= bool_vars(p)
        self._send("(push 1)")
        try:
            self._send("(set-option :produce-interpolants true)")
            decls = {d for p in parts for d in smt2_decls(p)}
            for d in sorted(decls):
                self._send(d)
            labels = []
            for i, p in enumerate(parts):
                lab = f"IP{i}"
                labels.append(lab)
                self._send(f"(assert (! {to_smt2(p)} :named {lab}))")
            self._send("(check-sat)")
            lines = [l for l in self._sync() if l.strip()]
            if not lines or lines[-1].strip() != "unsat":
                return None
            self._send("(get-interpolants " + " ".join(labels) + ")")
            lines = [l for l in self._sync() if l.strip()]
            text = " ".join(lines)
            if not text.strip().startswith("("):
                self.supports_interpolation = False
                return None
            try:
                sexp, _ = parse_sexp(sexp_tokens(text))
                out = [simplify(sexp_to_formula(s, bools)) for s in sexp]
            except (SolverError, IndexError, ValueError):
                self.supports_interpolation = False
                return None
            if len(out) != len(parts) - 1:
                self.supports_interpolation = False
                return None
            self.supports_interpolation = True
            return out
        except SolverUnknown:
            self.supports_interpolation = False
            return None
        finally:
            try:
                self._send("(pop 1)")
            except SolverError:
                pass


# ---------------------------------------------------------------------------
# facade
# ---------------------------------------------------------------------------

_PROBE_NAMES = ("z3", "cvc5", "cvc4", "mathsat", "yices-smt2", "smtinterpol")


def find_solver_binary() -> Optional[str]:
    env = os.environ.get("PROBTRACE_SOLVER")
    if env:
        return env
    for name in _PROBE_NAMES:
        path = shutil.which(name)
        if path:
            return path
    return None


class Solver:
    """Caching facade over a backend; all verifier queries go through here."""

    def __init__(self, path: Optional[str] = None, timeout: float = 20.0):
        if path is None:
            path = find_solver_binary()
        if path:
            self.backend = ExternalSolver(path, timeout=timeout)
        else:
            self.backend = BuiltinSolver()
        self._sat_cache: dict[Formula, bool] = {}
        self._model_cache: dict[Formula, Optional[dict]] = {}
        self.queries = 0
        self.cache_hits = 0
        self.time_spent = 0.0

    @property
    def backend_name(self) -> str:
        return self.backend.name

    def _check(self, f: Formula) -> tuple[str, Optional[dict]]:
        self.queries += 1
        t0 = time.monotonic()
        try:
            return self.backend.check(f)
        finally:
            self.time_spent += time.monotonic() - t0

    def is_sat(self, f: Formula) -> bool:
        f = simplify(f)
        if f == TRUE:
            return True
        if f == FALSE:
            return False
        hit = self._sat_cache.get(f)
        if hit is not None:
            self.cache_hits += 1
            return hit
        status, model = self._check(f)
        result = status == "sat"
        self._sat_cache[f] = result
        if result:
            self._model_cache[f] = model
        return result

    def get_model(self, f: Formula) -> Optional[dict]:
        f = simplify(f)
        if f == FALSE:
            return None
        if f in self._model_cache:
            self.cache_hits += 1
            return self._model_cache[f]
        status, model = self._check(f)
        self._sat_cache[f] = status == "sat"
        out = model if status == "sat" else None
        self._model_cache[f] = out
        return out

    def check_sat(self, f: Formula) -> tuple[str, Optional[dict]]:
        """("sat", model) / ("unsat", None); SolverUnknown propagates."""
        model = self.get_model(f)
        return ("sat", model) if model is not None else ("unsat", None)

    def is_valid(self, f: Formula) -> bool:
        return not self.is_sat(fnot(f))

    def entails(self, p: Formula, q: Formula) -> bool:
        return not self.is_sat(fand(p, fnot(q)))

    def equivalent(self, p: Formula, q: Formula) -> bool:
        return self.entails(p, q) and self.entails(q, p)

    def interpolants(self, parts: list[Formula]) -> Optional[list[Formula]]:
        return self.backend.interpolants(parts)

    def stats(self) -> dict:
        return {
            "backend": self.backend_name,
            "queries": self.queries,
            "cache_hits": self.cache_hits,
            "solver_time": self.time_spent,
        }

    def close(self) -> None:
        self.backend.close()


# ---------------------------------------------------------------------------
# strongest postconditions and sequence interpolants
# ---------------------------------------------------------------------------

def _iff(p: Formula, q: Formula) -> Formula:
    return for_(fand(p, q), fand(fnot(p), fnot(q)))


def _dnf(f: Formula, cap: int = 512) -> Optional[list[list[Formula]]]:
    """Disjunctive normal form as cubes of atoms; None if it would blow up."""
    if f == TRUE:
        return [[]]
    if f == FALSE:
        return []
    if isinstance(f, (Cmp, BoolLit)):
        return [[f]]
    if isinstance(f, Or):
        out: list[list[Formula]] = []
        for part in f.args:
            sub = _dnf(part, cap)
            if sub is None:
                return None
            out.extend(sub)
            if len(out) > cap:
                return None
        return out
    if isinstance(f, And):
        acc: list[list[Formula]] = [[]]
        for part in f.args:
            sub = _dnf(part, cap)
            if sub is None:
                return None
            acc = [c + d for c in acc for d in sub]
            if len(acc) > cap:
                return None
        return acc
    raise TypeError(f"not a formula: {f!r}")


def _cube_eliminate(cube: list[Formula], var: str) -> Optional[list[list[Formula]]]:
    """Existentially eliminate an integer variable from a conjunction of
    atoms.  Exact only while the variable's coefficients stay at ±1; returns
    the result as cubes (a disequality forces a case split)."""
    rest: list[Formula] = []
    les: list[Cmp] = []
    eqs: list[Cmp] = []
    nes: list[Cmp] = []
    for a in cube:
        if isinstance(a, Cmp) and a.term.coeff(var) != 0:
            if abs(a.term.coeff(var)) != 1:
                return None
            {LE: les, EQ: eqs, NE: nes}[a.op].append(a)
        else:
            rest.append(a)
    if eqs:
        # var = t for a unit equation: substitute into the other atoms
        a0 = eqs[0]
        c = a0.term.coeff(var)
        # c*var + r == 0  =>  var == -c*r   (c = ±1)
        r = IntTerm.make(
            {v: k for v, k in a0.term.coeffs if v != var}, a0.term.const
        )
        repl = r.scale(-c)
        out = rest + [
            _cmp(a.term.subst(var, repl), a.op) for a in les + eqs[1:] + nes
        ]
        return [out]
    if nes:
        # var != t   becomes   var <= t-1  or  var >= t+1
        a0 = nes[0]
        c = a0.term.coeff(var)
        t = a0.term if c > 0 else -a0.term  # var + r' vs 0
        one = IntTerm((), 1)
        lo = _cmp(t + one, LE)   # var <= -r' - 1
        hi = _cmp(-t + one, LE)  # var >= -r' + 1
        remaining = rest + les + nes[1:]
        out: list[list[Formula]] = []
        for case in (lo, hi):
            sub = _cube_eliminate(remaining + [case], var)
            if sub is None:
                return None
            out.extend(sub)
        return out
    lowers: list[IntTerm] = []  # bounds b with b <= var
    uppers: list[IntTerm] = []  # bounds b with var <= b
    for a in les:
        c = a.term.coeff(var)
        r = IntTerm.make({v: k for v, k in a.term.coeffs if v != var}, a.term.const)
        if c > 0:
            uppers.append(-r)  # var <= -r
        else:
            lowers.append(r)   # r <= var
    combined = [_cmp(lo - up, LE) for lo in lowers for up in uppers]
    return [rest + combined]


def project_int_var(f: Formula, var: str) -> Optional[Formula]:
    """∃ var. f over the integers, or None when not exactly expressible
    within unit-coefficient elimination."""
    if var not in int_vars(f):
        return f
    cubes = _dnf(simplify(f))
    if cubes is None:
        return None
    out: list[Formula] = []
    for cube in cubes:
        sub = _cube_eliminate(cube, var)
        if sub is None:
            return None
        out.extend(fand(*c) for c in sub)
    return simplify(for_(*out))


def strongest_post(lab, phi: Formula) -> Optional[Formula]:
    """Exact strongest postcondition of one label, or None when exactness
    would need divisibility reasoning (non-unit coefficients)."""
    from .cfa import Assign, Assume  # local import: cfa must not need solver

    if isinstance(lab, Assume):
        return simplify(fand(phi, lab.cond))
    if not isinstance(lab, Assign):
        return phi
    if isinstance(lab.expr, IntTerm):
        x, e = lab.var, lab.expr
        a = e.coeff(x)
        if a == 0:
            projected = project_int_var(phi, x)
            if projected is None:
                return None
            return simplify(fand(projected, eq(ivar(x), e)))
        if abs(a) == 1:
            # x_new = a*x_old + r  =>  x_old = a*(x_new - r)
            r = IntTerm.make({v: k for v, k in e.coeffs if v != x}, e.const)
            return simplify(subst_int(phi, x, (ivar(x) - r).scale(a)))
        return None
    # boolean assignment: finite-domain elimination of the old value
    b, g = lab.var, lab.expr
    phi_t = subst_bool(phi, b, TRUE)
    phi_f = subst_bool(phi, b, FALSE)
    g_t = subst_bool(g, b, TRUE)
    g_f = subst_bool(g, b, FALSE)
    return simplify(
        for_(fand(phi_t, _iff(bvar(b), g_t)), fand(phi_f, _iff(bvar(b), g_f)))
    )


def sequence_interpolants(
    solver: "Solver", prefix: Formula, labels, suffix: Formula
) -> list[Formula]:
    """Interior propositions I1..I(n-1) making every consecutive Hoare triple
    of the chain  {prefix} σ1 {I1} … {I(n-1)} σn {¬suffix}  valid.

    Requires prefix ∧ path(labels) ∧ suffix to be unsatisfiable.  Uses the
    backend's interpolation when it has one; otherwise inserts exact
    strongest postconditions, and if any label resists exact forward
    computation, falls back to the demonic weakest-precondition chain
    (always valid, weakest useful generalization).
    """
    from .semantics import pre_exists, pre_exists_trace, wp_demonic  # no cycle

    labels = list(labels)
    vc = fand(prefix, pre_exists_trace(labels, suffix))
    if solver.is_sat(vc):
        raise ValueError("interpolation requires an unsatisfiable chain")
    if not labels:
        return []

    got = _interpolants_via_backend(solver, prefix, labels, suffix)
    if got is not None:
        return got

    # strongest-postcondition chain
    props: Optional[list[Formula]] = []
    cur = prefix
    for lab in labels[:-1]:
        nxt = strongest_post(lab, cur)
        if nxt is None:
            props = None
            break
        props.append(nxt)
        cur = nxt
    if props is not None:
        return props

    # demonic chain: I_k = wp(remaining trace, ¬suffix)
    target = fnot(suffix)
    out: list[Formula] = []
    cur = target
    for lab in reversed(labels[1:]):
        cur = simplify(wp_demonic(lab, cur))
        out.append(cur)
    out.reverse()
    return out


def _interpolants_via_backend(
    solver: "Solver", prefix: Formula, labels, suffix: Formula
) -> Optional[list[Formula]]:
    """Sequence interpolation over an SSA encoding of the trace; None when
    the backend has no interpolation support or the reply is unusable."""
    from .cfa import Assign, Assume
    from . import formula as F

    if not getattr(solver.backend, "supports_interpolation", False) and \
            solver.backend.supports_interpolation is False:
        return None

    ints: set[str] = set(int_vars(prefix) | int_vars(suffix))
    bools: set[str] = set(bool_vars(prefix) | bool_vars(suffix))
    for lab in labels:
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

    def stamp(f: Formula, k: int) -> Formula:
        for v in int_vars(f):
            f = F.subst_int(f, v, ivar(f"{v}@{k}"))
        for v in bool_vars(f):
            f = subst_bool(f, v, bvar(f"{v}@{k}"))
        return f

    def step(lab, k: int) -> Formula:
        """Constraint linking frame k to frame k+1."""
        frame: list[Formula] = []
        changed = lab.var if isinstance(lab, Assign) else None
        for v in sorted(ints):
            if v != changed:
                frame.append(eq(ivar(f"{v}@{k+1}"), ivar(f"{v}@{k}")))
        for v in sorted(bools):
            if v != changed:
                frame.append(_iff(bvar(f"{v}@{k+1}"), bvar(f"{v}@{k}")))
        if isinstance(lab, Assign):
            if isinstance(lab.expr, IntTerm):
                frame.append(eq(ivar(f"{changed}@{k+1}"), stamp_term(lab.expr, k)))
            else:
                frame.append(_iff(bvar(f"{changed}@{k+1}"), stamp(lab.expr, k)))
        elif isinstance(lab, Assume):
            frame.append(stamp(lab.cond, k))
        return fand(*frame)

    def stamp_term(t: IntTerm, k: int) -> IntTerm:
        out = IntTerm((), t.const)
        for v, c in t.coeffs:
            out = out + ivar(f"{v}@{k}").scale(c)
        return out

    n = len(labels)
    parts = [fand(stamp(prefix, 0), step(labels[0], 0))]
    for k in range(1, n - 1):
        parts.append(step(labels[k], k))
    parts.append(fand(step(labels[n - 1], n - 1), stamp(suffix, n)))
    raw = solver.interpolants(parts)
    if raw is None or len(raw) != n - 1:
        return None
    out: list[Formula] = []
    for k, f in enumerate(raw, start=1):
        # interpolant k speaks over frame k: strip the stamps
        for v in sorted(int_vars(f)):
            base, _, idx = v.partition("@")
            if idx != str(k):
                return None
            f = F.subst_int(f, v, ivar(base))
        for v in sorted(bool_vars(f)):
            base, _, idx = v.partition("@")
            if idx != str(k):
                return None
            f = subst_bool(f, v, bvar(base))
        out.append(simplify(f))
    return out

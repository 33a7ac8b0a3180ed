"""Minimal SMT-LIB2 solver for quantifier-free linear real arithmetic.

Speaks enough of the SMT-LIB2 command language to act as the default external
backend process: declare-const, assert, assert-soft (:weight), check-sat,
get-model. Exact MaxSMT on instances with at most 14 soft constraints; honest
`unknown` on anything nonlinear (products of variables, sin, ite, ...).

Deliberately independent from the in-process builtin fitter: it parses
SMT-LIB2 text, extracts linear forms itself, and only shares scipy's LP as
the feasibility oracle.

Run as `smtilp-minisolver` or `python -m smtilp.minisolver`; reads a script
from stdin (or a file argument) and writes responses to stdout.
`--reject-assert-soft` makes it refuse assert-soft, for exercising clients'
fallback paths.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

STRICT_MARGIN = 1e-9
BRANCH_CAP = 8192
MAX_EXACT_SOFT = 14


class SolverError(Exception):
    pass


# --- s-expression reading ------------------------------------------------------


def tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            tokens.append(text[i : j + 1])
            i = j + 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"':
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def parse_all(tokens: list[str]) -> list:
    pos = 0

    def parse_one():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            out = []
            while pos < len(tokens) and tokens[pos] != ")":
                out.append(parse_one())
            if pos >= len(tokens):
                raise SolverError("unbalanced parenthesis")
            pos += 1
            return out
        if tok == ")":
            raise SolverError("unexpected ')'")
        return tok

    exprs = []
    while pos < len(tokens):
        exprs.append(parse_one())
    return exprs


def _numeral(tok: str) -> Fraction | None:
    try:
        if "." in tok:
            return Fraction(tok)
        return Fraction(int(tok), 1)
    except (ValueError, ZeroDivisionError):
        return None


# --- linear extraction -----------------------------------------------------------


class Nonlinear(Exception):
    pass


def lin(e, env: set[str]) -> dict[str, Fraction]:
    """Linear form {var: coeff, '': const}; raises Nonlinear when it is not."""
    if isinstance(e, str):
        num = _numeral(e)
        if num is not None:
            return {"": num}
        if e in env:
            return {e: Fraction(1), "": Fraction(0)}
        raise SolverError(f"unknown identifier {e}")
    if not e:
        raise SolverError("empty expression")
    op = e[0]
    if op == "-" and len(e) == 2:
        inner = lin(e[1], env)
        return {k: -v for k, v in inner.items()}
    if op in ("+", "-", "*", "/"):
        parts = [lin(a, env) for a in e[1:]]
        if op == "+":
            out: dict[str, Fraction] = {}
            for p in parts:
                for k, v in p.items():
                    out[k] = out.get(k, Fraction(0)) + v
            return out
        if op == "-":
            out = dict(parts[0])
            for p in parts[1:]:
                for k, v in p.items():
                    out[k] = out.get(k, Fraction(0)) - v
            return out
        if op == "*":
            acc = parts[0]
            for p in parts[1:]:
                acc_vars = [k for k, v in acc.items() if k and v != 0]
                p_vars = [k for k, v in p.items() if k and v != 0]
                if acc_vars and p_vars:
                    raise Nonlinear()
                scalar, linear_part = (acc, p) if not acc_vars else (p, acc)
                s = scalar.get("", Fraction(0))
                acc = {k: v * s for k, v in linear_part.items()}
            return acc
        # division by nonzero constant only
        acc = parts[0]
        for p in parts[1:]:
            p_vars = [k for k, v in p.items() if k and v != 0]
            if p_vars or p.get("", Fraction(0)) == 0:
                raise Nonlinear()
            d = p[""]
            acc = {k: v / d for k, v in acc.items()}
        return acc
    raise Nonlinear()


Atom = tuple[dict[str, Fraction], str, Fraction]  # coeffs, op, bound

_NEG = {"<": ">=", "<=": ">", ">": "<=", ">=": "<"}


def _atom(e, env: set[str], negated: bool) -> list[list[Atom]]:
    op = e[0]
    left = lin(e[1], env)
    right = lin(e[2], env)
    coeffs = dict(left)
    for k, v in right.items():
        coeffs[k] = coeffs.get(k, Fraction(0)) - v
    bound = -coeffs.pop("", Fraction(0))
    coeffs = {k: v for k, v in coeffs.items() if v != 0}
    if op == "=":
        if not negated:
            return [[(coeffs, "=", bound)]]
        return [[(coeffs, "<", bound)], [(coeffs, ">", bound)]]
    actual = op if not negated else _NEG[op]
    return [[(coeffs, actual, bound)]]


def branches(e, env: set[str], negated: bool = False) -> list[list[Atom]]:
    """DNF branches of a boolean s-expression; raises Nonlinear where apt."""
    if e == "true":
        return [] if negated else [[]]
    if e == "false":
        return [[]] if negated else []
    if isinstance(e, list) and e:
        op = e[0]
        if op == "not":
            return branches(e[1], env, not negated)
        if op == "=>":
            return branches(["or", ["not", e[1]], e[2]], env, negated)
        if op in ("and", "or"):
            conjunctive = (op == "and") != negated
            parts = [branches(a, env, negated) for a in e[1:]]
            if not conjunctive:
                out = []
                for p in parts:
                    out.extend(p)
                    if len(out) > BRANCH_CAP:
                        raise Nonlinear()
                return out
            acc: list[list[Atom]] = [[]]
            for p in parts:
                nxt = []
                for a in acc:
                    for b in p:
                        nxt.append(a + b)
                        if len(nxt) > BRANCH_CAP:
                            raise Nonlinear()
                acc = nxt
            return acc
        if op in ("<", "<=", "=", ">=", ">"):
            return _atom(e, env, negated)
    raise Nonlinear()


# --- feasibility ------------------------------------------------------------------


def feasible(atoms: list[Atom], order: list[str]) -> dict[str, float] | None:
    idx = {v: i for i, v in enumerate(order)}
    rows_ub, b_ub, strict, rows_eq, b_eq = [], [], [], [], []
    for coeffs, op, bound in atoms:
        row = [0.0] * len(order)
        for v, c in coeffs.items():
            row[idx[v]] = float(c)
        if op in ("<", "<="):
            rows_ub.append(row)
            b_ub.append(float(bound))
            strict.append(op == "<")
        elif op in (">", ">="):
            rows_ub.append([-c for c in row])
            b_ub.append(-float(bound))
            strict.append(op == ">")
        else:
            if not any(row):
                if bound != 0:
                    return None
                continue
            rows_eq.append(row)
            b_eq.append(float(bound))
    if not order:
        for (coeffs, op, bound) in atoms:
            val = Fraction(0)
            sat = {
                "<": val < bound, "<=": val <= bound, "=": val == bound,
                ">=": val >= bound, ">": val > bound,
            }[op]
            if not sat:
                return None
        return {}
    has_strict = any(strict)
    ncols = len(order) + (1 if has_strict else 0)
    c = np.zeros(ncols)
    if has_strict:
        c[-1] = -1.0
    A_ub = None
    if rows_ub:
        A_ub = np.zeros((len(rows_ub), ncols))
        A_ub[:, : len(order)] = rows_ub
        if has_strict:
            A_ub[:, -1] = [1.0 if s else 0.0 for s in strict]
    A_eq = None
    if rows_eq:
        A_eq = np.zeros((len(rows_eq), ncols))
        A_eq[:, : len(order)] = rows_eq
    bounds = [(None, None)] * len(order) + ([(0.0, 1.0)] if has_strict else [])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=np.array(b_ub) if rows_ub else None,
        A_eq=A_eq,
        b_eq=np.array(b_eq) if rows_eq else None,
        bounds=bounds,
        method="highs",
    )
    if not res.success:
        return None
    if has_strict and res.x[-1] <= STRICT_MARGIN:
        return None
    return {v: float(res.x[i]) for i, v in enumerate(order)}


# --- the solver loop ---------------------------------------------------------------


class MiniSolver:
    def __init__(self, reject_assert_soft: bool = False):
        self.reject_assert_soft = reject_assert_soft
        self.vars: list[str] = []
        self.hard: list = []
        self.soft: list[tuple[object, float]] = []
        self.model: dict[str, float] | None = None

    def _check(self) -> str:
        env = set(self.vars)
        try:
            hard_branches: list[list[Atom]] = [[]]
            for h in self.hard:
                hb = branches(h, env)
                nxt = []
                for a in hard_branches:
                    for b in hb:
                        nxt.append(a + b)
                        if len(nxt) > BRANCH_CAP:
                            raise Nonlinear()
                hard_branches = nxt
            soft_branches = [branches(s, env) for s, _ in self.soft]
        except Nonlinear:
            self.model = None
            return "unknown"

        def sat_with(extra_sets: list[list[list[Atom]]]) -> dict[str, float] | None:
            combos: list[list[Atom]] = hard_branches
            for alt in extra_sets:
                nxt = []
                for a in combos:
                    for b in alt:
                        nxt.append(a + b)
                        if len(nxt) > BRANCH_CAP:
                            raise Nonlinear()  # too disjunctive; answer unknown
                combos = nxt
            for atoms in combos:
                m = feasible(atoms, self.vars)
                if m is not None:
                    return m
            return None

        try:
            if not self.soft:
                m = sat_with([])
                self.model = m
                return "sat" if m is not None else "unsat"
            base = sat_with([])
            if base is None:
                self.model = None
                return "unsat"
            n = len(self.soft)
            if n > MAX_EXACT_SOFT:
                self.model = base
                return "unknown"
            weights = [w for _, w in self.soft]
            masks = sorted(
                range(2**n),
                key=lambda m: (-sum(weights[i] for i in range(n) if m >> i & 1), m),
            )
            cores: list[int] = []
            for mask in masks:
                if any(mask & core == core for core in cores):
                    continue
                chosen = [soft_branches[i] for i in range(n) if mask >> i & 1]
                m = sat_with(chosen)
                if m is not None:
                    self.model = m
                    return "sat"
                cores.append(mask)
            self.model = base
            return "sat"
        except Nonlinear:
            self.model = None
            return "unknown"

    def _model_lines(self) -> str:
        if self.model is None:
            return '(error "model is not available")'
        lines = ["(model"]
        for v in self.vars:
            val = self.model.get(v, 0.0)
            frac = Fraction(val)
            if frac.denominator == 1:
                body = f"{abs(frac.numerator)}.0"
            else:
                body = f"(/ {abs(frac.numerator)}.0 {frac.denominator}.0)"
            if val < 0:
                body = f"(- {body})"
            lines.append(f"  (define-fun {v} () Real {body})")
        lines.append(")")
        return "\n".join(lines)

    def run(self, script: str) -> str:
        out: list[str] = []
        for cmd in parse_all(tokenize(script)):
            if not isinstance(cmd, list) or not cmd:
                out.append('(error "expected a command")')
                continue
            head = cmd[0]
            if head in ("set-option", "set-info", "set-logic", "reset-assertions"):
                continue
            if head == "echo":
                out.append(cmd[1].strip('"') if len(cmd) > 1 else "")
            elif head in ("declare-const", "declare-fun"):
                name = cmd[1]
                sort = cmd[-1]
                if sort != "Real" or (head == "declare-fun" and cmd[2] != []):
                    out.append(f'(error "only 0-ary Real symbols are supported")')
                    continue
                if name not in self.vars:
                    self.vars.append(name)
            elif head == "assert":
                self.hard.append(cmd[1])
            elif head == "assert-soft":
                if self.reject_assert_soft:
                    out.append('(error "unsupported command assert-soft")')
                    continue
                weight = 1.0
                i = 2
                while i + 1 < len(cmd):
                    if cmd[i] == ":weight":
                        weight = float(Fraction(cmd[i + 1]))
                    i += 2
                self.soft.append((cmd[1], weight))
            elif head == "check-sat":
                out.append(self._check())
            elif head == "get-model":
                out.append(self._model_lines())
            elif head == "get-objectives":
                out.append("(objectives)")
            elif head == "exit":
                break
            else:
                out.append(f'(error "unsupported command {head}")')
        return "\n".join(out) + ("\n" if out else "")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="minimal SMT-LIB2 QF_LRA solver")
    parser.add_argument("file", nargs="?", help="script file (default: stdin)")
    parser.add_argument(
        "--reject-assert-soft",
        action="store_true",
        help="refuse assert-soft commands (for testing client fallbacks)",
    )
    args = parser.parse_args(argv)
    if args.file:
        with open(args.file, "r", encoding="utf-8") as fh:
            script = fh.read()
    else:
        script = sys.stdin.read()
    sys.stdout.write(MiniSolver(args.reject_assert_soft).run(script))
    return 0


if __name__ == "__main__":
    sys.exit(main())

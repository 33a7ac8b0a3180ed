"""Satisfiability and MaxSMT over real arithmetic: shared types + builtin fitter.

Two interchangeable engines implement the same surface: this module's
BuiltinBackend (solver-free, exact on small linear instances, multi-start
search on nonlinear ones, every sat verdict re-checked by concrete
evaluation) and external.ExternalBackend (any SMT-LIB2 process).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from . import formula as F

STRICT_MARGIN = 1e-9
BRANCH_CAP = 4096
EXACT_SUBSET_CAP = 2000  # max soft-subset feasibility checks on the exact path


class BackendError(RuntimeError):
    """Solver/process failure distinct from a timeout."""


@dataclass(frozen=True)
class ParamDecl:
    name: str
    lower: float
    upper: float


@dataclass
class MaxSmtInstance:
    declarations: list[ParamDecl]
    hard: list[object]
    soft: list[tuple[object, float]]
    timeout: float = 30.0
    structure: object | None = None  # provenance for the builtin fast path
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        for _, w in self.soft:
            if w <= 0:
                raise ValueError("soft weights must be positive")

    @property
    def total_soft_weight(self) -> float:
        return sum(w for _, w in self.soft)


@dataclass
class SolveResult:
    status: str  # "sat" | "unsat" | "unknown" | "timeout"
    model: dict[str, float] | None = None
    satisfied_soft_weight: float | None = None
    exact: bool = True  # False when a heuristic/partial search produced this
    note: str = ""

    def __post_init__(self) -> None:
        if self.model is not None and self.status in ("unsat", "unknown"):
            raise ValueError("model only accompanies sat (or best-so-far timeout) results")
        if self.status == "sat" and self.model is None:
            raise ValueError("sat results carry a model")


def eval_bool_tol(f: object, env: dict[str, float], eq_tol: float = 1e-9) -> bool:
    """Concrete evaluation with an equality tolerance (floats rarely tie exactly)."""
    if isinstance(f, F.BoolConst):
        return f.value
    if isinstance(f, F.Cmp):
        a = F.eval_real(f.lhs, env)
        b = F.eval_real(f.rhs, env)
        if f.op == "=":
            return abs(a - b) <= eq_tol
        return F._CMP_FN[f.op](a, b)
    if isinstance(f, F.BoolOp):
        if f.op == "and":
            return all(eval_bool_tol(a, env, eq_tol) for a in f.args)
        if f.op == "or":
            return any(eval_bool_tol(a, env, eq_tol) for a in f.args)
        return not eval_bool_tol(f.args[0], env, eq_tol)
    raise F.FormulaError(f"not a boolean node: {f!r}")


# --- NNF / branch enumeration -------------------------------------------------

_NEG_OP = {"<": ">=", "<=": ">", "=": "=", ">=": "<", ">": "<="}


def _nnf(f: object, negated: bool) -> object:
    if isinstance(f, F.BoolConst):
        return F.BoolConst(f.value != negated)
    if isinstance(f, F.Cmp):
        if not negated:
            return f
        if f.op == "=":
            return F.disj(F.Cmp("<", f.lhs, f.rhs), F.Cmp(">", f.lhs, f.rhs))
        return F.Cmp(_NEG_OP[f.op], f.lhs, f.rhs)
    if isinstance(f, F.BoolOp):
        if f.op == "not":
            return _nnf(f.args[0], not negated)
        op = f.op if not negated else ("or" if f.op == "and" else "and")
        parts = [_nnf(a, negated) for a in f.args]
        return F.conj(*parts) if op == "and" else F.disj(*parts)
    raise F.FormulaError(f"not a boolean node: {f!r}")


def _branches(f: object, cap: int) -> tuple[list[list[F.Cmp]], bool]:
    """DNF branches (lists of atoms) of an NNF formula. Second value: truncated?"""
    if isinstance(f, F.BoolConst):
        return ([[]] if f.value else []), False
    if isinstance(f, F.Cmp):
        return [[f]], False
    if isinstance(f, F.BoolOp) and f.op == "or":
        out: list[list[F.Cmp]] = []
        truncated = False
        for a in f.args:
            sub, t = _branches(a, cap - len(out))
            truncated |= t
            out.extend(sub)
            if len(out) >= cap:
                return out[:cap], True
        return out, truncated
    if isinstance(f, F.BoolOp) and f.op == "and":
        acc: list[list[F.Cmp]] = [[]]
        truncated = False
        for a in f.args:
            sub, t = _branches(a, cap)
            truncated |= t
            nxt = []
            for left in acc:
                for right in sub:
                    nxt.append(left + right)
                    if len(nxt) >= cap:
                        truncated = True
                        break
                if len(nxt) >= cap:
                    break
            acc = nxt
            if not acc:
                return [], truncated
        return acc, truncated
    raise F.FormulaError(f"unexpected node in NNF: {f!r}")


# --- interval reasoning (sound unsat on shared nonlinear subterms) -------------


def _split_const(expr: object) -> tuple[object, float]:
    """expr == core + offset with every top-level constant addend pulled out."""
    if isinstance(expr, F.Const):
        return F.Const(0.0), expr.value
    if isinstance(expr, F.Arith) and expr.op in ("+", "-"):
        a_core, a_off = _split_const(expr.args[0])
        b_core, b_off = _split_const(expr.args[1])
        if expr.op == "+":
            core = F.fold(F.add(a_core, b_core))
            return core, a_off + b_off
        core = F.fold(F.sub(a_core, b_core))
        return core, a_off - b_off
    return expr, 0.0


def _interval_eval(expr: object, env: dict[str, tuple[float, float]]) -> tuple[float, float]:
    if isinstance(expr, F.Const):
        return expr.value, expr.value
    if isinstance(expr, F.Var):
        return env.get(expr.name, (-math.inf, math.inf))
    if isinstance(expr, F.Arith):
        if expr.op in ("abs", "sin"):
            lo, hi = _interval_eval(expr.args[0], env)
            if expr.op == "sin":
                if hi - lo >= 2 * math.pi:
                    return -1.0, 1.0
                vals = [math.sin(lo), math.sin(hi)]
                k = math.ceil(lo / (math.pi / 2))
                while k * math.pi / 2 <= hi:
                    vals.append(math.sin(k * math.pi / 2))
                    k += 1
                return min(vals), max(vals)
            if lo >= 0:
                return lo, hi
            if hi <= 0:
                return -hi, -lo
            return 0.0, max(-lo, hi)
        a = _interval_eval(expr.args[0], env)
        b = _interval_eval(expr.args[1], env)
        if expr.op == "+":
            return a[0] + b[0], a[1] + b[1]
        if expr.op == "-":
            return a[0] - b[1], a[1] - b[0]
        if expr.op == "*":
            def imul(x: float, y: float) -> float:
                return 0.0 if x == 0.0 or y == 0.0 else x * y  # inf*0 -> 0 here

            prods = [imul(a[0], b[0]), imul(a[0], b[1]), imul(a[1], b[0]), imul(a[1], b[1])]
            return min(prods), max(prods)
        # division: bail out unless divisor interval excludes 0
        if b[0] > 0 or b[1] < 0:
            quots = [a[0] / b[0], a[0] / b[1], a[1] / b[0], a[1] / b[1]]
            return min(quots), max(quots)
        return -math.inf, math.inf
    raise F.FormulaError(f"not a real node: {expr!r}")


_ATOM_INTERVAL = {
    "<": lambda b: (-math.inf, b, False, True),
    "<=": lambda b: (-math.inf, b, False, False),
    "=": lambda b: (b, b, False, False),
    ">=": lambda b: (b, math.inf, False, False),
    ">": lambda b: (b, math.inf, True, False),
}


def _refute_by_intervals(atoms: Sequence[F.Cmp]) -> bool:
    """Sound unsat test: group atoms by shared core expression, intersect intervals."""
    groups: dict[object, tuple[float, float, bool, bool]] = {}
    for atom in atoms:
        diff = F.fold(F.sub(atom.lhs, atom.rhs))
        if isinstance(diff, F.BoolConst):  # pragma: no cover - folded earlier
            continue
        core, off = _split_const(diff)
        lo, hi, slo, shi = _ATOM_INTERVAL[atom.op](-off)
        cur = groups.get(core, (-math.inf, math.inf, False, False))
        nlo = max(cur[0], lo)
        nhi = min(cur[1], hi)
        nslo = (cur[2] and cur[0] >= lo) or (slo and lo >= cur[0])
        nshi = (cur[3] and cur[1] <= hi) or (shi and hi <= cur[1])
        if nlo > nhi or (nlo == nhi and (nslo or nshi)):
            return True
        groups[core] = (nlo, nhi, nslo, nshi)
    # narrow plain variables, then re-evaluate composite cores
    var_env: dict[str, tuple[float, float]] = {}
    for core, (lo, hi, _, _) in groups.items():
        if isinstance(core, F.Var):
            var_env[core.name] = (lo, hi)
    for core, (lo, hi, slo, shi) in groups.items():
        if isinstance(core, F.Var):
            continue
        try:
            elo, ehi = _interval_eval(core, var_env)
        except F.FormulaError:
            continue
        if elo > hi or ehi < lo:
            return True
        if (slo and ehi <= lo) or (shi and elo >= hi):
            return True
    return False


# --- linear feasibility ---------------------------------------------------------


def _linear_system(
    atoms: Sequence[F.Cmp], order: list[str]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[bool]] | None:
    """A_ub x <= b_ub and A_eq x = b_eq from linear atoms; None if any nonlinear.

    Returns (A_ub, b_ub, A_eq, b_eq, strict_flags aligned with A_ub rows).
    """
    idx = {v: i for i, v in enumerate(order)}
    rows_ub: list[list[float]] = []
    b_ub: list[float] = []
    strict: list[bool] = []
    rows_eq: list[list[float]] = []
    b_eq: list[float] = []
    for atom in atoms:
        lin = F.linear_atom(atom)
        if lin is None:
            return None
        coeffs, op, bound = lin
        row = [0.0] * len(order)
        for v, c in coeffs.items():
            row[idx[v]] = c
        if op in ("<", "<="):
            rows_ub.append(row)
            b_ub.append(bound)
            strict.append(op == "<")
        elif op in (">", ">="):
            rows_ub.append([-c for c in row])
            b_ub.append(-bound)
            strict.append(op == ">")
        else:
            rows_eq.append(row)
            b_eq.append(bound)
    return (
        np.array(rows_ub) if rows_ub else np.zeros((0, len(order))),
        np.array(b_ub),
        np.array(rows_eq) if rows_eq else np.zeros((0, len(order))),
        np.array(b_eq),
        strict,
    )


def _lp_feasible(
    atoms: Sequence[F.Cmp], order: list[str]
) -> tuple[bool | None, dict[str, float] | None]:
    """Exact-ish LP feasibility with strict inequalities via max-slack.

    Returns (feasible, model). feasible=None means the atoms are not linear.
    """
    sys = _linear_system(atoms, order)
    if sys is None:
        return None, None
    A_ub, b_ub, A_eq, b_eq, strict = sys
    n = len(order)
    if n == 0:
        ok = bool(np.all(b_ub >= 0)) and bool(np.all(b_eq == 0))
        ok = ok and all(not s or b > 0 for s, b in zip(strict, b_ub))
        return ok, {} if ok else None
    # maximize slack t on strict rows: a.x + t <= b ; t in [0, 1]
    has_strict = any(strict)
    cols = n + (1 if has_strict else 0)
    c = np.zeros(cols)
    if has_strict:
        c[-1] = -1.0  # maximize t
    A = np.zeros((len(b_ub), cols))
    if len(b_ub):
        A[:, :n] = A_ub
        if has_strict:
            A[:, -1] = [1.0 if s else 0.0 for s in strict]
    Aeq = None
    if len(b_eq):
        Aeq = np.zeros((len(b_eq), cols))
        Aeq[:, :n] = A_eq
    bounds = [(None, None)] * n + ([(0.0, 1.0)] if has_strict else [])
    res = linprog(
        c,
        A_ub=A if len(b_ub) else None,
        b_ub=b_ub if len(b_ub) else None,
        A_eq=Aeq,
        b_eq=b_eq if len(b_eq) else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:  # infeasible
        return False, None
    if not res.success:
        return False, None
    x = res.x
    if has_strict and x[-1] <= STRICT_MARGIN:
        return False, None
    return True, {v: float(x[i]) for i, v in enumerate(order)}


# --- multi-start search for nonlinear branches ----------------------------------

DESCENT_STARTS = 32
DESCENT_ITERS = 200


def _atom_violation(atom: F.Cmp, env: dict[str, float]) -> float:
    try:
        a = F.eval_real(atom.lhs, env)
        b = F.eval_real(atom.rhs, env)
    except F.FormulaError:
        return math.inf
    if atom.op == "<":
        return max(0.0, a - b + STRICT_MARGIN)
    if atom.op == "<=":
        return max(0.0, a - b)
    if atom.op == "=":
        return abs(a - b)
    if atom.op == ">=":
        return max(0.0, b - a)
    return max(0.0, b - a + STRICT_MARGIN)


def _var_boxes(atoms: Sequence[F.Cmp], names: list[str]) -> dict[str, tuple[float, float]]:
    boxes = {v: (-100.0, 100.0) for v in names}
    for atom in atoms:
        lin = F.linear_atom(atom)
        if not lin:
            continue
        coeffs, op, bound = lin
        if len(coeffs) != 1:
            continue
        (v, c), = coeffs.items()
        lo, hi = boxes.get(v, (-100.0, 100.0))
        limit = bound / c
        if (c > 0) == (op in ("<", "<=")):
            hi = min(hi, limit)
        else:
            lo = max(lo, limit)
        boxes[v] = (lo, hi)
    return boxes


def _descent_search(
    atoms: Sequence[F.Cmp], names: list[str], rng: np.random.Generator, deadline: float
) -> dict[str, float] | None:
    boxes = _var_boxes(atoms, names)
    for v, (lo, hi) in boxes.items():
        if lo > hi:
            return None

    def total(env: dict[str, float]) -> float:
        return sum(_atom_violation(a, env) for a in atoms)

    best_env = None
    for start in range(DESCENT_STARTS):
        if time.monotonic() > deadline:
            break
        env = {
            v: (lo + hi) / 2 if start == 0 else float(rng.uniform(lo, hi))
            for v, (lo, hi) in boxes.items()
        }
        score = total(env)
        it = 0
        while score > 0 and it < DESCENT_ITERS:
            improved = False
            for v in names:
                lo, hi = boxes[v]
                span = hi - lo
                candidates = [lo + span * k / 16 for k in range(17)]
                cur = env[v]
                for _ in range(3):
                    vals = []
                    for cand in candidates:
                        env[v] = cand
                        vals.append((total(env), cand))
                    vals.sort()
                    if vals[0][0] < score:
                        score = vals[0][0]
                        cur = vals[0][1]
                        improved = True
                    env[v] = cur
                    span /= 8
                    candidates = [
                        min(hi, max(lo, cur + span * (k - 8) / 8)) for k in range(17)
                    ]
                it += 1
                if score == 0:
                    break
            if not improved:
                break
        if score == 0:
            best_env = dict(env)
            break
    return best_env


# --- the builtin backend ---------------------------------------------------------


class BuiltinBackend:
    """Solver-free engine: exact on small linear instances, search elsewhere.

    sat verdicts always come with a model that has been re-checked by
    concrete evaluation; unsat verdicts come only from sound reasoning
    (interval refutation or LP infeasibility of every branch).
    """

    name = "builtin"
    wants_formulas = False  # the structured fast path works off binding tables

    def __init__(self, seed: int = 0):
        self.seed = seed

    def check_sat(self, formula: object, timeout: float = 30.0) -> SolveResult:
        deadline = time.monotonic() + timeout
        f = F.fold(formula)
        if isinstance(f, F.BoolConst):
            return SolveResult("sat" if f.value else "unsat", {} if f.value else None)
        nnf = _nnf(f, False)
        branches, truncated = _branches(nnf, BRANCH_CAP)
        names = sorted(F.variables(f))
        rng = np.random.default_rng(self.seed)
        any_unknown = truncated
        for atoms in branches:
            if time.monotonic() > deadline:
                return SolveResult("timeout", None, exact=False)
            if _refute_by_intervals(atoms):
                continue
            feasible, model = _lp_feasible(atoms, names)
            if feasible is None:
                model = _descent_search(atoms, names, rng, deadline)
                if model is not None and eval_bool_tol(formula, model):
                    return SolveResult("sat", model)
                any_unknown = True
                continue
            if feasible and model is not None:
                if eval_bool_tol(formula, model):
                    return SolveResult("sat", model)
                any_unknown = True
        if any_unknown:
            return SolveResult("unknown", None, exact=False)
        return SolveResult("unsat", None)

    def solve_maxsmt(self, instance: MaxSmtInstance) -> SolveResult:
        deadline = time.monotonic() + instance.timeout
        if instance.structure is not None:
            from . import fitters

            res = fitters.fit_structured(instance, seed=self.seed)
            if res is not None:
                return res
        bound_parts = [
            F.conj(
                F.cmp("<=", F.Const(d.lower), F.Var(d.name)),
                F.cmp("<=", F.Var(d.name), F.Const(d.upper)),
            )
            for d in instance.declarations
        ]
        hard = F.conj(*bound_parts, *instance.hard)
        remaining = lambda: max(0.05, deadline - time.monotonic())
        base = self.check_sat(hard, timeout=remaining())
        if base.status != "sat":
            return SolveResult(base.status, None, exact=base.exact, note="hard core")
        softs = list(instance.soft)
        if not softs:
            return SolveResult("sat", base.model, 0.0)
        n = len(softs)
        if 2**n <= EXACT_SUBSET_CAP:
            return self._exact_subsets(hard, softs, base, remaining)
        return self._greedy_subsets(hard, softs, base, remaining)

    def _exact_subsets(self, hard, softs, base: SolveResult, remaining) -> SolveResult:
        n = len(softs)
        weights = [w for _, w in softs]
        subsets = sorted(
            range(2**n),
            key=lambda m: (-sum(weights[i] for i in range(n) if m >> i & 1), m),
        )
        infeasible_cores: list[int] = []
        certain = True
        for mask in subsets:
            if remaining() <= 0.05:
                return SolveResult(
                    "timeout", base.model, 0.0, exact=False, note="best-so-far at timeout"
                )
            if any(mask & core == core for core in infeasible_cores):
                continue
            chosen = [softs[i][0] for i in range(n) if mask >> i & 1]
            res = self.check_sat(F.conj(hard, *chosen), timeout=remaining())
            if res.status == "sat":
                w = sum(weights[i] for i in range(n) if mask >> i & 1)
                return SolveResult(
                    "sat", res.model, w, exact=certain,
                    note="" if certain else "unknown subset skipped",
                )
            if res.status == "unsat":
                infeasible_cores.append(mask)
            else:
                certain = False  # cannot certify optimality past an unknown subset
        return SolveResult("sat", base.model, 0.0, exact=certain)

    def _greedy_subsets(self, hard, softs, base: SolveResult, remaining) -> SolveResult:
        order = sorted(range(len(softs)), key=lambda i: -softs[i][1])
        chosen: list[object] = []
        weight = 0.0
        model = base.model
        for i in order:
            if remaining() <= 0.05:
                break
            res = self.check_sat(F.conj(hard, *chosen, softs[i][0]), timeout=remaining())
            if res.status == "sat":
                chosen.append(softs[i][0])
                weight += softs[i][1]
                model = res.model
        return SolveResult("sat", model, weight, exact=False, note="greedy soft search")


@dataclass
class AcceptabilityResult:
    accepted: bool
    violating_id: str | None = None
    status: str = ""  # status of the violating/undetermined check

    @property
    def undetermined(self) -> bool:
        return not self.accepted and self.status in ("unknown", "timeout")


def acceptability_check(
    backend,
    background: object,
    rule: object,
    positives: Sequence[tuple[str, object]],
    negatives: Sequence[tuple[str, object]],
    timeout: float = 10.0,
) -> AcceptabilityResult:
    """The two UNSAT conditions: B∧h∧¬e+ and B∧h∧e- must be unsat for all e.

    positives/negatives are (id, formula) pairs. Any unknown/timeout makes the
    overall result undetermined; it is never silently accepted.
    """
    for eid, pos in positives:
        res = backend.check_sat(F.conj(background, rule, F.neg(pos)), timeout)
        if res.status != "unsat":
            return AcceptabilityResult(False, eid, res.status)
    for eid, neg_f in negatives:
        res = backend.check_sat(F.conj(background, rule, neg_f), timeout)
        if res.status != "unsat":
            return AcceptabilityResult(False, eid, res.status)
    return AcceptabilityResult(True)

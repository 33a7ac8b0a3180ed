"""External SMT backend: any SMT-LIB2 solver spoken to over a child-process pipe.

One-shot protocol per query: emit set-logic / declare-const / assert /
assert-soft / check-sat / get-model, read the verdict and model back. Model
parsing accepts decimal, integer, rational `(/ a b)` and negated `(- c)`
literals. Solvers without assert-soft are driven by an iterative search over
soft-constraint subsets; solvers without `sin` get a piecewise-linear
overapproximation (sat models are always re-validated concretely).

The solver command comes from the constructor, the SMTILP_SOLVER_CMD
environment variable, a `z3` binary on PATH, or the bundled
`smtilp-minisolver` process, in that order.
"""

from __future__ import annotations

import math
import os
import shlex
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass

from . import formula as F
from .backend import (
    BackendError,
    MaxSmtInstance,
    ParamDecl,
    SolveResult,
    eval_bool_tol,
)

SIN_RANGE = 10 * math.pi
SIN_SEGMENTS = 256
FALLBACK_EXACT_SOFT = 12


def resolve_command(cmd: str | list[str] | None = None) -> list[str]:
    if cmd:
        return shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
    env_cmd = os.environ.get("SMTILP_SOLVER_CMD")
    if env_cmd:
        return shlex.split(env_cmd)
    z3 = shutil.which("z3")
    if z3:
        return [z3, "-in"]
    return [sys.executable, "-m", "smtilp.minisolver"]


# --- model output parsing -----------------------------------------------------


def _tokenize(text: str) -> list[str]:
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            out.append(ch)
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            out.append(text[i : j + 1])
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"':
                j += 1
            out.append(text[i:j])
            i = j
    return out


def _parse_sexprs(tokens: list[str]) -> list:
    pos = 0

    def one():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(one())
            if pos >= len(tokens):
                raise BackendError("unbalanced model output")
            pos += 1
            return items
        return tok

    exprs = []
    while pos < len(tokens):
        try:
            exprs.append(one())
        except BackendError:
            break
    return exprs


def _value(expr) -> float:
    """Evaluate a model value term: numerals, (- x), (/ a b), (+ ...), (* ...)."""
    if isinstance(expr, str):
        try:
            return float(expr)
        except ValueError:
            raise BackendError(f"unparseable model value {expr!r}") from None
    if not expr:
        raise BackendError("empty model value")
    op = expr[0]
    args = [_value(a) for a in expr[1:]]
    if op == "-":
        return -args[0] if len(args) == 1 else args[0] - args[1]
    if op == "/":
        return args[0] / args[1]
    if op == "+":
        return sum(args)
    if op == "*":
        out = 1.0
        for a in args:
            out *= a
        return out
    raise BackendError(f"unparseable model value head {op!r}")


def parse_model(text: str) -> dict[str, float]:
    model: dict[str, float] = {}
    for node in _parse_sexprs(_tokenize(text)):
        stack = [node]
        while stack:
            cur = stack.pop()
            if not isinstance(cur, list) or not cur:
                continue
            if cur[0] == "define-fun" and len(cur) >= 5:
                name = cur[1]
                try:
                    model[name] = _value(cur[-1])
                except BackendError:
                    continue
            else:
                stack.extend(c for c in cur if isinstance(c, list))
    return model


# --- sin overapproximation ------------------------------------------------------


def _chord_bounds() -> list[tuple[float, float, float, float, float]]:
    """(lo, hi, slope, intercept, slack) per segment of sin on [-10π, 10π]."""
    out = []
    width = 2 * SIN_RANGE / SIN_SEGMENTS
    slack = width * width / 8  # max |sin - chord| bound via |sin''| <= 1
    for k in range(SIN_SEGMENTS):
        a = -SIN_RANGE + k * width
        b = a + width
        slope = (math.sin(b) - math.sin(a)) / width
        intercept = math.sin(a) - slope * a
        out.append((a, b, slope, intercept, slack))
    return out


_SEGMENTS = _chord_bounds()


def rewrite_sin(f: object, defs: list, counter: list[int]) -> object:
    """Replace sin nodes by fresh variables with piecewise-linear envelopes."""
    if isinstance(f, (F.Var, F.Const, F.BoolConst)):
        return f
    if isinstance(f, F.Arith):
        args = tuple(rewrite_sin(a, defs, counter) for a in f.args)
        if f.op != "sin":
            return F.Arith(f.op, args)
        arg = args[0]
        name = f"_sin{counter[0]}"
        counter[0] += 1
        s = F.Var(name)
        cases = []
        for lo, hi, slope, intercept, slack in _SEGMENTS:
            chord = F.add(F.mul(F.Const(slope), arg), F.Const(intercept))
            cases.append(
                F.conj(
                    F.cmp("<=", F.Const(lo), arg),
                    F.cmp("<=", arg, F.Const(hi)),
                    F.cmp(">=", s, F.sub(chord, F.Const(slack))),
                    F.cmp("<=", s, F.add(chord, F.Const(slack))),
                )
            )
        for bound_cmp in ("<=", ">="):
            edge = -SIN_RANGE if bound_cmp == "<=" else SIN_RANGE
            cases.append(
                F.conj(
                    F.cmp(bound_cmp, arg, F.Const(edge)),
                    F.cmp(">=", s, F.Const(-1.0)),
                    F.cmp("<=", s, F.Const(1.0)),
                )
            )
        defs.append(F.disj(*cases))
        return s
    if isinstance(f, F.Cmp):
        return F.Cmp(f.op, rewrite_sin(f.lhs, defs, counter), rewrite_sin(f.rhs, defs, counter))
    if isinstance(f, F.BoolOp):
        return F.BoolOp(f.op, tuple(rewrite_sin(a, defs, counter) for a in f.args))
    raise F.FormulaError(f"not a formula node: {f!r}")


def _has_sin(f: object) -> bool:
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, F.Arith):
            if node.op == "sin":
                return True
            stack.extend(node.args)
        elif isinstance(node, F.Cmp):
            stack.extend((node.lhs, node.rhs))
        elif isinstance(node, F.BoolOp):
            stack.extend(node.args)
    return False


# --- the backend ------------------------------------------------------------------


@dataclass
class _Caps:
    assert_soft: bool | None = None
    native_sin: bool | None = None


class ExternalBackend:
    """SMT-LIB2 child-process backend (see module docstring)."""

    name = "external"
    wants_formulas = True

    def __init__(self, cmd: str | list[str] | None = None, seed: int = 0):
        self.cmd = resolve_command(cmd)
        self.seed = seed
        self._caps = _Caps()

    # -- process plumbing --

    def _run_script(self, script: str, timeout: float) -> str | None:
        """Run one script; None means the call timed out."""
        try:
            proc = subprocess.run(
                self.cmd,
                input=script,
                capture_output=True,
                text=True,
                timeout=max(0.1, timeout),
            )
        except subprocess.TimeoutExpired:
            return None
        except OSError as exc:
            raise BackendError(f"cannot run solver {self.cmd!r}: {exc}") from exc
        out = proc.stdout
        if not out.strip():
            raise BackendError(
                f"solver produced no output (rc={proc.returncode}, stderr={proc.stderr[:500]!r})"
            )
        return out

    @staticmethod
    def _status_of(output: str) -> str | None:
        for line in output.splitlines():
            token = line.strip()
            if token in ("sat", "unsat", "unknown"):
                return token
        return None

    # -- capability probes --

    def supports_assert_soft(self) -> bool:
        if self._caps.assert_soft is None:
            script = (
                "(set-option :produce-models true)\n"
                "(declare-const _probe Real)\n"
                "(assert-soft (> _probe 0.0) :weight 1)\n"
                "(check-sat)\n"
            )
            out = self._run_script(script, timeout=10.0)
            self._caps.assert_soft = out is not None and "error" not in out and (
                self._status_of(out) == "sat"
            )
        return self._caps.assert_soft

    def supports_sin(self) -> bool:
        if self._caps.native_sin is None:
            script = (
                "(declare-const _t Real)\n"
                "(assert (= _t (sin 0.0)))\n"
                "(check-sat)\n"
            )
            out = self._run_script(script, timeout=10.0)
            self._caps.native_sin = (
                out is not None and "error" not in out and self._status_of(out) == "sat"
            )
        return self._caps.native_sin

    # -- script assembly --

    def _prepare(self, formulas: list[object]) -> tuple[list[object], list[str], bool]:
        """Rewrite sin if needed; returns (formulas, extra vars, used_rewrite)."""
        if not any(_has_sin(f) for f in formulas):
            return formulas, [], False
        if self.supports_sin():
            return formulas, [], False
        defs: list = []
        counter = [0]
        rewritten = [rewrite_sin(f, defs, counter) for f in formulas]
        names = [f"_sin{i}" for i in range(counter[0])]
        return rewritten + defs, names, True

    @staticmethod
    def _script(
        declarations: list[ParamDecl],
        extra_vars: list[str],
        hards: list[object],
        softs: list[tuple[object, float]],
        logic: str,
    ) -> str:
        lines = ["(set-option :produce-models true)", f"(set-logic {logic})"]
        declared = set()
        for d in declarations:
            lines.append(f"(declare-const {d.name} Real)")
            declared.add(d.name)
            lines.append(
                f"(assert (and (<= {F._smt2_number(d.lower)} {d.name})"
                f" (<= {d.name} {F._smt2_number(d.upper)})))"
            )
        free = set()
        for f in hards:
            free |= F.variables(f)
        for f, _ in softs:
            free |= F.variables(f)
        for name in sorted(free | set(extra_vars)):
            if name not in declared:
                lines.append(f"(declare-const {name} Real)")
        for f in hards:
            lines.append(f"(assert {F.to_smt2(f)})")
        for f, w in softs:
            wtxt = repr(float(w)) if float(w) != int(w) else str(int(w))
            lines.append(f"(assert-soft {F.to_smt2(f)} :weight {wtxt})")
        lines.append("(check-sat)")
        lines.append("(get-model)")
        return "\n".join(lines) + "\n"

    def _logic_for(self, formulas: list[object]) -> str:
        return "QF_NRA" if any(F.is_nonlinear(f) for f in formulas) else "QF_LRA"

    # -- public surface --

    def check_sat(self, formula: object, timeout: float = 30.0) -> SolveResult:
        hards, extra, rewritten = self._prepare([F.fold(formula)])
        script = self._script([], extra, hards, [], self._logic_for(hards))
        out = self._run_script(script, timeout)
        if out is None:
            return SolveResult("timeout", None, exact=False)
        status = self._status_of(out)
        if status is None:
            raise BackendError(f"solver returned no verdict: {out[:500]!r}")
        if status == "sat":
            model = parse_model(out)
            if eval_bool_tol(formula, model):
                return SolveResult("sat", {k: v for k, v in model.items()
                                           if not k.startswith("_sin")})
            if rewritten:
                # overapproximate model failed the true formula
                return SolveResult("unknown", None, exact=False, note="pwl relaxation")
            return SolveResult("unknown", None, exact=False, note="model failed recheck")
        if status == "unsat":
            return SolveResult("unsat", None)
        return SolveResult("unknown", None, exact=False)

    def solve_maxsmt(self, instance: MaxSmtInstance) -> SolveResult:
        deadline = time.monotonic() + instance.timeout
        hards = [F.fold(h) for h in instance.hard]
        softs = [(F.fold(s), w) for s, w in instance.soft]
        all_f, extra, rewritten = self._prepare(hards + [s for s, _ in softs])
        if extra:
            n_h = len(hards)
            hards = all_f[:n_h] + all_f[len(hards) + len(softs):]
            softs = list(zip(all_f[n_h : n_h + len(softs)], (w for _, w in softs)))
        logic = self._logic_for(hards + [s for s, _ in softs])
        if not softs:
            script = self._script(instance.declarations, extra, hards, [], logic)
            return self._finish(script, instance, rewritten, deadline, exact=True)
        if self.supports_assert_soft():
            script = self._script(instance.declarations, extra, hards, softs, logic)
            return self._finish(script, instance, rewritten, deadline, exact=True)
        return self._soft_fallback(instance, extra, hards, softs, logic, rewritten, deadline)

    def _finish(
        self,
        script: str,
        instance: MaxSmtInstance,
        rewritten: bool,
        deadline: float,
        exact: bool,
    ) -> SolveResult:
        out = self._run_script(script, deadline - time.monotonic())
        if out is None:
            return SolveResult("timeout", None, exact=False)
        status = self._status_of(out)
        if status is None:
            raise BackendError(f"solver returned no verdict: {out[:500]!r}")
        if status == "unsat":
            return SolveResult("unsat", None)
        if status != "sat":
            return SolveResult("unknown", None, exact=False)
        model = parse_model(out)
        params = {
            d.name: model.get(d.name, (d.lower + d.upper) / 2.0)
            for d in instance.declarations
        }
        full = dict(model)
        full.update(params)
        for h in instance.hard:
            if not eval_bool_tol(h, full):
                if rewritten:
                    return SolveResult("unknown", None, exact=False, note="pwl relaxation")
                return SolveResult("unknown", None, exact=False, note="model failed recheck")
        weight = sum(w for f, w in instance.soft if eval_bool_tol(f, full))
        return SolveResult("sat", params, weight, exact=exact)

    def _soft_fallback(
        self, instance, extra, hards, softs, logic, rewritten, deadline
    ) -> SolveResult:
        """Iterative search over soft subsets for solvers without assert-soft."""
        n = len(softs)
        weights = [w for _, w in softs]

        def attempt(indices: list[int]) -> SolveResult:
            chosen = [softs[i][0] for i in indices]
            script = self._script(
                instance.declarations, extra, hards + chosen, [], logic
            )
            return self._finish(script, instance, rewritten, deadline, exact=False)

        if 2**n <= 2**FALLBACK_EXACT_SOFT:
            masks = sorted(
                range(2**n),
                key=lambda m: (-sum(weights[i] for i in range(n) if m >> i & 1), m),
            )
            cores: list[int] = []
            for mask in masks:
                if time.monotonic() > deadline:
                    return SolveResult("timeout", None, exact=False)
                if any(mask & core == core for core in cores):
                    continue
                res = attempt([i for i in range(n) if mask >> i & 1])
                if res.status == "sat":
                    res.exact = True
                    return res
                if res.status == "timeout":
                    return res
                if res.status == "unsat":
                    cores.append(mask)
            return SolveResult("unsat", None)
        # greedy: add softs in decreasing weight while feasible
        chosen: list[int] = []
        best: SolveResult | None = None
        for i in sorted(range(n), key=lambda i: -weights[i]):
            if time.monotonic() > deadline:
                break
            res = attempt(chosen + [i])
            if res.status == "sat":
                chosen.append(i)
                best = res
        if best is None:
            res = attempt([])
            if res.status != "sat":
                return res
            best = res
        best.exact = False
        best.note = "greedy soft search"
        return best

"""Quantifier-free real-arithmetic formula trees.

Nodes cover real variables/constants, {+,-,*,/,abs,sin}, the five comparators,
and boolean and/or/not/constants. Utilities: concrete evaluation (total for
finite inputs, errors on div-by-zero and non-finite values), substitution,
constant folding, linear-form extraction, and SMT-LIB2 printing with exact
rational literals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping

MAX_DEPTH = 64

ARITH_OPS = ("+", "-", "*", "/", "abs", "sin")
CMP_OPS = ("<", "<=", "=", ">=", ">")
BOOL_OPS = ("and", "or", "not")


class FormulaError(ValueError):
    """Ill-formed tree, depth overflow, or evaluation fault."""


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Arith:
    op: str
    args: tuple

    def __post_init__(self) -> None:
        if self.op not in ARITH_OPS:
            raise FormulaError(f"bad arithmetic op {self.op!r}")
        want = 1 if self.op in ("abs", "sin") else 2
        if len(self.args) != want:
            raise FormulaError(f"{self.op} expects {want} args, got {len(self.args)}")


@dataclass(frozen=True)
class Cmp:
    op: str
    lhs: object
    rhs: object

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise FormulaError(f"bad comparator {self.op!r}")


@dataclass(frozen=True)
class BoolOp:
    op: str
    args: tuple

    def __post_init__(self) -> None:
        if self.op not in BOOL_OPS:
            raise FormulaError(f"bad boolean op {self.op!r}")
        if self.op == "not" and len(self.args) != 1:
            raise FormulaError("not expects one arg")


@dataclass(frozen=True)
class BoolConst:
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)

Formula = object  # union of the node classes above


def add(a, b):
    return Arith("+", (a, b))


def sub(a, b):
    return Arith("-", (a, b))


def mul(a, b):
    return Arith("*", (a, b))


def div(a, b):
    return Arith("/", (a, b))


def absval(a):
    return Arith("abs", (a,))


def sin(a):
    return Arith("sin", (a,))


def cmp(op: str, lhs, rhs) -> Cmp:
    return Cmp(op, lhs, rhs)


def conj(*parts) -> Formula:
    flat = [p for p in parts if p != TRUE]
    if any(p == FALSE for p in flat):
        return FALSE
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return BoolOp("and", tuple(flat))


def disj(*parts) -> Formula:
    flat = [p for p in parts if p != FALSE]
    if any(p == TRUE for p in flat):
        return TRUE
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return BoolOp("or", tuple(flat))


def neg(part) -> Formula:
    if part == TRUE:
        return FALSE
    if part == FALSE:
        return TRUE
    return BoolOp("not", (part,))


def depth(f: Formula) -> int:
    if isinstance(f, (Var, Const, BoolConst)):
        return 1
    if isinstance(f, Arith):
        return 1 + max(depth(a) for a in f.args)
    if isinstance(f, Cmp):
        return 1 + max(depth(f.lhs), depth(f.rhs))
    if isinstance(f, BoolOp):
        return 1 + max(depth(a) for a in f.args)
    raise FormulaError(f"not a formula node: {f!r}")


def check_depth(f: Formula) -> None:
    if depth(f) > MAX_DEPTH:
        raise FormulaError(f"formula deeper than {MAX_DEPTH}")


def variables(f: Formula) -> set[str]:
    out: set[str] = set()
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Arith):
            stack.extend(node.args)
        elif isinstance(node, Cmp):
            stack.append(node.lhs)
            stack.append(node.rhs)
        elif isinstance(node, BoolOp):
            stack.extend(node.args)
    return out


def _check_finite(x: float) -> float:
    if not math.isfinite(x):
        raise FormulaError(f"non-finite value {x!r} in evaluation")
    return x


def eval_real(f: Formula, env: Mapping[str, float]) -> float:
    if isinstance(f, Const):
        return _check_finite(f.value)
    if isinstance(f, Var):
        try:
            return _check_finite(env[f.name])
        except KeyError:
            raise FormulaError(f"unbound variable {f.name!r}") from None
    if isinstance(f, Arith):
        if f.op == "+":
            return _check_finite(eval_real(f.args[0], env) + eval_real(f.args[1], env))
        if f.op == "-":
            return _check_finite(eval_real(f.args[0], env) - eval_real(f.args[1], env))
        if f.op == "*":
            return _check_finite(eval_real(f.args[0], env) * eval_real(f.args[1], env))
        if f.op == "/":
            d = eval_real(f.args[1], env)
            if d == 0.0:
                raise FormulaError("division by zero")
            return _check_finite(eval_real(f.args[0], env) / d)
        if f.op == "abs":
            return abs(eval_real(f.args[0], env))
        return _check_finite(math.sin(eval_real(f.args[0], env)))
    raise FormulaError(f"not a real-valued node: {f!r}")


_CMP_FN = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def eval_bool(f: Formula, env: Mapping[str, float]) -> bool:
    if isinstance(f, BoolConst):
        return f.value
    if isinstance(f, Cmp):
        return _CMP_FN[f.op](eval_real(f.lhs, env), eval_real(f.rhs, env))
    if isinstance(f, BoolOp):
        if f.op == "and":
            return all(eval_bool(a, env) for a in f.args)
        if f.op == "or":
            return any(eval_bool(a, env) for a in f.args)
        return not eval_bool(f.args[0], env)
    raise FormulaError(f"not a boolean node: {f!r}")


def substitute(f: Formula, env: Mapping[str, float]) -> Formula:
    """Replace any variable present in env by a constant."""
    if isinstance(f, Var):
        return Const(float(env[f.name])) if f.name in env else f
    if isinstance(f, (Const, BoolConst)):
        return f
    if isinstance(f, Arith):
        return Arith(f.op, tuple(substitute(a, env) for a in f.args))
    if isinstance(f, Cmp):
        return Cmp(f.op, substitute(f.lhs, env), substitute(f.rhs, env))
    if isinstance(f, BoolOp):
        return BoolOp(f.op, tuple(substitute(a, env) for a in f.args))
    raise FormulaError(f"not a formula node: {f!r}")


def fold(f: Formula) -> Formula:
    """Constant folding; never changes satisfiability."""
    if isinstance(f, (Var, Const, BoolConst)):
        return f
    if isinstance(f, Arith):
        args = tuple(fold(a) for a in f.args)
        if all(isinstance(a, Const) for a in args):
            return Const(eval_real(Arith(f.op, args), {}))
        return Arith(f.op, args)
    if isinstance(f, Cmp):
        lhs, rhs = fold(f.lhs), fold(f.rhs)
        if isinstance(lhs, Const) and isinstance(rhs, Const):
            return BoolConst(_CMP_FN[f.op](lhs.value, rhs.value))
        return Cmp(f.op, lhs, rhs)
    if isinstance(f, BoolOp):
        args = [fold(a) for a in f.args]
        if f.op == "not":
            return neg(args[0])
        if f.op == "and":
            return conj(*args)
        return disj(*args)
    raise FormulaError(f"not a formula node: {f!r}")


# --- linear-form extraction --------------------------------------------------


def linear_form(expr: Formula) -> dict[str, float] | None:
    """Coefficients of a linear real expression, or None if nonlinear.

    Returns {var: coeff, "": constant}. abs/sin and variable*variable
    products are nonlinear; division only by a nonzero constant is linear.
    """
    if isinstance(expr, Const):
        return {"": expr.value}
    if isinstance(expr, Var):
        return {expr.name: 1.0, "": 0.0}
    if not isinstance(expr, Arith):
        return None
    if expr.op in ("abs", "sin"):
        return None
    a = linear_form(expr.args[0])
    if a is None:
        return None
    b = linear_form(expr.args[1])
    if b is None:
        return None
    if expr.op == "+":
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, 0.0) + v
        return out
    if expr.op == "-":
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, 0.0) - v
        return out
    if expr.op == "*":
        a_vars = [k for k, v in a.items() if k and v != 0.0]
        b_vars = [k for k, v in b.items() if k and v != 0.0]
        if a_vars and b_vars:
            return None
        scalar, linear = (a, b) if not a_vars else (b, a)
        s = scalar.get("", 0.0)
        return {k: v * s for k, v in linear.items()}
    # division: only by a nonzero constant
    b_vars = [k for k, v in b.items() if k and v != 0.0]
    if b_vars or b.get("", 0.0) == 0.0:
        return None
    d = b[""]
    return {k: v / d for k, v in a.items()}


def linear_atom(atom: Cmp) -> tuple[dict[str, float], str, float] | None:
    """Normalize `lhs op rhs` to (coeffs, op, bound) meaning coeffs·x op bound."""
    lhs = linear_form(atom.lhs)
    rhs = linear_form(atom.rhs)
    if lhs is None or rhs is None:
        return None
    coeffs = dict(lhs)
    for k, v in rhs.items():
        coeffs[k] = coeffs.get(k, 0.0) - v
    bound = -coeffs.pop("", 0.0)
    coeffs = {k: v for k, v in coeffs.items() if v != 0.0}
    return coeffs, atom.op, bound


# --- SMT-LIB2 printing --------------------------------------------------------


def _smt2_number(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        body = f"{abs(int(x))}.0"
        mag = body
    else:
        frac = Fraction(abs(x)).limit_denominator(10**12)
        if float(frac) != abs(x):
            frac = Fraction(abs(x))
        mag = f"(/ {frac.numerator}.0 {frac.denominator}.0)"
    return f"(- {mag})" if x < 0 else mag


def to_smt2(f: Formula) -> str:
    if isinstance(f, Var):
        return f.name
    if isinstance(f, Const):
        return _smt2_number(f.value)
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Arith):
        if f.op == "abs":
            a = to_smt2(f.args[0])
            return f"(ite (< {a} 0.0) (- {a}) {a})"
        if f.op == "sin":
            return f"(sin {to_smt2(f.args[0])})"
        return f"({f.op} {to_smt2(f.args[0])} {to_smt2(f.args[1])})"
    if isinstance(f, Cmp):
        return f"({f.op} {to_smt2(f.lhs)} {to_smt2(f.rhs)})"
    if isinstance(f, BoolOp):
        return f"({f.op} {' '.join(to_smt2(a) for a in f.args)})"
    raise FormulaError(f"not a formula node: {f!r}")


def is_nonlinear(f: Formula) -> bool:
    """True if the formula needs NRA (var*var products, abs, or sin)."""
    if isinstance(f, (Var, Const, BoolConst)):
        return False
    if isinstance(f, Cmp):
        return linear_atom(f) is None
    if isinstance(f, (Arith,)):
        return linear_form(f) is None
    if isinstance(f, BoolOp):
        return any(is_nonlinear(a) for a in f.args)
    raise FormulaError(f"not a formula node: {f!r}")


def iter_atoms(f: Formula) -> Iterator[Cmp]:
    stack = [f]
    while stack:
        node = stack.pop()
        if isinstance(node, Cmp):
            yield node
        elif isinstance(node, BoolOp):
            stack.extend(node.args)

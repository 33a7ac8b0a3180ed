"""Parametric numeric-constraint families.

Each template couples a symbolic form (a formula tree over argument slots
a0..a{n-1} and named parameters) with a vectorized numpy evaluator. The same
form drives concrete evaluation, SMT encoding, and the builtin fitter, so the
three routes cannot drift apart silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import formula as F

PARAM_DOMAIN = (-100.0, 100.0)


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class ConstraintTemplate:
    id: str
    arity: int
    params: tuple[tuple[str, float, float], ...]  # (name, lower, upper)
    theory: str  # "LRA" | "NRA"
    form: object  # formula over Var("a<i>") and Var(param_name)

    def __post_init__(self) -> None:
        for name, lo, hi in self.params:
            if not (PARAM_DOMAIN[0] <= lo <= hi <= PARAM_DOMAIN[1]):
                raise TemplateError(f"{self.id}: bounds for {name} outside {PARAM_DOMAIN}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.params)

    def bounds(self, name: str) -> tuple[float, float]:
        for n, lo, hi in self.params:
            if n == name:
                return lo, hi
        raise TemplateError(f"{self.id}: unknown parameter {name!r}")


def _a(i: int) -> F.Var:
    return F.Var(f"a{i}")


def _p(name: str) -> F.Var:
    return F.Var(name)


def _sq(x):
    return F.mul(x, x)


def _build_catalogue() -> dict[str, ConstraintTemplate]:
    x, y, z = _a(0), _a(1), _a(2)
    t: list[ConstraintTemplate] = []

    t.append(
        ConstraintTemplate(
            "interval1d",
            1,
            (("lo", -100.0, 100.0), ("hi", -100.0, 100.0)),
            "LRA",
            F.conj(F.cmp("<", _p("lo"), x), F.cmp("<", x, _p("hi"))),
        )
    )
    t.append(
        ConstraintTemplate(
            "halfplane2d",
            2,
            (("a", -100.0, 100.0), ("b", -100.0, 100.0), ("t", -100.0, 100.0)),
            "LRA",
            F.cmp("<=", F.add(F.mul(_p("a"), x), F.mul(_p("b"), y)), _p("t")),
        )
    )
    t.append(
        ConstraintTemplate(
            "halfplane3d",
            3,
            (
                ("a", -100.0, 100.0),
                ("b", -100.0, 100.0),
                ("c", -100.0, 100.0),
                ("d", -100.0, 100.0),
            ),
            "LRA",
            F.cmp(
                "<=",
                F.add(F.add(F.mul(_p("a"), x), F.mul(_p("b"), y)), F.mul(_p("c"), z)),
                _p("d"),
            ),
        )
    )
    for op, suffix in (("<", "lt"), ("<=", "le"), ("=", "eq"), (">=", "ge"), (">", "gt")):
        t.append(ConstraintTemplate(f"varcmp_{suffix}", 2, (), "LRA", F.cmp(op, x, y)))
    t.append(
        ConstraintTemplate(
            "box2d",
            2,
            (
                ("x_min", -100.0, 100.0),
                ("x_max", -100.0, 100.0),
                ("y_min", -100.0, 100.0),
                ("y_max", -100.0, 100.0),
            ),
            "LRA",
            F.conj(
                F.cmp("<=", _p("x_min"), x),
                F.cmp("<=", x, _p("x_max")),
                F.cmp("<=", _p("y_min"), y),
                F.cmp("<=", y, _p("y_max")),
            ),
        )
    )
    # slots: (xa, ya, xp, yp, xb, yb) for points A, P, B
    xa, ya, xp, yp, xb, yb = (_a(i) for i in range(6))
    cross = F.sub(
        F.mul(F.sub(xp, xa), F.sub(yb, ya)), F.mul(F.sub(yp, ya), F.sub(xb, xa))
    )
    t.append(
        ConstraintTemplate(
            "collinear3pt",
            6,
            (("eps", 1e-9, 1.0),),
            "NRA",
            F.cmp("<=", F.absval(cross), _p("eps")),
        )
    )
    dot = F.add(
        F.mul(F.sub(xp, xa), F.sub(xb, xp)), F.mul(F.sub(yp, ya), F.sub(yb, yp))
    )
    t.append(ConstraintTemplate("between3pt", 6, (), "NRA", F.cmp(">=", dot, F.Const(0.0))))
    # slots: (xp, yp, xq, yq)
    xq, yq = _a(2), _a(3)
    dist2 = F.add(_sq(F.sub(x, xq)), _sq(F.sub(y, yq)))
    t.append(
        ConstraintTemplate(
            "distance_threshold",
            4,
            (("d", 0.0, 100.0),),
            "NRA",
            F.cmp("<=", dist2, _sq(_p("d"))),
        )
    )
    rad2 = F.add(_sq(x), _sq(y))
    t.append(
        ConstraintTemplate(
            "circle", 2, (("r", 0.0, 100.0),), "NRA", F.cmp("<=", rad2, _sq(_p("r")))
        )
    )
    t.append(
        ConstraintTemplate(
            "circle_outside", 2, (("r", 0.0, 100.0),), "NRA", F.cmp(">=", rad2, _sq(_p("r")))
        )
    )
    t.append(
        ConstraintTemplate(
            "annulus",
            2,
            (("r_min", 0.0, 100.0), ("r_max", 0.0, 100.0)),
            "NRA",
            F.conj(
                F.cmp("<=", _sq(_p("r_min")), rad2), F.cmp("<=", rad2, _sq(_p("r_max")))
            ),
        )
    )
    t.append(
        ConstraintTemplate(
            "ellipse",
            2,
            (("a", 0.1, 100.0), ("b", 0.1, 100.0)),
            "NRA",
            F.cmp(
                "<=",
                F.add(_sq(F.div(x, _p("a"))), _sq(F.div(y, _p("b")))),
                F.Const(1.0),
            ),
        )
    )
    t.append(
        ConstraintTemplate(
            "hyperbola_side",
            2,
            (("c", -100.0, 100.0),),
            "NRA",
            F.cmp("<=", F.sub(_sq(x), _sq(y)), _p("c")),
        )
    )
    t.append(
        ConstraintTemplate(
            "product_threshold",
            2,
            (("c", -100.0, 100.0),),
            "NRA",
            F.cmp("<", F.mul(x, y), _p("c")),
        )
    )
    strip = F.sub(y, F.mul(_p("a"), _sq(x)))
    t.append(
        ConstraintTemplate(
            "quad_strip",
            2,
            (("a", -5.0, 5.0), ("lo", -100.0, 100.0), ("hi", -100.0, 100.0)),
            "NRA",
            F.conj(F.cmp("<=", _p("lo"), strip), F.cmp("<=", strip, _p("hi"))),
        )
    )
    t.append(
        ConstraintTemplate(
            "parabola",
            2,
            (("a", -5.0, 5.0), ("b", -100.0, 100.0), ("c", -100.0, 100.0)),
            "NRA",
            F.cmp(
                ">=",
                y,
                F.add(F.add(F.mul(_p("a"), _sq(x)), F.mul(_p("b"), x)), _p("c")),
            ),
        )
    )
    t.append(
        ConstraintTemplate(
            "abs_box",
            2,
            (("s", 0.0, 100.0),),
            "NRA",
            F.conj(
                F.cmp("<=", F.absval(x), _p("s")), F.cmp("<=", F.absval(y), _p("s"))
            ),
        )
    )
    t.append(
        ConstraintTemplate(
            "sinusoid",
            2,
            (("omega", 0.1, 10.0), ("phi", -100.0, 100.0)),
            "NRA",
            F.cmp(">=", y, F.add(F.sin(F.mul(_p("omega"), x)), _p("phi"))),
        )
    )
    t.append(
        ConstraintTemplate(
            "influence_threshold",
            1,
            (("tau", -100.0, 100.0),),
            "LRA",
            F.cmp(">", x, _p("tau")),
        )
    )
    return {tpl.id: tpl for tpl in t}


CATALOGUE: dict[str, ConstraintTemplate] = _build_catalogue()

VARCMP_IDS = tuple(tid for tid in CATALOGUE if tid.startswith("varcmp_"))


def get(template_id: str) -> ConstraintTemplate:
    try:
        return CATALOGUE[template_id]
    except KeyError:
        raise TemplateError(f"unknown template {template_id!r}") from None


def _check_params(tpl: ConstraintTemplate, params: Mapping[str, float]) -> None:
    for name, lo, hi in tpl.params:
        if name not in params:
            raise TemplateError(f"{tpl.id}: missing parameter {name!r}")
        v = params[name]
        if not math.isfinite(v):
            raise TemplateError(f"{tpl.id}: non-finite parameter {name}={v!r}")
        if not (lo <= v <= hi):
            raise TemplateError(f"{tpl.id}: {name}={v} outside [{lo}, {hi}]")


def evaluate(
    template: ConstraintTemplate | str,
    params: Mapping[str, float],
    args: Sequence[float],
) -> bool:
    """Concrete truth value of the template form; errors on bad inputs."""
    tpl = get(template) if isinstance(template, str) else template
    if len(args) != tpl.arity:
        raise TemplateError(f"{tpl.id}: expected {tpl.arity} args, got {len(args)}")
    for v in args:
        if not math.isfinite(v):
            raise TemplateError(f"{tpl.id}: non-finite argument {v!r}")
    _check_params(tpl, params)
    env = {f"a{i}": float(v) for i, v in enumerate(args)}
    env.update({name: float(params[name]) for name in tpl.param_names})
    return F.eval_bool(tpl.form, env)


def encode(
    template: ConstraintTemplate | str,
    slots: Sequence[object],
    params: Mapping[str, object] | None = None,
) -> object:
    """Formula for the template over the given slots.

    Slot/param entries are floats (concrete) or formula nodes (symbolic).
    Bound constraints are conjoined for every symbolic parameter; the result
    is constant-folded.
    """
    tpl = get(template) if isinstance(template, str) else template
    if len(slots) != tpl.arity:
        raise TemplateError(f"{tpl.id}: expected {tpl.arity} slots, got {len(slots)}")
    params = dict(params or {})
    mapping: dict[str, object] = {}
    for i, s in enumerate(slots):
        mapping[f"a{i}"] = F.Const(float(s)) if isinstance(s, (int, float)) else s
    bound_parts = []
    for name, lo, hi in tpl.params:
        given = params.get(name, F.Var(name))
        if isinstance(given, (int, float)):
            mapping[name] = F.Const(float(given))
        else:
            mapping[name] = given
            bound_parts.append(F.cmp("<=", F.Const(lo), given))
            bound_parts.append(F.cmp("<=", given, F.Const(hi)))

    def rewrite(node):
        if isinstance(node, F.Var):
            return mapping.get(node.name, node)
        if isinstance(node, (F.Const, F.BoolConst)):
            return node
        if isinstance(node, F.Arith):
            return F.Arith(node.op, tuple(rewrite(a) for a in node.args))
        if isinstance(node, F.Cmp):
            return F.Cmp(node.op, rewrite(node.lhs), rewrite(node.rhs))
        if isinstance(node, F.BoolOp):
            return F.BoolOp(node.op, tuple(rewrite(a) for a in node.args))
        raise TemplateError(f"bad form node {node!r}")

    return F.fold(F.conj(rewrite(tpl.form), *bound_parts))


# --- vectorized evaluators ----------------------------------------------------
# A is an (n, arity) array of concrete argument rows; returns a boolean mask.


def _np_eval(tid: str, p: Mapping[str, float], A: np.ndarray) -> np.ndarray:
    if tid == "interval1d":
        return (p["lo"] < A[:, 0]) & (A[:, 0] < p["hi"])
    if tid == "halfplane2d":
        return p["a"] * A[:, 0] + p["b"] * A[:, 1] <= p["t"]
    if tid == "halfplane3d":
        return p["a"] * A[:, 0] + p["b"] * A[:, 1] + p["c"] * A[:, 2] <= p["d"]
    if tid.startswith("varcmp_"):
        op = tid.split("_")[1]
        fn = {
            "lt": np.less,
            "le": np.less_equal,
            "eq": np.equal,
            "ge": np.greater_equal,
            "gt": np.greater,
        }[op]
        return fn(A[:, 0], A[:, 1])
    if tid == "box2d":
        return (
            (p["x_min"] <= A[:, 0])
            & (A[:, 0] <= p["x_max"])
            & (p["y_min"] <= A[:, 1])
            & (A[:, 1] <= p["y_max"])
        )
    if tid == "collinear3pt":
        cross = (A[:, 2] - A[:, 0]) * (A[:, 5] - A[:, 1]) - (A[:, 3] - A[:, 1]) * (
            A[:, 4] - A[:, 0]
        )
        return np.abs(cross) <= p["eps"]
    if tid == "between3pt":
        dot = (A[:, 2] - A[:, 0]) * (A[:, 4] - A[:, 2]) + (A[:, 3] - A[:, 1]) * (
            A[:, 5] - A[:, 3]
        )
        return dot >= 0.0
    if tid == "distance_threshold":
        d2 = (A[:, 0] - A[:, 2]) ** 2 + (A[:, 1] - A[:, 3]) ** 2
        return d2 <= p["d"] ** 2
    if tid == "circle":
        return A[:, 0] ** 2 + A[:, 1] ** 2 <= p["r"] ** 2
    if tid == "circle_outside":
        return A[:, 0] ** 2 + A[:, 1] ** 2 >= p["r"] ** 2
    if tid == "annulus":
        r2 = A[:, 0] ** 2 + A[:, 1] ** 2
        return (p["r_min"] ** 2 <= r2) & (r2 <= p["r_max"] ** 2)
    if tid == "ellipse":
        return (A[:, 0] / p["a"]) ** 2 + (A[:, 1] / p["b"]) ** 2 <= 1.0
    if tid == "hyperbola_side":
        return A[:, 0] ** 2 - A[:, 1] ** 2 <= p["c"]
    if tid == "product_threshold":
        return A[:, 0] * A[:, 1] < p["c"]
    if tid == "quad_strip":
        s = A[:, 1] - p["a"] * A[:, 0] ** 2
        return (p["lo"] <= s) & (s <= p["hi"])
    if tid == "parabola":
        return A[:, 1] >= p["a"] * A[:, 0] ** 2 + p["b"] * A[:, 0] + p["c"]
    if tid == "abs_box":
        return (np.abs(A[:, 0]) <= p["s"]) & (np.abs(A[:, 1]) <= p["s"])
    if tid == "sinusoid":
        return A[:, 1] >= np.sin(p["omega"] * A[:, 0]) + p["phi"]
    if tid == "influence_threshold":
        return A[:, 0] > p["tau"]
    raise TemplateError(f"no vectorized evaluator for {tid!r}")


def evaluate_rows(
    template: ConstraintTemplate | str,
    params: Mapping[str, float],
    rows: np.ndarray,
) -> np.ndarray:
    """Vectorized evaluate over an (n, arity) array of argument rows."""
    tpl = get(template) if isinstance(template, str) else template
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != tpl.arity:
        raise TemplateError(f"{tpl.id}: rows must be (n, {tpl.arity})")
    _check_params(tpl, params)
    return _np_eval(tpl.id, params, rows)

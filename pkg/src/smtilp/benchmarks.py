"""Deterministic generators for the five benchmark families.

Every task fixes its ground-truth parameters as constants below; points are
sampled uniformly from [-10, 10]^d (random digraphs for the influence tasks),
labeled by the task's formula, rebalanced to an exact 50/50 class split, and
filtered by a margin band so no retained example sits within `margin` of the
decision boundary (in the task's normalized units). The 70/30 train/test
split is a seeded permutation; identical specs produce byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .logic import Dataset, Example, GroundAtom

DOMAIN = 10.0
N_GEOMETRY = 200
N_IP = 300
IP_NODES = 60
IP_EDGE_PROB = 0.055
MARGIN = 0.25
MAX_DRAWS = 10**6


class GeneratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    family: str
    task_name: str
    n_examples: int
    seed: int
    split_ratio: float = 0.7


# --- ground-truth definitions -----------------------------------------------------

Meas = dict[tuple[str, str], float]


def _get(m: Meas, role: str, attr: str) -> float:
    try:
        return m[(role, attr)]
    except KeyError:
        raise GeneratorError(f"missing attribute {attr!r} for object {role!r}") from None


def _halfplane_margin(coefs, bound, vals) -> float:
    lhs = sum(c * v for c, v in zip(coefs, vals))
    return abs(lhs - bound) / math.sqrt(sum(c * c for c in coefs))


def _box_dist(x: float, y: float, x0: float, x1: float, y0: float, y1: float) -> float:
    """Distance from (x, y) to the boundary of the axis box [x0,x1]x[y0,y1]."""
    inside = x0 <= x <= x1 and y0 <= y <= y1
    if inside:
        return min(x - x0, x1 - x, y - y0, y1 - y)
    dx = max(x0 - x, x - x1, 0.0)
    dy = max(y0 - y, y - y1, 0.0)
    return math.hypot(dx, dy)


@dataclass(frozen=True)
class TaskDef:
    family: str
    name: str
    head_pred: str
    roles: tuple[tuple[str, tuple[str, ...]], ...]  # (role, attrs) per head arg
    params: dict
    label: Callable[[Meas, dict], bool]
    margin: Callable[[Meas, dict], float]
    margin_width: float = MARGIN


def _cross(m: Meas) -> float:
    xa, ya = _get(m, "a", "x"), _get(m, "a", "y")
    xp, yp = _get(m, "p", "x"), _get(m, "p", "y")
    xb, yb = _get(m, "b", "x"), _get(m, "b", "y")
    return (xp - xa) * (yb - ya) - (yp - ya) * (xb - xa)


def _dot(m: Meas) -> float:
    xa, ya = _get(m, "a", "x"), _get(m, "a", "y")
    xp, yp = _get(m, "p", "x"), _get(m, "p", "y")
    xb, yb = _get(m, "b", "x"), _get(m, "b", "y")
    return (xp - xa) * (xb - xp) + (yp - ya) * (yb - yp)


def _build_tasks() -> dict[str, TaskDef]:
    tasks: dict[str, TaskDef] = {}

    def add(family, name, head_pred, roles, params, label, margin, width=MARGIN):
        tasks[name] = TaskDef(family, name, head_pred, roles, params, label, margin, width)

    P1 = (("p", ("x",)),)
    P2 = (("p", ("x", "y")),)
    P3 = (("p", ("x", "y", "z")),)

    # -- geometry0: basic linear constraints --
    add(
        "geometry0", "interval", "target", P1, {"lo": -3.0, "hi": 4.0},
        lambda m, p: p["lo"] < _get(m, "p", "x") < p["hi"],
        lambda m, p: min(abs(_get(m, "p", "x") - p["lo"]), abs(_get(m, "p", "x") - p["hi"])),
    )
    add(
        "geometry0", "halfplane", "target", P2, {"a": 1.0, "b": 2.0, "t": 3.0},
        lambda m, p: p["a"] * _get(m, "p", "x") + p["b"] * _get(m, "p", "y") <= p["t"],
        lambda m, p: _halfplane_margin(
            (p["a"], p["b"]), p["t"], (_get(m, "p", "x"), _get(m, "p", "y"))
        ),
    )

    # -- geometry1: 3D and conjunctive constraints --
    def hp3(m, p):
        return (
            p["a"] * _get(m, "p", "x") + p["b"] * _get(m, "p", "y")
            + p["c"] * _get(m, "p", "z")
        )

    add(
        "geometry1", "halfplane_3d", "target", P3,
        {"a": 1.0, "b": 2.0, "c": -1.0, "d": 4.0},
        lambda m, p: hp3(m, p) <= p["d"],
        lambda m, p: abs(hp3(m, p) - p["d"]) / math.sqrt(p["a"]**2 + p["b"]**2 + p["c"]**2),
    )
    add(
        "geometry1", "conjunction", "target", P3,
        {"a": 1.0, "b": 2.0, "c": -1.0, "d": 4.0, "lo": -2.0, "hi": 5.0},
        lambda m, p: hp3(m, p) <= p["d"] and p["lo"] < _get(m, "p", "x") < p["hi"],
        lambda m, p: min(
            abs(hp3(m, p) - p["d"]) / math.sqrt(6.0),
            abs(_get(m, "p", "x") - p["lo"]),
            abs(_get(m, "p", "x") - p["hi"]),
        ),
    )
    add(
        "geometry1", "interval_3d", "target", P3,
        {"bounds": ((-4.0, 4.0), (-3.0, 5.0), (-6.0, 2.0))},
        lambda m, p: all(
            lo < _get(m, "p", a) < hi for a, (lo, hi) in zip("xyz", p["bounds"])
        ),
        lambda m, p: min(
            min(abs(_get(m, "p", a) - lo), abs(_get(m, "p", a) - hi))
            for a, (lo, hi) in zip("xyz", p["bounds"])
        ),
    )
    add(
        "geometry1", "multiple_halfplanes", "target", P3,
        {"planes": (((1.0, 1.0, 1.0), 6.0), ((1.0, -1.0, 0.0), 3.0))},
        lambda m, p: all(
            sum(c * _get(m, "p", a) for c, a in zip(coefs, "xyz")) <= b
            for coefs, b in p["planes"]
        ),
        lambda m, p: min(
            _halfplane_margin(coefs, b, tuple(_get(m, "p", a) for a in "xyz"))
            for coefs, b in p["planes"]
        ),
    )

    # -- geometry2: relational spatial constraints --
    PQ = (("p", ("x", "y")), ("q", ("x", "y")))
    PAB = (("p", ("x", "y")), ("a", ("x", "y")), ("b", ("x", "y")))
    BOX = ("x_min", "x_max", "y_min", "y_max")
    PR = (("p", ("x", "y")), ("r", BOX))
    RS = (("r", BOX), ("s", BOX))

    def dist_pq(m):
        return math.hypot(
            _get(m, "p", "x") - _get(m, "q", "x"), _get(m, "p", "y") - _get(m, "q", "y")
        )

    add(
        "geometry2", "left_of", "left_of", PQ, {},
        lambda m, p: _get(m, "p", "x") < _get(m, "q", "x"),
        lambda m, p: abs(_get(m, "p", "x") - _get(m, "q", "x")),
    )
    add(
        "geometry2", "closer_than", "closer_than", PQ, {"d": 5.0},
        lambda m, p: dist_pq(m) <= p["d"],
        lambda m, p: abs(dist_pq(m) - p["d"]),
    )
    add(
        "geometry2", "touching", "touching", PQ, {"d": 2.0},
        lambda m, p: dist_pq(m) <= p["d"],
        lambda m, p: abs(dist_pq(m) - p["d"]),
    )
    add(
        "geometry2", "inside", "inside", PR, {},
        lambda m, p: (
            _get(m, "r", "x_min") <= _get(m, "p", "x") <= _get(m, "r", "x_max")
            and _get(m, "r", "y_min") <= _get(m, "p", "y") <= _get(m, "r", "y_max")
        ),
        lambda m, p: _box_dist(
            _get(m, "p", "x"), _get(m, "p", "y"),
            _get(m, "r", "x_min"), _get(m, "r", "x_max"),
            _get(m, "r", "y_min"), _get(m, "r", "y_max"),
        ),
    )
    add(
        "geometry2", "overlapping", "overlapping", RS, {},
        lambda m, p: (
            _get(m, "r", "x_min") <= _get(m, "s", "x_max")
            and _get(m, "s", "x_min") <= _get(m, "r", "x_max")
            and _get(m, "r", "y_min") <= _get(m, "s", "y_max")
            and _get(m, "s", "y_min") <= _get(m, "r", "y_max")
        ),
        lambda m, p: min(
            abs(_get(m, "r", "x_min") - _get(m, "s", "x_max")),
            abs(_get(m, "s", "x_min") - _get(m, "r", "x_max")),
            abs(_get(m, "r", "y_min") - _get(m, "s", "y_max")),
            abs(_get(m, "s", "y_min") - _get(m, "r", "y_max")),
        ),
    )
    add(
        "geometry2", "between", "between", PAB, {"eps": 0.4},
        lambda m, p: abs(_cross(m)) <= p["eps"] and _dot(m) >= 0.0,
        lambda m, p: min(abs(abs(_cross(m)) - p["eps"]) / 2.0, abs(_dot(m)) / 4.0),
        width=0.05,
    )
    add(
        "geometry2", "adjacent", "adjacent", RS, {"gap": 0.3},
        lambda m, p: (
            _get(m, "r", "y_min") <= _get(m, "s", "y_max")
            and _get(m, "s", "y_min") <= _get(m, "r", "y_max")
            and abs(_get(m, "r", "x_max") - _get(m, "s", "x_min")) <= p["gap"]
        ),
        lambda m, p: min(
            abs(abs(_get(m, "r", "x_max") - _get(m, "s", "x_min")) - p["gap"]),
            abs(_get(m, "r", "y_min") - _get(m, "s", "y_max")),
            abs(_get(m, "s", "y_min") - _get(m, "r", "y_max")),
        ),
        width=0.05,
    )
    add(
        "geometry2", "aligned", "aligned", PAB, {"eps": 0.4},
        lambda m, p: abs(_cross(m)) <= p["eps"],
        lambda m, p: abs(abs(_cross(m)) - p["eps"]) / 2.0,
        width=0.05,
    )
    add(
        "geometry2", "surrounds", "surrounds", RS, {},
        lambda m, p: (
            _get(m, "r", "x_min") <= _get(m, "s", "x_min")
            and _get(m, "s", "x_max") <= _get(m, "r", "x_max")
            and _get(m, "r", "y_min") <= _get(m, "s", "y_min")
            and _get(m, "s", "y_max") <= _get(m, "r", "y_max")
        ),
        lambda m, p: min(
            abs(_get(m, "r", "x_min") - _get(m, "s", "x_min")),
            abs(_get(m, "s", "x_max") - _get(m, "r", "x_max")),
            abs(_get(m, "r", "y_min") - _get(m, "s", "y_min")),
            abs(_get(m, "s", "y_max") - _get(m, "r", "y_max")),
        ),
    )
    add(
        "geometry2", "near_corner", "near_corner", P2, {"cx": 6.0, "cy": 6.0},
        lambda m, p: _get(m, "p", "x") >= p["cx"] and _get(m, "p", "y") >= p["cy"],
        lambda m, p: min(
            abs(_get(m, "p", "x") - p["cx"]), abs(_get(m, "p", "y") - p["cy"])
        ),
    )

    # -- geometry3: nonlinear and disjunctive constraints --
    def radius(m):
        return math.hypot(_get(m, "p", "x"), _get(m, "p", "y"))

    add(
        "geometry3", "in_circle", "target", P2, {"r": 5.0},
        lambda m, p: radius(m) ** 2 <= p["r"] ** 2,
        lambda m, p: abs(radius(m) - p["r"]),
    )
    add(
        "geometry3", "in_ellipse", "target", P2, {"a": 6.0, "b": 3.0},
        lambda m, p: (_get(m, "p", "x") / p["a"]) ** 2 + (_get(m, "p", "y") / p["b"]) ** 2
        <= 1.0,
        lambda m, p: abs(
            math.sqrt(
                (_get(m, "p", "x") / p["a"]) ** 2 + (_get(m, "p", "y") / p["b"]) ** 2
            )
            - 1.0
        )
        * p["b"],
    )
    add(
        "geometry3", "hyperbola_side", "target", P2, {"c": 9.0},
        lambda m, p: _get(m, "p", "x") ** 2 - _get(m, "p", "y") ** 2 <= p["c"],
        lambda m, p: abs(_get(m, "p", "x") ** 2 - _get(m, "p", "y") ** 2 - p["c"])
        / max(2.0, 2.0 * radius(m)),
    )
    add(
        "geometry3", "xy_less_than", "target", P2, {"c": 6.0},
        lambda m, p: _get(m, "p", "x") * _get(m, "p", "y") < p["c"],
        lambda m, p: abs(_get(m, "p", "x") * _get(m, "p", "y") - p["c"])
        / max(1.0, radius(m)),
    )
    add(
        "geometry3", "quad_strip", "target", P2, {"a": 0.15, "lo": -2.0, "hi": 2.0},
        lambda m, p: p["lo"]
        <= _get(m, "p", "y") - p["a"] * _get(m, "p", "x") ** 2
        <= p["hi"],
        lambda m, p: min(
            abs(_get(m, "p", "y") - p["a"] * _get(m, "p", "x") ** 2 - p["lo"]),
            abs(_get(m, "p", "y") - p["a"] * _get(m, "p", "x") ** 2 - p["hi"]),
        )
        / math.sqrt(1.0 + (2.0 * p["a"] * _get(m, "p", "x")) ** 2),
    )
    add(
        "geometry3", "union_halfplanes", "target", P2,
        {"planes": (((1.0, 1.0), -4.0, "le"), ((1.0, -1.0), 5.0, "ge"))},
        lambda m, p: any(
            (sum(c * _get(m, "p", a) for c, a in zip(coefs, "xy")) <= b)
            == (kind == "le")
            for coefs, b, kind in p["planes"]
        ),
        lambda m, p: min(
            _halfplane_margin(coefs, b, (_get(m, "p", "x"), _get(m, "p", "y")))
            for coefs, b, _ in p["planes"]
        ),
    )
    add(
        "geometry3", "circle_or_box", "target", P2, {"r": 3.0, "s": 2.5},
        lambda m, p: radius(m) <= p["r"]
        or (abs(_get(m, "p", "x")) <= p["s"] and abs(_get(m, "p", "y")) <= p["s"]),
        lambda m, p: min(
            abs(radius(m) - p["r"]),
            _box_dist(
                _get(m, "p", "x"), _get(m, "p", "y"), -p["s"], p["s"], -p["s"], p["s"]
            ),
        ),
    )
    add(
        "geometry3", "piecewise", "target", P2, {"split": 0.0, "y_lo": 2.0, "y_hi": -1.0},
        lambda m, p: (
            _get(m, "p", "y") <= p["y_lo"]
            if _get(m, "p", "x") < p["split"]
            else _get(m, "p", "y") <= p["y_hi"]
        ),
        lambda m, p: min(
            abs(_get(m, "p", "x") - p["split"]),
            abs(
                _get(m, "p", "y")
                - (p["y_lo"] if _get(m, "p", "x") < p["split"] else p["y_hi"])
            ),
        ),
    )
    add(
        "geometry3", "fallback_region", "target", P2, {"r": 2.0, "y": 8.0},
        lambda m, p: radius(m) <= p["r"] or _get(m, "p", "y") >= p["y"],
        lambda m, p: min(abs(radius(m) - p["r"]), abs(_get(m, "p", "y") - p["y"])),
    )
    add(
        "geometry3", "donut", "target", P2, {"r_min": 3.0, "r_max": 6.0},
        lambda m, p: p["r_min"] ** 2 <= radius(m) ** 2 <= p["r_max"] ** 2,
        lambda m, p: min(abs(radius(m) - p["r_min"]), abs(radius(m) - p["r_max"])),
    )
    add(
        "geometry3", "lshape", "target", P2,
        {"boxes": ((-8.0, -1.0, -8.0, 6.0), (-8.0, 6.0, -8.0, -1.0))},
        lambda m, p: any(
            x0 <= _get(m, "p", "x") <= x1 and y0 <= _get(m, "p", "y") <= y1
            for x0, x1, y0, y1 in p["boxes"]
        ),
        lambda m, p: min(
            _box_dist(_get(m, "p", "x"), _get(m, "p", "y"), x0, x1, y0, y1)
            for x0, x1, y0, y1 in p["boxes"]
        ),
    )
    add(
        "geometry3", "above_parabola", "target", P2, {"a": 0.2, "b": 0.5, "c": -4.0},
        lambda m, p: _get(m, "p", "y")
        >= p["a"] * _get(m, "p", "x") ** 2 + p["b"] * _get(m, "p", "x") + p["c"],
        lambda m, p: abs(
            _get(m, "p", "y")
            - (p["a"] * _get(m, "p", "x") ** 2 + p["b"] * _get(m, "p", "x") + p["c"])
        )
        / math.sqrt(1.0 + (2.0 * p["a"] * _get(m, "p", "x") + p["b"]) ** 2),
    )
    add(
        "geometry3", "sinusoidal", "target", P2, {"omega": 1.0, "phi": 0.0},
        lambda m, p: _get(m, "p", "y")
        >= math.sin(p["omega"] * _get(m, "p", "x")) + p["phi"],
        lambda m, p: abs(
            _get(m, "p", "y") - math.sin(p["omega"] * _get(m, "p", "x")) - p["phi"]
        )
        / math.sqrt(1.0 + p["omega"] ** 2),
    )
    add(
        "geometry3", "crescent", "target", P2, {"r_min": 3.0, "r_max": 6.0, "x_cut": 1.0},
        lambda m, p: (
            p["r_min"] ** 2 <= radius(m) ** 2 <= p["r_max"] ** 2
            and _get(m, "p", "x") <= p["x_cut"]
        ),
        lambda m, p: min(
            abs(radius(m) - p["r_min"]),
            abs(radius(m) - p["r_max"]),
            abs(_get(m, "p", "x") - p["x_cut"]),
        ),
    )

    # -- influence propagation (graphs; handled by dedicated generator) --
    # base_p: background edge probability; plant: planted directed triangles;
    # weight_pow/score_pow: draw U(0,1)**pow, skewing the distribution low so
    # the true threshold sits far from the attribute's median.
    for name, params, width in (
        ("ip1_active", {"tau": 0.5, "hops": 1, "base_p": 0.017, "plant": 0,
                        "weight_pow": 1, "score_pow": 1}, 0.08),
        ("ip2_active", {"tau": 0.5, "hops": 2, "base_p": 0.017, "plant": 0,
                        "weight_pow": 1, "score_pow": 1}, 0.08),
        ("ip3_active", {"base_p": 0.03, "plant": 12,
                        "weight_pow": 1, "score_pow": 1}, 0.05),
        ("ip3_threshold", {"tau": 0.8, "base_p": 0.02, "plant": 25,
                           "weight_pow": 2, "score_pow": 1}, 0.05),
        ("ip4_high_score", {"tau": 0.75, "base_p": 0.02, "plant": 25,
                            "weight_pow": 1, "score_pow": 2}, 0.05),
    ):
        add("ip", name, "active", (("a", ("score", "max_influence")),), params,
            lambda m, p: False, lambda m, p: math.inf, width=width)

    return tasks


TASKS: dict[str, TaskDef] = _build_tasks()

FAMILIES: dict[str, list[str]] = {}
for _t in TASKS.values():
    FAMILIES.setdefault(_t.family, []).append(_t.name)


# --- influence-propagation graphs ---------------------------------------------------


@dataclass
class IpGraph:
    prefix: str
    nodes: list[str]
    edges: list[tuple[str, str]]
    weight: dict[tuple[str, str], float]
    score: dict[str, float]
    out: dict[str, list[str]] = field(default_factory=dict)
    incoming: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for n in self.nodes:
            self.out.setdefault(n, [])
            self.incoming.setdefault(n, [])
        for u, v in self.edges:
            self.out[u].append(v)
            self.incoming[v].append(u)

    def max_influence(self, node: str) -> float:
        ins = self.incoming.get(node, [])
        if not ins:
            return 0.0
        return max(self.weight[(u, node)] for u in ins)

    def on_triangle(self, a: str) -> bool:
        for b in self.out.get(a, ()):
            for c in self.out.get(b, ()):
                if a in self.out.get(c, ()):
                    return True
        return False

    def triangle_completions(self, a: str) -> list[str]:
        done = []
        for b in self.out.get(a, ()):
            for c in self.out.get(b, ()):
                if a in self.out.get(c, ()):
                    done.append(c)
        return done

    def reach_scores(self, a: str, hops: int) -> list[float]:
        frontier = {a}
        for _ in range(hops):
            frontier = {v for u in frontier for v in self.out.get(u, ())}
        return [self.score[v] for v in frontier]


def _gen_graph(prefix: str, rng: np.random.Generator, params: dict) -> IpGraph:
    nodes = [f"{prefix}n{k}" for k in range(IP_NODES)]
    wpow = params.get("weight_pow", 1)
    spow = params.get("score_pow", 1)
    edge_set: set[tuple[str, str]] = set()
    for u in nodes:
        for v in nodes:
            if u != v and rng.random() < params.get("base_p", IP_EDGE_PROB):
                edge_set.add((u, v))
    for _ in range(params.get("plant", 0)):
        a, b, c = (nodes[int(i)] for i in rng.choice(IP_NODES, size=3, replace=False))
        edge_set.update(((a, b), (b, c), (c, a)))
    edges = sorted(edge_set)
    weight = {e: round(float(rng.uniform(0.0, 1.0)) ** wpow, 6) for e in edges}
    score = {n: round(float(rng.uniform(0.0, 1.0)) ** spow, 6) for n in nodes}
    return IpGraph(prefix, nodes, edges, weight, score)


def ip_label(task: TaskDef, graph: IpGraph, node: str, params: dict | None = None) -> bool:
    p = params if params is not None else task.params
    if task.name == "ip1_active":
        return any(s > p["tau"] for s in graph.reach_scores(node, 1))
    if task.name == "ip2_active":
        return any(s > p["tau"] for s in graph.reach_scores(node, 2))
    if task.name == "ip3_active":
        return graph.on_triangle(node)
    if task.name == "ip3_threshold":
        return graph.on_triangle(node) and graph.max_influence(node) > p["tau"]
    if task.name == "ip4_high_score":
        return any(graph.score[c] > p["tau"] for c in graph.triangle_completions(node))
    raise GeneratorError(f"unknown ip task {task.name!r}")


def ip_margin(task: TaskDef, graph: IpGraph, node: str) -> float:
    """Distance of the deciding quantity from the task threshold (inf if none)."""
    p = task.params
    if task.name in ("ip1_active", "ip2_active"):
        scores = graph.reach_scores(node, p["hops"])
        if not scores:
            return math.inf
        return abs(max(scores) - p["tau"])
    if task.name == "ip3_threshold":
        if not graph.on_triangle(node):
            return math.inf
        return abs(graph.max_influence(node) - p["tau"])
    if task.name == "ip4_high_score":
        comps = graph.triangle_completions(node)
        if not comps:
            return math.inf
        return abs(max(graph.score[c] for c in comps) - p["tau"])
    return math.inf


# --- public labeling interface ------------------------------------------------------


def true_label(
    task_name: str,
    measurements: Meas | None = None,
    params: dict | None = None,
    graph: IpGraph | None = None,
    node: str | None = None,
) -> bool:
    """Ground truth for one example, exposed for generator verification."""
    task = TASKS.get(task_name)
    if task is None:
        raise GeneratorError(f"unknown task {task_name!r}")
    if task.family == "ip":
        if graph is None or node is None:
            raise GeneratorError("ip tasks need graph= and node=")
        return ip_label(task, graph, node, params)
    if measurements is None:
        raise GeneratorError("geometry tasks need measurements=")
    p = dict(task.params)
    if params:
        p.update(params)
    return task.label(measurements, p)


# --- generation ----------------------------------------------------------------------


def _sample_roles(task: TaskDef, rng: np.random.Generator) -> Meas:
    m: Meas = {}
    for role, attrs in task.roles:
        if set(attrs) >= {"x_min", "x_max"}:
            cx, cy = rng.uniform(-6, 6, 2)
            wx, wy = rng.uniform(1.0, 5.0, 2)
            vals = {
                "x_min": cx - wx, "x_max": cx + wx, "y_min": cy - wy, "y_max": cy + wy,
            }
            for a in attrs:
                m[(role, a)] = round(float(vals[a]), 6)
        else:
            for a in attrs:
                m[(role, a)] = round(float(rng.uniform(-DOMAIN, DOMAIN)), 6)
    return m


def _steer(task: TaskDef, m: Meas, rng: np.random.Generator, want_pos: bool) -> Meas:
    """Nudge rare-class samples toward the decision region for efficiency."""
    if task.name in ("between", "aligned") and want_pos:
        t = rng.uniform(0.15, 0.85)
        off = rng.uniform(-0.05, 0.05)
        xa, ya = m[("a", "x")], m[("a", "y")]
        xb, yb = m[("b", "x")], m[("b", "y")]
        dx, dy = xb - xa, yb - ya
        norm = math.hypot(dx, dy) or 1.0
        m = dict(m)
        m[("p", "x")] = round(xa + t * dx - off * dy / norm, 6)
        m[("p", "y")] = round(ya + t * dy + off * dx / norm, 6)
    if task.name == "adjacent" and want_pos:
        m = dict(m)
        shift = m[("r", "x_max")] + rng.uniform(-0.2, 0.2)
        width = m[("s", "x_max")] - m[("s", "x_min")]
        m[("s", "x_min")] = round(shift, 6)
        m[("s", "x_max")] = round(shift + width, 6)
    if task.name == "touching" and want_pos:
        ang = rng.uniform(0, 2 * math.pi)
        rad = rng.uniform(0.0, task.params["d"] + 1.0)
        m = dict(m)
        m[("q", "x")] = round(m[("p", "x")] + rad * math.cos(ang), 6)
        m[("q", "y")] = round(m[("p", "y")] + rad * math.sin(ang), 6)
    if task.name == "surrounds" and want_pos:
        m = dict(m)
        for axis in ("x", "y"):
            lo, hi = m[("r", f"{axis}_min")], m[("r", f"{axis}_max")]
            a = rng.uniform(lo, hi)
            b = rng.uniform(lo, hi)
            m[(f"s", f"{axis}_min")] = round(min(a, b), 6)
            m[(f"s", f"{axis}_max")] = round(max(a, b), 6)
    return m


def _generate_geometry(task: TaskDef, spec: TaskSpec) -> tuple[Dataset, dict]:
    rng = np.random.default_rng(spec.seed)
    n_pos = spec.n_examples // 2
    n_neg = spec.n_examples - n_pos
    pos: list[Meas] = []
    neg: list[Meas] = []
    draws = 0
    while len(pos) < n_pos or len(neg) < n_neg:
        draws += 1
        if draws > MAX_DRAWS:
            raise GeneratorError(
                f"{task.name}: rejection sampling exceeded {MAX_DRAWS} draws"
            )
        m = _sample_roles(task, rng)
        m = _steer(task, m, rng, want_pos=len(pos) < n_pos)
        if task.margin(m, task.params) < task.margin_width:
            continue
        label = task.label(m, task.params)
        if label and len(pos) < n_pos:
            pos.append(m)
        elif not label and len(neg) < n_neg:
            neg.append(m)
    measurements: dict[tuple[str, str], float] = {}
    positives, negatives = [], []
    for label, bucket, out in (("pos", pos, positives), ("neg", neg, negatives)):
        for k, m in enumerate(bucket):
            eid = f"e{'p' if label == 'pos' else 'n'}{k:03d}"
            objs = []
            for role, attrs in task.roles:
                obj = f"{eid}{role}"
                objs.append(obj)
                for a in attrs:
                    measurements[(obj, a)] = m[(role, a)]
            out.append(Example(eid, label, GroundAtom(task.head_pred, tuple(objs))))
    theory = "NRA" if task.family == "geometry3" else "LRA"
    dataset = Dataset(
        frozenset(), measurements, tuple(positives), tuple(negatives), theory
    )
    return dataset, {"true_params": _jsonable(task.params)}


def _generate_ip(task: TaskDef, spec: TaskSpec) -> tuple[Dataset, dict]:
    rng = np.random.default_rng(spec.seed)
    n_pos = spec.n_examples // 2
    n_neg = spec.n_examples - n_pos
    pos: list[tuple[IpGraph, str]] = []
    neg: list[tuple[IpGraph, str]] = []
    graphs: list[IpGraph] = []
    while (len(pos) < n_pos or len(neg) < n_neg) and len(graphs) < 80:
        g = _gen_graph(f"g{len(graphs)}_", rng, task.params)
        graphs.append(g)
        for node in g.nodes:
            if ip_margin(task, g, node) < task.margin_width:
                continue
            if ip_label(task, g, node):
                if len(pos) < n_pos:
                    pos.append((g, node))
            elif len(neg) < n_neg:
                neg.append((g, node))
    if len(pos) < n_pos or len(neg) < n_neg:
        raise GeneratorError(
            f"{task.name}: could not balance classes "
            f"({len(pos)}/{n_pos} pos, {len(neg)}/{n_neg} neg)"
        )
    used = {g.prefix for g, _ in pos} | {g.prefix for g, _ in neg}
    atoms = set()
    measurements: dict[tuple[str, str], float] = {}
    for g in graphs:
        if g.prefix not in used:
            continue
        for u, v in g.edges:
            atoms.add(GroundAtom("propagates", (u, v)))
        for n in g.nodes:
            measurements[(n, "score")] = g.score[n]
            measurements[(n, "max_influence")] = round(g.max_influence(n), 6)
    positives = tuple(
        Example(f"ep{k:03d}", "pos", GroundAtom("active", (node,)))
        for k, (_, node) in enumerate(pos)
    )
    negatives = tuple(
        Example(f"en{k:03d}", "neg", GroundAtom("active", (node,)))
        for k, (_, node) in enumerate(neg)
    )
    dataset = Dataset(frozenset(atoms), measurements, positives, negatives, "LRA")
    return dataset, {
        "true_params": _jsonable(task.params),
        "n_graphs": len(used),
    }


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def split_indices(spec: TaskSpec, n: int) -> tuple[list[int], list[int]]:
    rng = np.random.default_rng(spec.seed + 101)
    perm = rng.permutation(n)
    n_train = int(math.floor(spec.split_ratio * n))
    train = sorted(int(i) for i in perm[:n_train])
    test = sorted(int(i) for i in perm[n_train:])
    return train, test


def subset(dataset: Dataset, indices: list[int]) -> Dataset:
    examples = dataset.examples
    chosen = [examples[i] for i in indices]
    return Dataset(
        dataset.background,
        dataset.measurements,
        tuple(e for e in chosen if e.is_positive),
        tuple(e for e in chosen if not e.is_positive),
        dataset.theory_class,
    )


def generate(spec: TaskSpec) -> tuple[Dataset, dict]:
    """Dataset plus its manifest (task, seed, n, split, true parameters)."""
    task = TASKS.get(spec.task_name)
    if task is None:
        raise GeneratorError(f"unknown task {spec.task_name!r}")
    if task.family != spec.family:
        raise GeneratorError(
            f"task {spec.task_name!r} belongs to {task.family}, not {spec.family}"
        )
    if task.family == "ip":
        dataset, extra = _generate_ip(task, spec)
    else:
        dataset, extra = _generate_geometry(task, spec)
    train, test = split_indices(spec, len(dataset.examples))
    manifest = {
        "task": spec.task_name,
        "family": spec.family,
        "seed": spec.seed,
        "n_examples": spec.n_examples,
        "split_ratio": spec.split_ratio,
        "train_indices": train,
        "test_indices": test,
        **extra,
    }
    return dataset, manifest


def default_spec(task_name: str, seed: int = 0) -> TaskSpec:
    task = TASKS[task_name]
    n = N_IP if task.family == "ip" else N_GEOMETRY
    return TaskSpec(task.family, task_name, n, seed)

"""Candidate clause enumeration under a language bias, with chain-style
predicate invention.

Clauses are emitted in (body length, pool order) order, deduplicated up to
variable renaming via canonical naming. Body variables must be linked to the
head through symbolic literals within `chain_depth` hops; invented chain
predicates collapse multi-hop paths to depth one, which is what makes them
necessary for multi-hop targets under a depth-1 bias.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

from . import templates as T
from .logic import AttrRef, Clause, Dataset, GroundAtom, Literal, var


class BiasError(ValueError):
    pass


@dataclass(frozen=True)
class LanguageBias:
    head_pred: str
    head_arity: int
    body_preds: tuple[tuple[str, int], ...] = ()
    template_ids: tuple[str, ...] = ()
    literal_budget: int = 3
    predicate_invention: bool = False
    max_invented: int = 1
    coord_attrs: tuple[str, ...] = ()  # coordinate attributes, e.g. ("x", "y")
    scalar_attrs: tuple[str, ...] = ()  # attrs usable in interval/threshold slots
    varcmp_attrs: tuple[str, ...] = ()  # attrs compared between variables
    head_attr_map: tuple[tuple[str, ...], ...] = ()  # attrs per head arg position
    chain_depth: int = 1
    max_body_vars: int = 4
    max_parametric: int = 3

    def attrs_for(self, var_name: str) -> tuple[str, ...]:
        """Attributes available on the object a variable ranges over."""
        if self.head_attr_map and var_name.startswith("V"):
            i = int(var_name[1:])
            if i < len(self.head_attr_map):
                return self.head_attr_map[i]
        return tuple(dict.fromkeys(self.coord_attrs + self.scalar_attrs))

    def __post_init__(self) -> None:
        if self.literal_budget < 1:
            raise BiasError("literal_budget must be >= 1")
        if self.predicate_invention and self.max_invented < 1:
            raise BiasError("predicate_invention requires max_invented >= 1")
        for tid in self.template_ids:
            T.get(tid)

    @property
    def is_empty(self) -> bool:
        return not (self.body_preds or self.template_ids or self.varcmp_attrs)


@dataclass(frozen=True)
class InventedPredicate:
    name: str
    definition: Clause  # body: chain of binary predicates; head vars = endpoints

    @property
    def chain(self) -> tuple[str, ...]:
        return tuple(l.predicate for l in self.definition.body)


def invent_predicates(dataset: Dataset, bias: LanguageBias) -> list[InventedPredicate]:
    """Chain predicates over the binary background predicates.

    Length-2 chains over every ordered predicate pair; length-3 chains are
    added when max_invented >= 2. A single binary predicate yields the plain
    names inv_reach2/inv_reach3; mixed chains carry the predicate names.
    """
    if not bias.predicate_invention:
        return []
    binary = sorted(name for name, arity in dataset.predicates().items() if arity == 2)
    if not binary:
        return []
    single = len(binary) == 1
    out: list[InventedPredicate] = []

    def chain_clause(name: str, preds: tuple[str, ...]) -> InventedPredicate:
        vs = [var(f"V{i}") for i in range(len(preds) + 1)]
        head = Literal.symbolic(name, [vs[0], vs[-1]])
        body = [Literal.symbolic(p, [vs[i], vs[i + 1]]) for i, p in enumerate(preds)]
        return InventedPredicate(name, Clause.make(head, body, len(preds)))

    for p, q in itertools.product(binary, repeat=2):
        if p == q:
            name = "inv_reach2" if single else f"inv_reach2_{p}"
        else:
            name = f"inv_chain2_{p}_{q}"
        out.append(chain_clause(name, (p, q)))
    if bias.max_invented >= 2:
        for preds in itertools.product(binary, repeat=3):
            if len(set(preds)) == 1:
                name = "inv_reach3" if single else f"inv_reach3_{preds[0]}"
            else:
                name = "inv_chain3_" + "_".join(preds)
            out.append(chain_clause(name, preds))
    return out


def materialize(invented: InventedPredicate, dataset: Dataset) -> frozenset[GroundAtom]:
    """Ground extension of a chain predicate over the background facts."""
    by_pred: dict[str, list[tuple[str, str]]] = {}
    for atom in dataset.background:
        if len(atom.objects) == 2:
            by_pred.setdefault(atom.predicate, []).append(atom.objects)
    chain = invented.chain
    frontier: dict[str, set[str]] = {}
    for a, b in by_pred.get(chain[0], ()):
        frontier.setdefault(a, set()).add(b)
    for pred in chain[1:]:
        nxt: dict[str, set[str]] = {}
        step: dict[str, set[str]] = {}
        for a, b in by_pred.get(pred, ()):
            step.setdefault(a, set()).add(b)
        for start, mids in frontier.items():
            ends = set()
            for m in mids:
                ends |= step.get(m, set())
            if ends:
                nxt[start] = ends
        frontier = nxt
    return frozenset(
        GroundAtom(invented.name, (a, c)) for a, ends in frontier.items() for c in ends
    )


# --- literal pools ---------------------------------------------------------------

_POINT2 = (
    "halfplane2d", "box2d", "circle", "circle_outside", "annulus", "ellipse",
    "hyperbola_side", "product_threshold", "quad_strip", "parabola", "abs_box",
    "sinusoid",
)


def _dim_group(attr: str) -> str:
    for suffix in ("_min", "_max"):
        if attr.endswith(suffix):
            return attr[: -len(suffix)]
    return attr


@dataclass
class _Pool:
    literals: list[Literal] = field(default_factory=list)
    binds: list[frozenset[str]] = field(default_factory=list)  # vars bound (symbolic)
    uses: list[frozenset[str]] = field(default_factory=list)  # vars referenced
    parametric: list[bool] = field(default_factory=list)

    def add(self, lit: Literal, binds: set[str], uses: set[str], is_par: bool) -> None:
        self.literals.append(lit)
        self.binds.append(frozenset(binds))
        self.uses.append(frozenset(uses))
        self.parametric.append(is_par)


def _build_pool(bias: LanguageBias) -> tuple[_Pool, list[str], list[str]]:
    head_vars = [f"V{i}" for i in range(bias.head_arity)]
    body_vars = [f"B{i}" for i in range(bias.max_body_vars)]
    all_vars = head_vars + body_vars
    pool = _Pool()

    for pred, arity in sorted(bias.body_preds):
        for combo in itertools.product(all_vars, repeat=arity):
            lit = Literal.symbolic(pred, [var(v) for v in combo])
            pool.add(lit, set(combo), set(combo), False)

    groups: dict[str, list[AttrRef]] = {}
    for v in head_vars:
        for attr in bias.attrs_for(v):
            if attr in bias.varcmp_attrs:
                groups.setdefault(_dim_group(attr), []).append(AttrRef(attr, var(v)))
    for key in sorted(groups):
        refs = groups[key]
        for lhs, rhs in itertools.permutations(refs, 2):
            for op in ("<", "<="):
                lit = Literal.comparison(lhs, op, rhs)
                uses = {lhs.term.name, rhs.term.name}
                pool.add(lit, set(), uses, False)

    coord = bias.coord_attrs

    def has_coords(v: str, k: int) -> bool:
        return len(coord) >= k and all(a in bias.attrs_for(v) for a in coord[:k])

    for tid in bias.template_ids:
        if tid.startswith("varcmp_"):
            continue  # varcmp literals come from varcmp_attrs above
        if tid == "interval1d":
            for v in all_vars:
                for attr in bias.attrs_for(v):
                    lit = Literal.parametric(tid, [AttrRef(attr, var(v))])
                    pool.add(lit, set(), {v}, True)
        elif tid == "influence_threshold":
            for v in all_vars:
                for attr in bias.attrs_for(v):
                    if attr in bias.scalar_attrs:
                        lit = Literal.parametric(tid, [AttrRef(attr, var(v))])
                        pool.add(lit, set(), {v}, True)
        elif tid == "halfplane3d":
            for v in all_vars:
                if has_coords(v, 3):
                    slots = [AttrRef(a, var(v)) for a in coord[:3]]
                    pool.add(Literal.parametric(tid, slots), set(), {v}, True)
        elif tid == "distance_threshold":
            for a, b in itertools.combinations(head_vars, 2):
                if has_coords(a, 2) and has_coords(b, 2):
                    slots = [AttrRef(coord[0], var(a)), AttrRef(coord[1], var(a)),
                             AttrRef(coord[0], var(b)), AttrRef(coord[1], var(b))]
                    pool.add(Literal.parametric(tid, slots), set(), {a, b}, True)
        elif tid in ("collinear3pt", "between3pt"):
            if bias.head_arity >= 3:
                for p in head_vars:
                    others = [v for v in head_vars if v != p]
                    for a, b in itertools.combinations(others, 2):
                        if all(has_coords(v, 2) for v in (a, p, b)):
                            slots = [
                                AttrRef(coord[0], var(a)), AttrRef(coord[1], var(a)),
                                AttrRef(coord[0], var(p)), AttrRef(coord[1], var(p)),
                                AttrRef(coord[0], var(b)), AttrRef(coord[1], var(b)),
                            ]
                            pool.add(
                                Literal.parametric(tid, slots), set(), {a, p, b}, True
                            )
        elif tid in _POINT2:
            for v in all_vars:
                if has_coords(v, 2):
                    slots = [AttrRef(coord[0], var(v)), AttrRef(coord[1], var(v))]
                    pool.add(Literal.parametric(tid, slots), set(), {v}, True)
    return pool, head_vars, body_vars


def _combo_ok(pool: _Pool, combo: tuple[int, ...], bias: LanguageBias,
              head_vars: list[str], body_vars: list[str]) -> bool:
    if sum(pool.parametric[i] for i in combo) > bias.max_parametric:
        return False
    # no duplicated parametric literal targets, no clashing varcmp pairs
    seen_par = set()
    seen_cmp = set()
    for i in combo:
        lit = pool.literals[i]
        if lit.kind == "parametric":
            key = (lit.template_id, lit.slots)
            if key in seen_par:
                return False
            seen_par.add(key)
        elif lit.kind == "comparison":
            key = frozenset((lit.lhs, lit.rhs))
            if key in seen_cmp:
                return False
            seen_cmp.add(key)
    # directed chaining (mode bias): a symbolic literal binds its non-first
    # arguments from its first (input) argument; the input must itself be
    # bound, and every variable must end up within chain_depth hops of the
    # head. Cycles therefore cannot smuggle distant variables in.
    depth: dict[str, float] = {v: 0 for v in head_vars}
    sym = [i for i in combo if pool.literals[i].kind == "symbolic"]
    for _ in range(len(sym) + 1):
        for i in sym:
            args = [t.name for t in pool.literals[i].args if t.is_var]
            if not args:
                continue
            din = depth.get(args[0], math.inf)
            if din < math.inf:
                for v in args[1:]:
                    if depth.get(v, math.inf) > din + 1:
                        depth[v] = din + 1
    used = set()
    for i in combo:
        used |= pool.uses[i]
    for v in used:
        if v in head_vars:
            continue
        if depth.get(v, math.inf) > bias.chain_depth:
            return False
    # canonical body-var introduction order (kills renamed variants early)
    order = []
    for i in combo:
        for v in sorted(pool.uses[i], key=lambda name: (name not in head_vars, name)):
            if v in body_vars and v not in order:
                order.append(v)
    return order == sorted(order)


def iter_clauses(dataset: Dataset, bias: LanguageBias) -> Iterator[Clause]:
    """Candidates in (body length, pool order), deduplicated up to renaming."""
    if bias.is_empty:
        raise BiasError("empty bias: no body predicates, templates, or comparisons")
    pool, head_vars, body_vars = _build_pool(bias)
    head = Literal.symbolic(bias.head_pred, [var(v) for v in head_vars])
    seen: set[tuple] = set()
    n = len(pool.literals)
    for k in range(1, bias.literal_budget + 1):
        for combo in itertools.combinations(range(n), k):
            if not _combo_ok(pool, combo, bias, head_vars, body_vars):
                continue
            clause = Clause.make(head, [pool.literals[i] for i in combo], bias.literal_budget)
            key = (clause.head, clause.body)
            if key in seen:
                continue
            seen.add(key)
            yield clause


def generate_clauses(dataset: Dataset, bias: LanguageBias) -> list[Clause]:
    return list(iter_clauses(dataset, bias))

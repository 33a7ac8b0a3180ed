"""Relational core: terms, literals, clauses, examples, datasets, grounding.

Symbolic structure is kept strictly apart from numeric data: ground atoms
name objects, numeric attributes are reached through (object, attribute)
measurement keys, and grounding never evaluates comparison or parametric
literals (those belong to the numeric layer).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, Mapping

COMPARATORS = ("<", "<=", "=", ">=", ">")


class LogicError(ValueError):
    """Malformed clause, unknown predicate, or bad dataset file."""


@dataclass(frozen=True)
class Term:
    """A clause variable or an object constant (constants may carry a value)."""

    kind: str  # "variable" | "constant"
    name: str
    value: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("variable", "constant"):
            raise LogicError(f"bad term kind {self.kind!r}")
        if self.kind == "variable" and self.value is not None:
            raise LogicError("variables carry no value")

    @property
    def is_var(self) -> bool:
        return self.kind == "variable"


def var(name: str) -> Term:
    return Term("variable", name)


def const(name: str, value: float | None = None) -> Term:
    return Term("constant", name, value)


@dataclass(frozen=True)
class AttrRef:
    """Real-valued accessor: the `attr` measurement of the object bound to `term`."""

    attr: str
    term: Term

    def bound(self, binding: Mapping[str, str]) -> tuple[str, str]:
        obj = binding[self.term.name] if self.term.is_var else self.term.name
        return (obj, self.attr)

    def __str__(self) -> str:
        return f"{self.attr}({self.term.name})"


@dataclass(frozen=True)
class Literal:
    """One body (or head) literal: symbolic, comparison, or parametric.

    symbolic    -> predicate over object terms
    comparison  -> `lhs comparator rhs` over two real-valued attribute refs
    parametric  -> template_id applied to attribute refs, with free parameters
    """

    kind: str
    predicate: str = ""
    args: tuple[Term, ...] = ()
    comparator: str = ""
    lhs: AttrRef | None = None
    rhs: AttrRef | None = None
    template_id: str = ""
    slots: tuple[AttrRef, ...] = ()

    @staticmethod
    def symbolic(predicate: str, args: Iterable[Term]) -> "Literal":
        return Literal(kind="symbolic", predicate=predicate, args=tuple(args))

    @staticmethod
    def comparison(lhs: AttrRef, comparator: str, rhs: AttrRef) -> "Literal":
        if comparator not in COMPARATORS:
            raise LogicError(f"bad comparator {comparator!r}")
        return Literal(kind="comparison", comparator=comparator, lhs=lhs, rhs=rhs)

    @staticmethod
    def parametric(template_id: str, slots: Iterable[AttrRef]) -> "Literal":
        return Literal(kind="parametric", template_id=template_id, slots=tuple(slots))

    def variables(self) -> set[str]:
        if self.kind == "symbolic":
            return {t.name for t in self.args if t.is_var}
        if self.kind == "comparison":
            return {r.term.name for r in (self.lhs, self.rhs) if r.term.is_var}
        return {r.term.name for r in self.slots if r.term.is_var}

    def __str__(self) -> str:
        if self.kind == "symbolic":
            return f"{self.predicate}({','.join(t.name for t in self.args)})"
        if self.kind == "comparison":
            return f"{self.lhs} {self.comparator} {self.rhs}"
        return f"{self.template_id}({','.join(str(s) for s in self.slots)})"


@dataclass(frozen=True)
class Clause:
    """Head atom plus ordered body of literals under a literal budget.

    Variables are clause-local: construction renames them apart to V0, V1, ...
    in order of first occurrence (head first), so structurally equal clauses
    compare equal.
    """

    head: Literal
    body: tuple[Literal, ...]
    literal_budget: int

    @staticmethod
    def make(head: Literal, body: Iterable[Literal], literal_budget: int) -> "Clause":
        body = tuple(body)
        renaming: dict[str, str] = {}

        def canon_term(t: Term) -> Term:
            if not t.is_var:
                return t
            if t.name not in renaming:
                renaming[t.name] = f"V{len(renaming)}"
            return var(renaming[t.name])

        def canon_lit(lit: Literal) -> Literal:
            if lit.kind == "symbolic":
                return Literal.symbolic(lit.predicate, [canon_term(t) for t in lit.args])
            if lit.kind == "comparison":
                return Literal.comparison(
                    AttrRef(lit.lhs.attr, canon_term(lit.lhs.term)),
                    lit.comparator,
                    AttrRef(lit.rhs.attr, canon_term(lit.rhs.term)),
                )
            return Literal.parametric(
                lit.template_id, [AttrRef(s.attr, canon_term(s.term)) for s in lit.slots]
            )

        new_head = canon_lit(head)
        new_body = tuple(canon_lit(l) for l in body)
        return Clause(new_head, new_body, literal_budget)

    def variables(self) -> set[str]:
        out = self.head.variables()
        for lit in self.body:
            out |= lit.variables()
        return out

    def parametric_literals(self) -> list[tuple[int, Literal]]:
        return [(i, l) for i, l in enumerate(self.body) if l.kind == "parametric"]

    def __str__(self) -> str:
        body = ", ".join(str(l) for l in self.body) if self.body else "true"
        return f"{self.head} <- {body}"


@dataclass(frozen=True)
class GroundAtom:
    predicate: str
    objects: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(self.objects)})"


@dataclass(frozen=True)
class Example:
    """One labeled example: its head atom, private facts, and measurements."""

    id: str
    polarity: str  # "pos" | "neg"
    head: GroundAtom
    atoms: frozenset[GroundAtom] = frozenset()
    measurements: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.polarity not in ("pos", "neg"):
            raise LogicError(f"bad polarity {self.polarity!r}")

    @property
    def is_positive(self) -> bool:
        return self.polarity == "pos"


@dataclass(frozen=True)
class Dataset:
    """Background facts + shared measurements + labeled examples."""

    background: frozenset[GroundAtom]
    measurements: Mapping[tuple[str, str], float]
    positives: tuple[Example, ...]
    negatives: tuple[Example, ...]
    theory_class: str = "LRA"  # "LRA" | "NRA"

    def __post_init__(self) -> None:
        pos_ids = {e.id for e in self.positives}
        neg_ids = {e.id for e in self.negatives}
        dup = pos_ids & neg_ids
        if dup:
            raise LogicError(f"examples both positive and negative: {sorted(dup)}")

    @property
    def examples(self) -> tuple[Example, ...]:
        return self.positives + self.negatives

    @cached_property
    def fact_index(self) -> "FactIndex":
        """Shared predicate index over the background (built on first use)."""
        return FactIndex(self.background)

    def attributes(self) -> list[str]:
        """Interpreted attribute names, in sorted order."""
        attrs = {a for (_, a) in self.measurements}
        for e in self.examples:
            attrs.update(a for (_, a) in e.measurements)
        return sorted(attrs)

    def predicates(self) -> dict[str, int]:
        """Background/example predicate signatures (name -> arity)."""
        sig: dict[str, int] = {}
        for atom in self.background:
            sig[atom.predicate] = len(atom.objects)
        for e in self.examples:
            for atom in e.atoms:
                sig[atom.predicate] = len(atom.objects)
        return sig

    def measurement(self, example: Example, obj: str, attr: str) -> float:
        key = (obj, attr)
        if key in example.measurements:
            return example.measurements[key]
        try:
            return self.measurements[key]
        except KeyError:
            raise LogicError(f"no measurement {attr} for object {obj!r}") from None

    def with_background(
        self,
        extra_atoms: Iterable[GroundAtom] = (),
        extra_measurements: Mapping[tuple[str, str], float] | None = None,
    ) -> "Dataset":
        meas = dict(self.measurements)
        if extra_measurements:
            meas.update(extra_measurements)
        return replace(
            self,
            background=self.background | frozenset(extra_atoms),
            measurements=meas,
        )


# --- grounding -------------------------------------------------------------


class FactIndex:
    """Predicate-indexed view of a fact set; build once, share across joins.

    Secondary indexes: exact-tuple membership and a first-argument index (the
    common access pattern once the head anchors the input variable).
    """

    def __init__(self, atoms: Iterable[GroundAtom]):
        self.by_pred: dict[str, list[tuple[str, ...]]] = {}
        self.tuples: dict[str, set[tuple[str, ...]]] = {}
        self.by_first: dict[tuple[str, str], list[tuple[str, ...]]] = {}
        objects: set[str] = set()
        for a in atoms:
            self.by_pred.setdefault(a.predicate, []).append(a.objects)
            self.tuples.setdefault(a.predicate, set()).add(a.objects)
            if a.objects:
                self.by_first.setdefault((a.predicate, a.objects[0]), []).append(a.objects)
            objects.update(a.objects)
        self.objects = objects

    def merged(self, atoms: Iterable[GroundAtom]) -> "FactIndex":
        atoms = list(atoms)
        if not atoms:
            return self
        out = FactIndex(atoms)
        for p, ts in self.by_pred.items():
            out.by_pred.setdefault(p, []).extend(ts)
            out.tuples.setdefault(p, set()).update(ts)
        for key, ts in self.by_first.items():
            out.by_first.setdefault(key, []).extend(ts)
        out.objects |= self.objects
        return out


def _example_universe(example: Example, index: FactIndex) -> list[str]:
    objs: set[str] = set(example.head.objects)
    for a in example.atoms:
        objs.update(a.objects)
    objs |= index.objects
    objs.update(o for (o, _) in example.measurements)
    return sorted(objs)


def _extend(
    literals: list[Literal],
    binding: dict[str, str],
    index: FactIndex,
    out: list[dict[str, str]],
    free_vars: list[str],
    universe: list[str],
) -> None:
    if not literals:
        if free_vars:
            v, rest = free_vars[0], free_vars[1:]
            for obj in universe:
                _extend([], {**binding, v: obj}, index, out, rest, universe)
        else:
            out.append(binding)
        return
    lit, rest = literals[0], literals[1:]
    resolved = [
        binding.get(t.name) if t.is_var else t.name for t in lit.args
    ]
    if all(r is not None for r in resolved):
        if tuple(resolved) in index.tuples.get(lit.predicate, ()):
            _extend(rest, binding, index, out, free_vars, universe)
        return
    if resolved and resolved[0] is not None:
        facts = index.by_first.get((lit.predicate, resolved[0]), ())
    else:
        facts = index.by_pred.get(lit.predicate, ())
    for fact in facts:
        if len(fact) != len(lit.args):
            continue
        new = dict(binding)
        ok = True
        for term, obj in zip(lit.args, fact):
            if term.is_var:
                bound = new.get(term.name)
                if bound is None:
                    new[term.name] = obj
                elif bound != obj:
                    ok = False
                    break
            elif term.name != obj:
                ok = False
                break
        if ok:
            _extend(rest, new, index, out, free_vars, universe)


def ground_clause(
    clause: Clause,
    example: Example,
    background: Iterable[GroundAtom] | FactIndex,
    seed_binding: Mapping[str, str] | None = None,
) -> list[dict[str, str]]:
    """All substitutions of clause variables by example/background objects
    under which every symbolic body literal holds.

    Comparison and parametric literals are ignored here; variables they
    mention that no symbolic literal constrains range over all objects.
    `background` may be a prebuilt FactIndex (shared across calls).
    Raises LogicError for a body predicate absent from the facts.
    """
    base = background if isinstance(background, FactIndex) else FactIndex(background)
    index = base.merged(example.atoms) if example.atoms else base
    symbolic = [l for l in clause.body if l.kind == "symbolic"]
    for lit in symbolic:
        if lit.predicate not in index.by_pred:
            raise LogicError(f"unknown predicate {lit.predicate!r}")

    bound_by_facts = set().union(*(l.variables() for l in symbolic)) if symbolic else set()
    if seed_binding:
        bound_by_facts |= set(seed_binding)
    free = sorted(clause.variables() - bound_by_facts)
    universe = _example_universe(example, index) if free else []
    out: list[dict[str, str]] = []
    _extend(symbolic, dict(seed_binding or {}), index, out, free, universe)
    return out


def coverage_bindings(
    clause: Clause, example: Example, background: Iterable[GroundAtom] | FactIndex
) -> list[dict[str, str]]:
    """Ground bindings anchored to the example's head atom.

    Head variables are unified with the example's declared head objects first;
    an example whose head predicate/arity differs from the clause head has no
    bindings.
    """
    if example.head.predicate != clause.head.predicate or len(example.head.objects) != len(
        clause.head.args
    ):
        return []
    seed: dict[str, str] = {}
    for term, obj in zip(clause.head.args, example.head.objects):
        if term.is_var:
            bound = seed.get(term.name)
            if bound is not None and bound != obj:
                return []
            seed[term.name] = obj
        elif term.name != obj:
            return []
    return ground_clause(clause, example, background, seed_binding=seed)


def clause_check(clause: Clause, known_templates: Iterable[str] = ()) -> list[str]:
    """Diagnostics: budget overflow, unbound variables, dangling templates.

    Returns a list of violation strings; empty means ok.
    """
    violations: list[str] = []
    if len(clause.body) > clause.literal_budget:
        violations.append(
            f"budget exceeded: {len(clause.body)} literals > budget {clause.literal_budget}"
        )
    anchored = {t.name for t in clause.head.args if t.is_var}
    for lit in clause.body:
        if lit.kind == "symbolic":
            anchored |= lit.variables()
    for name in sorted(clause.variables() - anchored):
        violations.append(f"unbound head variable: {name}")
    templates = set(known_templates)
    if templates:
        for lit in clause.body:
            if lit.kind == "parametric" and lit.template_id not in templates:
                violations.append(f"dangling template reference: {lit.template_id}")
    return violations


# --- facts file format ------------------------------------------------------

_ATOM_RE = re.compile(r"^([A-Za-z_][\w]*)\(([^()]*)\)$")


def _parse_atom(text: str, lineno: int) -> GroundAtom:
    m = _ATOM_RE.match(text.strip())
    if not m:
        raise LogicError(f"line {lineno}: bad atom {text!r}")
    objects = tuple(o.strip() for o in m.group(2).split(",")) if m.group(2).strip() else ()
    return GroundAtom(m.group(1), objects)


def parse_dataset(text: str, theory_class: str = "LRA") -> Dataset:
    """Parse the line-oriented facts format.

    Lines: `fact pred(obj,...)`, `measure obj attr real`,
    `example id pos|neg pred(obj,...)`; `#` starts a comment.
    """
    atoms: set[GroundAtom] = set()
    measurements: dict[tuple[str, str], float] = {}
    positives: list[Example] = []
    negatives: list[Example] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split(None, 1)
        kind = fields[0]
        rest = fields[1] if len(fields) > 1 else ""
        if kind == "fact":
            atoms.add(_parse_atom(rest, lineno))
        elif kind == "measure":
            parts = rest.split()
            if len(parts) != 3:
                raise LogicError(f"line {lineno}: bad measure line {raw!r}")
            obj, attr, val = parts
            measurements[(obj, attr)] = float(val)
        elif kind == "example":
            parts = rest.split(None, 2)
            if len(parts) != 3 or parts[1] not in ("pos", "neg"):
                raise LogicError(f"line {lineno}: bad example line {raw!r}")
            ex = Example(parts[0], parts[1], _parse_atom(parts[2], lineno))
            (positives if parts[1] == "pos" else negatives).append(ex)
        else:
            raise LogicError(f"line {lineno}: unknown directive {kind!r}")
    return Dataset(
        frozenset(atoms), measurements, tuple(positives), tuple(negatives), theory_class
    )


def serialize_dataset(dataset: Dataset) -> str:
    """Inverse of parse_dataset up to ordering; parse∘serialize∘parse = parse."""
    lines: list[str] = []
    for atom in sorted(dataset.background, key=lambda a: (a.predicate, a.objects)):
        lines.append(f"fact {atom}")
    for (obj, attr), val in sorted(dataset.measurements.items()):
        lines.append(f"measure {obj} {attr} {val!r}")
    for ex in dataset.examples:
        lines.append(f"example {ex.id} {ex.polarity} {ex.head}")
    return "\n".join(lines) + "\n"


def load_dataset(path: str, theory_class: str = "LRA") -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_dataset(fh.read(), theory_class)


def save_dataset(dataset: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_dataset(dataset))

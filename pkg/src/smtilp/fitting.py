"""Per-clause MaxSMT construction, parameter instantiation, verification,
coverage statistics and scoring; plus direct-from-data interval/halfplane
learning.

Coverage is existential: an example is covered when at least one ground
binding (head anchored to the example's declared atom) satisfies every body
literal. Positive coverage enters the MaxSMT instance as hard constraints;
each negative contributes a weight-1 soft rejection constraint. If the hard
set is unsatisfiable the fit is retried once with positives demoted to
weight-10 soft constraints (flagged in the rule's provenance).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import formula as F
from . import templates as T
from .backend import MaxSmtInstance, ParamDecl, SolveResult
from .fitters import FitStructure, LiteralFit, coverage_mask
from .logic import AttrRef, Clause, Dataset, Example, Literal, LogicError, coverage_bindings, var

SCORE_THRESHOLD = 0.6
POS_SOFT_WEIGHT = 10.0

_CMP_TO_TID = {"<": "varcmp_lt", "<=": "varcmp_le", "=": "varcmp_eq",
               ">=": "varcmp_ge", ">": "varcmp_gt"}


@dataclass(frozen=True)
class RuleStats:
    cov_pos: int
    exc_neg: int
    n_pos: int
    n_neg: int
    body_len: int
    budget: int

    @property
    def precision(self) -> float:
        covered = self.cov_pos + (self.n_neg - self.exc_neg)
        return self.cov_pos / covered if covered else 0.0

    @property
    def recall(self) -> float:
        return self.cov_pos / self.n_pos if self.n_pos else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    @property
    def support(self) -> float:
        return self.cov_pos / self.n_pos if self.n_pos else 0.0

    @property
    def compression(self) -> float:
        return 1.0 - self.body_len / self.budget if self.budget else 0.0


def score_fn(stats: RuleStats) -> float:
    return (
        0.4 * stats.f1
        + 0.3 * stats.precision
        + 0.2 * stats.support
        + 0.1 * stats.compression
    )


@dataclass
class ScoredRule:
    clause: Clause
    params: dict[str, float]
    stats: RuleStats
    score: float
    origin: str = "structured"  # arithmetic | structured | other
    iteration: int = 0
    soft_positives: bool = False  # fitted with demoted positives
    exact_fit: bool = True
    violations: tuple[str, ...] = ()  # uncovered positives / covered negatives

    def literal_params(self, index: int) -> dict[str, float]:
        prefix = f"p{index}_"
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    def __str__(self) -> str:
        return serialize_rule(self)


@dataclass
class Infeasible:
    reason: str


# --- binding tables --------------------------------------------------------------


def _comparison_holds(lit: Literal, binding, example: Example, dataset: Dataset) -> bool:
    a = dataset.measurement(example, *lit.lhs.bound(binding))
    b = dataset.measurement(example, *lit.rhs.bound(binding))
    return {"<": a < b, "<=": a <= b, "=": a == b, ">=": a >= b, ">": a > b}[lit.comparator]


def build_structure(
    clause: Clause, dataset: Dataset, examples: tuple[Example, ...] | None = None
) -> FitStructure:
    """Binding tables for the clause over (a subset of) the dataset's examples.

    Bindings failing a comparison literal or missing a measurement are dropped;
    parametric argument rows are stacked aligned across literals.
    """
    examples = dataset.examples if examples is None else examples
    plits = clause.parametric_literals()
    comps = [l for l in clause.body if l.kind == "comparison"]
    rows: list[list[list[float]]] = [[] for _ in plits]
    example_ids: list[int] = []
    is_pos = np.array([e.is_positive for e in examples], dtype=bool)
    uncoverable_pos = 0
    index = dataset.fact_index
    for ei, example in enumerate(examples):
        bindings = coverage_bindings(clause, example, index)
        kept = 0
        for binding in bindings:
            try:
                if not all(_comparison_holds(c, binding, example, dataset) for c in comps):
                    continue
                arg_rows = []
                for _, lit in plits:
                    arg_rows.append(
                        [
                            dataset.measurement(example, *slot.bound(binding))
                            for slot in lit.slots
                        ]
                    )
            except LogicError:
                continue
            for k, r in enumerate(arg_rows):
                rows[k].append(r)
            example_ids.append(ei)
            kept += 1
        if kept == 0 and example.is_positive:
            uncoverable_pos += 1
    literals = [
        LiteralFit(
            lit.template_id,
            f"p{idx}_",
            np.array(rows[k], dtype=float).reshape(len(example_ids), T.get(lit.template_id).arity),
        )
        for k, (idx, lit) in enumerate(plits)
    ]
    return FitStructure(
        literals=literals,
        example_ids=np.array(example_ids, dtype=int),
        is_pos=is_pos,
        uncoverable_pos=uncoverable_pos,
    )


def covered_examples(
    clause: Clause,
    params: dict[str, float],
    dataset: Dataset,
    examples: tuple[Example, ...] | None = None,
    struct: FitStructure | None = None,
) -> np.ndarray:
    """Vectorized existential coverage of each example."""
    if struct is None:
        examples = dataset.examples if examples is None else examples
        struct = build_structure(clause, dataset, examples)
    per_lit = []
    for idx, _lit in clause.parametric_literals():
        prefix = f"p{idx}_"
        per_lit.append({n[len(prefix):]: v for n, v in params.items() if n.startswith(prefix)})
    return coverage_mask(struct, per_lit)


def compute_stats(
    clause: Clause,
    params: dict[str, float],
    dataset: Dataset,
    struct: FitStructure | None = None,
) -> tuple[RuleStats, tuple[str, ...]]:
    covered = covered_examples(clause, params, dataset, struct=struct)
    examples = dataset.examples
    is_pos = np.array([e.is_positive for e in examples], dtype=bool)
    cov_pos = int((covered & is_pos).sum())
    exc_neg = int((~covered & ~is_pos).sum())
    violations = tuple(
        e.id
        for e, c in zip(examples, covered)
        if (e.is_positive and not c) or ((not e.is_positive) and c)
    )
    stats = RuleStats(
        cov_pos=cov_pos,
        exc_neg=exc_neg,
        n_pos=len(dataset.positives),
        n_neg=len(dataset.negatives),
        body_len=len(clause.body),
        budget=clause.literal_budget,
    )
    return stats, violations


# --- MaxSMT construction -----------------------------------------------------------


def _coverage_formulas(clause: Clause, struct: FitStructure) -> list[object]:
    """Per-example coverage formula: disjunction over its bindings of the
    conjunction of parametric-literal encodings (symbolic parameters)."""
    plits = clause.parametric_literals()
    symbolic_params = []
    for idx, lit in plits:
        tpl = T.get(lit.template_id)
        symbolic_params.append(
            (tpl, {name: F.Var(f"p{idx}_{name}") for name in tpl.param_names})
        )
    branches: list[list[object]] = [[] for _ in range(struct.n_examples)]
    for r, ei in enumerate(struct.example_ids):
        parts = [
            T.encode(tpl, lit.rows[r].tolist(), params)
            for lit, (tpl, params) in zip(struct.literals, symbolic_params)
        ]
        branches[ei].append(F.conj(*parts))
    return [F.disj(*b) for b in branches]


def build_maxsmt(
    clause: Clause,
    dataset: Dataset,
    timeout: float = 30.0,
    demote_positives: bool = False,
    build_formulas: bool = True,
) -> MaxSmtInstance:
    """Hard positive-coverage constraints, weight-1 soft negative rejections.

    Positives without any symbolic-ground binding make the instance
    unsatisfiable-by-construction; they are reported in `notes` and the
    instance is still returned. `build_formulas=False` keeps only the binding
    tables (enough for the builtin fitter) and skips the formula encodings.
    """
    declarations = []
    for idx, lit in clause.parametric_literals():
        tpl = T.get(lit.template_id)
        for name, lo, hi in tpl.params:
            declarations.append(ParamDecl(f"p{idx}_{name}", lo, hi))
    struct = build_structure(clause, dataset)
    struct.pos_hard = not demote_positives
    struct.pos_weight = POS_SOFT_WEIGHT
    hard: list[object] = []
    soft: list[tuple[object, float]] = []
    notes: list[str] = []
    formulas = _coverage_formulas(clause, struct) if build_formulas else None
    with_bindings = set(struct.example_ids.tolist())
    for i, example in enumerate(dataset.examples):
        if example.is_positive and i not in with_bindings:
            notes.append(f"positive {example.id} has no bindings")
        if formulas is None:
            continue
        f = formulas[i]
        if example.is_positive:
            if demote_positives:
                soft.append((f, POS_SOFT_WEIGHT))
            else:
                hard.append(f)
        else:
            soft.append((F.neg(f), 1.0))
    return MaxSmtInstance(
        declarations=declarations,
        hard=hard,
        soft=soft,
        timeout=timeout,
        structure=struct,
        notes=notes,
    )


def instantiate(
    clause: Clause,
    dataset: Dataset,
    timeout: float,
    backend,
    origin: str = "structured",
    iteration: int = 0,
) -> ScoredRule | Infeasible:
    """Fit the clause's parameters on the dataset and score the result."""
    if not clause.parametric_literals():
        stats, violations = compute_stats(clause, {}, dataset)
        return ScoredRule(
            clause, {}, stats, score_fn(stats), origin, iteration, violations=violations
        )
    build_formulas = getattr(backend, "wants_formulas", True)
    instance = build_maxsmt(clause, dataset, timeout, build_formulas=build_formulas)
    result = backend.solve_maxsmt(instance)
    soft_pos = False
    if result.status == "unsat":
        instance = build_maxsmt(
            clause, dataset, timeout, demote_positives=True, build_formulas=build_formulas
        )
        result = backend.solve_maxsmt(instance)
        soft_pos = True
    if result.status in ("unknown", "unsat"):
        return Infeasible(result.status)
    if result.status == "timeout" and result.model is None:
        return Infeasible("timeout")
    params = {d.name: float(result.model.get(d.name, 0.0)) for d in instance.declarations}
    stats, violations = compute_stats(clause, params, dataset, struct=instance.structure)
    return ScoredRule(
        clause,
        params,
        stats,
        score_fn(stats),
        origin,
        iteration,
        soft_positives=soft_pos,
        exact_fit=result.exact,
        violations=violations,
    )


# --- verification ------------------------------------------------------------------


@dataclass
class Verdict:
    keep: bool
    reason: str = ""


def body_satisfiable_formula(rule: ScoredRule) -> object:
    """The instantiated body over free argument variables (one per attr ref)."""
    parts = []
    for lit in rule.clause.body:
        if lit.kind == "comparison":
            lhs = F.Var(f"{lit.lhs.attr}__{lit.lhs.term.name}")
            rhs = F.Var(f"{lit.rhs.attr}__{lit.rhs.term.name}")
            parts.append(F.cmp(lit.comparator, lhs, rhs))
    for idx, lit in rule.clause.parametric_literals():
        slots = [F.Var(f"{s.attr}__{s.term.name}") for s in lit.slots]
        parts.append(T.encode(lit.template_id, slots, rule.literal_params(idx)))
    return F.conj(*parts)


def verify(
    rule: ScoredRule,
    dataset: Dataset,
    backend,
    theta: float = SCORE_THRESHOLD,
    sat_timeout: float = 5.0,
) -> Verdict:
    """Prune theory-unsatisfiable, overly specific, or low-scoring rules."""
    res = backend.check_sat(body_satisfiable_formula(rule), timeout=sat_timeout)
    if res.status in ("unknown", "timeout"):
        return Verdict(False, "undetermined")
    if res.status == "unsat":
        return Verdict(False, "unsat")
    if rule.stats.cov_pos <= 1 and rule.stats.n_pos >= 10:
        return Verdict(False, "overly specific")
    if rule.score < theta:
        return Verdict(False, "low score")
    return Verdict(True)


# --- direct arithmetic / range learning (Procedure step 1a) --------------------------


def _head_template(dataset: Dataset) -> tuple[str, int] | None:
    if not dataset.examples:
        return None
    head = dataset.examples[0].head
    return head.predicate, len(head.objects)


def _head_attrs(dataset: Dataset) -> list[tuple[int, str]]:
    """(head arg position, attr) pairs measured on every example's head objects."""
    sig = _head_template(dataset)
    if sig is None:
        return []
    _, arity = sig
    by_obj: dict[str, set[str]] = {}
    for (o, a) in dataset.measurements:
        by_obj.setdefault(o, set()).add(a)
    extra: dict[str, set[str]] = {}
    for e in dataset.examples:
        for (o, a) in e.measurements:
            extra.setdefault(o, set()).add(a)
    out = []
    for pos in range(arity):
        attrs: set[str] | None = None
        for e in dataset.examples:
            obj = e.head.objects[pos]
            have = by_obj.get(obj, set()) | extra.get(obj, set())
            attrs = set(have) if attrs is None else attrs & have
            if not attrs:
                break
        for a in sorted(attrs or ()):
            out.append((pos, a))
    return out


def _single_literal_clause(
    dataset: Dataset, template_id: str, slots: list[tuple[int, str]], budget: int
) -> Clause:
    pred, arity = _head_template(dataset)
    head_vars = [var(f"V{i}") for i in range(arity)]
    head = Literal.symbolic(pred, head_vars)
    lit = Literal.parametric(
        template_id, [AttrRef(attr, head_vars[pos]) for pos, attr in slots]
    )
    return Clause.make(head, [lit], budget)


def learn_range_relations(
    dataset: Dataset,
    timeout: float,
    backend,
    budget: int = 3,
    iteration: int = 0,
) -> list[ScoredRule]:
    """Fit interval1d per head attribute directly via MaxSMT."""
    rules = []
    for pos, attr in _head_attrs(dataset):
        clause = _single_literal_clause(dataset, "interval1d", [(pos, attr)], budget)
        fitted = instantiate(clause, dataset, timeout, backend, origin="arithmetic",
                             iteration=iteration)
        if isinstance(fitted, ScoredRule):
            rules.append(fitted)
    return rules


def learn_arithmetic_relations(
    dataset: Dataset,
    timeout: float,
    backend,
    budget: int = 3,
    iteration: int = 0,
    enable_3d: bool = False,
) -> list[ScoredRule]:
    """Fit halfplane2d per attribute pair (and halfplane3d per triple) via MaxSMT."""
    attrs = _head_attrs(dataset)
    if len(attrs) < 2:
        return []
    rules = []
    for i in range(len(attrs)):
        for j in range(i + 1, len(attrs)):
            clause = _single_literal_clause(
                dataset, "halfplane2d", [attrs[i], attrs[j]], budget
            )
            fitted = instantiate(clause, dataset, timeout, backend,
                                 origin="arithmetic", iteration=iteration)
            if isinstance(fitted, ScoredRule):
                rules.append(fitted)
    if enable_3d and len(attrs) >= 3:
        for i in range(len(attrs)):
            for j in range(i + 1, len(attrs)):
                for k in range(j + 1, len(attrs)):
                    clause = _single_literal_clause(
                        dataset, "halfplane3d", [attrs[i], attrs[j], attrs[k]], budget
                    )
                    fitted = instantiate(clause, dataset, timeout, backend,
                                         origin="arithmetic", iteration=iteration)
                    if isinstance(fitted, ScoredRule):
                        rules.append(fitted)
    return rules


# --- rule text format ----------------------------------------------------------------

_RULE_RE = re.compile(
    r"^rule\s+(?P<score>\S+)\s+(?P<origin>\w+):\s*(?P<head>[^<]+)<-\s*(?P<body>.*?)"
    r"\s*(?:\{(?P<params>[^}]*)\})?\s*$"
)
_SYM_RE = re.compile(r"^(\w+)\(([^()]*)\)$")
_ATTR_RE = re.compile(r"^(\w+)\((\w+)\)$")
_CMP_RE = re.compile(r"^(.+?)\s*(<=|>=|=|<|>)\s*(.+)$")


def serialize_rule(rule: ScoredRule) -> str:
    body = ", ".join(str(l) for l in rule.clause.body) if rule.clause.body else "true"
    params = ", ".join(f"{k}={v:.12g}" for k, v in sorted(rule.params.items()))
    text = f"rule {rule.score:.12g} {rule.origin}: {rule.clause.head} <- {body}"
    if params:
        text += f" {{{params}}}"
    return text


def _parse_attr_ref(text: str) -> AttrRef:
    m = _ATTR_RE.match(text.strip())
    if not m:
        raise LogicError(f"bad attribute ref {text!r}")
    return AttrRef(m.group(1), var(m.group(2)))


def _parse_literal(text: str) -> Literal:
    text = text.strip()
    m = _SYM_RE.match(text)
    if m:
        name, inner = m.group(1), m.group(2)
        if name in T.CATALOGUE:
            slots = [_parse_attr_ref(s) for s in _split_args(inner)]
            return Literal.parametric(name, slots)
        args = [var(a.strip()) for a in inner.split(",")] if inner.strip() else []
        return Literal.symbolic(name, args)
    m = _CMP_RE.match(text)
    if m:
        return Literal.comparison(
            _parse_attr_ref(m.group(1)), m.group(2), _parse_attr_ref(m.group(3))
        )
    raise LogicError(f"bad literal {text!r}")


def _split_args(inner: str) -> list[str]:
    # attr refs contain one level of parens: split on commas outside parens
    parts, depth, cur = [], 0, ""
    for ch in inner:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            depth += 1 if ch == "(" else -1 if ch == ")" else 0
            cur += ch
    if cur.strip():
        parts.append(cur)
    return parts


def parse_rule(text: str, n_pos: int = 0, n_neg: int = 0) -> ScoredRule:
    m = _RULE_RE.match(text.strip())
    if not m:
        raise LogicError(f"bad rule line {text!r}")
    head = _parse_literal(m.group("head").strip())
    body_text = m.group("body").strip()
    # strip a trailing params block that the body regex may have swallowed
    body = []
    if body_text and body_text != "true":
        body = [_parse_literal(t) for t in _split_args(body_text)]
    params: dict[str, float] = {}
    if m.group("params"):
        for part in m.group("params").split(","):
            k, v = part.split("=")
            params[k.strip()] = float(v)
    clause = Clause.make(head, body, max(1, len(body)))
    stats = RuleStats(0, 0, n_pos, n_neg, len(body), clause.literal_budget)
    return ScoredRule(clause, params, stats, float(m.group("score")), m.group("origin"))


def serialize_rules(rules: list[ScoredRule]) -> str:
    return "\n".join(serialize_rule(r) for r in rules) + ("\n" if rules else "")


def parse_rules(text: str) -> list[ScoredRule]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(parse_rule(line))
    return out

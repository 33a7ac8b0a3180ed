"""The iterative learning loop: generate structures, fit parameters, verify,
accumulate, refine background, converge, post-process, select.

Each iteration: candidate clauses are enumerated (with invention when
enabled), optionally joined by direct interval/halfplane fits, instantiated
via MaxSMT under the iteration's wall-clock budget, then verified and scored.
Validated rules accumulate; quality is the mean F1 of the newly validated
batch, and the loop stops when its improvement falls to the convergence
threshold or the iteration cap is reached. High-precision rules from the
first iterations are materialized into the background so later structural
search can build on them.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import fitting
from .backend import BuiltinBackend
from .fitting import Infeasible, ScoredRule, compute_stats, score_fn
from .logic import Clause, Dataset, Example, GroundAtom
from .search import LanguageBias, invent_predicates, iter_clauses, materialize


class LoopError(RuntimeError):
    pass


@dataclass
class LoopConfig:
    theta_conv: float = 0.01
    t_max: int = 10
    iteration_timeout: float = 30.0
    total_timeout: float = 0.0  # 0: no cap beyond t_max * iteration_timeout
    solver_timeout: float = 10.0
    selection: str = "top_k"  # "top_k" | "greedy_cover"
    top_k: int = 5
    score_threshold: float = fitting.SCORE_THRESHOLD
    min_precision: float = 0.8
    enable_range_learning: bool = False
    enable_arithmetic_learning: bool = False
    enable_arithmetic_3d: bool = False
    pi_only: bool = False  # freeze thresholds at training medians (ablation)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.theta_conv <= 0:
            raise ValueError("theta_conv must be positive")
        if self.selection not in ("top_k", "greedy_cover"):
            raise ValueError(f"unknown selection {self.selection!r}")


@dataclass
class IterationLog:
    t: int
    quality: float
    delta_q: float
    n_candidates: int
    n_validated: int
    solver_calls: int
    wall_time: float
    truncated: bool = False


@dataclass
class LearnResult:
    rules: list[ScoredRule]
    pool: list[ScoredRule]  # accumulated H before selection
    log: list[IterationLog]
    # derived predicates added to the background in early iterations; any
    # dataset the final rules are evaluated on must materialize these first
    background_rules: list[tuple[str, ScoredRule]]

    @property
    def background_additions(self) -> list[str]:
        return [name for name, _ in self.background_rules]


def augment_dataset(
    dataset: Dataset, background_rules: list[tuple[str, ScoredRule]]
) -> Dataset:
    """Materialize derived background predicates over a dataset, in order."""
    work = dataset
    for name, rule in background_rules:
        covered = fitting.covered_examples(rule.clause, rule.params, work)
        atoms = {
            GroundAtom(name, e.head.objects)
            for e, c in zip(work.examples, covered)
            if c
        }
        work = work.with_background(atoms)
    return work


def quality(rules: list[ScoredRule]) -> float:
    if not rules:
        return 0.0
    return statistics.fmean(r.stats.f1 for r in rules)


def _rule_key(rule: ScoredRule) -> tuple:
    params = tuple(sorted((k, round(v, 9)) for k, v in rule.params.items()))
    return (rule.clause.head, rule.clause.body, params)


def _attr_medians(dataset: Dataset) -> dict[str, float]:
    by_attr: dict[str, list[float]] = {}
    for (obj, attr), val in dataset.measurements.items():
        by_attr.setdefault(attr, []).append(val)
    for e in dataset.examples:
        for (obj, attr), val in e.measurements.items():
            by_attr.setdefault(attr, []).append(val)
    return {a: float(np.median(vs)) for a, vs in by_attr.items()}


def _instantiate_frozen(
    clause: Clause, dataset: Dataset, medians: dict[str, float], iteration: int
) -> ScoredRule | Infeasible:
    """PI-only ablation: thresholds fixed at the training median of their
    attribute instead of being fitted."""
    params: dict[str, float] = {}
    for idx, lit in clause.parametric_literals():
        if lit.template_id != "influence_threshold":
            return Infeasible("pi_only supports threshold literals only")
        attr = lit.slots[0].attr
        params[f"p{idx}_tau"] = medians.get(attr, 0.0)
    stats, violations = compute_stats(clause, params, dataset)
    return ScoredRule(
        clause, params, stats, score_fn(stats), "structured", iteration,
        exact_fit=False, violations=violations,
    )


def _collapsed(rule: ScoredRule) -> bool:
    eps = 1e-9
    for idx, lit in rule.clause.parametric_literals():
        p = rule.literal_params(idx)
        tid = lit.template_id
        if tid == "interval1d" and p["hi"] - p["lo"] <= eps:
            return True
        if tid == "annulus" and p["r_max"] - p["r_min"] <= eps:
            return True
        if tid == "quad_strip" and p["hi"] - p["lo"] <= eps:
            return True
        if tid == "box2d" and (
            p["x_max"] - p["x_min"] <= eps or p["y_max"] - p["y_min"] <= eps
        ):
            return True
    return False


def post_process(
    rules: list[ScoredRule],
    dataset: Dataset,
    selection: str = "top_k",
    top_k: int = 5,
    min_precision: float = 0.8,
) -> list[ScoredRule]:
    """Duplicate/degenerate/contradiction removal, priority ordering, selection."""
    deduped: dict[tuple, ScoredRule] = {}
    for r in rules:
        key = _rule_key(r)
        if key not in deduped or r.score > deduped[key].score:
            deduped[key] = r
    kept = []
    for r in deduped.values():
        if r.stats.cov_pos == 0:  # degenerate or contradicts the head on data
            continue
        if _collapsed(r):
            continue
        kept.append(r)
    origin_rank = {"arithmetic": 0, "structured": 1}
    kept.sort(
        key=lambda r: (origin_rank.get(r.origin, 2), -r.score, fitting.serialize_rule(r))
    )
    precise = [r for r in kept if r.stats.precision >= min_precision]
    if not precise and kept:
        precise = [max(kept, key=lambda r: (r.stats.precision, r.score))]
    if selection == "top_k":
        return precise[:top_k]
    # greedy cover over training positives; ties by precision, score, priority
    chosen: list[ScoredRule] = []
    covered = np.zeros(len(dataset.positives), dtype=bool)
    cov_cache = {
        id(r): fitting.covered_examples(r.clause, r.params, dataset)[
            : len(dataset.positives)
        ]
        for r in precise
    }
    remaining = list(precise)
    while remaining:
        gains = [
            (int((cov_cache[id(r)] & ~covered).sum()), r.stats.precision, r.score, -i)
            for i, r in enumerate(remaining)
        ]
        gain, _prec, _score, neg_i = max(gains)
        if gain <= 0:
            break
        rule = remaining.pop(-neg_i)
        chosen.append(rule)
        covered |= cov_cache[id(rule)]
    if not chosen and precise:
        chosen = [max(precise, key=lambda r: (r.stats.precision, r.score))]
    return chosen


def predict(
    rules: list[ScoredRule],
    example: Example,
    dataset: Dataset,
    background_rules: list[tuple[str, ScoredRule]] = (),
) -> bool:
    """Positive iff any rule covers the example (existential semantics)."""
    if background_rules:
        dataset = augment_dataset(dataset, background_rules)
    for rule in rules:
        covered = fitting.covered_examples(rule.clause, rule.params, dataset, (example,))
        if bool(covered[0]):
            return True
    return False


def predict_all(
    rules: list[ScoredRule],
    dataset: Dataset,
    background_rules: list[tuple[str, ScoredRule]] = (),
) -> np.ndarray:
    """Vectorized predict over dataset.examples."""
    if background_rules:
        dataset = augment_dataset(dataset, background_rules)
    out = np.zeros(len(dataset.examples), dtype=bool)
    for rule in rules:
        out |= fitting.covered_examples(rule.clause, rule.params, dataset)
    return out


def accuracy(
    rules: list[ScoredRule],
    dataset: Dataset,
    background_rules: list[tuple[str, ScoredRule]] = (),
) -> float:
    pred = predict_all(rules, dataset, background_rules)
    truth = np.array([e.is_positive for e in dataset.examples], dtype=bool)
    return float((pred == truth).mean()) if truth.size else 0.0


def run_learning(
    dataset: Dataset,
    bias: LanguageBias,
    config: LoopConfig,
    backend=None,
) -> LearnResult:
    if not dataset.examples:
        raise LoopError("empty dataset")
    backend = backend if backend is not None else BuiltinBackend(seed=config.seed)
    work = dataset
    work_bias = bias
    if bias.predicate_invention:
        for inv in invent_predicates(dataset, bias):
            work = work.with_background(materialize(inv, work))
            if (inv.name, 2) not in work_bias.body_preds:
                work_bias = replace(
                    work_bias, body_preds=work_bias.body_preds + ((inv.name, 2),)
                )
    medians = _attr_medians(dataset) if config.pi_only else {}

    pool: list[ScoredRule] = []
    known: set[tuple] = set()
    known_extensions: set[frozenset] = set()
    log: list[IterationLog] = []
    background_rules: list[tuple[str, ScoredRule]] = []
    q_prev, delta_q, t = 0.0, float("inf"), 0
    run_deadline = (
        time.monotonic() + config.total_timeout if config.total_timeout else None
    )

    while delta_q > config.theta_conv and t < config.t_max:
        started = time.monotonic()
        if run_deadline is not None and started >= run_deadline - 1.0:
            break
        deadline = started + config.iteration_timeout
        if run_deadline is not None:
            deadline = min(deadline, run_deadline)
        solver_calls = 0
        validated: list[ScoredRule] = []
        n_candidates = 0
        truncated = False

        fitted: list[ScoredRule] = []
        if config.enable_range_learning:
            fitted.extend(
                fitting.learn_range_relations(
                    dataset, config.solver_timeout, backend,
                    budget=bias.literal_budget, iteration=t,
                )
            )
        if config.enable_arithmetic_learning:
            fitted.extend(
                fitting.learn_arithmetic_relations(
                    dataset, config.solver_timeout, backend,
                    budget=bias.literal_budget, iteration=t,
                    enable_3d=config.enable_arithmetic_3d,
                )
            )
        solver_calls += len(fitted)

        for clause in iter_clauses(work, work_bias):
            n_candidates += 1
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                truncated = True
                break
            if config.pi_only and clause.parametric_literals():
                result = _instantiate_frozen(clause, work, medians, t)
            else:
                result = fitting.instantiate(
                    clause, work, min(config.solver_timeout, max(0.1, remaining)),
                    backend, iteration=t,
                )
                solver_calls += 1
            if isinstance(result, Infeasible):
                continue
            fitted.append(result)
        if n_candidates == 0 and t == 0 and not fitted:
            raise LoopError("empty hypothesis space")

        for rule in fitted:
            verdict = fitting.verify(
                rule, work, backend, theta=config.score_threshold
            )
            solver_calls += 1
            if verdict.keep:
                validated.append(rule)

        for rule in validated:
            key = _rule_key(rule)
            if key not in known:
                known.add(key)
                pool.append(rule)
        q_t = quality(validated)
        delta_q = q_t - q_prev
        q_prev = q_t
        t += 1
        log.append(
            IterationLog(
                t=t, quality=q_t, delta_q=delta_q, n_candidates=n_candidates,
                n_validated=len(validated), solver_calls=solver_calls,
                wall_time=time.monotonic() - started, truncated=truncated,
            )
        )
        # background refinement: only high-precision rules, first iterations only
        if t < 3:
            high = [r for r in validated if r.stats.precision > 0.8]
            for rule in high:
                body = rule.clause.body
                if len(body) == 1 and body[0].kind == "symbolic":
                    continue  # plain alias of an existing predicate
                covered = fitting.covered_examples(rule.clause, rule.params, work)
                extension = frozenset(
                    e.head.objects for e, c in zip(work.examples, covered) if c
                )
                if not extension or extension in known_extensions:
                    continue
                known_extensions.add(extension)
                name = f"bk_rule_{len(background_rules)}"
                atoms = {GroundAtom(name, objs) for objs in extension}
                work = work.with_background(atoms)
                arity = len(rule.clause.head.args)
                work_bias = replace(
                    work_bias, body_preds=work_bias.body_preds + ((name, arity),)
                )
                background_rules.append((name, rule))

    final = post_process(
        pool, work, selection=config.selection, top_k=config.top_k,
        min_precision=config.min_precision,
    )
    return LearnResult(final, pool, log, background_rules)

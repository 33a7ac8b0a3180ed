"""Experiment harness: per-family budgets/timeouts/trials, task runners,
suite aggregation, and the influence-propagation ablation.

Results go to an output directory as results.jsonl (one record per
task/mode/trial, including the per-example prediction log and timings) plus
results.canonical.jsonl with volatile timing fields stripped — that file is
byte-reproducible for a fixed config and backend — and a plain-text table.
"""

from __future__ import annotations

import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import benchmarks
from .backend import BuiltinBackend
from .external import ExternalBackend
from .benchmarks import TaskSpec, generate, split_indices, subset
from .fitting import serialize_rule
from .loop import LearnResult, LoopConfig, predict_all, run_learning
from .search import LanguageBias

BUDGETS = {"geometry0": 3, "geometry1": 6, "geometry2": 5, "geometry3": 6, "ip": 4}
TIMEOUTS = {"geometry0": 45.0, "geometry1": 120.0, "geometry2": 30.0, "geometry3": 60.0}
IP_TIMEOUTS = {
    "ip1_active": 30.0,
    "ip2_active": 60.0,
    "ip3_active": 120.0,
    "ip3_threshold": 120.0,
    "ip4_high_score": 180.0,
}
TRIALS = {"geometry0": 10, "geometry1": 10, "geometry2": 5, "geometry3": 5, "ip": 5}

GEOMETRY3_TEMPLATES = (
    "circle", "circle_outside", "annulus", "ellipse", "hyperbola_side",
    "product_threshold", "quad_strip", "parabola", "abs_box", "sinusoid",
    "box2d", "halfplane2d", "interval1d",
)

BOX_ATTRS = ("x_min", "x_max", "y_min", "y_max")


@dataclass
class SuiteConfig:
    budgets: dict = field(default_factory=lambda: dict(BUDGETS))
    timeouts: dict = field(default_factory=lambda: dict(TIMEOUTS))
    ip_timeouts: dict = field(default_factory=lambda: dict(IP_TIMEOUTS))
    trials: dict = field(default_factory=lambda: dict(TRIALS))
    backend: str = "builtin"  # "builtin" | "external"
    solver_cmd: str | None = None  # external backend command override
    base_seed: int = 0
    out_dir: str = "runs"
    workers: int = 1
    disable_templates: dict = field(default_factory=dict)  # family -> [template_id]
    selection: str = "greedy_cover"  # union semantics punish superfluous rules
    top_k: int = 5

    @staticmethod
    def from_dict(data: dict) -> "SuiteConfig":
        cfg = SuiteConfig()
        for key, value in data.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            if isinstance(getattr(cfg, key), dict) and isinstance(value, dict):
                getattr(cfg, key).update(value)
            else:
                setattr(cfg, key, value)
        return cfg

    def make_backend(self, seed: int):
        if self.backend == "builtin":
            return BuiltinBackend(seed=seed)
        if self.backend == "external":
            return ExternalBackend(cmd=self.solver_cmd, seed=seed)
        raise ValueError(f"unknown backend {self.backend!r}")

    def task_timeout(self, task_name: str) -> float:
        family = benchmarks.TASKS[task_name].family
        if family == "ip":
            return self.ip_timeouts.get(task_name, 120.0)
        return self.timeouts[family]


def task_bias(task_name: str, config: SuiteConfig, mode: str = "full") -> LanguageBias:
    """The language bias each task family searches under."""
    task = benchmarks.TASKS[task_name]
    family = task.family
    budget = config.budgets[family]
    disabled = set(config.disable_templates.get(family, ()))

    def tpl(*ids: str) -> tuple[str, ...]:
        return tuple(t for t in ids if t not in disabled)

    if family == "geometry0":
        if task_name == "interval":
            return LanguageBias(
                "target", 1, template_ids=tpl("interval1d"), literal_budget=budget,
                head_attr_map=(("x",),), scalar_attrs=("x",),
            )
        return LanguageBias(
            "target", 1, template_ids=tpl("interval1d", "halfplane2d"),
            literal_budget=budget, coord_attrs=("x", "y"),
            head_attr_map=(("x", "y"),),
        )
    if family == "geometry1":
        return LanguageBias(
            "target", 1, template_ids=tpl("interval1d", "halfplane3d"),
            literal_budget=budget, coord_attrs=("x", "y", "z"),
            head_attr_map=(("x", "y", "z"),),
        )
    if family == "geometry2":
        point = ("x", "y")
        if task_name in ("left_of", "closer_than", "touching"):
            return LanguageBias(
                task.head_pred, 2, template_ids=tpl("distance_threshold"),
                literal_budget=budget, coord_attrs=point,
                varcmp_attrs=point, head_attr_map=(point, point),
            )
        if task_name == "inside":
            return LanguageBias(
                "inside", 2, template_ids=(), literal_budget=budget,
                coord_attrs=point, varcmp_attrs=point + BOX_ATTRS,
                head_attr_map=(point, BOX_ATTRS),
            )
        if task_name in ("overlapping", "adjacent", "surrounds"):
            return LanguageBias(
                task.head_pred, 2, template_ids=(), literal_budget=budget,
                varcmp_attrs=BOX_ATTRS, head_attr_map=(BOX_ATTRS, BOX_ATTRS),
            )
        if task_name in ("between", "aligned"):
            return LanguageBias(
                task.head_pred, 3,
                template_ids=tpl("collinear3pt", "between3pt"),
                literal_budget=budget, coord_attrs=point,
                head_attr_map=(point, point, point),
            )
        # near_corner
        return LanguageBias(
            "near_corner", 1, template_ids=tpl("box2d", "interval1d"),
            literal_budget=budget, coord_attrs=point, head_attr_map=(point,),
        )
    if family == "geometry3":
        return LanguageBias(
            "target", 1, template_ids=tpl(*GEOMETRY3_TEMPLATES),
            literal_budget=budget, coord_attrs=("x", "y"),
            head_attr_map=(("x", "y"),),
        )
    # ip family
    return LanguageBias(
        "active", 1, body_preds=(("propagates", 2),),
        template_ids=tpl("influence_threshold"), literal_budget=budget,
        predicate_invention=(mode != "no_pi"), max_invented=1,
        scalar_attrs=("score", "max_influence"),
        head_attr_map=(("score", "max_influence"),),
        chain_depth=1, max_body_vars=2,
    )


def loop_config(task_name: str, config: SuiteConfig, mode: str, seed: int) -> LoopConfig:
    family = benchmarks.TASKS[task_name].family
    timeout = config.task_timeout(task_name)
    return LoopConfig(
        iteration_timeout=timeout / 2.0,
        total_timeout=timeout,
        solver_timeout=min(10.0, timeout / 4.0),
        selection=config.selection,
        top_k=config.top_k,
        enable_range_learning=family in ("geometry0", "geometry1"),
        enable_arithmetic_learning=family in ("geometry0", "geometry1"),
        enable_arithmetic_3d=family == "geometry1",
        pi_only=(mode == "pi_only"),
        seed=seed,
    )


@dataclass
class ResultRecord:
    task: str
    trial: int
    seed: int
    mode: str
    accuracy: float
    wall_time_s: float
    learn_time_s: float
    n_rules: int
    rules: list[str]
    predictions: list[dict]
    iterations: list[dict]
    error: str = ""

    def to_json(self, canonical: bool = False) -> str:
        data = {
            "task": self.task,
            "trial": self.trial,
            "seed": self.seed,
            "mode": self.mode,
            "accuracy": self.accuracy,
            "n_rules": self.n_rules,
            "rules": self.rules,
            "predictions": self.predictions,
            "error": self.error,
        }
        if not canonical:
            data["wall_time_s"] = self.wall_time_s
            data["learn_time_s"] = self.learn_time_s
            data["iterations"] = self.iterations
        return json.dumps(data, sort_keys=True)


def run_trial(task_name: str, config: SuiteConfig, mode: str, trial: int) -> ResultRecord:
    started = time.monotonic()
    seed = config.base_seed + trial
    spec = benchmarks.default_spec(task_name, seed=seed)
    try:
        dataset, _manifest = generate(spec)
        train_idx, test_idx = split_indices(spec, len(dataset.examples))
        train = subset(dataset, train_idx)
        test = subset(dataset, test_idx)
        backend = config.make_backend(seed)
        bias = task_bias(task_name, config, mode)
        cfg = loop_config(task_name, config, mode, seed)
        learn_started = time.monotonic()
        result: LearnResult = run_learning(train, bias, cfg, backend)
        learn_time = time.monotonic() - learn_started
        pred = predict_all(result.rules, test, result.background_rules)
        truth = [e.is_positive for e in test.examples]
        predictions = [
            {"id": e.id, "predicted": bool(p), "actual": bool(a)}
            for e, p, a in zip(test.examples, pred, truth)
        ]
        acc = (
            sum(1 for p, a in zip(pred, truth) if bool(p) == a) / len(truth)
            if truth
            else 0.0
        )
        return ResultRecord(
            task=task_name, trial=trial, seed=seed, mode=mode,
            accuracy=round(float(acc), 6),
            wall_time_s=time.monotonic() - started, learn_time_s=learn_time,
            n_rules=len(result.rules),
            rules=[serialize_rule(r) for r in result.rules],
            predictions=predictions,
            iterations=[
                {
                    "t": l.t, "quality": l.quality, "delta_q": l.delta_q,
                    "candidates": l.n_candidates, "validated": l.n_validated,
                    "solver_calls": l.solver_calls, "wall_time": l.wall_time,
                    "truncated": l.truncated,
                }
                for l in result.log
            ],
        )
    except Exception as exc:  # failed trials are recorded, suite continues
        return ResultRecord(
            task=task_name, trial=trial, seed=seed, mode=mode, accuracy=0.0,
            wall_time_s=time.monotonic() - started, learn_time_s=0.0,
            n_rules=0, rules=[], predictions=[], iterations=[],
            error=f"{type(exc).__name__}: {exc}",
        )


def run_task(
    task_name: str, config: SuiteConfig, mode: str = "full", trials: int | None = None
) -> list[ResultRecord]:
    n = trials if trials is not None else config.trials[benchmarks.TASKS[task_name].family]
    jobs = [(task_name, config, mode, i) for i in range(n)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_trial_star, jobs))
    else:
        records = [run_trial(*j) for j in jobs]
    records.sort(key=lambda r: r.trial)
    return records


def _run_trial_star(args):
    return run_trial(*args)


def _mean_std(values: list[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    mean = statistics.fmean(values)
    std = statistics.pstdev(values) if len(values) > 1 else 0.0
    return mean, std


def summarize(records: list[ResultRecord]) -> dict[tuple[str, str], dict]:
    """(task, mode) -> {accuracy mean/std, time mean/std, failures}."""
    grouped: dict[tuple[str, str], list[ResultRecord]] = {}
    for r in records:
        grouped.setdefault((r.task, r.mode), []).append(r)
    out = {}
    for key, rs in grouped.items():
        ok = [r for r in rs if not r.error]
        acc = _mean_std([100.0 * r.accuracy for r in ok])
        tim = _mean_std([r.wall_time_s for r in ok])
        out[key] = {
            "accuracy_mean": acc[0], "accuracy_std": acc[1],
            "time_mean": tim[0], "time_std": tim[1],
            "n_trials": len(rs), "failures": len(rs) - len(ok),
        }
    return out


def format_table(records: list[ResultRecord]) -> str:
    stats = summarize(records)
    lines = [f"{'Task':<20} {'Mode':<8} {'Accuracy (%)':>14} {'Time (s)':>14}"]
    lines.append("-" * len(lines[0]))
    for (task, mode), s in sorted(stats.items()):
        lines.append(
            f"{task:<20} {mode:<8} "
            f"{s['accuracy_mean']:6.1f} ± {s['accuracy_std']:4.1f} "
            f"{s['time_mean']:8.1f} ± {s['time_std']:4.1f}"
        )
    return "\n".join(lines)


def format_ablation_table(records: list[ResultRecord]) -> str:
    stats = summarize(records)
    tasks = sorted({t for t, _ in stats})
    header = f"{'Task':<18} {'No PI':>12} {'PI Only':>12} {'PI+SMT':>12} {'Time (s)':>12}"
    lines = [header, "-" * len(header)]
    for task in tasks:
        cells = []
        for mode in ("no_pi", "pi_only", "full"):
            s = stats.get((task, mode))
            cells.append(
                f"{s['accuracy_mean']:5.0f} ± {s['accuracy_std']:3.0f}" if s else "   N/A  "
            )
        s_full = stats.get((task, "full"))
        t = f"{s_full['time_mean']:6.0f} ± {s_full['time_std']:3.0f}" if s_full else "N/A"
        lines.append(f"{task:<18} {cells[0]:>12} {cells[1]:>12} {cells[2]:>12} {t:>12}")
    return "\n".join(lines)


def write_results(records: list[ResultRecord], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: (r.task, r.mode, r.trial))
    with open(out / "results.jsonl", "w", encoding="utf-8") as fh:
        for r in ordered:
            fh.write(r.to_json() + "\n")
    with open(out / "results.canonical.jsonl", "w", encoding="utf-8") as fh:
        for r in ordered:
            fh.write(r.to_json(canonical=True) + "\n")
    return out


def run_suite(
    families: list[str], config: SuiteConfig, trials: int | None = None
) -> list[ResultRecord]:
    records: list[ResultRecord] = []
    for family in families:
        if family not in benchmarks.FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        for task_name in benchmarks.FAMILIES[family]:
            records.extend(run_task(task_name, config, "full", trials))
    out = write_results(records, config.out_dir)
    with open(out / "table.txt", "w", encoding="utf-8") as fh:
        fh.write(format_table(records) + "\n")
    return records


def run_ablation_ip(config: SuiteConfig, trials: int | None = None) -> list[ResultRecord]:
    records: list[ResultRecord] = []
    for task_name in benchmarks.FAMILIES["ip"]:
        for mode in ("no_pi", "pi_only", "full"):
            records.extend(run_task(task_name, config, mode, trials))
    out = write_results(records, config.out_dir)
    with open(out / "ablation.txt", "w", encoding="utf-8") as fh:
        fh.write(format_ablation_table(records) + "\n")
    return records

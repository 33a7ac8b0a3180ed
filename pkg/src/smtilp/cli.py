"""Command line interface: dataset generation, learning, suites, the IP
ablation, and rule evaluation.

A YAML config file (--config) can override any SuiteConfig field, including
per-family budgets/timeouts/trials and per-family disabled templates; the
SMTILP_SOLVER_CMD environment variable selects the external solver command.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import yaml

from . import benchmarks, harness
from .benchmarks import generate
from .fitting import parse_rules
from .logic import load_dataset, save_dataset
from .loop import predict_all


def _load_config(path: str | None, **overrides) -> harness.SuiteConfig:
    data = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    cfg = harness.SuiteConfig.from_dict(data)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


@click.group()
def main() -> None:
    """Hybrid rule learning over the synthetic geometry/graph benchmarks."""


@main.command()
@click.argument("task")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="runs", show_default=True, help="output directory")
def gen(task: str, seed: int, out: str) -> None:
    """Generate a benchmark dataset and its manifest."""
    spec = benchmarks.default_spec(task, seed=seed)
    dataset, manifest = generate(spec)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / f"{task}_seed{seed}.facts"
    save_dataset(dataset, str(data_path))
    with open(out_dir / f"{task}_seed{seed}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    click.echo(f"wrote {data_path} ({len(dataset.examples)} examples)")


@main.command()
@click.argument("task")
@click.option("--backend", type=click.Choice(["builtin", "external"]), default=None)
@click.option("--seed", default=None, type=int, help="base seed")
@click.option("--trials", default=None, type=int)
@click.option("--mode", type=click.Choice(["full", "no_pi", "pi_only"]), default="full")
@click.option("--config", "config_path", default=None, help="YAML config file")
@click.option("--out", default=None, help="output directory")
def learn(task, backend, seed, trials, mode, config_path, out) -> None:
    """Run the learner on one task over one or more trials."""
    cfg = _load_config(config_path, backend=backend, base_seed=seed, out_dir=out)
    records = harness.run_task(task, cfg, mode=mode, trials=trials)
    harness.write_results(records, cfg.out_dir)
    click.echo(harness.format_table(records))
    for r in records:
        if r.error:
            click.echo(f"trial {r.trial} failed: {r.error}", err=True)
    if records and not records[0].error:
        click.echo("\nrules (trial 0):")
        for line in records[0].rules:
            click.echo(f"  {line}")


@main.command()
@click.argument("families", nargs=-1)
@click.option("--backend", type=click.Choice(["builtin", "external"]), default=None)
@click.option("--trials", default=None, type=int, help="override per-family trials")
@click.option("--seed", default=None, type=int)
@click.option("--config", "config_path", default=None)
@click.option("--out", default=None)
def suite(families, backend, trials, seed, config_path, out) -> None:
    """Run every task in the given families (all families when omitted)."""
    cfg = _load_config(config_path, backend=backend, base_seed=seed, out_dir=out)
    family_list = list(families) or sorted(benchmarks.FAMILIES)
    records = harness.run_suite(family_list, cfg, trials=trials)
    click.echo(harness.format_table(records))
    click.echo(f"\nresults written to {cfg.out_dir}/")


@main.command("ablate-ip")
@click.option("--backend", type=click.Choice(["builtin", "external"]), default=None)
@click.option("--trials", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--config", "config_path", default=None)
@click.option("--out", default=None)
def ablate_ip(backend, trials, seed, config_path, out) -> None:
    """Run the influence-propagation ablation (no PI / PI only / PI+SMT)."""
    cfg = _load_config(config_path, backend=backend, base_seed=seed, out_dir=out)
    records = harness.run_ablation_ip(cfg, trials=trials)
    click.echo(harness.format_ablation_table(records))
    click.echo(f"\nresults written to {cfg.out_dir}/")


@main.command("eval")
@click.argument("rules_file", type=click.Path(exists=True))
@click.argument("dataset_file", type=click.Path(exists=True))
def eval_cmd(rules_file: str, dataset_file: str) -> None:
    """Evaluate a serialized ruleset against a dataset file."""
    with open(rules_file, "r", encoding="utf-8") as fh:
        rules = parse_rules(fh.read())
    dataset = load_dataset(dataset_file)
    pred = predict_all(rules, dataset)
    truth = [e.is_positive for e in dataset.examples]
    correct = sum(1 for p, a in zip(pred, truth) if bool(p) == a)
    acc = correct / len(truth) if truth else 0.0
    click.echo(f"examples: {len(truth)}  correct: {correct}  accuracy: {acc:.4f}")


if __name__ == "__main__":
    sys.exit(main())

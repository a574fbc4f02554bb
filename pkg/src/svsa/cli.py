"""Command line entry point: ``svsa run | verify | sweep | list``."""

from __future__ import annotations

import json
import re
import sys
from dataclasses import replace

import click

from . import experiments as ex
from .verify import verify_all

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load(path: str) -> ex.ExperimentConfig:
    try:
        return ex.load_config(path)
    except ex.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _report(summary: dict) -> None:
    verdict = "PASS" if summary["passed"] else "FAIL"
    failed = [k for k, v in summary["checks"].items() if not v]
    extra = f" failed checks: {', '.join(failed)}" if failed else ""
    click.echo(f"[{verdict}] {summary['id']} seed={summary['seed']} -> {summary['out_dir']}{extra}")


@click.group()
def main() -> None:
    """Set-valued stochastic approximation experiments."""


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out", "out_root", default=None, help="Output root (default: $SVSA_OUT or ./svsa-out).")
@click.option("--export-json", is_flag=True, help="Print the resolved config as JSON and exit.")
def run(config: str, out_root: str | None, export_json: bool) -> None:
    """Run the experiment described by a TOML CONFIG."""
    cfg = _load(config)
    if export_json:
        click.echo(cfg.to_json())
        return
    summary = ex.run_experiment(cfg, out_root)
    _report(summary)
    sys.exit(EXIT_PASS if summary["passed"] else EXIT_FAIL)


def _seed_range(text: str) -> range:
    m = re.fullmatch(r"\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*", text)
    if not m:
        raise click.BadParameter("expected a..b, e.g. 0..9")
    lo, hi = int(m.group(1)), int(m.group(2))
    if hi < lo:
        raise click.BadParameter("empty seed range")
    return range(lo, hi + 1)


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--seeds", required=True, help="Inclusive seed range a..b.")
@click.option("--out", "out_root", default=None, help="Output root (default: $SVSA_OUT or ./svsa-out).")
def sweep(config: str, seeds: str, out_root: str | None) -> None:
    """Run CONFIG once per seed; each seed writes its own directory."""
    cfg = _load(config)
    try:
        seed_list = _seed_range(seeds)
    except click.BadParameter as exc:
        click.echo(f"config error: {exc.message}", err=True)
        sys.exit(EXIT_CONFIG)
    all_passed = True
    for seed in seed_list:
        summary = ex.run_experiment(replace(cfg, seed=seed), out_root)
        _report(summary)
        all_passed &= summary["passed"]
    sys.exit(EXIT_PASS if all_passed else EXIT_FAIL)


@main.command()
@click.option("--only", multiple=True, type=int, help="Criterion number; repeatable.")
@click.option("--tamper-q", type=float, default=None, help="Replace the harmonic schedule of criterion 12 by q.")
@click.option("--out", "out_root", default=None, help="Where to write verify.json.")
def verify(only: tuple[int, ...], tamper_q: float | None, out_root: str | None) -> None:
    """Run every acceptance criterion and print one row per criterion."""
    rows = verify_all(set(only) or None, tamper_q, click.echo)
    root = ex.output_root(out_root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "verify.json", "w") as fh:
        json.dump([row.__dict__ for row in rows], fh, indent=2)
    passed = sum(r.passed for r in rows)
    click.echo(f"{passed}/{len(rows)} criteria passed")
    sys.exit(EXIT_PASS if passed == len(rows) else EXIT_FAIL)


@main.command(name="list")
def list_experiments() -> None:
    """List the registered experiment ids."""
    for name, spec in ex.REGISTRY.items():
        click.echo(f"{name:<16} {spec.about}")


if __name__ == "__main__":
    main()

"""Command-line entry point: run, verify and bound."""
import json
import logging
import sys
from typing import Optional

import click

from .config import parse_config
from .errors import KmaxError
from .runner import run as run_scenarios
from .sim.bounds import nazarov_bound, theorem1_bound
from .sim.kfwer import kfwer_upper_bound
from .verify import verify_reports

logger = logging.getLogger(__name__)


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log estimator internals.")
def main(verbose: bool):
    """Gaussian order statistics: anticoncentration checks and k-FWER simulations."""
    setup_logging(verbose)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="YAML run configuration.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory (overrides config).")
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Run seed (overrides config).")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker threads (overrides config).")
def run(config_path: str, out: Optional[str], seed: Optional[int], workers: Optional[int]):
    """Run every scenario, write the report, then verify it."""
    try:
        config = parse_config(config_path, overrides={"out": out, "seed": seed, "workers": workers})
        bundle = run_scenarios(config)
        result = verify_reports(config.out)
    except KmaxError as e:
        raise click.ClickException(str(e))

    for scenario in bundle.summary["scenarios"]:
        click.echo(f"{scenario['id']:<24} {scenario['kind']:<9} {'pass' if scenario['pass'] else 'FAIL'}")
    click.echo(f"report: {config.out}")
    if not result.passed:
        for failure in result.failures:
            click.echo(f"FAIL {failure}", err=True)
        sys.exit(1)


@main.command()
@click.argument("path", type=click.Path(), required=False)
@click.option("--out", type=click.Path(), default=None, help="Report directory (alternative to PATH).")
def verify(path: Optional[str], out: Optional[str]):
    """Recompute pass/fail of a report directory from its CSV files."""
    target = path or out
    if target is None:
        raise click.UsageError("give the report directory as PATH or --out")
    try:
        result = verify_reports(target)
    except KmaxError as e:
        raise click.ClickException(str(e))

    click.echo(json.dumps(result.to_dict(), indent=2))
    if not result.passed:
        sys.exit(1)


@main.command()
@click.option("--epsilon", type=float, default=None, help="Interval width.")
@click.option("--k", "k", type=click.IntRange(min=1), default=1, show_default=True, help="Order statistic index.")
@click.option("--e-max-norm", type=float, default=None, help="E||X||_inf (or E||U||_inf for the k-FWER bound).")
@click.option("--p", "p", type=click.IntRange(min=1), default=None, help="Dimension, for the Nazarov bound.")
@click.option("--min-var-w", type=float, default=None, help="min var(W), for the Nazarov bound.")
@click.option("--alpha", type=float, default=None, help="Level, for the k-FWER bound.")
@click.option("--gamma", type=float, default=None, help="Critical value gap, for the k-FWER bound.")
@click.option("--delta", type=float, default=None, help="Gap exceedance probability, for the k-FWER bound.")
def bound(epsilon, k, e_max_norm, p, min_var_w, alpha, gamma, delta):
    """Evaluate whichever bound formulas the given flags determine."""
    values = {}
    try:
        if epsilon is not None and e_max_norm is not None:
            values["theorem1"] = theorem1_bound(epsilon, k, e_max_norm)
        if epsilon is not None and p is not None and min_var_w is not None:
            values["nazarov"] = nazarov_bound(epsilon, p, k, min_var_w)
        if None not in (alpha, gamma, delta, e_max_norm):
            values["kfwer_upper"] = kfwer_upper_bound(alpha, k, gamma, e_max_norm, delta)
    except ValueError as e:
        raise click.BadParameter(str(e))
    if not values:
        raise click.UsageError(
            "nothing to evaluate: theorem1 needs --epsilon --e-max-norm; nazarov needs --epsilon --p --min-var-w;"
            " kfwer_upper needs --alpha --gamma --delta --e-max-norm"
        )
    click.echo(json.dumps(values, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()

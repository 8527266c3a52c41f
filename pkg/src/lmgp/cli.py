"""Command-line interface: ``lmgp <subcommand> [--config FILE] [--seed N] [--out DIR] [--jobs N]``.

Exit codes: 0 on success, 2 when some sweep cells or BO runs failed, 1 on a
configuration error.
"""

from __future__ import annotations

import logging
import sys

import click

from . import __version__
from .artifact import ArtifactError
from .data import ParseError, SchemaError
from .experiments import EXIT_CONFIG, ConfigError, config_from_dict, load_config, run


def _common(f):
    f = click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker processes.")(f)
    f = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed.")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="YAML experiment configuration.")(f)
    return f


def _execute(kind: str, config_path, **overrides) -> None:
    overrides["kind"] = kind
    try:
        cfg = load_config(config_path, **overrides) if config_path else config_from_dict({}, **overrides)
        summary = run(cfg)
    except (ConfigError, ArtifactError, ParseError, SchemaError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    for p in summary.outputs:
        click.echo(str(p))
    if summary.n_failed:
        click.echo(f"warning: {summary.n_failed} cell(s) failed", err=True)
    sys.exit(summary.exit_code)


@click.group()
@click.version_option(__version__, prog_name="lmgp")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool) -> None:
    """Gaussian-process metamodels for mixed numeric and categorical inputs."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@_common
@click.option("--data", "dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Training dataset CSV.")
@click.option("--model", "model", type=click.Choice(["gp", "lmgp", "lvgp"]), default=None)
@click.option("--function", default=None, help="Benchmark function id or name (synthetic data).")
def fit(config_path, seed, out, jobs, dataset, model, function):
    """Fit a model and save it as model.json."""
    _execute("fit", config_path, seed=seed, out=out, jobs=jobs, dataset=dataset,
             models=[model] if model else None, function=function)


@cli.command()
@_common
@click.option("--model-file", "artifact", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--inputs", type=click.Path(exists=True, dir_okay=False), default=None, help="Input CSV.")
def predict(config_path, seed, out, jobs, artifact, inputs):
    """Write predictive mean and variance for an input CSV."""
    _execute("predict", config_path, seed=seed, out=out, jobs=jobs, artifact=artifact, inputs=inputs)


@cli.command()
@_common
@click.option("--model-file", "artifact", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--function", default=None)
def latent(config_path, seed, out, jobs, artifact, function):
    """Export canonicalized latent positions."""
    _execute("latent", config_path, seed=seed, out=out, jobs=jobs, artifact=artifact, function=function)


@cli.command()
@_common
@click.option("--function", default=None, help="Comma-separated function ids or names.")
def sweep(config_path, seed, out, jobs, function):
    """Benchmark sweep over training sizes, noise levels and models."""
    _execute("sweep", config_path, seed=seed, out=out, jobs=jobs, function=function)


@cli.command()
@_common
@click.option("--function", default=None)
def varlen(config_path, seed, out, jobs, function):
    """Variable-length categorical inputs under both NaN strategies."""
    _execute("varlen", config_path, seed=seed, out=out, jobs=jobs, function=function)


@cli.command()
@_common
@click.option("--function", default=None)
@click.option("--n-base", type=click.IntRange(min=1), default=None)
def sensitivity(config_path, seed, out, jobs, function, n_base):
    """Total-effect sensitivity indices of a benchmark function."""
    _execute("sensitivity", config_path, seed=seed, out=out, jobs=jobs, function=function, n_base=n_base)


@cli.command()
@_common
@click.option("--candidates", "dataset", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Candidate pool CSV with responses.")
@click.option("--function", default=None, help="Benchmark function for a synthetic pool.")
def bo(config_path, seed, out, jobs, dataset, function):
    """Race BO against random search over a candidate pool."""
    _execute("bo", config_path, seed=seed, out=out, jobs=jobs, dataset=dataset, function=function)


def main(argv=None) -> None:
    try:
        code = cli.main(args=argv, prog_name="lmgp", standalone_mode=False)
    except click.exceptions.Exit as exc:
        code = exc.exit_code
    except click.ClickException as exc:
        exc.show()
        code = EXIT_CONFIG
    except click.exceptions.Abort:
        code = EXIT_CONFIG
    sys.exit(code or 0)


if __name__ == "__main__":
    main()

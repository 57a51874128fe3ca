"""Command line front end.

Configuration precedence, highest first: command line flags, then the
--config JSON file, then built-in defaults.  Threads fall back to the
HEISKERN_THREADS environment variable when neither flag nor file sets
them.  Exit codes: 0 all gates passed, 1 at least one gate failed (the
report is still written), 2 usage or configuration error.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .experiments import ConfigError, EXPERIMENTS, list_experiments, \
    run_experiment
from .groups import FormError
from .reports import write_results


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            loaded = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ConfigError("config file must hold a JSON object")
    return loaded


def _resolve_threads(flag_value, config):
    if flag_value is not None:
        return flag_value
    if "threads" in config:
        return int(config["threads"])
    env = os.environ.get("HEISKERN_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(
                f"HEISKERN_THREADS must be an integer, got {env!r}"
            ) from exc
    return 1


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("experiment")
@click.option("--config", "config_path", metavar="FILE",
              help="JSON file with experiment settings.")
@click.option("--seed", type=int, default=None, help="Master RNG seed.")
@click.option("--paths", "n_paths", type=int, default=None,
              help="Monte Carlo sample paths.")
@click.option("--steps", "n_steps", type=int, default=None,
              help="Time steps per path.")
@click.option("--out", "out_dir", metavar="DIR", default="heiskern-out",
              show_default=True, help="Output directory.")
@click.option("--threads", type=int, default=None,
              help="Worker threads (falls back to HEISKERN_THREADS, then 1).")
@click.option("--no-figures", is_flag=True,
              help="Skip PNG rendering; summary.json and detail.csv only.")
def main(experiment, config_path, seed, n_paths, n_steps, out_dir, threads,
         no_figures):
    """Run EXPERIMENT and write summary.json, detail.csv, and figures.

    EXPERIMENT is one of the names below, or 'all' for the full battery,
    or 'list' to print this table and exit.

    \b
    """ + list_experiments()
    if experiment == "list":
        click.echo(list_experiments())
        return
    try:
        config = _load_config(config_path)
        config["threads"] = _resolve_threads(threads, config)
        for key, value in (("seed", seed), ("n_paths", n_paths),
                           ("n_steps", n_steps)):
            if value is not None:
                config[key] = value
        results = run_experiment(experiment, config)
    except (ConfigError, FormError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    manifest = write_results(results, out_dir, no_figures=no_figures)
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        click.echo(f"{status}  {res.name}")
    click.echo(f"wrote {manifest['summary']} and {manifest['detail']}")
    if manifest.get("figures"):
        click.echo(f"figures: {', '.join(manifest['figures'])}")
    sys.exit(0 if all(res.passed for res in results) else 1)


if __name__ == "__main__":
    main()

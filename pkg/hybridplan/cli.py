"""Command line interface

Exit codes: 0 on success, 1 when an input fails validation, 2 on any other
failure.
"""

import logging
from dataclasses import replace
from typing import List, Optional

import click
from megfile import smart_open

import hybridplan.utils.compat_json as json
from hybridplan.__version__ import __version__
from hybridplan.config import StackConfig, load_config
from hybridplan.errors import SimulationError, ValidationError
from hybridplan.neural.expert import gen_expert_data
from hybridplan.neural.mlp import MlpModel
from hybridplan.neural.model_file import load_model, save_model
from hybridplan.neural.train import read_dataset, train, write_dataset
from hybridplan.sim import (
    MODES,
    MetricsReport,
    compare_metrics,
    compute_metrics,
    cycle_to_dict,
    load_scenario,
    read_trace,
    run_closed_loop,
    scenario_paths,
    write_trace,
)
from hybridplan.utils import full_error_message

__all__ = ["hybridplan", "main"]

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)

EXIT_VALIDATION = 1
EXIT_FAILURE = 2


class _Group(click.Group):
    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.ClickException, click.Abort):
            raise
        except ValidationError as error:
            click.echo(full_error_message(error), err=True)
            ctx.exit(EXIT_VALIDATION)
        except Exception as error:
            click.echo(full_error_message(error), err=True)
            ctx.exit(EXIT_FAILURE)


def config_option(func):
    return click.option(
        "--config",
        "config_path",
        type=click.Path(dir_okay=False),
        help="JSON file overriding tuning parameters.",
    )(func)


def _model(path: Optional[str], seed: int) -> Optional[MlpModel]:
    if path is None:
        return None
    return load_model(path, seed=seed)


def _write_json(data, out: Optional[str]):
    content = json.dumps(data, indent=True)
    if out is None:
        click.echo(content.decode())
        return
    with smart_open(out, "wb") as fp:
        fp.write(content)
        fp.write(b"\n")


@click.group(cls=_Group)
@click.option(
    "-v", "--verbose", count=True, help="Log INFO, or DEBUG when given twice."
)
@click.version_option(__version__, prog_name="hybridplan")
def hybridplan(verbose: int):
    """Hybrid motion planner: sampling, learned refinement and MPT"""
    level = LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)]
    logging.basicConfig(level=level, format=LOG_FORMAT)


@hybridplan.command()
@click.argument("scenario_path", metavar="SCENARIO")
@config_option
def route(scenario_path: str, config_path: Optional[str]):
    """Print the lane route of a scenario"""
    cfg = load_config(config_path)
    scn = load_scenario(scenario_path, footprint=cfg.footprint)
    click.echo(" -> ".join(scn.route.lane_ids))
    click.echo("length: %.2f m" % scn.route.total_length)


@hybridplan.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--t", "time", type=float, default=0.0, show_default=True)
@click.option(
    "--mode", type=click.Choice(MODES), default="hybrid", show_default=True
)
@click.option("--model", "model_path", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Default is stdout.")
@config_option
def plan(
    scenario_path: str,
    time: float,
    mode: str,
    model_path: Optional[str],
    out: Optional[str],
    config_path: Optional[str],
):
    """Dump every intermediate product of the planning cycle at time T

    The scenario is simulated in the same mode up to T first.
    """
    if time < 0.0:
        raise click.BadParameter("must be >= 0: %r" % time, param_hint="--t")
    cfg = load_config(config_path)
    scn = load_scenario(scenario_path, footprint=cfg.footprint)
    model = _model(model_path, scn.seed)
    cycles: List = []
    sim = replace(cfg.sim, stop_at_goal=False)
    trace = run_closed_loop(
        replace(scn, duration_s=time),
        replace(cfg, sim=sim),
        mode,
        model=model,
        on_cycle=cycles.append,
    )
    if trace.failure is not None:
        raise SimulationError(trace.failure.error, trace.failure.time)
    _write_json(cycle_to_dict(cycles[-1]), out)


@hybridplan.command()
@click.argument("scenario_path", metavar="SCENARIO")
@click.option(
    "--mode", type=click.Choice(MODES), default="hybrid", show_default=True
)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--model", "model_path", type=click.Path(dir_okay=False))
@config_option
def simulate(
    scenario_path: str,
    mode: str,
    out: str,
    model_path: Optional[str],
    config_path: Optional[str],
):
    """Run the closed loop and write the trace"""
    cfg = load_config(config_path)
    scn = load_scenario(scenario_path, footprint=cfg.footprint)
    trace = run_closed_loop(scn, cfg, mode, model=_model(model_path, scn.seed))
    write_trace(trace, out)
    click.echo("%d ticks written to %s" % (len(trace), out))
    if trace.failure is not None:
        click.echo(
            "failed at %.1f s: %s" % (trace.failure.time, trace.failure.error),
            err=True,
        )


@hybridplan.command("gen-data")
@click.argument("scenario_dir", metavar="SCENARIO_DIR")
@click.option("--n", "n_samples", type=int, required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@config_option
def gen_data(
    scenario_dir: str,
    n_samples: int,
    out: str,
    seed: int,
    config_path: Optional[str],
):
    """Sample expert demonstrations from every scenario in a directory"""
    cfg = load_config(config_path)
    scenarios = [
        load_scenario(path, footprint=cfg.footprint)
        for path in scenario_paths(scenario_dir)
    ]
    samples = gen_expert_data(scenarios, n_samples, cfg, seed=seed)
    count = write_dataset(samples, out)
    click.echo("%d samples written to %s" % (count, out))


@hybridplan.command("train-mlp")
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int)
@click.option("--epochs", type=int)
@click.option("--batch-size", type=int)
@click.option("--lr", "learning_rate", type=float)
@config_option
def train_mlp(
    data_path: str,
    out: str,
    seed: Optional[int],
    epochs: Optional[int],
    batch_size: Optional[int],
    learning_rate: Optional[float],
    config_path: Optional[str],
):
    """Fit the network to a dataset written by gen-data"""
    cfg = load_config(config_path)
    overrides = {
        "seed": seed,
        "epochs": epochs,
        "batch_size": batch_size,
        "learning_rate": learning_rate,
    }
    trainer = replace(
        cfg.trainer, **{k: v for k, v in overrides.items() if v is not None}
    )
    dataset = read_dataset(data_path)
    try:
        model = MlpModel(seed=trainer.seed, dropout=cfg.dropout)
        model, history = train(model, dataset, trainer)
    finally:
        dataset.close()
    save_model(model, out)
    click.echo(
        "final loss: train %.4f, validation %s"
        % (
            history.train[-1],
            "-" if history.validation[-1] is None else "%.4f" % history.validation[-1],
        )
    )


@hybridplan.command()
@click.argument("trace_path", metavar="TRACE")
@click.argument("scenario_path", metavar="SCENARIO")
@click.option("--out", type=click.Path(dir_okay=False), help="Default is stdout.")
@config_option
def score(
    trace_path: str,
    scenario_path: str,
    out: Optional[str],
    config_path: Optional[str],
):
    """Compute the metrics of a trace"""
    cfg = load_config(config_path)
    report = _report(trace_path, scenario_path, cfg)
    _write_json(report.to_dict(), out)


def _report(trace_path: str, scenario_path: str, cfg: StackConfig) -> MetricsReport:
    scn = load_scenario(scenario_path, footprint=cfg.footprint)
    return compute_metrics(
        read_trace(trace_path),
        scn,
        footprint=cfg.footprint,
        cruise=cfg.cruise,
        goal_tolerance=cfg.sim.goal_tolerance_m,
    )


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return "%.4f" % value
    return str(value)


@hybridplan.command()
@click.argument("trace_a", metavar="TRACE_A")
@click.argument("trace_b", metavar="TRACE_B")
@click.option(
    "--scenario",
    "scenario_path",
    required=True,
    type=click.Path(dir_okay=False),
    help="Scenario both traces were simulated on.",
)
@config_option
def compare(
    trace_a: str, trace_b: str, scenario_path: str, config_path: Optional[str]
):
    """Print the metrics of two traces side by side"""
    cfg = load_config(config_path)
    rows = compare_metrics(
        _report(trace_a, scenario_path, cfg), _report(trace_b, scenario_path, cfg)
    )
    table = [("metric", "a", "b", "b - a")]
    table.extend(tuple(_cell(v) for v in row) for row in rows)
    widths = [max(len(row[i]) for row in table) for i in range(4)]
    for row in table:
        click.echo(
            "  ".join(
                cell.ljust(width) if i == 0 else cell.rjust(width)
                for i, (cell, width) in enumerate(zip(row, widths))
            ).rstrip()
        )


def main():
    hybridplan(prog_name="hybridplan")

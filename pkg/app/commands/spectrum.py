# app/commands/spectrum.py
import logging

from app.commands.common import add_common_arguments, run_command
from app.physics.solver import alpha_sweep, charge_sweep, flux_sweep


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def register(subparsers):
    for name, func, text in (
        ("spectrum", cmd_spectrum, "energy levels over the external-flux grid"),
        ("charge", cmd_charge, "energy levels over an offset-charge grid"),
        ("alpha", cmd_alpha, "energy levels over the junction asymmetry grid"),
    ):
        parser = subparsers.add_parser(name, help=text)
        add_common_arguments(parser)
        parser.set_defaults(func=func)


def _write(ctx, stem: str, result):
    ctx.csv(f"{stem}.csv", result.to_frame(tracked=ctx.config.sweep.track), parameter=result.parameter)
    ctx.json(f"{stem}.json", result.to_json_dict(ctx.config.sweep.keep_vectors), parameter=result.parameter)
    f01 = result.transition(0, 1)
    logger.info(f"f01 over the grid: min {f01.min():.6f} GHz, max {f01.max():.6f} GHz")


def cmd_spectrum(args) -> int:
    def body(ctx):
        sweep = ctx.config.sweep
        result = flux_sweep(
            ctx.config.circuit.to_circuit(), sweep.flux.grid(), ctx.config.solver.levels,
            keep_vectors=sweep.keep_vectors, settings=ctx.config.settings(), track=sweep.track,
        )
        _write(ctx, "spectrum_flux", result)

    return run_command("spectrum", args, body)


def cmd_charge(args) -> int:
    def body(ctx):
        sweep = ctx.config.sweep
        result = charge_sweep(
            ctx.config.circuit.to_circuit(), sweep.charge_mode, sweep.charge.grid(), ctx.config.solver.levels,
            keep_vectors=sweep.keep_vectors, settings=ctx.config.settings(), track=sweep.track,
        )
        _write(ctx, f"spectrum_charge{sweep.charge_mode}", result)

    return run_command("charge", args, body)


def cmd_alpha(args) -> int:
    def body(ctx):
        sweep = ctx.config.sweep
        result = alpha_sweep(
            ctx.config.circuit.to_circuit(), sweep.alpha.grid(), sweep.alpha_flux, ctx.config.solver.levels,
            keep_vectors=sweep.keep_vectors, settings=ctx.config.settings(), track=sweep.track,
        )
        _write(ctx, "spectrum_alpha", result)

    return run_command("alpha", args, body)

# app/commands/coherence.py
import logging

import numpy as np

from app.commands.common import add_common_arguments, run_command
from app.physics.noise import coherence_sweep


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("coherence", help="predicted relaxation and dephasing rates over flux")
    add_common_arguments(parser)
    parser.set_defaults(func=cmd_coherence)


def cmd_coherence(args) -> int:
    def body(ctx):
        config = ctx.config
        table = coherence_sweep(
            config.circuit.to_circuit(),
            config.noise,
            config.sweep.flux.grid(),
            settings=config.settings(),
            resonator=config.resonator.to_model(),
        )
        ctx.csv("coherence.csv", table, chi_ratio=config.noise.chi_ratio)
        worst = table.loc[table["g1_total"].idxmax()]
        logger.info(f"Shortest predicted T1 {1 / worst['g1_total']:.3e} s at flux {worst['flux_phi0']:.4f}")
        if not np.all(np.isfinite(table.to_numpy())):
            logger.warning("Coherence table contains non-finite rates")

    return run_command("coherence", args, body)

# app/commands/fit.py
import logging

from app.commands.common import add_common_arguments, run_command
from app.physics.fitting import (TransitionDataset, circuit_params,
                                 default_fit_problem, fit)
from app.physics.hilbert import ResonatorModel
from app.services.errors import ConfigError


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("fit", help="fit circuit parameters to measured transition frequencies")
    add_common_arguments(parser)
    parser.add_argument("--dataset", help="CSV with flux_phi0,freq_ghz,label,weight")
    parser.set_defaults(func=cmd_fit)


def cmd_fit(args) -> int:
    def body(ctx):
        config = ctx.config
        options = config.fit
        if not options.dataset:
            raise ConfigError("fit needs a dataset (--dataset or fit.dataset)")
        dataset = TransitionDataset.from_csv(options.dataset)
        resonator = ResonatorModel(f_res=config.resonator.f_res, z_r=config.resonator.z_r,
                                   n_photon_max=options.n_photon_max)
        base = circuit_params(config.circuit.to_circuit(), resonator)
        problem = default_fit_problem(
            base, options.free, options.rel_bound,
            max_evals=options.max_evals, restarts=options.restarts, seed=config.seed,
            robust_cap=options.robust_cap, qubit_levels=options.qubit_levels,
            n_photon_max=options.n_photon_max, n_max=options.n_max, z_r=config.resonator.z_r,
            workers=config.workers,
        )
        result = fit(problem, dataset, base, options.initial or None)
        if not result.converged:
            logger.warning(f"Fit did not converge: {result.message}")
        for name in options.free:
            logger.info(f"{name}: {result.initial_params[name]:.6f} -> {result.params[name]:.6f}")
        ctx.json("fit_report.json", result.to_report(), dataset=options.dataset, points=len(dataset))

    return run_command("fit", args, body)

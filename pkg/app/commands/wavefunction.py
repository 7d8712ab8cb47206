# app/commands/wavefunction.py
import logging

from app.commands.common import add_common_arguments, run_command
from app.physics.observables import (charge_slice_frame, classical_minima,
                                     delta_slice_frame, phase_grid_frame,
                                     phase_slice_frame,
                                     prohibited_charge_weight,
                                     support_overlap, to_phase_grid)
from app.physics.solver import converged_solve
from app.services.errors import InvalidInputError


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("wavefunction", help="phase- and charge-space wavefunction exports")
    add_common_arguments(parser)
    parser.set_defaults(func=cmd_wavefunction)


def cmd_wavefunction(args) -> int:
    def body(ctx):
        config = ctx.config
        options = config.wavefunction
        # --flux overrides the circuit bias; otherwise the wavefunction bias applies
        flux = args.flux if getattr(args, "flux", None) is not None else options.flux
        circuit = config.circuit.to_circuit().with_flux(flux)
        levels = sorted(set(options.levels))
        if not levels or levels[0] < 0:
            raise InvalidInputError("wavefunction levels must be nonnegative", levels=options.levels)
        result = converged_solve(circuit, config.settings(), k=max(levels) + 1)
        basis = result.basis
        summary = {"flux_phi0": flux, "n_max": basis.n_max, "levels": {}}
        grids = {}
        for level in levels:
            state = result.state(level)
            psi = to_phase_grid(state, basis, options.grid_size)
            grids[level] = psi
            ctx.csv(f"psi{level}_phase_slice.csv", phase_slice_frame(psi, options.slice_mode), level=level)
            ctx.csv(f"psi{level}_charge_slice.csv", charge_slice_frame(state, basis, options.charge_slice_n3), level=level)
            if options.full_grid:
                ctx.csv(f"psi{level}_phase_grid.csv", phase_grid_frame(psi), level=level)
            summary["levels"][str(level)] = {
                "energy_ghz": float(result.energies[level]),
                "norm": psi.norm,
                "prohibited_weight_ground": prohibited_charge_weight(state, basis, "ground"),
                "prohibited_weight_excited": prohibited_charge_weight(state, basis, "excited"),
            }
        if len(levels) >= 2:
            summary["support_overlap"] = support_overlap(grids[levels[0]], grids[levels[1]])
            logger.info(f"Support overlap of levels {levels[0]} and {levels[1]}: {summary['support_overlap']:.4f}")
        summary["classical_minima"] = [
            {"phases": list(m.phases), "energy_ghz": m.energy} for m in classical_minima(circuit)
        ]
        for parity in ("ground", "excited"):
            ctx.csv(f"delta_{parity}_charge_slice.csv", delta_slice_frame(options.delta_n_max, parity), parity=parity)
        ctx.json("wavefunction.json", summary)

    return run_command("wavefunction", args, body)

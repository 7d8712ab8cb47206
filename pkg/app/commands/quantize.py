# app/commands/quantize.py
import logging

import numpy as np

from app.commands.common import add_common_arguments, run_command
from app.physics.circuit import assemble_capacitance_matrix, branch_transform


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("quantize", help="reduce the circuit to its three branch modes")
    add_common_arguments(parser)
    parser.set_defaults(func=cmd_quantize)


def cmd_quantize(args) -> int:
    def body(ctx):
        circuit_config = ctx.config.circuit
        circuit = circuit_config.to_circuit()
        report = {"circuit": circuit.to_dict()}
        if circuit_config.capacitances is not None:
            network = circuit_config.capacitances.to_network()
            t, c_theta = branch_transform(network)
            report["network"] = {
                "c_phi_ff": assemble_capacitance_matrix(network).tolist(),
                "branch_transform": t.tolist(),
                "c_theta_ff": c_theta.tolist(),
            }
        print("E_C matrix (GHz):")
        for row in circuit.ec:
            print("  " + "  ".join(f"{value:9.5f}" for value in row))
        print(f"E_J (GHz): {np.array2string(circuit.e_j, precision=4)}  alpha = {circuit.alpha:.4f}")
        print(f"beta_R: {np.array2string(circuit.beta_res, precision=5)}")
        if circuit.beta_drive is not None:
            print(f"beta_D: {np.array2string(circuit.beta_drive, precision=5)}")
        ctx.json("circuit.json", report)

    return run_command("quantize", args, body)

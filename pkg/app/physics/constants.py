# app/physics/constants.py
from scipy import constants as sc


E_CHARGE = sc.e
PLANCK_H = sc.h
HBAR = sc.hbar
K_B = sc.k
FLUX_QUANTUM = sc.h / (2 * sc.e)

GHZ = 1e9
FEMTO = 1e-15
MICRO_EV = 1e-6 * sc.e

# E_C[GHz] = CHARGING_GHZ_FF / C[fF], from e^2 / (2 h C)
CHARGING_GHZ_FF = E_CHARGE**2 / (2 * PLANCK_H * FEMTO) / GHZ
# k_B / h in GHz per kelvin
KB_GHZ_PER_K = K_B / PLANCK_H / GHZ


def ghz_to_angular(f_ghz):
    """Frequency in GHz to angular frequency in rad/s."""
    return 2 * sc.pi * GHZ * f_ghz


def ghz_to_joule(f_ghz):
    return PLANCK_H * GHZ * f_ghz

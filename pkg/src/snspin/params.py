"""Physical constants and parameter containers.

All energies and couplings are expressed as frequencies in Hz (the
Hamiltonian is H/h).  Magnetic fields are in Tesla.  The sign and
magnitude conventions follow the usual group-IV color center effective
Hamiltonian for a single S=1/2 electron coupled to one I=1/2 nucleus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace

# Bohr magneton over Planck constant, Hz per Tesla.
MU_B_HZ_PER_T = 13.996246e9

# Gyromagnetic ratio (gamma/2pi) of the spin-1/2 tin nucleus, Hz per Tesla.
# Negative: the nuclear moment is anti-parallel to the spin.
SN117_GYRO_HZ_PER_T = -15.261e6

# Default electron g-factor.
G_ELECTRON = 2.0

# Optical lifetime of the excited manifold, seconds.
LIFETIME_S = 6e-9

# Homogeneous optical linewidth used for spectra, Hz (FWHM).
OPTICAL_LINEWIDTH_HZ = 61.859e6

# Phonon-limited correlation parameter of the two-level orbital bath at
# 1.7 K.  Enters the dephasing-time formula of :mod:`snspin.coherence`
# as written there; the value below reproduces second-scale coherence in
# the weak-strain-coupling regime.
GAMMA_PHONON_1P7K = 0.75


@dataclass(frozen=True)
class ManifoldParams:
    """Coupling constants of one orbital doublet manifold (Hz).

    :param lambda_soc: spin-orbit splitting of the orbital doublet.
    :param upsilon_ioc: nucleus-orbit coupling (same operator structure
        as spin-orbit, acting on the nuclear spin).
    :param a_par: longitudinal hyperfine constant.
    :param a_perp: transverse (flip-flop) hyperfine constant.
    :param strain_egx: Egx-symmetric strain/Jahn-Teller coupling.
    :param strain_egy: Egy-symmetric strain/Jahn-Teller coupling.
    :param orbital_quench_q: quenching factor of the orbital Zeeman
        response (dimensionless).
    :param g_electron: electron g-factor (dimensionless).
    :param nuclear_gyro: nuclear gyromagnetic ratio, Hz/T (signed).
    """

    lambda_soc: float
    upsilon_ioc: float = 0.0
    a_par: float = 0.0
    a_perp: float = 0.0
    strain_egx: float = 0.0
    strain_egy: float = 0.0
    orbital_quench_q: float = 0.171
    g_electron: float = G_ELECTRON
    nuclear_gyro: float = SN117_GYRO_HZ_PER_T

    def __post_init__(self):
        for name in ("lambda_soc", "upsilon_ioc", "a_par", "a_perp",
                     "strain_egx", "strain_egy", "orbital_quench_q",
                     "g_electron", "nuclear_gyro"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value != value:
                raise ValueError(f"{name} must be a finite number, got {value!r}")

    @property
    def strain_total(self) -> float:
        """Magnitude of the transverse strain coupling, Hz."""
        return float((self.strain_egx ** 2 + self.strain_egy ** 2) ** 0.5)

    @property
    def delta_total(self) -> float:
        """Total orbital gap sqrt(lambda^2 + 4 alpha^2), Hz.

        This is the splitting between the two orbital branches produced
        by spin-orbit coupling and transverse strain together (for one
        electron-spin orientation, ignoring hyperfine corrections).
        """
        return float((self.lambda_soc ** 2 + 4.0 * self.strain_total ** 2) ** 0.5)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ManifoldParams":
        return cls(**data)


@dataclass(frozen=True)
class MagneticField:
    """Static or envelope magnetic field vector in Tesla."""

    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    def __post_init__(self):
        for name in ("bx", "by", "bz"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value != value:
                raise ValueError(f"{name} must be a finite number, got {value!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MagneticField":
        return cls(**data)


def electron_larmor_hz(b_tesla: float, g_electron: float = G_ELECTRON) -> float:
    """Electron Larmor frequency g * mu_B * B / h in Hz."""
    return g_electron * MU_B_HZ_PER_T * b_tesla


def field_for_larmor(f_hz: float, g_electron: float = G_ELECTRON) -> float:
    """Magnetic field in Tesla that gives electron Larmor frequency ``f_hz``."""
    return f_hz / (g_electron * MU_B_HZ_PER_T)


def ground_defaults() -> ManifoldParams:
    """Best-fit parameters of the ground-state orbital doublet."""
    return ManifoldParams(
        lambda_soc=830e9,
        upsilon_ioc=0.0,
        a_par=673.8e6,
        a_perp=670.95e6,
        strain_egx=928.4e9,
        strain_egy=0.0,
    )


def excited_defaults() -> ManifoldParams:
    """Nominal parameters of the optically excited orbital doublet.

    The hyperfine and strain couplings come from ab-initio estimates;
    the spin-orbit splitting is the bulk value for the excited doublet.
    """
    return ManifoldParams(
        lambda_soc=3.02e12,
        upsilon_ioc=0.0,
        a_par=-232e6,
        a_perp=464e6,
        strain_egx=-209e9,
        strain_egy=0.0,
    )


def reference_field() -> MagneticField:
    """Bias field of the reference experiment.

    Expressed via the fitted electron Larmor strengths (6.03 MHz
    transverse, 1.55 MHz longitudinal).
    """
    return MagneticField(
        bx=field_for_larmor(6.03e6),
        by=0.0,
        bz=field_for_larmor(1.55e6),
    )


def dump_json(obj, path) -> None:
    """Serialize a params/field dataclass (or dict of them) to JSON."""
    def encode(x):
        if isinstance(x, (ManifoldParams, MagneticField)):
            return x.to_dict()
        raise TypeError(f"cannot serialize {type(x).__name__}")

    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=encode, sort_keys=True)
        fh.write("\n")


__all__ = [
    "MU_B_HZ_PER_T",
    "SN117_GYRO_HZ_PER_T",
    "G_ELECTRON",
    "LIFETIME_S",
    "OPTICAL_LINEWIDTH_HZ",
    "GAMMA_PHONON_1P7K",
    "ManifoldParams",
    "MagneticField",
    "electron_larmor_hz",
    "field_for_larmor",
    "ground_defaults",
    "excited_defaults",
    "reference_field",
    "dump_json",
    "replace",
]

"""Spin-photon interface model for a strongly hyperfine-coupled color center.

The package models the 8-level electro-nuclear structure of a group-IV
defect manifold (orbital doublet x electron spin x nuclear spin), its
optical transitions and cyclicity, microwave-driven spin dynamics, the
coherence limits set by phonon-mediated orbital hopping, and a fitting
workflow that recovers model parameters from spectroscopy data.
"""

from .params import (
    ManifoldParams,
    MagneticField,
    ground_defaults,
    excited_defaults,
    reference_field,
)
from .spinmodel import (
    build_hamiltonian,
    eigensystem,
    manifold_eigensystem,
    EigenSystem,
    closed_form_energies,
)
from .spectrum import (
    TransitionEntry,
    TransitionTable,
    SpectrumTrace,
    mw_transitions,
    optical_transitions,
    ple_spectrum,
    memory_detuning,
)
from .optics import (
    DipoleSet,
    default_dipoles,
    dipole_strengths,
    spin_conserving_pairs,
    cyclicity,
    cyclicity_from_lifetimes,
    pump_dynamics,
    excitation_fidelity,
    excitation_fidelity_mc,
    max_excitations,
    collection_efficiency,
)
from .dynamics import (
    DriveSegment,
    PulseProgram,
    NoiseModel,
    SignalMap,
    propagate,
    rabi_map,
    ramsey_map,
    decoupling_scan,
    rb_simulate,
    clifford_adjust,
)
from .coherence import (
    CoherenceParams,
    lambda_eff,
    t2_phonon,
    ridge_upsilon,
    coherence_map,
)

__version__ = "0.1.0"

__all__ = [
    "ManifoldParams",
    "MagneticField",
    "ground_defaults",
    "excited_defaults",
    "reference_field",
    "build_hamiltonian",
    "eigensystem",
    "manifold_eigensystem",
    "EigenSystem",
    "closed_form_energies",
    "TransitionEntry",
    "TransitionTable",
    "SpectrumTrace",
    "mw_transitions",
    "optical_transitions",
    "ple_spectrum",
    "memory_detuning",
    "DipoleSet",
    "default_dipoles",
    "dipole_strengths",
    "spin_conserving_pairs",
    "cyclicity",
    "cyclicity_from_lifetimes",
    "pump_dynamics",
    "excitation_fidelity",
    "excitation_fidelity_mc",
    "max_excitations",
    "collection_efficiency",
    "DriveSegment",
    "PulseProgram",
    "NoiseModel",
    "SignalMap",
    "propagate",
    "rabi_map",
    "ramsey_map",
    "decoupling_scan",
    "rb_simulate",
    "clifford_adjust",
    "lambda_eff",
    "t2_phonon",
    "ridge_upsilon",
    "coherence_map",
    "__version__",
]

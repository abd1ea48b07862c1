"""Synthesis and verification toolkit for two-ion sideband steering.

Modules
-------
operator_core        basis indexing, coupling operators, exact segment flows
spectral_decoupling  exact frequencies, resonance classes, decompositions
torus_winding        lifted-time selection and certification
lie_certifier        Lie-closure controllability certificates
modal_planner        piecewise-constant steering in the decoupled truncation
lift_simulator       lifting to the full system and exact simulation
cli                  batch command-line front end
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    lie_certifier,
    lift_simulator,
    modal_planner,
    operator_core,
    spectral_decoupling,
    torus_winding,
)

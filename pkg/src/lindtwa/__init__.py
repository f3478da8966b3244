"""Truncated Wigner simulation of open spin-boson systems.

The usual path is ``ModelSpec`` (from :mod:`lindtwa.models`) ->
:func:`build_langevin` -> :func:`run_ensemble`, with :func:`run_oracle`
as the exact reference for small systems.
"""

from __future__ import annotations

from .algebra import (ClassicalExpr, Variable, boson, boson_conj, const, poisson_bracket,
                      sminus, splus, sx, sy, sz)
from .ensemble import (CentralPopulation, CustomExpr, EmissionRate, MeanExcitation,
                       ObservableSeries, PhotonNumber, SpinExpectation, SymmetricTwoPoint,
                       emission_rate, run_ensemble)
from .errors import (AboveCritical, ConfigError, EnsembleAborted, NonFiniteState, TraceDrift,
                     TWAError)
from .integrator import IntegratorConfig, integrate_trajectory, step
from .langevin import LangevinSystem, ModelSpec, build_langevin, factor_dissipation
from .models import (AtomArrayParams, CentralSpinParams, DrivenSpinParams, RydbergChainParams,
                     TavisCummingsParams, build_atom_array, build_central_spin,
                     build_driven_spin, build_model, build_rydberg_chain, build_tavis_cummings,
                     green_tensor, initial_state, quantum_correction_estimate)
from .oracle import HilbertLayout, build_operators, evolve, run_oracle
from .sampling import SamplerSpec, SpinInit, sample_boson_coherent, sample_continuous, sample_discrete

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_") and name != "annotations"]

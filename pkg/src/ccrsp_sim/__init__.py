"""Simulation toolkit for verifying quantum computation with classical
channel remote state preparation.

Modules:

* :mod:`ccrsp_sim.qmath`        states, POVMs, Pauli frames, partial traces
* :mod:`ccrsp_sim.hamiltonian`  XX+ZZ instances and their spectra
* :mod:`ccrsp_sim.strategies`   center messages, ccRSP models, provers, verifier rule
* :mod:`ccrsp_sim.protocols`    end-to-end runners (enumerate / sample)
* :mod:`ccrsp_sim.rsp`          toy RSP and its classical simulation
* :mod:`ccrsp_sim.closedform`   closed-form acceptance probabilities
* :mod:`ccrsp_sim.extractor`    low-energy-state extractors
* :mod:`ccrsp_sim.cli`          batch experiment harness
"""

from .hamiltonian import XxzzHamiltonian, Term, single_term_instance, triangle_instance, random_instance
from .protocols import (
    RunReport,
    run_ccrsp_protocol,
    run_ma_protocol,
    run_offline_protocol,
    run_tc_protocol,
)

__version__ = "0.1.0"

__all__ = [
    "XxzzHamiltonian",
    "Term",
    "single_term_instance",
    "triangle_instance",
    "random_instance",
    "RunReport",
    "run_tc_protocol",
    "run_ccrsp_protocol",
    "run_ma_protocol",
    "run_offline_protocol",
]

"""Pulsed two-photon interference at a beam splitter: simulation and analysis.

Subpackages cover the truncated Fock algebra (`fockspace`), temporal modes and
analytic correlation curves (`wavepacket`), heterodyne record synthesis
(`hetsim`), streaming correlation estimators (`correlator`), moment-based
state tomography (`tomography`), and the scenario pipeline/CLI (`pipeline`,
`cli`).
"""

__version__ = "0.1.0"

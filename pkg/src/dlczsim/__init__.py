"""Simulation of heralded photon-pair generation and retrieval in a cold atomic ensemble.

The write stage (Raman scattering that heralds a collective spin excitation)
and the read stage (on-demand conversion of the spin wave into a photon) are
described by linear field solutions driven by Gaussian vacuum and noise
inputs. Conditional read-photon waveforms and efficiencies follow from
second- and fourth-order moments of those inputs.
"""

__version__ = "0.1.0"

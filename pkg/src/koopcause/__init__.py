"""Koopman-operator causal discovery for dynamical systems.

Simulate benchmark systems, fit marginal and joint DMD models over random
Fourier feature dictionaries, and measure directed causal influence between
state components at chosen time shifts.
"""

__version__ = "0.1.0"

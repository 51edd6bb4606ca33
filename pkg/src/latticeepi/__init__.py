"""Critical SIS/SIR epidemics on the one-dimensional integer lattice.

Simulation of the village epidemics and their branching envelopes, the
red/blue couplings linking them, Feller-Watanabe rescaling, exact likelihood
ratios, exact occupation-count moments, mean-field reference chains and
diffusions, percolation representations, and the interval exit law of the
measure-valued limit.
"""

__version__ = "0.1.0"

"""Set values of nonzero-sum stochastic differential games via set-valued Hamiltonians."""

__version__ = "0.1.0"

"""Long-range Ising chains on the integers: couplings, transfer operators,
random-cluster samplers and cut-decomposition estimators."""

__version__ = "0.1.0"

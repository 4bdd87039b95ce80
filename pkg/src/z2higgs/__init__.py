"""Z2 lattice Higgs model: exact enumeration, Monte Carlo and cluster expansions."""

__version__ = "0.1.0"

"""Random dyadic lattices, measure-adapted Haar systems and dyadic shift decompositions."""

__version__ = "0.1.0"

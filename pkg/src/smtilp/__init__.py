"""Hybrid rule learner: relational clause-structure search coupled to MaxSMT
numerical parameter fitting, with synthetic geometry/graph benchmarks."""

__version__ = "0.1.0"

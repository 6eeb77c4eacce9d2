"""Numerical certificates for L_p estimates of stochastic convolutions driven by
pseudo-differential operators and subordinate Brownian motion generators."""

__version__ = "0.1.0"

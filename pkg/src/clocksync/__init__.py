"""Two-way message exchange clock synchronization: simulation and estimation."""

__version__ = "0.1.0"

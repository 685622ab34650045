"""Measured counterparts of the energy, pressure and convergence estimates."""

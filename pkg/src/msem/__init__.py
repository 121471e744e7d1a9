"""Mimetic spectral element discretization of vector Poisson and Stokes problems."""

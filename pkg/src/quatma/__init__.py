"""Quaternionic Monge-Ampere toolkit: Moore determinants, Baston operators,
grid Dirichlet solves and subsolution experiments."""

__version__ = "0.1.0"

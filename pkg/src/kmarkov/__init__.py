"""Operator dynamics in k-Markov random circuits on a qubit ring."""
__version__ = "0.1.0"

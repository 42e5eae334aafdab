"""Simulation laboratory for the multistage critical epidemic."""

"""Simulation and analysis of one-round parallel join algorithms."""

"""Simulation and exact analysis of critical planar Potts and random-cluster models."""

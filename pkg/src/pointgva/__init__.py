"""Grouped vector attention, position-encoding multipliers and partition-based
grid pooling for point clouds, with brute-force oracles and a pooling benchmark."""

__version__ = "0.1.0"

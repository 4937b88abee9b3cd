"""de Broglie-Bohm trajectories for packet-superposition gedanken experiments."""

__version__ = "0.1.0"

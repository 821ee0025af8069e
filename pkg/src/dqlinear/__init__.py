"""Pseudo-Hamiltonian deformation quantization of linear (dissipative) systems."""

__version__ = "0.1.0"

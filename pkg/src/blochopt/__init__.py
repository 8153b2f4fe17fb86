"""Bloch-wave spectral toolkit for high-order homogenized optimal control."""

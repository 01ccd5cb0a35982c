"""Diffuse-interface approximation of anisotropic curvature energies for curves and of
a Mumford-Shah functional with curvature and junction terms."""

__version__ = "0.1.0"

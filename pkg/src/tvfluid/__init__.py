"""Thermoviscoelastic Giesekus fluid in 2D with thermodynamic audits."""

__version__ = "0.1.0"

"""Spectra of polynomials in GUE and deterministic matrices via matrix-valued subordination."""
__version__ = "0.1.0"

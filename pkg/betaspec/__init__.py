"""Beta divergence spectral estimation package."""

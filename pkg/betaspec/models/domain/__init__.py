"""Domain models for matrices, spectra, filter banks and solver output."""

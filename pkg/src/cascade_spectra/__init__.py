"""Spectra of projected planar Mandelbrot cascades."""

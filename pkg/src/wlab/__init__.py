"""Numerical laboratory for semiclassical Riesz means of Schrödinger operators.

Subpackages and modules: ``specfun`` (Riesz functions and constants),
``potentials`` (model potentials and mollification), ``phasespace`` (Weyl
terms), ``weylquant`` (Weyl quantization on a torus), ``schrodgrid``
(discretized operators, spectra, functional calculus), ``tauberian``
(mollifiers with compact Fourier support), ``multiscale`` (coverings and
rescaling) and ``harness`` (sweeps and the command line).
"""
__version__ = "0.1.0"

"""Numerical laboratory for zero statistics of random fewnomial systems.

Submodules
----------
lattice     lattice spectra: enumeration, counting, uniform sampling, dilation
ensemble    Gaussian coefficient ensembles, norming constants, diagonal kernels
potentials  limiting convex potentials and their Monge-Ampere densities
solver      complex zero finding (univariate, bivariate via resultants)
harness     end-to-end seeded experiments, comparison metrics, CSV reports
cli         command-line entry points
"""

__version__ = "0.1.0"

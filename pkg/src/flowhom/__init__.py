"""Homogenization of convection-diffusion problems with a large mean drift.

The effective tensor is the fast-time mean, along orbits of the mean flow, of
``Jt B Jt^T`` where ``B`` comes from periodic cell problems and ``Jt`` is the
backward flow Jacobian. Submodules:

``torus``       truncated Fourier fields on the unit torus
``flows``       mean-flow maps, Jacobians and orbit diagnostics
``meanvalue``   fast-time mean values over window schedules
``cell``        spectral cell-problem solver
``effective``   dispersion matrices and effective tensors
``pde``         finite-volume solvers, Lagrangian remap and closed forms
``sigma``       weak pairings and convergence studies
``scenarios``   configuration and built-in scenarios
"""

__version__ = "0.1.0"

from .errors import FlowhomError  # noqa: E402

__all__ = ["FlowhomError", "__version__"]

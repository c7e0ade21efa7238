"""Numerical laboratory for i u_t + Lap u + V u + a |u|^(m-1) u = f on Dirichlet boxes.

Modules
-------
coeffset    admissible damping coefficients and extinction exponents
satkernel   the regularized saturation kernel and its monotonicity checks
domain      grids, discrete Laplacian, norms, potentials, field I/O
resolvent   the stationary monotone problem (Newton solver)
evolve      backward Euler trajectories and mass bookkeeping
extinctlab  ODE comparison, GN constants, decay fits and theorem verdicts
cli         configuration-driven runs, sweeps and certifications
"""

__version__ = "0.1.0"

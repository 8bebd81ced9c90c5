"""Simulation and verification lab for the 1-d stochastic heat equation
driven by space-time white noise, with locally Lipschitz coefficients made
globally Lipschitz by clamping the state argument at +-e^N.

Subpackages: expression language (:mod:`shelab.expr`), coefficients and
constant estimators (:mod:`shelab.coeff`), heat kernel (:mod:`shelab.kernel`),
counter-based noise (:mod:`shelab.noise`), the explicit solver
(:mod:`shelab.solver`), Monte Carlo estimators (:mod:`shelab.estimators`),
closed-form bounds (:mod:`shelab.bounds`), and the experiment harness and
CLI (:mod:`shelab.harness`, :mod:`shelab.cli`).
"""

__version__ = "0.1.0"

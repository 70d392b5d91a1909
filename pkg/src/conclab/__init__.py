"""Numerical checks of concentration inequalities for convex Lipschitz functions of independent variables.

Modules: ``measures`` (scalar laws and psi_p norms), ``binomial`` (exact and
log-space binomial tails, fitted lower envelope), ``envelopes`` (tail
envelopes), ``talagrand`` (interpolation-cost closed forms and the
exponential-moment statistic), ``distance`` (modified convex distance),
``extremal`` (two-point extremal construction), ``harness`` (Monte Carlo
tails and the envelope audit), ``suites`` and ``cli``.

Set ``CONCLAB_DISABLE_NUMBA=1`` before import to use the pure-numpy kernels.
"""
__version__ = "0.1.0"

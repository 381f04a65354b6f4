"""Causal reconstruction of sparse signal sequences with slowly changing support.

Modules: ``numerics`` (dense kernels), ``model`` (ground truth), ``dantzig``
(Dantzig selector LP), ``filters`` (KF-CS, LS-CS, simple CS, genie-aided
baselines), ``metrics`` (incoherence constants), ``bounds`` (error bounds),
``audits`` (bound checks on a certified instance), ``harness`` (Monte Carlo
experiments) and ``cli``.
"""

__version__ = "0.1.0"

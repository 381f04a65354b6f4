"""Closed-form error bounds and detection delay.

The Dantzig selector constants ``C1``, ``C2(S)``, ``C3(S)`` are inputs.
:func:`dantzig_constants` builds defaults from enumerated incoherence
constants of a concrete matrix:

* ``C1(S) = 4 / (1 - delta_2S - theta_{S,2S})``, the constant of the
  Candes-Tao sparse-recovery theorem for the Dantzig selector;
* ``C2(S) = 2 C1(S)^2 lambda_m^2`` and ``C3(S) = 2 C1(S)^2``, from splitting a
  two-term error bound ``C1 (lambda sigma sqrt(S) + ||tail||_1 / sqrt(S))``
  with ``(a + b)^2 <= 2a^2 + 2b^2``.

The last two are a documented modelling choice rather than quoted values;
any other choice can be passed in directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

from .metrics import delta_S, theta_S_Sp
from .numerics import ContractError

__all__ = [
    "DomainError",
    "BoundInputs",
    "dantzig_constants",
    "gaussian_q",
    "gaussian_q_inv",
    "b1",
    "b_cslse",
    "tau_epsilon",
    "min_over_S_bound",
]

Constant = Union[float, Callable[[int], float]]


class DomainError(ValueError):
    """A bound is undefined for the supplied parameters."""


@dataclass
class BoundInputs:
    C1: float
    C2: Constant
    C3: Constant
    lambda_m: float
    S_max: int
    sigma_obs_sq: float
    delta_T: float = 0.0
    theta_T_Delta: float = 0.0
    T_size: int = 0
    Delta_size: int = 0
    E_xDelta_sq: float = 0.0

    def __post_init__(self):
        if self.sigma_obs_sq < 0 or self.E_xDelta_sq < 0:
            raise ContractError("variances must be non-negative")
        if self.delta_T < 0:
            raise ContractError("delta_T must be non-negative")


def _call(c: Constant, S: int) -> float:
    return float(c(S)) if callable(c) else float(c)


def dantzig_constants(A, lambda_m: float, budget: float = 1e9):
    """Default ``(C1, C2, C3)`` as functions of ``S`` for matrix ``A``.

    ``C1(S)`` is infinite when ``delta_2S + theta_{S,2S} >= 1``.  Values are
    cached per ``S``.
    """
    cache = {}

    def c1(S):
        if S not in cache:
            m = A.shape[1]
            if 3 * S > m:
                cache[S] = math.inf
            else:
                denom = 1.0 - delta_S(A, 2 * S, budget) - theta_S_Sp(A, S, 2 * S, budget)
                cache[S] = 4.0 / denom if denom > 0 else math.inf
        return cache[S]

    def c2(S):
        return 2.0 * c1(S) ** 2 * lambda_m**2

    def c3(S):
        return 2.0 * c1(S) ** 2

    return c1, c2, c3


def gaussian_q(x: float) -> float:
    """Upper tail probability of the standard normal."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def gaussian_q_inv(p: float) -> float:
    """Inverse of :func:`gaussian_q` by bisection (Q is strictly decreasing)."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"Q^-1 needs 0 < p < 1, got {p}")
    lo, hi = -40.0, 40.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if gaussian_q(mid) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def b1(inputs: BoundInputs) -> float:
    """Dantzig selector error bound ``C1^2 lambda_m^2 S_max sigma_obs^2``."""
    return inputs.C1**2 * inputs.lambda_m**2 * inputs.S_max * inputs.sigma_obs_sq


def b_cslse(S: int, inputs: BoundInputs) -> float:
    """Conditional error bound of CS applied to the least-squares residual.

    ``L0`` takes its first branch when ``S >= |Delta|`` and its second
    otherwise.  The leading ``(|T| + |Delta| - S)`` factor is the size of
    the tail left after the best ``S``-term approximation and is clipped at
    zero, so ``S`` beyond ``|T| + |Delta|`` leaves only the first term.
    """
    if S < 1:
        raise ContractError(f"S must be at least 1, got {S}")
    d = inputs.delta_T
    if d >= 1:
        raise DomainError(f"bound undefined for delta_|T| = {d} >= 1")
    T, D = inputs.T_size, inputs.Delta_size
    sig2 = inputs.sigma_obs_sq
    leak = inputs.theta_T_Delta**2 / (1.0 - d) ** 2
    if S >= D:
        L0 = leak * inputs.E_xDelta_sq + (T + D - S) * sig2 / (1.0 - d)
    else:
        L0 = (leak + 1.0) * inputs.E_xDelta_sq + T * sig2 / (1.0 - d)
    tail = max(T + D - S, 0)
    first = _call(inputs.C2, S) * S * sig2
    if tail == 0:
        return first
    return first + _call(inputs.C3, S) * tail / S * L0


def tau_epsilon(eps: float, inputs: BoundInputs, sigma_sys_sq: float) -> int:
    """Steps after the last addition until all of the support is detected
    with probability at least ``1 - eps``:

        ceil(4 B1 / (sigma_sys^2 [Q^-1((1 - eps)^(1/S_max) / 2)]^2))
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    bound = b1(inputs)
    if bound == 0:
        return 0
    if sigma_sys_sq <= 0:
        raise DomainError("sigma_sys^2 must be positive")
    q = gaussian_q_inv((1.0 - eps) ** (1.0 / inputs.S_max) / 2.0)
    if q == 0:
        raise DomainError("detection probability target too close to 1/2")
    return int(math.ceil(4.0 * bound / (sigma_sys_sq * q * q)))


def min_over_S_bound(inputs: BoundInputs, S_range) -> tuple[int, float]:
    """``(argmin, min)`` of :func:`b_cslse` over ``S_range``; ties go to smaller S."""
    best_S, best = None, math.inf
    for S in sorted(S_range):
        value = b_cslse(S, inputs)
        if best_S is None or value < best:
            best_S, best = S, value
    if best_S is None:
        raise ContractError("empty S range")
    return best_S, best

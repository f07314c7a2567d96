"""Closed-form bounds on gaps, relaxation times, and entropy growth.

Every evaluator returns a :class:`BoundValue` carrying the number, a
validity flag for the parameter window the derivation needs, and the
intermediate constants in ``meta``. Values outside the window are still
computed (the formula extends), but ``valid`` is False and downstream
consumers must not certify anything with them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

from .census import cone_stats, k0_asymptotic, sector_dim
from .errors import UsageError


@dataclass(frozen=True)
class BoundValue:
    """A bound evaluation: the number, its window flag, and workings."""

    value: float
    valid: bool
    meta: Mapping[str, Any] = field(default_factory=dict)


def _check_chain_args(n: int, length: int) -> None:
    if n < 2:
        raise UsageError(f"alphabet size must be at least 2, got {n}")
    if length < 1:
        raise UsageError(f"length must be positive, got {length}")


def mean_depth_fraction(n: int) -> Fraction:
    """Equilibrium depth per site, (n-2)/n."""
    if n < 2:
        raise UsageError(f"alphabet size must be at least 2, got {n}")
    return Fraction(n - 2, n)


def _profile_constant(n: int, x: float) -> float:
    """Gaussian envelope prefactor F at depth fraction x = d/L."""
    v = float(mean_depth_fraction(n))
    return 4 * (n - 1) / (math.sqrt(2 * math.pi) * n**2) * math.exp(
        (x - v) * (1 - v)
    )


# ---------------------------------------------------------------------------
# gap bounds


def thm1_gap_upper(n: int, length: int) -> BoundValue:
    """Upper bound on the nonlocal gap: the frozen-state fraction.

    Exactly ``|K_0| / n^L``; the meta carries the exact fraction and,
    for n >= 3, the fitted large-L asymptotic of the same ratio. Odd
    lengths have no frozen sectors, so the bound does not apply there.
    """
    _check_chain_args(n, length)
    if length % 2:
        raise UsageError("frozen sectors need an even length")
    exact = Fraction(sector_dim(n, length, 0), n**length)
    asym = k0_asymptotic(n, length) / n**length if n >= 3 else None
    return BoundValue(
        value=float(exact),
        valid=True,
        meta={"exact": exact, "asymptotic": asym},
    )


def n2_gap_window(length: int) -> tuple[float, float]:
    """Two-symbol nonlocal gap window (1/(pi L), sqrt(8/(pi L)))."""
    if length < 1:
        raise UsageError(f"length must be positive, got {length}")
    return 1.0 / (math.pi * length), math.sqrt(8.0 / (math.pi * length))


# ---------------------------------------------------------------------------
# relaxation-time lower bounds


def thm3_charge_time_lower(n: int, length: int, gamma: float) -> BoundValue:
    """Lower bound on the time for the mean charge to reach gamma.

    At gamma = 0 this is exactly ``1 / Phi(C_2)`` (even lengths only,
    since depth-2 sectors need even L). For gamma > 0 the bound is

        gamma * D_{eta/2} * sqrt(L) * exp(L (2 gamma - v)^2 / 2)

    with eta = 2 gamma, valid on 0 < gamma < v/2. Outside the window
    the value is still evaluated but flagged invalid; the weaker
    comparison constant D_gamma is reported in the meta.
    """
    _check_chain_args(n, length)
    if gamma < 0 or gamma >= 1:
        raise UsageError(f"gamma must lie in [0, 1), got {gamma}")
    v = float(mean_depth_fraction(n))
    if gamma == 0:
        if length % 2:
            raise UsageError("the depth-2 cone needs an even length")
        flow = cone_stats(n, length, 2).boundary_flow
        exact = 1 / flow
        return BoundValue(
            value=float(exact),
            valid=True,
            meta={"exact": exact, "flow": flow},
        )
    eta = 2 * gamma
    d_const = (
        n**2
        * math.sqrt(2 * math.pi)
        / (2 * (1 + eta) * (n - 1))
        * math.exp(-(eta - v) * (1 - v))
    )
    exponent = length * (2 * gamma - v) ** 2 / 2
    value = gamma * d_const * math.sqrt(length) * math.exp(exponent)
    comparison = (
        2
        * (1 + 2 * gamma)
        * (n - 1)
        / (n**2 * math.sqrt(2 * math.pi))
        * math.exp(-(2 * gamma - v) * (1 - v))
    )
    return BoundValue(
        value=value,
        valid=0 < gamma < v / 2,
        meta={
            "eta": eta,
            "D": d_const,
            "exponent": exponent,
            "window": (0.0, v / 2),
            "comparison_D": comparison,
        },
    )


def thm2_entropy_time_lower(n: int, length: int, gamma: float) -> BoundValue:
    """Lower bound on the time to reach a (1 - gamma/2) entropy deficit.

    Valid on gamma_* < gamma < 1 with
    ``gamma_* = 2 (1 - v ln(n-1)/ln n)``; for n = 2 and for any n where
    gamma_* >= 1 the window is empty and every evaluation is flagged.
    """
    _check_chain_args(n, length)
    if not 0 < gamma < 1:
        raise UsageError(f"gamma must lie in (0, 1), got {gamma}")
    v = float(mean_depth_fraction(n))
    if n == 2:
        # ln(n-1) = 0: there is no entropy plateau to certify against
        return BoundValue(
            value=math.inf,
            valid=False,
            meta={"gamma_star": 2.0, "reason": "empty window for n=2"},
        )
    ratio = math.log(n) / math.log(n - 1)
    gamma_star = 2 * (1 - v / ratio)
    x = (1 - gamma / 2) * ratio  # target depth fraction d_gamma / L
    lam = 0.5 * (x - v) ** 2
    f_const = _profile_constant(n, x)
    c_gamma = gamma / (2 * f_const)
    value = c_gamma * math.sqrt(length) * math.exp(length * lam)
    return BoundValue(
        value=value,
        valid=gamma_star < gamma < 1,
        meta={
            "gamma_star": gamma_star,
            "depth_fraction": x,
            "rate": lam,
            "C": c_gamma,
            "F": f_const,
        },
    )


# ---------------------------------------------------------------------------
# entropy growth envelope


def entropy_offset(n: int) -> float:
    """Additive constant of the entropy envelope, 1/e + 2 ln(n-1) - ln n."""
    if n < 2:
        raise UsageError(f"alphabet size must be at least 2, got {n}")
    return 1 / math.e + 2 * math.log(n - 1) - math.log(n)


def entropy_bound_curve(
    n: int, length: int, depth: float, t: float, *, bipartite: bool = False
) -> BoundValue:
    """Entropy envelope at a given reference depth and time.

        L ln n (1 - (d/L) ln(n-1)/ln n + t (F_d/sqrt(L)) e^{-L(d/L-v)^2/2}) + c

    The bipartite variant doubles the time term. Valid only below the
    crossover, ``v L - d >= sqrt(L)``; past it the envelope shape is
    not controlled, so the value is flagged rather than interpolated.
    At t = 0, d = 0 the envelope is exactly ``L ln n + c``.
    """
    _check_chain_args(n, length)
    if not 0 <= depth <= length:
        raise UsageError(f"depth {depth} outside [0, {length}]")
    if t < 0:
        raise UsageError("time must be nonnegative")
    v = float(mean_depth_fraction(n))
    x = depth / length
    c = entropy_offset(n)
    f_const = _profile_constant(n, x)
    slope = (f_const / math.sqrt(length)) * math.exp(
        -length * (x - v) ** 2 / 2
    )
    if bipartite:
        slope *= 2
    static = 1.0 - x * math.log(n - 1) / math.log(n)
    value = length * math.log(n) * (static + t * slope) + c
    return BoundValue(
        value=value,
        valid=v * length - depth >= math.sqrt(length),
        meta={
            "offset": c,
            "F": f_const,
            "slope": slope,
            "crossover_depth": v * length - math.sqrt(length),
        },
    )

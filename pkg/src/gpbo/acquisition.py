"""Improvement-based and confidence-bound acquisition values.

All functions score a single posterior (mean, std) pair; the run loops
compose them with a surrogate and hand the resulting surface to the global
maximizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "AcquisitionSpec",
    "std_normal_cdf",
    "std_normal_pdf",
    "pi_value",
    "ei_value",
    "ucb_value",
    "beta_schedule",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which acquisition to maximize and its scalar parameters.

    ``incumbent`` is the best noisy observation so far (used by pi/ei);
    ``beta`` is the confidence-width multiplier (used by ucb).
    """

    kind: str
    incumbent: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("pi", "ei", "ucb"):
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if not math.isfinite(self.beta) or self.beta < 0:
            raise ValueError("beta must be finite and non-negative")
        if self.kind in ("pi", "ei") and not math.isfinite(self.incumbent):
            raise ValueError("incumbent must be finite for pi/ei")

    def value(self, mean: float, std: float) -> float:
        if self.kind == "pi":
            return pi_value(mean, std, self.incumbent)
        if self.kind == "ei":
            return ei_value(mean, std, self.incumbent)
        return ucb_value(mean, std, self.beta)


def std_normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def std_normal_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


def _check_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def pi_value(mean: float, std: float, incumbent: float) -> float:
    """Probability that a Normal(mean, std^2) draw beats the incumbent.

    At std = 0 the distribution is a point mass, so the value degenerates to
    the indicator of mean > incumbent.
    """
    _check_finite(mean=mean, std=std, incumbent=incumbent)
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0.0:
        return 1.0 if mean > incumbent else 0.0
    return std_normal_cdf((mean - incumbent) / std)


def ei_value(mean: float, std: float, incumbent: float) -> float:
    """Expected improvement of a Normal(mean, std^2) draw over the incumbent."""
    _check_finite(mean=mean, std=std, incumbent=incumbent)
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0.0:
        return 0.0
    z = (mean - incumbent) / std
    return (mean - incumbent) * std_normal_cdf(z) + std * std_normal_pdf(z)


def ucb_value(mean: float, std: float, beta: float) -> float:
    """Upper confidence bound mean + sqrt(beta) * std."""
    return mean + math.sqrt(beta) * std


def beta_schedule(
    t: int,
    d: int,
    delta: float,
    mode: str = "experiment",
    theory: "TheoryParams | None" = None,
) -> float:
    """Confidence-width schedule for ucb at iteration ``t`` in dimension ``d``.

    ``experiment`` mode is 2*log(t^(d/2+2) * pi^2 / (3*delta)).  ``theorem``
    mode additionally needs the derivative-tail constants and domain width
    carried by a TheoryParams and evaluates
    2*log(2*pi^2*t^2/(3*delta)) + 2*d*log(t^2*d*b*r*sqrt(log(4*d*a/delta))).
    """
    if t < 1:
        raise ValueError("t must be a positive integer")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie strictly inside (0, 1)")
    if mode == "experiment":
        return 2.0 * math.log(t ** (d / 2.0 + 2.0) * math.pi**2 / (3.0 * delta))
    if mode == "theorem":
        if theory is None:
            raise ValueError("theorem mode requires TheoryParams")
        inner = t**2 * d * theory.tail_b * theory.domain_width * math.sqrt(
            math.log(4.0 * d * theory.tail_a / delta)
        )
        return 2.0 * math.log(2.0 * math.pi**2 * t**2 / (3.0 * delta)) + 2.0 * d * math.log(inner)
    raise ValueError(f"unknown beta schedule mode {mode!r}")

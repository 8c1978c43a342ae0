"""Deterministic global maximization by dividing rectangles.

Implements the classic trisection scheme: the domain is normalized to the
unit cube, hyper-rectangles are scored by their center value and half
diagonal, and every iteration splits the potentially-optimal rectangles
found on the lower convex hull of the (size, value) cloud.  The procedure
is fully deterministic; ties are broken by rectangle creation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .domain import BoxDomain

__all__ = ["DirectConfig", "maximize", "NonFiniteObjectiveError"]


class NonFiniteObjectiveError(ValueError):
    """The objective returned NaN or infinity at some sampled point."""


@dataclass(frozen=True)
class DirectConfig:
    """Budget and selection knobs for the rectangle search.

    ``epsilon`` is the relative slack in the potentially-optimal test.
    ``local_polish`` bolts a bounded coordinate-descent refinement (at most
    ``polish_evaluations`` extra objective calls) onto the returned argmax.
    """

    max_evaluations: int = 400
    max_iterations: int = 10_000
    epsilon: float = 1e-4
    local_polish: bool = False
    polish_evaluations: int = 50

    def __post_init__(self):
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")


class _Budget(Exception):
    """Internal signal: evaluation budget exhausted."""


def _measure(levels: np.ndarray) -> float:
    """Half-diagonal of a rectangle, canonicalized so that permuted level
    vectors produce bit-identical measures (they group rectangles for the
    potentially-optimal test)."""
    half_sides = 0.5 * np.power(3.0, -np.sort(levels).astype(float))
    return float(np.linalg.norm(half_sides))


class _Search:
    """Mutable state of one maximization run (internally minimizes -f)."""

    def __init__(self, objective, domain: BoxDomain, limit: int):
        self.objective = objective
        self.domain = domain
        self.limit = limit
        self.evaluations = 0
        self.best_value = math.inf  # minimization of the negated objective
        self.best_point = domain.center.copy()
        # Parallel rectangle arrays; index doubles as the deterministic tie-breaker.
        self.centers: list[np.ndarray] = []
        self.levels: list[np.ndarray] = []
        self.values: list[float] = []
        self.measures: list[float] = []

    def to_domain(self, unit: np.ndarray) -> np.ndarray:
        return self.domain.lower + unit * self.domain.widths

    def evaluate(self, unit: np.ndarray) -> float:
        if self.evaluations >= self.limit:
            raise _Budget
        x = self.to_domain(unit)
        raw = float(self.objective(x))
        self.evaluations += 1
        if not math.isfinite(raw):
            raise NonFiniteObjectiveError(f"objective returned {raw!r} at {x.tolist()}")
        value = -raw
        if value < self.best_value:
            self.best_value = value
            self.best_point = x.copy()
        return value

    def add_rectangle(self, center: np.ndarray, levels: np.ndarray, value: float) -> None:
        self.centers.append(center)
        self.levels.append(levels)
        self.values.append(value)
        self.measures.append(_measure(levels))

    def potentially_optimal(self, epsilon: float) -> list[int]:
        """Indices of rectangles on the lower-right convex hull of (size, value)."""
        best_for_measure: dict[float, int] = {}
        for idx, (m, v) in enumerate(zip(self.measures, self.values)):
            cur = best_for_measure.get(m)
            if cur is None or v < self.values[cur]:
                best_for_measure[m] = idx
        candidates = sorted(best_for_measure.items())  # ascending measure
        f_min = min(self.values)
        selected = []
        for pos, (measure, idx) in enumerate(candidates):
            value = self.values[idx]
            left = -math.inf
            for m2, i2 in candidates[:pos]:
                left = max(left, (value - self.values[i2]) / (measure - m2))
            right = math.inf
            for m2, i2 in candidates[pos + 1 :]:
                right = min(right, (self.values[i2] - value) / (m2 - measure))
            if left > right:
                continue
            if math.isfinite(right):
                if f_min != 0.0:
                    ok = epsilon <= (f_min - value) / abs(f_min) + measure * right / abs(f_min)
                else:
                    ok = value - measure * right <= 0.0
                if not ok:
                    continue
            selected.append(idx)
        return selected

    def split(self, idx: int) -> None:
        """Trisect rectangle ``idx`` along all of its longest sides."""
        center = self.centers[idx]
        levels = self.levels[idx]
        min_level = levels.min()
        dims = np.flatnonzero(levels == min_level)
        delta = 3.0 ** (-(float(min_level) + 1.0))
        samples: list[tuple[int, float, float, np.ndarray, np.ndarray]] = []
        for dim in dims:
            plus = center.copy()
            plus[dim] += delta
            minus = center.copy()
            minus[dim] -= delta
            v_plus = self.evaluate(plus)
            v_minus = self.evaluate(minus)
            samples.append((dim, v_plus, v_minus, plus, minus))
        # Best child first, so it keeps the largest remaining rectangle.
        samples.sort(key=lambda s: (min(s[1], s[2]), s[0]))
        current = levels.copy()
        for dim, v_plus, v_minus, plus, minus in samples:
            current = current.copy()
            current[dim] += 1
            self.add_rectangle(plus, current, v_plus)
            self.add_rectangle(minus, current, v_minus)
        self.levels[idx] = current
        self.measures[idx] = _measure(current)


def _polish(search: _Search, config: DirectConfig) -> None:
    """Shrinking coordinate-descent refinement around the current argmax."""
    d = search.domain.dimension
    unit = (search.best_point - search.domain.lower) / search.domain.widths
    value = search.best_value
    step = 1.0 / 30.0
    used = 0
    while used < config.polish_evaluations and step > 1e-12:
        improved = False
        for dim in range(d):
            for sign in (1.0, -1.0):
                if used >= config.polish_evaluations:
                    return
                cand = unit.copy()
                cand[dim] = min(max(cand[dim] + sign * step, 0.0), 1.0)
                if cand[dim] == unit[dim]:
                    continue
                try:
                    v = search.evaluate(cand)
                except _Budget:
                    return
                used += 1
                if v < value:
                    unit = cand
                    value = v
                    improved = True
        if not improved:
            step /= 3.0


def maximize(
    objective: Callable[[np.ndarray], float],
    domain: BoxDomain,
    config: DirectConfig = DirectConfig(),
) -> tuple[np.ndarray, float]:
    """Maximize ``objective`` over ``domain``; returns (argmax, value).

    The first sample is always the domain center, so the returned value is
    never below the center value.  Identical inputs give identical outputs.
    """
    search = _Search(objective, domain, config.max_evaluations)
    d = domain.dimension
    try:
        center = np.full(d, 0.5)
        v0 = search.evaluate(center)
        search.add_rectangle(center, np.zeros(d, dtype=int), v0)
        for _ in range(config.max_iterations):
            for idx in search.potentially_optimal(config.epsilon):
                search.split(idx)
    except _Budget:
        pass
    if config.local_polish:
        search.limit = search.evaluations + config.polish_evaluations
        _polish(search, config)
    return search.best_point, -search.best_value

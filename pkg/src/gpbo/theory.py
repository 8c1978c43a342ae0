"""Randomized numerical verification of the closed-form correction identities.

Each check builds a small random GP instance, evaluates a closed-form
quantity from :mod:`gpbo.pseudo`, and compares it against a brute-force
re-computation (posterior differences of explicitly augmented models).
Reports carry the instance seed so any failure is replayable.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import gp, pseudo
from .domain import unit_symmetric
from .engine import TheoryParams, mean_error_bound
from .gp import Dataset, KernelParams

__all__ = [
    "TheoryInstance",
    "CheckReport",
    "build_instance",
    "check_variance_reduction_identity",
    "check_mean_shift_identity",
    "check_correction_bounds",
    "check_mean_error_envelope",
    "run_identity_suite",
]

_N_QUERIES = 32


@dataclass(frozen=True)
class TheoryInstance:
    """Size parameters of one randomized verification instance."""

    dimension: int = 2
    n_base: int = 5
    n_pseudo: int = 3
    tau: float = 0.05
    noise_variance: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.dimension < 1 or self.n_base < 1 or self.n_pseudo < 0:
            raise ValueError("dimension and n_base must be >= 1, n_pseudo >= 0")
        if self.tau < 0 or self.noise_variance <= 0:
            raise ValueError("tau must be >= 0 and noise_variance > 0")


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check: replayable, machine-readable."""

    name: str
    passed: bool
    max_error: float
    tolerance: float
    seed: int
    detail: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _schedule_for(instance: TheoryInstance) -> pseudo.PseudoSchedule:
    """A schedule whose computed displacement equals the instance's tau."""
    d, l = instance.dimension, instance.n_pseudo
    width = 2.0
    if instance.tau == 0.0:
        # tau0 > 0 keeps generation enabled; the displacement itself is zero.
        return pseudo.PseudoSchedule(tau0=0.0, domain_width=width, mode="fixed", count=0)
    tau0 = instance.tau * d * l / width
    return pseudo.PseudoSchedule(tau0=tau0, domain_width=width, mode="fixed", count=l)


def build_instance(instance: TheoryInstance):
    """Model, pseudo set, and query points for one seeded instance."""
    rng = np.random.default_rng(np.random.SeedSequence([instance.seed, 0x7E07]))
    d = instance.dimension
    domain = unit_symmetric(d)
    params = KernelParams(
        lengthscales=rng.uniform(0.3, 1.2, size=d),
        amplitude=1.0,
        noise_variance=instance.noise_variance,
    )
    points = domain.sample(rng, instance.n_base)
    values = rng.normal(0.0, 1.0, size=instance.n_base)
    data = Dataset(points, values)
    model = gp.build_model(data, params)
    if instance.n_pseudo == 0:
        pp = pseudo.empty_pseudo_set(d)
    elif instance.tau == 0.0:
        # Degenerate displacement: pseudo-points sit exactly on their parents.
        parents = rng.integers(0, instance.n_base, size=instance.n_pseudo)
        pp = pseudo.PseudoPointSet(
            points=data.points[parents].copy(),
            values=data.observations[parents].copy(),
            parent_index=parents,
            tau=0.0,
            clipped=np.zeros((instance.n_pseudo, d), dtype=bool),
        )
    else:
        pp = pseudo.generate(data, _schedule_for(instance), domain, rng)
    queries = domain.sample(rng, _N_QUERIES)
    return model, pp, queries, rng


def check_variance_reduction_identity(instance: TheoryInstance, tolerance: float = 1e-8) -> CheckReport:
    """Closed-form variance reduction vs. the difference of two posteriors."""
    try:
        model, pp, queries, _ = build_instance(instance)
        augmented = pseudo.augmented_model(model, pp)
    except gp.FactorizationError as exc:
        return CheckReport("variance_reduction_identity", False, math.inf, tolerance,
                           instance.seed, {"skipped": str(exc)})
    worst = 0.0
    min_value = math.inf
    for x in queries:
        closed = pseudo.variance_reduction(model, pp, x)
        _, base_var = gp.posterior(model, x)
        _, aug_var = gp.posterior(augmented, x)
        worst = max(worst, abs(closed - (base_var - aug_var)))
        min_value = min(min_value, closed)
    passed = worst <= tolerance and min_value >= -1e-9
    return CheckReport(
        "variance_reduction_identity",
        passed,
        worst,
        tolerance,
        instance.seed,
        {"min_reduction": min_value, "n_pseudo": len(pp), "tau": pp.tau},
    )


def check_mean_shift_identity(instance: TheoryInstance, tolerance: float = 1e-8) -> CheckReport:
    """Closed-form mean shift vs. paired explicit augmentations."""
    try:
        model, pp, queries, rng = build_instance(instance)
    except gp.FactorizationError as exc:
        return CheckReport("mean_shift_identity", False, math.inf, tolerance,
                           instance.seed, {"skipped": str(exc)})
    true_values = pp.values + rng.normal(0.0, 0.5, size=len(pp))
    with_copied = pseudo.augmented_model(model, pp)
    with_true = pseudo.augmented_model(
        model,
        pseudo.PseudoPointSet(pp.points, true_values, pp.parent_index, pp.tau, pp.clipped),
    )
    worst = 0.0
    for x in queries:
        closed = pseudo.mean_shift(model, pp, true_values, x)
        mu_hat, _ = gp.posterior(with_copied, x)
        mu_tilde, _ = gp.posterior(with_true, x)
        worst = max(worst, abs(closed - (mu_hat - mu_tilde)))
    return CheckReport(
        "mean_shift_identity",
        worst <= tolerance,
        worst,
        tolerance,
        instance.seed,
        {"n_pseudo": len(pp), "tau": pp.tau},
    )


def check_correction_bounds(instance: TheoryInstance) -> CheckReport:
    """Elementwise envelopes: |p_j| <= sqrt(1+noise), |M_ji| <= 1/noise."""
    try:
        model, pp, queries, _ = build_instance(instance)
        if len(pp) == 0:
            return CheckReport("correction_bounds", True, 0.0, 0.0, instance.seed, {"n_pseudo": 0})
        p_mat, m_mat, _ = pseudo.correction_terms(model, pp, queries)
    except gp.FactorizationError as exc:
        return CheckReport("correction_bounds", False, math.inf, 0.0,
                           instance.seed, {"skipped": str(exc)})
    noise = instance.noise_variance
    p_limit = math.sqrt(1.0 + noise) + 1e-8
    m_limit = 1.0 / noise + 1e-6
    p_excess = float(np.max(np.abs(p_mat)) - p_limit)
    m_excess = float(np.max(np.abs(m_mat)) - m_limit)
    worst = max(p_excess, m_excess, 0.0)
    return CheckReport(
        "correction_bounds",
        p_excess <= 0.0 and m_excess <= 0.0,
        worst,
        0.0,
        instance.seed,
        {"max_abs_p": float(np.max(np.abs(p_mat))), "max_abs_m": float(np.max(np.abs(m_mat)))},
    )


def check_mean_error_envelope(
    instance: TheoryInstance,
    trials: int,
    theory: TheoryParams,
    threshold: float = 0.05,
) -> CheckReport:
    """Monte-Carlo exceedance rate of the mean-error envelope.

    Each trial draws a function jointly from the GP prior at the base
    points, the pseudo locations, the query points, and a dense slope grid;
    the realized augmented-mean error (borrowed vs. true noisy values) is
    compared against the envelope evaluated with the grid-estimated slope
    bound.  The envelope is probabilistic, so the check only asserts the
    exceedance fraction stays under ``threshold``.
    """
    d = instance.dimension
    domain = unit_symmetric(d)
    exceed = 0
    realized: list[float] = []
    bounds: list[float] = []
    for k in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([instance.seed, 0x5EED, k]))
        params = KernelParams(
            lengthscales=np.full(d, 0.6),
            amplitude=1.0,
            noise_variance=instance.noise_variance,
        )
        base = domain.sample(rng, instance.n_base)
        placeholder = Dataset(base, np.zeros(instance.n_base))
        pp_shape = pseudo.generate(placeholder, _schedule_for(instance), domain, rng)
        queries = domain.sample(rng, 8)
        # Dense axis-aligned grid for the per-coordinate slope estimate.
        grid_axis = np.linspace(-1.0, 1.0, 96)
        grids = []
        for j in range(d):
            g = np.tile(domain.center, (grid_axis.size, 1))
            g[:, j] = grid_axis
            grids.append(g)
        grid = np.vstack(grids)
        everything = np.vstack([base, pp_shape.points, grid])
        cov = gp.kernel_matrix(everything, everything, params)
        cov[np.diag_indices_from(cov)] += 1e-10
        f_all = np.linalg.cholesky(cov) @ rng.standard_normal(everything.shape[0])
        n_b, n_p = instance.n_base, len(pp_shape)
        f_base = f_all[:n_b]
        f_pseudo = f_all[n_b : n_b + n_p]
        f_grid = f_all[n_b + n_p :]
        slope = 0.0
        step = grid_axis[1] - grid_axis[0]
        for j in range(d):
            vals = f_grid[j * grid_axis.size : (j + 1) * grid_axis.size]
            slope = max(slope, float(np.max(np.abs(np.diff(vals)))) / step)

        sigma = math.sqrt(instance.noise_variance)
        y_base = f_base + sigma * rng.standard_normal(n_b)
        data = Dataset(base, y_base)
        model = gp.build_model(data, params)
        pp = pseudo.PseudoPointSet(
            points=pp_shape.points,
            values=y_base[pp_shape.parent_index],
            parent_index=pp_shape.parent_index,
            tau=pp_shape.tau,
            clipped=pp_shape.clipped,
        )
        y_true = f_pseudo + sigma * rng.standard_normal(n_p)
        with_copied = pseudo.augmented_model(model, pp)
        with_true = pseudo.augmented_model(
            model, pseudo.PseudoPointSet(pp.points, y_true, pp.parent_index, pp.tau, pp.clipped)
        )
        mu_hat, _ = gp.predict(with_copied, queries)
        mu_tilde, _ = gp.predict(with_true, queries)
        worst = float(np.max(np.abs(mu_hat - mu_tilde)))
        envelope = mean_error_bound(
            n_p, pp.tau, slope, instance.noise_variance, n_p, theory.delta, d
        )
        realized.append(worst)
        bounds.append(envelope)
        if worst > envelope:
            exceed += 1
    fraction = exceed / trials
    return CheckReport(
        "mean_error_envelope",
        fraction <= threshold,
        fraction,
        threshold,
        instance.seed,
        {
            "trials": trials,
            "exceedances": exceed,
            "mean_realized": float(np.mean(realized)),
            "mean_envelope": float(np.mean(bounds)),
        },
    )


def run_identity_suite(seed: int, instances: int) -> list[CheckReport]:
    """The deterministic identity checks over a batch of random instances."""
    rng = np.random.default_rng(seed)
    reports: list[CheckReport] = []
    for k in range(instances):
        inst = TheoryInstance(
            dimension=int(rng.integers(1, 5)),
            n_base=int(rng.integers(1, 13)),
            n_pseudo=int(rng.integers(1, 7)),
            tau=float(rng.uniform(0.0, 0.15)),
            noise_variance=float(rng.uniform(1e-4, 1e-1)),
            seed=seed * 1_000_003 + k,
        )
        reports.append(check_variance_reduction_identity(inst))
        reports.append(check_mean_shift_identity(inst))
        reports.append(check_correction_bounds(inst))
    return reports

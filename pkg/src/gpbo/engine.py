"""Sequential optimization loops with regret tracking and bound evaluation.

``run_bo`` is the plain loop: fit hyper-parameters, maximize an acquisition
surface over the domain, evaluate, append.  ``run_bopp`` additionally
generates one round of pseudo-points before each selection and maximizes
the acquisition on the augmented posterior; the pseudo rows never touch
hyper-parameter fitting or the incumbent.

Randomness is split into four named substreams (initial design, observation
noise, pseudo-point signs, fit restarts) derived from the run seed, so
disabling pseudo-points reproduces the plain loop draw-for-draw.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import acquisition as acq
from . import direct, gp, pseudo
from .gp import Dataset, FitConfig, KernelParams, empty_dataset
from .objectives import NoiseModel, Objective, observe
from .pseudo import PseudoSchedule, disabled_schedule

__all__ = [
    "RunConfig",
    "RegretTrace",
    "TheoryParams",
    "RegretBoundResult",
    "run_bo",
    "run_bopp",
    "evaluate_regret_bound",
    "mean_error_bound",
    "theorem_mean_error_bound",
    "info_gain_increment",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """Settings for one optimization run.

    ``standardize`` transforms observations to zero mean and unit variance
    before GP fitting; the transform is recomputed each iteration and the
    acquisition is maximized in transformed units (all three acquisitions
    have affine-invariant argmaxes, so selection is unaffected by the units).
    With the fixed noise level this keeps the likelihood surface sane for
    objectives whose raw scale dwarfs the noise.  ``unit_amplitude`` pins the
    signal variance at one, which the bound evaluator requires, and is
    mutually exclusive with ``standardize``.  ``direct_config`` defaults to
    a budget of 200*d evaluations with local polish enabled.
    """

    budget: int
    initial_points: int = 5
    acquisition_kind: str = "ucb"
    delta: float = 0.1
    noise_variance: float = 1e-4
    pseudo: PseudoSchedule = field(default_factory=disabled_schedule)
    seed: int = 0
    fit_every: int = 1
    standardize: bool = True
    unit_amplitude: bool = False
    fit: FitConfig = field(default_factory=FitConfig)
    direct_config: direct.DirectConfig | None = None

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.initial_points < 0:
            raise ValueError("initial_points must be non-negative")
        if self.fit_every < 1:
            raise ValueError("fit_every must be at least 1")
        if self.acquisition_kind not in ("pi", "ei", "ucb"):
            raise ValueError(f"unknown acquisition kind {self.acquisition_kind!r}")
        if self.standardize and self.unit_amplitude:
            raise ValueError("unit_amplitude mode forbids observation centering")


@dataclass
class RegretTrace:
    """Per-iteration record of one run.

    ``simple_regret``/``cumulative_regret`` are NaN when the objective has
    no known optimum.  ``info_gain`` is the running sum of the per-iteration
    increments 0.5*log(1 + selection_variance/noise).  ``pseudo_counts`` and
    ``taus`` record the schedule actually used at each iteration.
    """

    objective_name: str
    dimension: int
    unit_amplitude: bool
    noise_variance: float
    init_points: np.ndarray
    init_observations: np.ndarray
    points: np.ndarray
    observations: np.ndarray
    true_values: np.ndarray
    instant_regret: np.ndarray
    simple_regret: np.ndarray
    cumulative_regret: np.ndarray
    delta_v: np.ndarray
    beta: np.ndarray
    info_gain: np.ndarray
    pseudo_counts: np.ndarray
    taus: np.ndarray
    wall_ms: np.ndarray
    lengthscales: np.ndarray
    amplitudes: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def final_simple_regret(self) -> float:
        return float(self.simple_regret[-1])

    @property
    def best_observed(self) -> float:
        return float(max(self.observations.max(initial=-np.inf),
                         self.init_observations.max(initial=-np.inf)))

    def payload(self) -> dict[str, np.ndarray]:
        """The deterministic arrays (everything except wall-clock timing)."""
        return {
            "init_points": self.init_points,
            "init_observations": self.init_observations,
            "points": self.points,
            "observations": self.observations,
            "true_values": self.true_values,
            "instant_regret": self.instant_regret,
            "simple_regret": self.simple_regret,
            "cumulative_regret": self.cumulative_regret,
            "delta_v": self.delta_v,
            "beta": self.beta,
            "info_gain": self.info_gain,
            "pseudo_counts": self.pseudo_counts,
            "taus": self.taus,
            "lengthscales": self.lengthscales,
            "amplitudes": self.amplitudes,
        }


@dataclass(frozen=True)
class TheoryParams:
    """Constants entering the theoretical schedule and regret bound.

    ``tail_a``/``tail_b`` parameterize the high-probability bound
    a*exp(-(L/b)^2) on the objective's partial-derivative tails;
    ``lipschitz`` is an explicit slope bound used where one is known;
    ``domain_width`` is the width of each coordinate of the search box.
    """

    tail_a: float = 1.0
    tail_b: float = 1.0
    lipschitz: float = 1.0
    domain_width: float = 2.0
    delta: float = 0.1

    def __post_init__(self):
        if min(self.tail_a, self.tail_b, self.lipschitz, self.domain_width) <= 0:
            raise ValueError("all theory constants must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie strictly inside (0, 1)")


def info_gain_increment(selection_variance: float, noise_variance: float) -> float:
    return 0.5 * math.log1p(selection_variance / noise_variance)


def _initial_params(dimension: int, config: RunConfig) -> KernelParams:
    # The surrogate needs a strictly positive noise level even when the
    # observation noise is zero (deterministic objectives).
    return KernelParams(
        lengthscales=np.full(dimension, 0.5),
        amplitude=1.0,
        noise_variance=max(config.noise_variance, 1e-12),
    )


def _direct_config(config: RunConfig, dimension: int) -> direct.DirectConfig:
    if config.direct_config is not None:
        return config.direct_config
    return direct.DirectConfig(max_evaluations=200 * dimension, local_polish=False)


def _run(objective: Objective, config: RunConfig, schedule: PseudoSchedule) -> RegretTrace:
    d = objective.dimension
    t_total = config.budget
    master = np.random.SeedSequence(config.seed)
    init_ss, noise_ss, pseudo_ss, fit_ss = master.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    pseudo_rng = np.random.default_rng(pseudo_ss)
    noise = NoiseModel(config.noise_variance, np.random.default_rng(noise_ss))
    fit_config = replace(
        config.fit,
        rng=np.random.default_rng(fit_ss),
        fix_amplitude=config.fit.fix_amplitude or config.unit_amplitude,
    )
    direct_config = _direct_config(config, d)

    gp_noise = max(config.noise_variance, 1e-12)
    init_points = objective.domain.sample(init_rng, config.initial_points)
    init_obs = np.array([observe(objective, noise, x) for x in init_points])
    data = Dataset(init_points, init_obs) if config.initial_points else empty_dataset(d)

    params = _initial_params(d, config)
    optimum = objective.optimum_value

    out = RegretTrace(
        objective_name=objective.name,
        dimension=d,
        unit_amplitude=config.unit_amplitude,
        noise_variance=gp_noise,
        init_points=init_points,
        init_observations=init_obs,
        points=np.empty((t_total, d)),
        observations=np.empty(t_total),
        true_values=np.empty(t_total),
        instant_regret=np.full(t_total, np.nan),
        simple_regret=np.full(t_total, np.nan),
        cumulative_regret=np.full(t_total, np.nan),
        delta_v=np.zeros(t_total),
        beta=np.full(t_total, np.nan),
        info_gain=np.zeros(t_total),
        pseudo_counts=np.zeros(t_total, dtype=int),
        taus=np.zeros(t_total),
        wall_ms=np.zeros(t_total),
        lengthscales=np.empty((t_total, d)),
        amplitudes=np.empty(t_total),
    )

    cumulative = 0.0
    best_regret = math.inf
    gain = 0.0

    for t in range(1, t_total + 1):
        started = time.perf_counter()
        if config.standardize and len(data):
            shift = float(np.mean(data.observations))
            scale = max(float(np.std(data.observations)), 1e-12)
        else:
            shift, scale = 0.0, 1.0
        fit_data = (
            Dataset(data.points, (data.observations - shift) / scale)
            if (shift, scale) != (0.0, 1.0)
            else data
        )
        if len(data) > 0 and (t - 1) % config.fit_every == 0:
            try:
                params = gp.fit(fit_data, params, fit_config)
            except gp.FactorizationError as exc:
                logger.warning("iteration %d: hyper-parameter fit failed (%s); keeping previous", t, exc)
        model = gp.build_model(fit_data, params)

        pp = pseudo.generate(fit_data, schedule, objective.domain, pseudo_rng) if len(data) else (
            pseudo.empty_pseudo_set(d)
        )
        selection_model = pseudo.augmented_model(model, pp)

        if config.acquisition_kind == "ucb":
            beta = acq.beta_schedule(t, d, config.delta, mode="experiment")
            spec = acq.AcquisitionSpec(kind="ucb", beta=beta)
            out.beta[t - 1] = beta
        else:
            # Incumbent in the same (transformed) units as the surrogate.
            incumbent = float(np.max(fit_data.observations)) if len(data) else 0.0
            spec = acq.AcquisitionSpec(kind=config.acquisition_kind, incumbent=incumbent)

        def surface(x: np.ndarray) -> float:
            mean, var = gp.posterior(selection_model, x)
            return spec.value(mean, math.sqrt(var))

        x_next, _ = direct.maximize(surface, objective.domain, direct_config)

        _, sel_var = gp.posterior(selection_model, x_next)
        gain += info_gain_increment(sel_var, params.noise_variance)
        if len(pp):
            out.delta_v[t - 1] = pseudo.variance_reduction(model, pp, x_next)

        y_next = observe(objective, noise, x_next)
        f_next = objective.evaluate_true(x_next)

        idx = t - 1
        out.points[idx] = x_next
        out.observations[idx] = y_next
        out.true_values[idx] = f_next
        out.info_gain[idx] = gain
        out.pseudo_counts[idx] = len(pp)
        out.taus[idx] = pp.tau if len(pp) else 0.0
        out.lengthscales[idx] = params.lengthscales
        out.amplitudes[idx] = params.amplitude
        if optimum is not None:
            regret = optimum - f_next
            cumulative += regret
            best_regret = min(best_regret, regret)
            out.instant_regret[idx] = regret
            out.simple_regret[idx] = best_regret
            out.cumulative_regret[idx] = cumulative

        data = data.append(x_next, y_next)
        out.wall_ms[idx] = (time.perf_counter() - started) * 1e3

    return out


def run_bo(objective: Objective, config: RunConfig) -> RegretTrace:
    """Plain sequential optimization (no pseudo-points)."""
    if config.pseudo.enabled:
        raise ValueError("run_bo requires a disabled pseudo schedule; use run_bopp")
    return _run(objective, config, disabled_schedule())


def run_bopp(objective: Objective, config: RunConfig) -> RegretTrace:
    """Sequential optimization with pseudo-point-augmented selection."""
    return _run(objective, config, config.pseudo)


def mean_error_bound(
    pseudo_count: int,
    tau: float,
    lipschitz: float,
    noise_variance: float,
    total_pseudo: int,
    delta: float,
    dimension: int,
) -> float:
    """High-probability envelope for the posterior-mean error of one round.

    l^2 * sqrt(1 + 1/noise) * (L*d*tau/sigma + 2*sqrt(log(4*total/delta)))
    with l the round's pseudo-point count and total the sum of counts over
    the whole run.  A round with no pseudo-points contributes zero.
    """
    if pseudo_count == 0:
        return 0.0
    sigma = math.sqrt(noise_variance)
    slope_term = lipschitz * dimension * tau / sigma
    noise_term = 2.0 * math.sqrt(math.log(4.0 * total_pseudo / delta))
    return pseudo_count**2 * math.sqrt(1.0 + 1.0 / noise_variance) * (slope_term + noise_term)


def theorem_mean_error_bound(
    pseudo_count: int,
    tau: float,
    theory: TheoryParams,
    noise_variance: float,
    total_pseudo: int,
    dimension: int,
) -> float:
    """The schedule-form envelope: the explicit slope bound is replaced by
    tail_b*sqrt(log(4*d*tail_a/delta))."""
    lipschitz = theory.tail_b * math.sqrt(math.log(4.0 * dimension * theory.tail_a / theory.delta))
    return mean_error_bound(
        pseudo_count, tau, lipschitz, noise_variance, total_pseudo, theory.delta, dimension
    )


@dataclass(frozen=True)
class RegretBoundResult:
    """Numerical evaluation of the cumulative-regret envelope for one trace."""

    bound: float
    mean_error_terms: tuple[float, ...]
    info_gain: float
    beta_final: float
    capacity_constant: float


def evaluate_regret_bound(
    trace: RegretTrace,
    theory: TheoryParams,
    pseudo_counts: np.ndarray | None = None,
    taus: np.ndarray | None = None,
) -> RegretBoundResult:
    """Evaluate sqrt(C*T*beta_T*gain) + 2 + 2*sum(mean-error terms) for a trace.

    ``gain`` is the trace's empirical information-gain proxy, substituted for
    the worst-case capacity term, so the number is diagnostic rather than a
    certified bound.  Requires a unit-amplitude trace (the formulas assume
    unit prior variance).  With no pseudo-points anywhere the expression
    collapses to sqrt(C*T*beta_T*gain) + 2.
    """
    if not trace.unit_amplitude:
        raise ValueError("regret bound evaluation requires a unit-amplitude trace")
    counts = trace.pseudo_counts if pseudo_counts is None else np.asarray(pseudo_counts)
    tau_list = trace.taus if taus is None else np.asarray(taus, dtype=float)
    if counts.shape != tau_list.shape:
        raise ValueError("pseudo_counts and taus must have equal length")
    t_total = len(trace)
    noise = trace.noise_variance
    capacity = 8.0 / math.log1p(1.0 / noise)
    beta_final = acq.beta_schedule(t_total, trace.dimension, theory.delta, mode="theorem", theory=theory)
    total = int(np.sum(counts))
    terms = tuple(
        theorem_mean_error_bound(int(l), float(tau), theory, noise, total, trace.dimension)
        for l, tau in zip(counts, tau_list)
    )
    gain = float(trace.info_gain[-1])
    bound = math.sqrt(capacity * t_total * beta_final * gain) + 2.0 + 2.0 * sum(terms)
    return RegretBoundResult(
        bound=bound,
        mean_error_terms=terms,
        info_gain=gain,
        beta_final=beta_final,
        capacity_constant=capacity,
    )

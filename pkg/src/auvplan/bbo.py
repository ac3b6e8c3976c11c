"""Biogeography-based optimization engine.

The engine works on real-valued SIV vectors and knows nothing about routes or
paths; problems plug in through the :class:`Problem` protocol.  Candidates are
ordered lexicographically by ``(violation, cost)`` so that any feasible
habitat beats any infeasible one.

All randomness flows from a single ``numpy.random.Generator`` seeded from
``BboConfig.seed``.  Draw order per call to :func:`evolve`:

1. initial population, ``rng.random((population_size, dimension))``
2. per iteration: :func:`migrate`, then :func:`mutate`, then the injection of
   ``new_count`` fresh habitats.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

__all__ = [
    "BboConfig",
    "Habitat",
    "Problem",
    "RateMode",
    "RateTable",
    "TraceRecord",
    "compute_rates",
    "evolve",
    "migrate",
    "mutate",
    "mutation_rates",
    "species_probabilities",
    "trace_to_csv",
]


class RateMode(str, enum.Enum):
    """How immigration/emigration rates are assigned to ranked habitats."""

    SPECIES_MODEL = "species_model"
    LINEAR_RANK = "linear_rank"
    # flat mu = max_emigration, lambda = 1 - mu for every habitat
    CONSTANT = "constant"


@dataclass
class Habitat:
    siv: np.ndarray
    cost: float = math.inf
    violation: float = math.inf

    @property
    def key(self) -> tuple[float, float]:
        return (self.violation, self.cost)

    def copy(self) -> "Habitat":
        return Habitat(self.siv.copy(), self.cost, self.violation)


@dataclass(frozen=True)
class BboConfig:
    population_size: int = 50
    max_iterations: int = 100
    keep_count: int = 10
    new_count: int = 0
    max_immigration: float = 1.0
    max_emigration: float = 1.0
    max_mutation_rate: float = 0.1
    rate_mode: RateMode = RateMode.LINEAR_RANK
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.population_size < 1:
            raise ValueError("population_size must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.keep_count < 0 or self.new_count < 0:
            raise ValueError("keep_count and new_count must be non-negative")
        if self.keep_count + self.new_count > self.population_size:
            raise ValueError("keep_count + new_count exceeds population_size")
        if not 0.0 < self.max_immigration <= 1.0:
            raise ValueError("max_immigration must lie in (0, 1]")
        if not 0.0 < self.max_emigration <= 1.0:
            raise ValueError("max_emigration must lie in (0, 1]")
        if not 0.0 <= self.max_mutation_rate <= 1.0:
            raise ValueError("max_mutation_rate must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "rate_mode", RateMode(self.rate_mode))

    def with_seed(self, seed: int) -> "BboConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "max_iterations": self.max_iterations,
            "keep_count": self.keep_count,
            "new_count": self.new_count,
            "max_immigration": self.max_immigration,
            "max_emigration": self.max_emigration,
            "max_mutation_rate": self.max_mutation_rate,
            "rate_mode": self.rate_mode.value,
            "seed": int(self.seed),
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BboConfig":
        return cls(**data)


@dataclass(frozen=True)
class RateTable:
    """Immigration (``lam``) and emigration (``mu``) rates aligned to the input order."""

    lam: np.ndarray
    mu: np.ndarray

    def __len__(self) -> int:
        return len(self.lam)


@runtime_checkable
class Problem(Protocol):
    dimension: int
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray

    def evaluate(self, siv: np.ndarray) -> tuple[float, float]:
        """Return ``(cost, violation)`` for one SIV vector."""
        ...


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    best_cost: float
    mean_cost: float
    best_violation: float
    mean_violation: float = 0.0


def compute_rates(
    config: BboConfig,
    species_counts: Sequence[int] | np.ndarray,
    s_max: int | None = None,
) -> RateTable:
    """Migration rates for habitats holding ``species_counts`` species.

    ``s_max`` defaults to ``population_size - 1`` which is the rank-based
    assignment used by :func:`evolve` (best habitat holds ``s_max`` species).
    """
    if config.population_size < 2:
        raise ValueError("rate computation needs a population of at least 2")
    if s_max is None:
        s_max = config.population_size - 1
    if s_max <= 0:
        raise ValueError("s_max must be positive")
    s = np.asarray(species_counts, dtype=float)
    if np.any(s < 0) or np.any(s > s_max):
        raise ValueError("species counts must lie in [0, s_max]")
    frac = s / s_max
    if config.rate_mode is RateMode.SPECIES_MODEL:
        lam = config.max_immigration * (1.0 - frac)
        mu = config.max_emigration * frac
    elif config.rate_mode is RateMode.LINEAR_RANK:
        # linspace(1, 0, nPop) over ranks, which is exactly S / s_max
        mu = frac.copy()
        lam = 1.0 - mu
    else:
        mu = np.full_like(frac, config.max_emigration)
        lam = 1.0 - mu
    return RateTable(lam=lam, mu=mu)


def species_probabilities(lam: Sequence[float], mu: Sequence[float]) -> np.ndarray:
    """Steady state of the species-count birth/death chain.

    ``lam[S]`` moves the chain from S to S+1 and ``mu[S]`` from S to S-1.
    Uses detailed balance ``P[S+1] = P[S] * lam[S] / mu[S+1]`` when every
    downward rate is positive, otherwise the null space of the generator.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if lam.shape != mu.shape or lam.ndim != 1 or lam.size == 0:
        raise ValueError("lam and mu must be equal-length non-empty vectors")
    n = lam.size
    if n == 1:
        return np.ones(1)
    if not (np.any(lam[:-1] > 0) or np.any(mu[1:] > 0)):
        raise ValueError("degenerate chain: all transition rates are zero")

    if np.all(mu[1:] > 0):
        log_p = np.zeros(n)
        for s in range(n - 1):
            if lam[s] == 0.0:
                log_p[s + 1 :] = -np.inf
                break
            log_p[s + 1] = log_p[s] + math.log(lam[s]) - math.log(mu[s + 1])
        p = np.exp(log_p - log_p.max())
        return p / p.sum()

    gen = _generator_matrix(lam, mu)
    _, _, vh = np.linalg.svd(gen)
    p = np.abs(vh[-1])
    return p / p.sum()


def _generator_matrix(lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    # dP/dt = A @ P for the chain with boundary flows cut off
    n = lam.size
    out_rate = np.concatenate([lam[:-1], [0.0]]) + np.concatenate([[0.0], mu[1:]])
    a = -np.diag(out_rate)
    a[np.arange(1, n), np.arange(n - 1)] = lam[:-1]
    a[np.arange(n - 1), np.arange(1, n)] = mu[1:]
    return a


def mutation_rates(p: Sequence[float], m_max: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if not 0.0 <= m_max <= 1.0:
        raise ValueError("m_max must lie in [0, 1]")
    p_max = p.max(initial=0.0)
    if p_max <= 0.0:
        raise ValueError("probability vector has no positive entry")
    return np.clip(m_max * (1.0 - p / p_max), 0.0, m_max)


def migrate(
    population: Sequence[Habitat],
    rates: RateTable,
    rng: np.random.Generator,
    keep_count: int = 0,
) -> list[Habitat]:
    """One migration sweep over a best-first population.

    A non-elite habitat ``i`` immigrates when ``rng.random() < lam[i]``.  It
    then polls every other habitat ``j`` in rank order: ``rng.random() < mu[j]``
    makes ``j`` a donor, and one component index ``rng.integers(dim)`` of
    ``i`` is overwritten with ``j``'s value.  Donor values come from the
    population as it was before the sweep.
    """
    n = len(population)
    if len(rates) != n:
        raise ValueError("rate table does not match population size")
    out = [h.copy() for h in population]
    if n < 2:
        return out
    dim = population[0].siv.size
    lam = np.asarray(rates.lam, dtype=float)
    mu = np.asarray(rates.mu, dtype=float)
    for i in range(keep_count, n):
        if rng.random() >= lam[i]:
            continue
        target = out[i]
        changed = False
        for j in range(n):
            if j == i or rng.random() >= mu[j]:
                continue
            k = int(rng.integers(dim))
            value = population[j].siv[k]
            if target.siv[k] != value:
                target.siv[k] = value
                changed = True
        if changed:
            target.cost = math.inf
            target.violation = math.inf
    return out


def mutate(
    population: Sequence[Habitat],
    rates: Sequence[float] | np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
    keep_count: int = 0,
) -> list[Habitat]:
    """Uniform-reset mutation.

    For each non-elite habitat: ``rng.random(dim)`` decides which components
    mutate (``< rates[i]``), then ``rng.random(dim)`` supplies the new values
    scaled into ``[lower, upper]``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (len(population),))
    out = [h.copy() for h in population]
    for i in range(keep_count, len(out)):
        dim = out[i].siv.size
        mask = rng.random(dim) < rates[i]
        fresh = lower + rng.random(dim) * (upper - lower)
        if mask.any():
            out[i].siv[mask] = fresh[mask]
            out[i].cost = math.inf
            out[i].violation = math.inf
    return out


def _sort(population: list[Habitat]) -> list[Habitat]:
    return sorted(population, key=lambda h: h.key)


def _deterministic_forced() -> bool:
    return os.environ.get("BBO_DETERMINISTIC", "") not in ("", "0")


def _evaluate(problem: Problem, habitats: Iterable[Habitat], workers: int) -> None:
    todo = list(habitats)
    if workers > 1 and not _deterministic_forced() and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda h: problem.evaluate(h.siv), todo))
    else:
        results = [problem.evaluate(h.siv) for h in todo]
    for h, (cost, violation) in zip(todo, results):
        if violation < 0:
            raise ValueError(f"evaluator returned negative violation {violation}")
        h.cost = float(cost)
        h.violation = float(violation)


def _mean(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.inf


@dataclass
class EvolveResult:
    best: Habitat
    trace: list[TraceRecord] = field(default_factory=list)
    population: list[Habitat] = field(default_factory=list)

    def __iter__(self):
        # allows ``best, trace = evolve(...)``
        return iter((self.best, self.trace))


def evolve(
    problem: Problem,
    config: BboConfig,
    on_iteration: Callable[[int, list[Habitat]], None] | None = None,
) -> EvolveResult:
    """Run the BBO loop and return the best habitat with its convergence trace.

    Problems with a true ``dynamic`` attribute are treated as time varying:
    their ``advance()`` is called at the start of every iteration and the whole
    population, elites included, is re-scored against the new state.  The
    returned habitat is then the best of the final population rather than
    the best ever seen, since earlier scores refer to stale states.
    """
    lower = np.asarray(problem.lower_bounds, dtype=float)
    upper = np.asarray(problem.upper_bounds, dtype=float)
    dim = int(problem.dimension)
    if lower.shape != (dim,) or upper.shape != (dim,):
        raise ValueError("bounds do not match the problem dimension")
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")

    rng = np.random.default_rng(int(config.seed))
    n = config.population_size
    keep = config.keep_count
    dynamic = bool(getattr(problem, "dynamic", False))

    population = [Habitat(lower + u * (upper - lower)) for u in rng.random((n, dim))]
    _evaluate(problem, population, config.workers)
    population = _sort(population)
    best = population[0].copy()

    ranks = np.arange(n)
    s_max = max(n - 1, 1)
    if n >= 2:
        rates = compute_rates(config, s_max - ranks, s_max)
        if config.rate_mode is RateMode.SPECIES_MODEL:
            # probabilities are indexed by species count, ranks run the other way
            p_by_species = species_probabilities(rates.lam[::-1], rates.mu[::-1])
            m_rates = mutation_rates(p_by_species, config.max_mutation_rate)[::-1]
        else:
            m_rates = np.full(n, config.max_mutation_rate)
    else:
        rates = RateTable(lam=np.zeros(1), mu=np.zeros(1))
        m_rates = np.full(1, config.max_mutation_rate)

    trace: list[TraceRecord] = []
    for it in range(config.max_iterations):
        if dynamic:
            problem.advance()
            _evaluate(problem, population, config.workers)
            population = _sort(population)

        offspring = migrate(population, rates, rng, keep)
        offspring = mutate(offspring, m_rates, lower, upper, rng, keep)
        inject = min(config.new_count, n - keep)
        for i in range(n - inject, n):
            offspring[i] = Habitat(lower + rng.random(dim) * (upper - lower))
        _evaluate(problem, [h for h in offspring[keep:] if not math.isfinite(h.cost)],
                  config.workers)
        population = _sort(offspring)

        if dynamic or population[0].key < best.key:
            best = population[0].copy()
        trace.append(
            TraceRecord(
                iteration=it + 1,
                best_cost=best.cost,
                mean_cost=_mean([h.cost for h in population]),
                best_violation=best.violation,
                mean_violation=_mean([h.violation for h in population]),
            )
        )
        if on_iteration is not None:
            on_iteration(it + 1, population)

    return EvolveResult(best=best, trace=trace, population=population)


def trace_to_csv(trace: Sequence[TraceRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["iteration", "best_cost", "mean_cost", "best_violation"])
    for rec in trace:
        writer.writerow([rec.iteration, repr(rec.best_cost), repr(rec.mean_cost),
                         repr(rec.best_violation)])
    return buf.getvalue()

"""Particle swarm and real-coded genetic search over PI gains ``(k_p, k_i)``.

Both optimisers minimise an arbitrary objective over a box.  Candidate
evaluation goes through ``map_fn`` (builtin ``map`` by default, or an
executor's ``map``); random numbers are drawn before evaluation in a fixed
order, so results depend only on the seed.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NumericalBlowupError
from .metrics import mae
from .pi import PIGains
from .simulate import PIControl, ScenarioConfig, run_closed_loop

DEFAULT_LOWER = (0.0, 0.0)
DEFAULT_UPPER = (0.05, 2.0)


@dataclass
class Candidate:
    position: np.ndarray
    fitness: float

    @property
    def gains(self):
        return PIGains(float(self.position[0]), float(self.position[1]))


def _bounds(lower, upper):
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    if lo.shape != hi.shape or lo.ndim != 1 or not np.all(lo < hi):
        raise ConfigurationError(f"invalid bounds lower={lower} upper={upper}")
    return lo, hi


@dataclass
class PSOConfig:
    swarm_size: int = 20
    iterations: int = 50
    inertia: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    lower: tuple = DEFAULT_LOWER
    upper: tuple = DEFAULT_UPPER
    # per-dimension velocity limit as a fraction of the box width
    velocity_clamp: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 1 or self.iterations < 0:
            raise ConfigurationError("swarm_size must be >= 1 and iterations >= 0")
        _bounds(self.lower, self.upper)


@dataclass
class GAConfig:
    population_size: int = 30
    generations: int = 60
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    mutation_sigma: float = 0.05
    elitism_count: int = 2
    blend_alpha: float = 0.5
    tournament_size: int = 2
    lower: tuple = DEFAULT_LOWER
    upper: tuple = DEFAULT_UPPER
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1 or self.generations < 0:
            raise ConfigurationError("population_size must be >= 1 and generations >= 0")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism_count <= self.population_size:
            raise ConfigurationError("elitism_count must lie in [0, population_size]")
        _bounds(self.lower, self.upper)


# -- objective -----------------------------------------------------------------

def fitness(gains, scenario):
    """Whole-run MAE of the PI loop on ``scenario``; ``inf`` if the simulation blows up."""
    gains = gains if isinstance(gains, PIGains) else PIGains(*gains)
    try:
        return mae(run_closed_loop(PIControl(gains), scenario))
    except NumericalBlowupError:
        return math.inf


@dataclass(frozen=True)
class PIFitness:
    """Picklable objective mapping a gain vector to closed-loop MAE."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __call__(self, position):
        return fitness(PIGains(float(position[0]), float(position[1])), self.scenario)


def _evaluate(objective, positions, map_fn):
    return np.array([float(f) for f in map_fn(objective, [p.copy() for p in positions])])


# -- particle swarm -------------------------------------------------------------

def pso_velocity_update(v, x, p_best, g_best, w, c1, c2, u1, u2, v_max=None):
    """Inertia plus cognitive and social pulls, optionally clamped to ``±v_max``."""
    new = w * v + c1 * u1 * (p_best - x) + c2 * u2 * (g_best - x)
    if v_max is not None:
        new = np.clip(new, -v_max, v_max)
    return new


def pso_optimize(config, objective, map_fn=map):
    """Return ``(best Candidate, history)``; history[0] is the initial swarm's best."""
    lo, hi = _bounds(config.lower, config.upper)
    rng = np.random.default_rng(config.seed)
    n, dim = config.swarm_size, len(lo)
    v_max = config.velocity_clamp * (hi - lo)

    x = lo + rng.random((n, dim)) * (hi - lo)
    v = (rng.random((n, dim)) * 2.0 - 1.0) * v_max
    f = _evaluate(objective, x, map_fn)
    p_best, p_fit = x.copy(), f.copy()
    g = int(np.argmin(p_fit))
    g_best, g_fit = p_best[g].copy(), float(p_fit[g])
    history = [g_fit]

    for _ in range(config.iterations):
        u1 = rng.random((n, dim))
        u2 = rng.random((n, dim))
        v = pso_velocity_update(v, x, p_best, g_best, config.inertia, config.c1, config.c2,
                                u1, u2, v_max)
        x = np.clip(x + v, lo, hi)
        f = _evaluate(objective, x, map_fn)
        improved = f < p_fit
        p_best[improved] = x[improved]
        p_fit[improved] = f[improved]
        g = int(np.argmin(p_fit))
        if p_fit[g] < g_fit:
            g_best, g_fit = p_best[g].copy(), float(p_fit[g])
        history.append(g_fit)
    return Candidate(g_best, g_fit), history


# -- genetic algorithm -------------------------------------------------------------

def _tournament(rng, fit, size):
    picks = rng.integers(0, len(fit), size=size)
    return int(picks[np.argmin(fit[picks])])


def blend_crossover(rng, a, b, alpha, lo, hi):
    """BLX-alpha child: uniform over the parents' span widened by ``alpha`` on each side."""
    low = np.minimum(a, b)
    span = np.abs(a - b)
    child = low - alpha * span + rng.random(len(a)) * (1.0 + 2.0 * alpha) * span
    return np.clip(child, lo, hi)


def ga_optimize(config, objective, map_fn=map):
    """Return ``(best Candidate, history)`` of the best-ever fitness per generation."""
    lo, hi = _bounds(config.lower, config.upper)
    rng = np.random.default_rng(config.seed)
    n, dim = config.population_size, len(lo)
    sigma = config.mutation_sigma * (hi - lo)

    pop = lo + rng.random((n, dim)) * (hi - lo)
    fit = _evaluate(objective, pop, map_fn)
    b = int(np.argmin(fit))
    best, best_fit = pop[b].copy(), float(fit[b])
    history = [best_fit]

    for _ in range(config.generations):
        order = np.argsort(fit, kind="stable")
        elite = order[:config.elitism_count]
        children = []
        while len(children) < n - len(elite):
            a = pop[_tournament(rng, fit, config.tournament_size)]
            c = pop[_tournament(rng, fit, config.tournament_size)]
            if rng.random() < config.crossover_rate:
                child = blend_crossover(rng, a, c, config.blend_alpha, lo, hi)
            else:
                child = a.copy()
            mutate = rng.random(dim) < config.mutation_rate
            child = np.clip(child + mutate * rng.normal(0.0, 1.0, dim) * sigma, lo, hi)
            children.append(child)
        if children:
            child_arr = np.array(children)
            child_fit = _evaluate(objective, child_arr, map_fn)
            pop = np.vstack([pop[elite], child_arr])
            fit = np.concatenate([fit[elite], child_fit])
        else:
            pop, fit = pop[elite], fit[elite]
        b = int(np.argmin(fit))
        if fit[b] < best_fit:
            best, best_fit = pop[b].copy(), float(fit[b])
        history.append(best_fit)
    return Candidate(best, best_fit), history


# -- orchestration ----------------------------------------------------------------

@contextmanager
def evaluation_map(workers):
    """``map`` for ``workers <= 1``, otherwise an order-preserving process pool."""
    if workers is None or workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield lambda fn, items: pool.map(fn, items, chunksize=4)


def tune_pi(method, scenario, seed=0, workers=1, **overrides):
    """Run PSO or GA on the PI fitness for ``scenario``; returns ``(Candidate, history)``."""
    objective = PIFitness(scenario)
    with evaluation_map(workers) as map_fn:
        if method == "pso":
            return pso_optimize(PSOConfig(seed=seed, **overrides), objective, map_fn)
        if method == "ga":
            return ga_optimize(GAConfig(seed=seed, **overrides), objective, map_fn)
    raise ConfigurationError(f"unknown tuning method {method!r}; use 'pso' or 'ga'")


def save_tuning_result(path, method, candidate, history):
    doc = {"method": method, "k_p": float(candidate.position[0]),
           "k_i": float(candidate.position[1]), "mae": float(candidate.fitness),
           "history": [float(h) for h in history]}
    Path(path).write_text(json.dumps(doc, indent=2))
    return doc


def load_gains(path):
    doc = json.loads(Path(path).read_text())
    try:
        return PIGains(float(doc["k_p"]), float(doc["k_i"]))
    except KeyError as exc:
        raise ConfigurationError(f"tuner output {path} lacks {exc}") from exc

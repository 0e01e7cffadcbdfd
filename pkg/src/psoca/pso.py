"""Global-best particle swarm over ``[0, 1]^3`` for detector tuning.

A particle's position is the normalised triple ``(delta/255, tau, rule/max_rule)``.
Fitness is the mean Dice score of the decoded detector over a training batch
and is maximised.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .ca_engine import DetectorParams, decode_particle, mu, neighbor_differences, phi_map
from .image_core import InvalidInputError, as_edge_map

__all__ = [
    "PSOConfig",
    "Swarm",
    "OptimizationResult",
    "BatchObjective",
    "init_swarm",
    "evaluate",
    "step",
    "run_swarm",
    "batch_fitness",
    "optimize",
    "warm_start_optimize",
    "swarm_from_snapshot",
    "load_snapshot",
]

DIM = 3

Fitness = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class PSOConfig:
    """Swarm settings. Inertia and acceleration defaults follow pyswarms' usual example."""

    n_particles: int = 30
    iterations: int = 100
    w: float = 0.9
    c1: float = 0.5
    c2: float = 0.3
    seed: int = 0
    scalar_draws: bool = False
    reevaluate_warm_start: bool = True
    full_neighborhood: bool = False

    @property
    def hyper(self) -> tuple[float, float, float]:
        return (self.w, self.c1, self.c2)


@dataclass
class Swarm:
    positions: np.ndarray
    velocities: np.ndarray
    best_positions: np.ndarray
    best_fitness: np.ndarray
    global_best_position: np.ndarray
    global_best_fitness: float
    hyper: tuple[float, float, float]
    seed: int
    scalar_draws: bool = False
    rngs: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.positions)

    def snapshot(self) -> dict:
        """JSON-ready population state; random streams are not saved."""
        w, c1, c2 = self.hyper
        return {
            "seed": self.seed,
            "hyper": {"w": w, "c1": c1, "c2": c2},
            "particles": [
                {
                    "position": self.positions[i].tolist(),
                    "velocity": self.velocities[i].tolist(),
                    "best_position": self.best_positions[i].tolist(),
                    "best_fitness": float(self.best_fitness[i]),
                }
                for i in range(len(self))
            ],
            "global_best_position": self.global_best_position.tolist(),
            "global_best_fitness": float(self.global_best_fitness),
        }


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    # one substream per particle so draws do not depend on evaluation order
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def init_swarm(n: int, seed: int, hyper=(0.9, 0.5, 0.3), scalar_draws: bool = False) -> Swarm:
    if n < 1:
        raise InvalidInputError("swarm needs at least one particle")
    positions = np.random.default_rng(seed).random((n, DIM))
    return Swarm(
        positions=positions,
        velocities=np.zeros((n, DIM)),
        best_positions=positions.copy(),
        best_fitness=np.full(n, -math.inf),
        global_best_position=positions[0].copy(),
        global_best_fitness=-math.inf,
        hyper=tuple(float(h) for h in hyper),
        seed=seed,
        scalar_draws=scalar_draws,
        rngs=_streams(seed, n),
    )


def _update_global(swarm: Swarm) -> None:
    i = int(np.argmax(swarm.best_fitness))
    if swarm.best_fitness[i] > swarm.global_best_fitness:
        swarm.global_best_fitness = float(swarm.best_fitness[i])
        swarm.global_best_position = swarm.best_positions[i].copy()


def evaluate(swarm: Swarm, fitness: Fitness) -> Swarm:
    """Score current positions and refresh personal and global bests."""
    for i in range(len(swarm)):
        value = float(fitness(swarm.positions[i]))
        if value > swarm.best_fitness[i]:
            swarm.best_fitness[i] = value
            swarm.best_positions[i] = swarm.positions[i]
    _update_global(swarm)
    return swarm


def step(swarm: Swarm, fitness: Fitness) -> Swarm:
    """Move every particle once, clamp to the unit cube, then re-score. Mutates ``swarm``."""
    w, c1, c2 = swarm.hyper
    g = swarm.global_best_position
    for i, rng in enumerate(swarm.rngs):
        size = 1 if swarm.scalar_draws else DIM
        r1, r2 = rng.random(size), rng.random(size)
        x = swarm.positions[i]
        v = w * swarm.velocities[i] + r1 * c1 * (swarm.best_positions[i] - x) + r2 * c2 * (g - x)
        swarm.velocities[i] = v
        swarm.positions[i] = np.clip(x + v, 0.0, 1.0)
    return evaluate(swarm, fitness)


def run_swarm(swarm: Swarm, fitness: Fitness, iterations: int) -> list[float]:
    """Evaluate the starting positions, then take ``iterations`` steps.

    Returns the global best after each round, starting with the initial one.
    """
    evaluate(swarm, fitness)
    history = [swarm.global_best_fitness]
    for _ in range(iterations):
        step(swarm, fitness)
        history.append(swarm.global_best_fitness)
    return history


# ------------------------------------------------------------------ fitness


def _dice(detected: np.ndarray, truth: np.ndarray, truth_count: int) -> float:
    # 2TP + FP + FN == |detected| + |truth|
    denom = int(np.count_nonzero(detected)) + truth_count
    if denom == 0:
        return 1.0
    return 2 * int(np.count_nonzero(detected & truth)) / denom


class BatchObjective:
    """Mean Dice of a decoded particle over a fixed batch of image/annotation pairs.

    Neighbour-difference planes are computed once per image. Scores are
    memoised on the decoded ``(delta, tau, rule)`` since many positions decode
    to the same detector.
    """

    def __init__(self, train: Sequence[tuple[np.ndarray, np.ndarray]], r: int,
                 threads: int = 1, full_neighborhood: bool = False, table=None):
        if len(train) == 0:
            raise InvalidInputError("training batch is empty")
        self.r = r
        self.threads = max(1, int(threads))
        self.full_neighborhood = full_neighborhood
        self.table = table
        self._diffs = []
        self._truth = []
        for img, gt in train:
            gt = as_edge_map(gt).astype(bool)
            if gt.shape != np.shape(img):
                raise InvalidInputError(f"image {np.shape(img)} and annotation {gt.shape} differ")
            self._diffs.append(neighbor_differences(img, r))
            self._truth.append((gt, int(np.count_nonzero(gt))))
        self._cache: dict[tuple, float] = {}
        self.evaluations = 0

    def __len__(self) -> int:
        return len(self._diffs)

    def decode(self, position) -> DetectorParams:
        return decode_particle(position, self.r, self.full_neighborhood, self.table)

    def _score(self, k: int, params: DetectorParams) -> float:
        detected = mu(phi_map(self._diffs[k], params.mask), params.delta) > params.tau
        truth, count = self._truth[k]
        return _dice(detected, truth, count)

    def per_image(self, params: DetectorParams) -> list[float]:
        idx = range(len(self))
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(lambda k: self._score(k, params), idx))
        return [self._score(k, params) for k in idx]

    def params_fitness(self, params: DetectorParams) -> float:
        key = (params.delta, params.tau, params.rule)
        if key not in self._cache:
            self.evaluations += 1
            total = 0.0
            for value in self.per_image(params):  # fixed order keeps sums reproducible
                total += value
            self._cache[key] = total / len(self)
        return self._cache[key]

    def __call__(self, position) -> float:
        return self.params_fitness(self.decode(position))


def batch_fitness(position, train, r: int, threads: int = 1) -> float:
    return BatchObjective(train, r, threads)(position)


# --------------------------------------------------------------- optimizers


@dataclass
class OptimizationResult:
    best_params: DetectorParams
    best_fitness: float
    final_population: Swarm
    history: list[float]

    def to_dict(self) -> dict:
        return {
            "best_params": self.best_params.as_dict(),
            "best_fitness": self.best_fitness,
            "best_position": self.final_population.global_best_position.tolist(),
            "history": list(self.history),
        }


def _finish(swarm: Swarm, history: list[float], objective: BatchObjective) -> OptimizationResult:
    return OptimizationResult(
        best_params=objective.decode(swarm.global_best_position),
        best_fitness=swarm.global_best_fitness,
        final_population=swarm,
        history=history,
    )


def optimize(train, r: int, config: PSOConfig = PSOConfig(), threads: int = 1,
             objective: BatchObjective | None = None) -> OptimizationResult:
    if config.iterations < 0:
        raise InvalidInputError("iterations must be >= 0")
    objective = objective or BatchObjective(train, r, threads, config.full_neighborhood)
    swarm = init_swarm(config.n_particles, config.seed, config.hyper, config.scalar_draws)
    history = run_swarm(swarm, objective, config.iterations)
    return _finish(swarm, history, objective)


def swarm_from_snapshot(snapshot: dict, config: PSOConfig) -> Swarm:
    """Rebuild a swarm from saved state. Hyperparameters and streams come from ``config``."""
    particles = snapshot.get("particles") or []
    if not particles:
        raise InvalidInputError("population snapshot has no particles")
    pos = np.array([p["position"] for p in particles], dtype=np.float64)
    vel = np.array([p["velocity"] for p in particles], dtype=np.float64)
    best = np.array([p["best_position"] for p in particles], dtype=np.float64)
    if pos.shape != (len(particles), DIM) or vel.shape != pos.shape or best.shape != pos.shape:
        raise InvalidInputError("snapshot particles must hold 3-D vectors")
    fit = np.array([p.get("best_fitness", -math.inf) for p in particles], dtype=np.float64)
    swarm = Swarm(
        positions=np.clip(pos, 0.0, 1.0),
        velocities=vel,
        best_positions=np.clip(best, 0.0, 1.0),
        best_fitness=fit,
        global_best_position=best[0].copy(),
        global_best_fitness=-math.inf,
        hyper=config.hyper,
        seed=config.seed,
        scalar_draws=config.scalar_draws,
        rngs=_streams(config.seed, len(particles)),
    )
    _update_global(swarm)
    return swarm


def load_snapshot(path) -> dict:
    return json.loads(Path(path).read_text())


def warm_start_optimize(snapshot: dict, train, r: int, config: PSOConfig = PSOConfig(),
                        threads: int = 1, objective: BatchObjective | None = None) -> OptimizationResult:
    """Continue from a saved population on a new training batch.

    Personal-best positions are kept; their scores are recomputed against the
    new batch unless ``config.reevaluate_warm_start`` is off.
    """
    objective = objective or BatchObjective(train, r, threads, config.full_neighborhood)
    swarm = swarm_from_snapshot(snapshot, config)
    if config.reevaluate_warm_start:
        swarm.best_fitness = np.array([objective(p) for p in swarm.best_positions])
        swarm.global_best_fitness = -math.inf
        _update_global(swarm)
    elif not np.isfinite(swarm.best_fitness).all():
        raise InvalidInputError("snapshot lacks best_fitness values; re-evaluation is required")
    history = run_swarm(swarm, objective, config.iterations)
    return _finish(swarm, history, objective)

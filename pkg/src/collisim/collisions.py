"""Collision events of k walks and the rescaled collision measures.

Atoms are stored as raw integer (time, site, weight) triples sorted by
(time, site); the (n/N, z/sqrt(N)) rescaling happens only at integration
time, so the stored data model is float-drift free and measures compare
bit-exactly across runs.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .walks import WalkEnsemble

__all__ = [
    "CollisionMeasure",
    "TestFunction",
    "detect_collisions",
    "integrate",
    "total_mass_identity_check",
    "gaussian_bump",
    "constant_fn",
]


class WrongEnsembleSize(ValueError):
    """Raised when an operation needs a specific k."""


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function f(t, x) on [0,1] x R (vectorized evaluator)."""

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound: float
    nonneg: bool = False

    def __call__(self, t, x):
        return self.evaluator(np.asarray(t, dtype=float), np.asarray(x, dtype=float))


def gaussian_bump(alpha: float = 0.5, sigma: float = 1.0) -> TestFunction:
    """f(t, x) = alpha * exp(-x^2 / (2 sigma^2)), the default test family."""
    a, s2 = float(alpha), float(sigma) ** 2
    return TestFunction(lambda t, x: a * np.exp(-x * x / (2.0 * s2)), abs(a), a >= 0)


def constant_fn(value: float) -> TestFunction:
    v = float(value)
    return TestFunction(lambda t, x: np.full(np.broadcast(t, x).shape, v), abs(v), v >= 0)


@dataclass(frozen=True)
class CollisionMeasure:
    """Atomic measure: weight[j] sits at time times[j], site sites[j]."""

    horizon: int
    times: np.ndarray
    sites: np.ndarray
    weights: np.ndarray
    k: int = field(default=0)

    @property
    def n_atoms(self) -> int:
        return len(self.times)

    def total_mass(self) -> float:
        return float(self.weights.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# horizon={self.horizon} k={self.k}\n")
        buf.write("n,z,weight\n")
        for n, z, w in zip(self.times, self.sites, self.weights):
            buf.write(f"{n},{z},{w}\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "CollisionMeasure":
        lines = text.strip().splitlines()
        header = lines[0].lstrip("# ").split()
        meta = dict(kv.split("=") for kv in header)
        rows = [tuple(int(v) for v in line.split(",")) for line in lines[2:]]
        arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
        return CollisionMeasure(
            int(meta["horizon"]), arr[:, 0], arr[:, 1], arr[:, 2], int(meta.get("k", 0))
        )


def _sorted_measure(horizon, k, times, sites, weights) -> CollisionMeasure:
    order = np.lexsort((sites, times))
    return CollisionMeasure(
        horizon,
        np.asarray(times, dtype=np.int64)[order],
        np.asarray(sites, dtype=np.int64)[order],
        np.asarray(weights, dtype=np.int64)[order],
        k,
    )


def detect_collisions(ensemble: WalkEnsemble) -> tuple[CollisionMeasure, CollisionMeasure]:
    """(with-multiplicity, distinct-event) collision measures of an ensemble.

    Occupancy is counted per (time, site) cell: a cell holding c >= 2 walks
    contributes weight binom(c, 2) to the multiplicity measure and 1 to the
    distinct-event measure. Times are restricted to 1 <= n <= N.
    """
    pos = ensemble.position_matrix()[:, 1:]  # (k, N)
    n_index = np.broadcast_to(np.arange(1, ensemble.horizon + 1), pos.shape)
    # cell code packs (time, site); site offset keeps codes nonnegative
    offset = ensemble.horizon + 1
    codes = n_index.astype(np.int64) * (2 * offset + 1) + (pos.astype(np.int64) + offset)
    uniq, counts = np.unique(codes.ravel(), return_counts=True)
    hit = counts >= 2
    uniq, counts = uniq[hit], counts[hit]
    times = uniq // (2 * offset + 1)
    sites = uniq % (2 * offset + 1) - offset
    pair_weights = counts * (counts - 1) // 2
    with_mult = _sorted_measure(ensemble.horizon, ensemble.k, times, sites, pair_weights)
    distinct = _sorted_measure(ensemble.horizon, ensemble.k, times, sites, np.ones_like(pair_weights))
    return with_mult, distinct


def integrate(measure: CollisionMeasure, f: TestFunction) -> float:
    """Pi_N(f) = sum over atoms of weight * f(n/N, z/sqrt(N))."""
    if measure.n_atoms == 0:
        return 0.0
    t = measure.times / measure.horizon
    x = measure.sites / math.sqrt(measure.horizon)
    return float(np.sum(measure.weights * np.asarray(f(t, x), dtype=float)))


def total_mass_identity_check(ensemble: WalkEnsemble) -> tuple[float, int]:
    """For k = 2: (||Pi_N||, zero count of the difference walk); the two are
    equal pathwise."""
    if ensemble.k != 2:
        raise WrongEnsembleSize(f"identity requires k=2, got k={ensemble.k}")
    with_mult, _ = detect_collisions(ensemble)
    diff = ensemble.walks[0].positions[1:] - ensemble.walks[1].positions[1:]
    return with_mult.total_mass(), int(np.count_nonzero(diff == 0))

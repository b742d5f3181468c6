"""Directed-polymer partition function over a Rademacher environment.

The partition function is computed exactly by a forward transfer recursion
over the parity band z in {-n..n}: O(N^2) time, O(N) memory per replicate.
The chaos decomposition is available through two engines: an order-resolved
recursion (exact when the truncation order reaches N) and a combinatorial
chain enumeration kept as a test oracle for tiny horizons.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .collisions import TestFunction, detect_collisions, integrate
from .environment import DisorderFunction, EnvironmentField
from .rngs import splitmix64
from .walks import WalkEnsemble

ENUMERATION_CAP = 14


class TruncationOrderError(ValueError):
    """Raised when a chaos comparison asks for more orders than computed."""


class NegativeTestFunction(ValueError):
    """Raised when a duality test function evaluates negative."""


@dataclass(frozen=True)
class PartitionResult:
    value: float
    horizon: int
    term_breakdown: np.ndarray | None = None


@dataclass(frozen=True)
class CollisionWeights:
    """X_{N,n} for n = 1..N (all nonnegative) and their sum T_N."""

    per_step: np.ndarray

    @property
    def total(self) -> float:
        return float(self.per_step.sum())


@dataclass(frozen=True)
class DualitySample:
    exp_pi: float
    prod_x: float
    pi_scaled: float
    t_sum: float


def scaled_disorder(amplitude: DisorderFunction, factor: float) -> DisorderFunction:
    f = float(factor)
    return DisorderFunction(lambda n, z: f * amplitude(n, z), abs(f) * amplitude.sup_bound)


def _stage_seeds(seeds) -> np.ndarray:
    return splitmix64(np.asarray(seeds, dtype=np.int64).astype(np.uint64))


def partition_many(horizon: int, amplitude: DisorderFunction, seeds) -> np.ndarray:
    """Partition function values for a batch of environment seeds.

    Vectorized over replicates: the transfer step touches an (R, band)
    matrix once per time step, and disorder signs are hashed on demand.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s0 = np.atleast_1d(_stage_seeds(seeds))
    reps = len(s0)
    buf = np.zeros((reps, horizon + 1))
    nxt = np.zeros_like(buf)
    buf[:, 0] = 1.0
    one = np.uint64(1)
    for n in range(1, horizon + 1):
        prev = buf[:, :n]
        cur = nxt[:, : n + 1]
        cur[:, 0] = prev[:, 0]
        cur[:, n] = prev[:, n - 1]
        if n > 1:
            np.add(prev[:, : n - 1], prev[:, 1:n], out=cur[:, 1:n])
        z = np.arange(-n, n + 1, 2, dtype=np.int64)
        a = np.asarray(amplitude(np.full_like(z, n), z), dtype=float)
        with np.errstate(over="ignore"):
            t0 = splitmix64(s0 ^ np.uint64(n))
            h = splitmix64(t0[:, None] ^ z.astype(np.uint64)[None, :])
        # lowest hash bit picks the sign; the transfer 1/2 is folded in
        factor = np.where((h & one).astype(bool), (0.5 - 0.5 * a)[None, :],
                          (0.5 + 0.5 * a)[None, :])
        cur *= factor
        buf, nxt = nxt, buf
    return buf[:, : horizon + 1].sum(axis=1)


def partition_samples(horizon: int, amplitude: DisorderFunction, n_replicas: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Partition values over n_replicas fresh environments drawn from ``rng``.

    Distributionally identical to partition_many over hashed fields but the
    Rademacher signs come straight from the generator, which is what the
    big moment sweeps need: the transfer step is memory-bound, so the signs
    are drawn as bytes and folded in with a single where().
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    buf = np.zeros((n_replicas, horizon + 1))
    nxt = np.zeros_like(buf)
    buf[:, 0] = 1.0
    for n in range(1, horizon + 1):
        prev = buf[:, :n]
        cur = nxt[:, : n + 1]
        cur[:, 0] = prev[:, 0]
        cur[:, n] = prev[:, n - 1]
        if n > 1:
            np.add(prev[:, : n - 1], prev[:, 1:n], out=cur[:, 1:n])
        z = np.arange(-n, n + 1, 2, dtype=np.int64)
        a = np.asarray(amplitude(np.full_like(z, n), z), dtype=float)
        flips = rng.integers(0, 2, size=(n_replicas, n + 1), dtype=np.int8).view(np.bool_)
        # the transfer average's 1/2 is folded into the disorder factor
        cur *= np.where(flips, (0.5 + 0.5 * a)[None, :], (0.5 - 0.5 * a)[None, :])
        buf, nxt = nxt, buf
    return buf[:, : horizon + 1].sum(axis=1)


def partition_dp(horizon: int, amplitude: DisorderFunction, field: EnvironmentField,
                 with_terms: bool = False, max_order: int | None = None) -> PartitionResult:
    """Exact conditional expectation E[prod_n (1 + A(n,S_n) omega(n,S_n)) | omega].

    A term breakdown attached to the result must sum back to the value, so
    it is only available untruncated; truncated series live in chaos_terms.
    """
    value = float(partition_many(horizon, amplitude, [field.seed])[0])
    terms = None
    if with_terms:
        if max_order is not None and max_order < horizon:
            raise TruncationOrderError(
                f"breakdown needs all {horizon} orders, got max_order={max_order}")
        terms = chaos_terms(horizon, 1.0, amplitude, field, max_order=max_order)
    return PartitionResult(value, horizon, terms)


def chaos_terms(horizon: int, beta: float, amplitude: DisorderFunction,
                field: EnvironmentField, max_order: int | None = None) -> np.ndarray:
    """Order-resolved chaos contributions (term_0 = 1, term_1, ...).

    Runs the transfer recursion with an order axis: crossing a disorder
    factor raises the order by one. Exact decomposition when max_order >= N;
    otherwise the orders above max_order are dropped (truncated engine).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    m = horizon if max_order is None else min(max_order, horizon)
    s0 = _stage_seeds([field.seed])[0]
    w = np.zeros((m + 1, horizon + 1))
    nxt = np.zeros_like(w)
    w[0, 0] = 1.0
    one = np.uint64(1)
    for n in range(1, horizon + 1):
        prev = w[:, :n]
        cur = nxt[:, : n + 1]
        cur[:, 0] = 0.5 * prev[:, 0]
        cur[:, n] = 0.5 * prev[:, n - 1]
        if n > 1:
            np.add(prev[:, : n - 1], prev[:, 1:n], out=cur[:, 1:n])
            cur[:, 1:n] *= 0.5
        z = np.arange(-n, n + 1, 2, dtype=np.int64)
        a = np.asarray(amplitude(np.full_like(z, n), z), dtype=float)
        with np.errstate(over="ignore"):
            h = splitmix64(splitmix64(s0 ^ np.uint64(n)) ^ z.astype(np.uint64))
        signs = 1.0 - 2.0 * (h & one).astype(np.float64)
        bump = beta * a * signs
        # numpy materializes the RHS before adding, so every order slice
        # reads its predecessor's pre-bump transfer value
        cur[1:] += cur[:-1] * bump[None, :]
        w, nxt = nxt, w
        nxt.fill(0.0)
    return w[:, : horizon + 1].sum(axis=1)


def chaos_terms_enumerated(horizon: int, beta: float, amplitude: DisorderFunction,
                           field: EnvironmentField) -> np.ndarray:
    """Combinatorial oracle: term_n = beta^n sum over ordered time tuples and
    site chains of p_n(i, z) A(i, z) omega(i, z). Exponential; capped."""
    if horizon > ENUMERATION_CAP:
        raise ValueError(f"enumeration capped at N={ENUMERATION_CAP}")
    terms = np.zeros(horizon + 1)
    terms[0] = 1.0
    times = range(1, horizon + 1)
    for n in range(1, horizon + 1):
        total = 0.0
        for tup in itertools.combinations(times, n):
            total += _chain_weight_sum(tup, amplitude, field)
        terms[n] = beta**n * total
    return terms


def _chain_weight_sum(tup, amplitude, field) -> float:
    """sum over site chains of p_n * prod_j A(i_j, z_j) omega(i_j, z_j)."""
    from .kernels import rw_transition

    frontier = [(0, 1.0)]  # (site, weighted probability so far)
    prev_t = 0
    for t in tup:
        dt = t - prev_t
        new_frontier = {}
        for site, wgt in frontier:
            for dz in range(-dt, dt + 1, 2):
                p = rw_transition(dt, dz)
                if p == 0.0:
                    continue
                z = site + dz
                factor = float(amplitude(t, z)) * field.omega_at(t, z)
                new_frontier[z] = new_frontier.get(z, 0.0) + wgt * p * factor
        frontier = list(new_frontier.items())
        prev_t = t
    return sum(w for _, w in frontier)


def collision_weights(ensemble: WalkEnsemble, theta: DisorderFunction) -> CollisionWeights:
    """Site-factorized collision weights X_{N,n} at a caller-scaled amplitude.

    1 + X_n = prod over occupied sites z of ((1+theta)^m + (1-theta)^m)/2
    with m the occupancy; singly-occupied sites contribute factor 1, so only
    collision cells enter.
    """
    with_mult, _ = detect_collisions(ensemble)
    n_steps = ensemble.horizon
    prod = np.ones(n_steps)
    if with_mult.n_atoms:
        # recover occupancy m from the pair count binom(m, 2)
        m = ((1.0 + np.sqrt(1.0 + 8.0 * with_mult.weights)) / 2.0).round().astype(np.int64)
        th = np.asarray(theta(with_mult.times, with_mult.sites), dtype=float)
        factors = ((1.0 + th) ** m + (1.0 - th) ** m) / 2.0
        np.multiply.at(prod, with_mult.times - 1, factors)
    return CollisionWeights(prod - 1.0)


def subset_expansion_weight(sites, thetas) -> float:
    """Test oracle for one time step: X_{N,n} as the explicit sum over walk
    subsets of size >= 2 whose sites are all covered an even number of times
    (the surviving Rademacher expectations).

    sites[i] is walk i's position, thetas[i] the amplitude at that cell.
    """
    sites = list(sites)
    thetas = np.asarray(thetas, dtype=float)
    k = len(sites)
    total = 0.0
    for l in range(2, k + 1):
        for subset in itertools.combinations(range(k), l):
            counts: dict = {}
            for i in subset:
                counts[sites[i]] = counts.get(sites[i], 0) + 1
            if all(c % 2 == 0 for c in counts.values()):
                total += float(np.prod(thetas[list(subset)]))
    return total


def duality_pair(ensemble: WalkEnsemble, f: TestFunction) -> DualitySample:
    """(exp(Pi_N(f)/sqrt(N)), prod(1 + X_{N,n})) for one ensemble, with the
    amplitude A_N = sqrt(f) at intermediate-disorder scale N^(-1/4)."""
    n = ensemble.horizon
    sqrt_n = math.sqrt(n)

    def sqrt_f(tt, zz):
        vals = np.asarray(f(np.asarray(tt, dtype=float) / n, np.asarray(zz, dtype=float) / sqrt_n), dtype=float)
        if np.any(vals < 0.0):
            raise NegativeTestFunction("duality needs a nonnegative test function")
        return np.sqrt(vals)

    theta = DisorderFunction(sqrt_f, math.sqrt(max(f.bound, 0.0)))
    theta = scaled_disorder(theta, n ** (-0.25))
    weights = collision_weights(ensemble, theta)
    with_mult, _ = detect_collisions(ensemble)
    pi_f = integrate(with_mult, f)
    pi_scaled = pi_f / sqrt_n
    prod_x = float(np.prod(1.0 + weights.per_step))
    return DualitySample(math.exp(pi_scaled), prod_x, pi_scaled, weights.total)

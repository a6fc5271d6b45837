"""Bayesian change-point detection for scalar series.

A product-partition model over contiguous blocks: each candidate partition is
scored by two prior-limited integrals (one over the change probability, one
over the signal-to-noise ratio), and a Gibbs sampler draws each partition
flag from its full conditional.  Output is the per-position posterior
probability that a new block starts there, plus posterior means.

Detection is deterministic given the seed: the sweep order is fixed
left-to-right and the random stream is owned by the chain, so concurrent
chains never interact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _kernel as _k

DEFAULT_GAMMA = 0.2
DEFAULT_LAMBDA = 0.2
DEFAULT_ITERATIONS = 550
DEFAULT_BURN_IN = 50
DEFAULT_THRESHOLD = 0.5
DEFAULT_MIN_SEPARATION = 5


@dataclass(frozen=True)
class BcpConfig:
    """Tuning for the change-point sampler.

    ``gamma`` and ``lam`` are the upper limits of the change-probability and
    signal-ratio prior integrals, both in (0, 1].  ``mcmc_iterations`` counts
    total Gibbs sweeps including burn-in.
    """

    gamma: float = DEFAULT_GAMMA
    lam: float = DEFAULT_LAMBDA
    mcmc_iterations: int = DEFAULT_ITERATIONS
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1]: {self.gamma}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must be in (0, 1]: {self.lam}")
        if not (self.mcmc_iterations > self.burn_in >= 0):
            raise ValueError(
                f"need mcmc_iterations > burn_in >= 0: {self.mcmc_iterations}, {self.burn_in}"
            )


@dataclass(frozen=True)
class BcpState:
    """A partition snapshot: flags plus its block sums of squares.

    ``partition[i] == 1`` marks a change point at position i+1 (a new block
    starting at sample i+1).  The trailing flag is always 0.
    """

    partition: tuple[int, ...]
    within_ss: float
    between_ss: float
    block_count: int

    @classmethod
    def from_partition(cls, series: Sequence[float], flags: Sequence[int]) -> BcpState:
        x = np.asarray(series, dtype=np.float64)
        n = x.shape[0]
        fl = tuple(int(f) for f in flags)
        if len(fl) != n - 1:
            raise ValueError(f"need {n - 1} flags for a series of length {n}")
        bounds = [0] + [i + 1 for i, f in enumerate(fl) if f] + [n]
        within = 0.0
        between = 0.0
        grand = float(x.mean())
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            seg = x[lo:hi]
            mu = float(seg.mean())
            within += float(((seg - mu) ** 2).sum())
            between += (hi - lo) * (mu - grand) ** 2
        return cls(
            partition=fl + (0,),
            within_ss=within,
            between_ss=between,
            block_count=1 + sum(fl),
        )


@dataclass(frozen=True)
class BcpResult:
    """Posterior change probabilities and level estimates for one series."""

    probabilities: np.ndarray  # p[i]: a new block starts at sample i
    posterior_means: np.ndarray
    input_length: int

    def __post_init__(self) -> None:
        if len(self.probabilities) != self.input_length or len(self.posterior_means) != self.input_length:
            raise ValueError("result vectors must match the input length")
        self.probabilities.flags.writeable = False
        self.posterior_means.flags.writeable = False


def block_odds(
    w0: float,
    b0: float,
    w1: float,
    b1: float,
    b: int,
    n: int,
    config: BcpConfig,
) -> float:
    """Posterior odds p/(1-p) for adding a change point.

    ``b`` is the block count without the candidate change; ``w0, b0`` and
    ``w1, b1`` are the within/between block sums of squares without and with
    it.  All-zero sums (every observation identical) reduce the odds to the
    change-probability factor alone, with the signal-ratio factor set to 1.
    A diverging numerator integral yields ``inf``; a diverging denominator
    yields 0.
    """
    for name, v in (("w0", w0), ("b0", b0), ("w1", w1), ("b1", b1)):
        if not (math.isfinite(v) and v >= 0.0):
            raise ValueError(f"{name} must be finite and >= 0: {v}")
    if n < 2:
        raise ValueError(f"series length must be >= 2: {n}")
    if not 1 <= b < n:
        raise ValueError(f"block count must satisfy 1 <= b < n: {b}")
    ln_beta = _k.lbeta_inc(float(b + 1), float(n - b), config.gamma) - _k.lbeta_inc(
        float(b), float(n - b + 1), config.gamma
    )
    s0 = w0 + b0
    s1 = w1 + b1
    if s0 == 0.0 and s1 == 0.0:
        return math.exp(ln_beta)
    if s0 == 0.0 or s1 == 0.0:
        raise ValueError("inconsistent block sums: W+B must be the total sum of squares on both sides")
    # scale out the data's units; the ratio is invariant and this keeps the
    # integrands well-conditioned
    m = 0.5 * (n - 1)
    ln_num, div_num = _k.ln_w_integral(float(b), w1 / s0, b1 / s0, m, config.lam)
    ln_den, div_den = _k.ln_w_integral(float(b - 1), w0 / s0, b0 / s0, m, config.lam)
    if div_den:
        return 0.0
    if div_num:
        return math.inf
    return math.exp(ln_beta + ln_num - ln_den)


def _standardize(x: np.ndarray) -> np.ndarray:
    centered = x - x.mean()
    scale = math.sqrt(float((centered**2).sum()))
    if scale == 0.0:
        return np.zeros_like(x)
    return centered / scale


def bcp_detect(series: Sequence[float], config: BcpConfig | None = None) -> BcpResult:
    """Run the Gibbs sampler over ``series`` and collect posterior summaries.

    ``probabilities[i]`` is the post-burn-in frequency of a block boundary
    immediately before sample i (``probabilities[0]`` is 0 by convention);
    ``posterior_means[i]`` is the average mean of the block containing i.
    """
    config = config or BcpConfig()
    raw = np.ascontiguousarray(series, dtype=np.float64)
    if raw.ndim != 1:
        raise ValueError("series must be one-dimensional")
    n = raw.shape[0]
    if n < 2:
        raise ValueError(f"series length must be >= 2: {n}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("series values must be finite")
    z = _standardize(raw)
    lnbeta = _k.lnbeta_table(n, config.gamma)
    prob = np.empty(n)
    mean = np.empty(n)
    _k.gibbs_chain(
        z,
        raw,
        config.mcmc_iterations,
        config.burn_in,
        config.gamma,
        config.lam,
        lnbeta,
        np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF),
        prob,
        mean,
    )
    return BcpResult(probabilities=prob, posterior_means=mean, input_length=n)


def bcp_detect_batch(
    series_list: Sequence[Sequence[float]],
    config: BcpConfig | None = None,
    seeds: Sequence[int] | None = None,
) -> list[BcpResult]:
    """Run independent chains over many series, in parallel across series.

    Each series gets its own random stream (``seeds[i]``, or a stream derived
    from ``config.seed`` and the series index), so results are independent of
    scheduling and identical to sequential :func:`bcp_detect` calls.
    """
    config = config or BcpConfig()
    arrays = []
    for s in series_list:
        a = np.ascontiguousarray(s, dtype=np.float64)
        if a.ndim != 1 or a.shape[0] < 2:
            raise ValueError("each series must be one-dimensional with length >= 2")
        if not np.all(np.isfinite(a)):
            raise ValueError("series values must be finite")
        arrays.append(a)
    if not arrays:
        return []
    if seeds is None:
        seeds = [int(_k.mix_seed(np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF), np.uint64(i))) for i in range(len(arrays))]
    if len(seeds) != len(arrays):
        raise ValueError("seeds must match the number of series")
    nmax = max(a.shape[0] for a in arrays)
    cnt = len(arrays)
    Z = np.zeros((cnt, nmax))
    RAW = np.zeros((cnt, nmax))
    LNBETA = np.full((cnt, nmax + 1), -np.inf)
    lens = np.empty(cnt, dtype=np.int64)
    for i, a in enumerate(arrays):
        n = a.shape[0]
        lens[i] = n
        Z[i, :n] = _standardize(a)
        RAW[i, :n] = a
        LNBETA[i, : n + 1] = _k.lnbeta_table(n, config.gamma)
    PROB = np.zeros((cnt, nmax))
    MEAN = np.zeros((cnt, nmax))
    seeds_arr = np.array([np.uint64(int(s) & 0xFFFFFFFFFFFFFFFF) for s in seeds], dtype=np.uint64)
    _k.gibbs_batch(
        Z,
        RAW,
        lens,
        config.mcmc_iterations,
        config.burn_in,
        config.gamma,
        config.lam,
        LNBETA,
        seeds_arr,
        PROB,
        MEAN,
    )
    return [
        BcpResult(
            probabilities=PROB[i, : lens[i]].copy(),
            posterior_means=MEAN[i, : lens[i]].copy(),
            input_length=int(lens[i]),
        )
        for i in range(cnt)
    ]


def extract_change_events(
    result: BcpResult,
    threshold: float = DEFAULT_THRESHOLD,
    min_separation: int = DEFAULT_MIN_SEPARATION,
) -> list[int]:
    """Indices where the change probability clears ``threshold``, thinned.

    Qualifying indices closer than ``min_separation`` chain into one run and
    only the run's argmax survives (ties resolve to the earlier index).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1): {threshold}")
    if min_separation < 1:
        raise ValueError(f"min_separation must be >= 1: {min_separation}")
    p = result.probabilities
    hits = [i for i in range(len(p)) if p[i] >= threshold]
    if not hits:
        return []
    events: list[int] = []
    run = [hits[0]]
    for idx in hits[1:]:
        if idx - run[-1] < min_separation:
            run.append(idx)
        else:
            events.append(max(run, key=lambda i: (p[i], -i)))
            run = [idx]
    events.append(max(run, key=lambda i: (p[i], -i)))
    return events

"""Deterministic Monte Carlo plumbing: counter-based streams, batches, reductions.

Determinism contract
--------------------
Results must be bit-identical for a fixed (seed, n_paths, n_steps, batch_size)
regardless of thread count or completion order.  Three ingredients make this
work:

1. every batch of paths is a pure function of ``(seed, batch_index)`` through
   a counter-based Philox generator keyed on that pair,
2. within a batch, partial sums use numpy's pairwise summation on a fixed
   array layout,
3. across batches, partial sums are folded with ``math.fsum``, which is exact
   in double precision and therefore independent of fold order.

``batch_size`` is part of the reproducibility key (it changes which samples
land in which stream), so it is surfaced in every config hash and report.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

DEFAULT_BATCH_SIZE = 4096


@dataclass(frozen=True)
class RngStream:
    """A named member of a counter-based family of independent generators."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream + offset)


def as_generator(source) -> np.random.Generator:
    """Accept an RngStream or a Generator and return a Generator."""
    if isinstance(source, RngStream):
        return source.generator()
    if isinstance(source, np.random.Generator):
        return source
    raise TypeError(f"expected RngStream or numpy Generator, got {type(source)!r}")


@dataclass(frozen=True)
class McSettings:
    """Sample-count and stream bookkeeping for one Monte Carlo run."""

    n_paths: int
    n_steps: int
    seed: int
    batch_size: int = DEFAULT_BATCH_SIZE
    threads: int = 1
    stream_offset: int = 0

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    def batches(self):
        """Yield (stream, count) pairs covering n_paths samples."""
        full, rem = divmod(self.n_paths, self.batch_size)
        for b in range(full):
            yield RngStream(self.seed, self.stream_offset + b), self.batch_size
        if rem:
            yield RngStream(self.seed, self.stream_offset + full), rem

    def shifted(self, extra_offset: int) -> "McSettings":
        """Same settings on a disjoint block of streams (independent samples)."""
        return McSettings(
            self.n_paths,
            self.n_steps,
            self.seed,
            self.batch_size,
            self.threads,
            self.stream_offset + extra_offset,
        )


# Stream blocks reserved for auxiliary draws so they never collide with the
# path batches of a default run (which occupy offsets 0 .. n_batches).
STREAM_BLOCK = 1 << 32


@dataclass
class McEstimate:
    """Mean and standard error of a Monte Carlo average.

    ``mean``/``std_error`` are floats for scalar statistics and 1-D arrays
    for (small) vector statistics.
    """

    mean: float | np.ndarray
    std_error: float | np.ndarray
    n_samples: int
    n_steps: int
    seed: int

    def as_dict(self) -> dict:
        def _plain(v):
            if isinstance(v, np.ndarray):
                return [float(x) for x in np.atleast_1d(v)]
            return float(v)

        return {
            "mean": _plain(self.mean),
            "std_error": _plain(self.std_error),
            "n_samples": int(self.n_samples),
            "n_steps": int(self.n_steps),
            "seed": int(self.seed),
        }


class _Accumulator:
    """Exact cross-batch accumulation of sums, square sums, and maxima."""

    def __init__(self):
        self.n = 0
        self.sums = {}
        self.sumsqs = {}
        self.maxima = {}

    def add(self, count: int, partial: dict):
        self.n += count
        for name, (s, s2, mx) in partial.items():
            self.sums.setdefault(name, []).append(np.atleast_1d(s))
            self.sumsqs.setdefault(name, []).append(np.atleast_1d(s2))
            prev = self.maxima.get(name)
            self.maxima[name] = mx if prev is None else np.maximum(prev, mx)

    def _fold(self, parts):
        stacked = np.stack(parts)  # (n_batches, k)
        return np.array([math.fsum(stacked[:, j]) for j in range(stacked.shape[1])])

    def result(self, name: str) -> "SampleStats":
        total = self._fold(self.sums[name])
        total_sq = self._fold(self.sumsqs[name])
        n = self.n
        mean = total / n
        if n > 1:
            var = np.maximum(total_sq - n * mean**2, 0.0) / (n - 1)
        else:
            var = np.full_like(mean, np.nan)
        se = np.sqrt(var / n)
        return SampleStats(
            n=n,
            mean=_descalar(mean),
            std_error=_descalar(se),
            maximum=_descalar(np.atleast_1d(self.maxima[name])),
            total=_descalar(total),
        )

    def names(self):
        return list(self.sums)


def _descalar(arr):
    arr = np.asarray(arr)
    return float(arr[0]) if arr.shape == (1,) else arr


@dataclass
class SampleStats:
    n: int
    mean: float | np.ndarray
    std_error: float | np.ndarray
    maximum: float | np.ndarray
    total: float | np.ndarray

    def estimate(self, settings: McSettings) -> McEstimate:
        return McEstimate(self.mean, self.std_error, self.n,
                          settings.n_steps, settings.seed)


def _batch_partial(values: dict) -> dict:
    out = {}
    for name, v in values.items():
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        out[name] = (v.sum(axis=0), (v * v).sum(axis=0), np.abs(v).max(axis=0))
    return out


def run_batches(settings: McSettings, kernel) -> dict:
    """Stream batches through ``kernel`` and reduce to SampleStats per name.

    Parameters
    ----------
    settings : McSettings
    kernel : callable
        ``kernel(stream, count) -> dict[str, ndarray]`` mapping statistic
        names to per-sample values of shape ``(count,)`` or ``(count, k)``.
        The kernel must derive all randomness from ``stream``.

    Returns
    -------
    dict[str, SampleStats]
    """
    acc = _Accumulator()
    jobs = list(settings.batches())

    def work(job):
        stream, count = job
        return count, _batch_partial(kernel(stream, count))

    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            partials = list(pool.map(work, jobs))
    else:
        partials = [work(j) for j in jobs]
    for count, partial in partials:
        acc.add(count, partial)
    return {name: acc.result(name) for name in acc.names()}


def collect_batches(settings: McSettings, kernel) -> dict:
    """Like run_batches but concatenates raw per-sample values per name.

    Only for statistics small enough to hold in memory (scalars or short
    vectors per path).  Batch order is fixed by stream index, so the
    concatenated arrays are deterministic.
    """
    jobs = list(settings.batches())

    def work(job):
        stream, count = job
        out = kernel(stream, count)
        return {k: np.asarray(v) for k, v in out.items()}

    if settings.threads > 1:
        with ThreadPoolExecutor(max_workers=settings.threads) as pool:
            pieces = list(pool.map(work, jobs))
    else:
        pieces = [work(j) for j in jobs]
    names = pieces[0].keys()
    return {k: np.concatenate([p[k] for p in pieces], axis=0) for k in names}


def estimate_mean(settings: McSettings, kernel, name: str = "value") -> McEstimate:
    """Run a single-statistic kernel and wrap the result in an McEstimate."""
    stats = run_batches(settings, kernel)
    return stats[name].estimate(settings)


def binomial_ci(k: int, n: int, z: float = 3.0) -> tuple:
    """Wilson score interval for a binomial proportion at z standard errors."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)

"""Discrete Brownian paths, bridges, and Cameron-Martin drift lines.

All simulation lives on a fixed uniform grid.  Sampling is vectorized over
whole batches; ``SampledPath`` carries a single path, ``PathBatch`` a stack
of them.  Both expose ``.values`` with time on the second-to-last axis and
coordinates on the last, so the quadrature code downstream is shared.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mc import RngStream, as_generator


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_n = T."""

    T: float
    n_steps: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        t = np.linspace(0.0, self.T, self.n_steps + 1)
        t.setflags(write=False)
        return t

    def coarsened(self) -> "TimeGrid":
        """The grid with every other point dropped (for bias calibration)."""
        if self.n_steps % 2:
            raise ValueError("need an even number of steps to coarsen")
        return TimeGrid(self.T, self.n_steps // 2)


@dataclass(frozen=True)
class SampledPath:
    """One path on a grid; values has shape (n_steps + 1, N)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != self.grid.n_steps + 1:
            raise ValueError(
                f"values must have shape (n_steps + 1, N), got {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]


@dataclass(frozen=True)
class PathBatch:
    """A stack of paths; values has shape (count, n_steps + 1, N)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != self.grid.n_steps + 1:
            raise ValueError(
                f"values must have shape (count, n_steps + 1, N), got {v.shape}"
            )
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1, :]

    def path(self, i: int) -> SampledPath:
        return SampledPath(self.grid, self.values[i])

    def coarsened(self) -> "PathBatch":
        """Same Brownian paths viewed on the half-resolution grid.

        Keeping every other grid point of an exactly sampled Brownian path
        is again an exact sample on the coarse grid, so this gives
        common-random-number pairs for step-size bias calibration.
        """
        return PathBatch(self.grid.coarsened(), self.values[:, ::2, :])


def bm_batch(grid: TimeGrid, dim: int, source, count: int) -> PathBatch:
    """Sample ``count`` Brownian paths started at 0.

    Increments over each step are independent N(0, dt I_dim).  ``source``
    may be an RngStream or an already-open Generator (in which case the
    draws continue that generator's sequence).
    """
    gen = as_generator(source)
    inc = gen.standard_normal((count, grid.n_steps, dim)) * np.sqrt(grid.dt)
    values = np.empty((count, grid.n_steps + 1, dim))
    values[:, 0, :] = 0.0
    np.cumsum(inc, axis=1, out=values[:, 1:, :])
    return PathBatch(grid, values)


def bridge_batch(grid: TimeGrid, dim: int, x, source, count: int) -> PathBatch:
    """Sample Brownian bridges from 0 to x over [0, T].

    Uses the pinning map t -> B_t - (t/T)(B_T - x), which is exact on the
    grid: the pinned increments have the bridge covariance restricted to
    the grid points.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise ValueError(f"x must have shape ({dim},), got {x.shape}")
    free = bm_batch(grid, dim, source, count)
    frac = (grid.times / grid.T)[None, :, None]
    gap = (free.terminal - x)[:, None, :]
    return PathBatch(grid, free.values - frac * gap)


def sample_bm(grid: TimeGrid, dim: int, stream: RngStream) -> SampledPath:
    """One Brownian path (see bm_batch for the batched form)."""
    return bm_batch(grid, dim, stream, 1).path(0)


def sample_bridge(grid: TimeGrid, dim: int, x, stream: RngStream) -> SampledPath:
    """One Brownian bridge from 0 to x."""
    return bridge_batch(grid, dim, x, stream, 1).path(0)


def drift_path(grid: TimeGrid, h) -> SampledPath:
    """The straight Cameron-Martin line t -> (t/T) h."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    return SampledPath(grid, np.outer(grid.times / grid.T, h))


def shift_path(p, alpha: float, q):
    """p + alpha * q on a common grid; batch/single combinations broadcast."""
    if p.grid != q.grid:
        raise ValueError("paths live on different grids")
    out = p.values + alpha * q.values
    if out.ndim == 3:
        return PathBatch(p.grid, out)
    return SampledPath(p.grid, out)


def galerkin_project(a, n: int) -> np.ndarray:
    """Zero all rows and columns of a matrix beyond the first n coordinates."""
    a = np.array(a, dtype=float)
    if n < 0:
        raise ValueError("n must be nonnegative")
    a[n:, :] = 0.0
    a[:, n:] = 0.0
    return a


def path_to_csv(p: SampledPath, path_or_file):
    """Write one path as CSV with header t,x1,...,xN."""
    close = False
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        fh = open(path_or_file, "w", newline="")
        close = True
    else:
        fh = path_or_file
    try:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(p.dim)])
        for t, row in zip(p.grid.times, p.values):
            writer.writerow([f"{t:.12g}"] + [f"{v:.17g}" for v in row])
    finally:
        if close:
            fh.close()

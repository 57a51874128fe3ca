import csv
import io

import numpy as np
import pytest

from heiskern.mc import McSettings, RngStream
from heiskern.paths import (PathBatch, SampledPath, TimeGrid, bm_batch,
                            bridge_batch, drift_path, galerkin_project,
                            path_to_csv, sample_bm, sample_bridge, shift_path)


class TestTimeGrid:
    def test_endpoints_exact(self):
        grid = TimeGrid(2.0, 7)
        assert grid.times[0] == 0.0
        assert grid.times[-1] == 2.0
        assert len(grid.times) == 8
        assert grid.dt == pytest.approx(2.0 / 7)

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 4)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0)

    def test_coarsen(self):
        grid = TimeGrid(1.0, 8)
        assert grid.coarsened().n_steps == 4
        with pytest.raises(ValueError):
            TimeGrid(1.0, 7).coarsened()


class TestBrownianSampling:
    def test_starts_at_zero(self):
        batch = bm_batch(TimeGrid(1.0, 16), 3, RngStream(1, 0), 100)
        assert np.all(batch.values[:, 0, :] == 0.0)

    def test_terminal_covariance(self):
        grid = TimeGrid(2.0, 64)
        batch = bm_batch(grid, 2, RngStream(7, 0), 20000)
        cov = np.cov(batch.terminal.T)
        assert cov == pytest.approx(2.0 * np.eye(2), abs=0.09)

    def test_disjoint_increments_uncorrelated(self):
        grid = TimeGrid(1.0, 4)
        batch = bm_batch(grid, 1, RngStream(3, 0), 40000)
        inc = np.diff(batch.values[:, :, 0], axis=1)
        corr = np.corrcoef(inc[:, 0], inc[:, 2])[0, 1]
        assert abs(corr) < 4.0 / np.sqrt(40000)

    def test_same_stream_reproduces_bitwise(self):
        grid = TimeGrid(1.0, 32)
        a = bm_batch(grid, 2, RngStream(11, 5), 64)
        b = bm_batch(grid, 2, RngStream(11, 5), 64)
        assert np.array_equal(a.values, b.values)

    def test_distinct_streams_differ(self):
        grid = TimeGrid(1.0, 32)
        a = bm_batch(grid, 2, RngStream(11, 5), 64)
        b = bm_batch(grid, 2, RngStream(11, 6), 64)
        assert not np.array_equal(a.values, b.values)

    def test_single_path_wrapper(self):
        p = sample_bm(TimeGrid(1.0, 10), 2, RngStream(0, 0))
        assert isinstance(p, SampledPath)
        assert p.values.shape == (11, 2)
        assert p.dim == 2

    def test_coarsened_batch_shares_randomness(self):
        grid = TimeGrid(1.0, 16)
        batch = bm_batch(grid, 2, RngStream(4, 0), 8)
        coarse = batch.coarsened()
        assert coarse.grid.n_steps == 8
        assert np.array_equal(coarse.values, batch.values[:, ::2, :])


class TestBridges:
    def test_endpoint_pinned(self):
        x = np.array([0.4, -1.1])
        batch = bridge_batch(TimeGrid(1.0, 32), 2, x, RngStream(2, 0), 200)
        assert batch.terminal == pytest.approx(
            np.broadcast_to(x, (200, 2)), abs=1e-12
        )

    def test_midpoint_statistics(self):
        # bridge from 0 to 0: Var(B_{T/2}) = T/4, mean 0
        grid = TimeGrid(1.0, 64)
        batch = bridge_batch(grid, 1, np.zeros(1), RngStream(5, 0), 40000)
        mid = batch.values[:, 32, 0]
        assert mid.mean() == pytest.approx(0.0, abs=4 * 0.5 / np.sqrt(40000))
        assert mid.var() == pytest.approx(0.25, rel=0.05)

    def test_mean_path_tracks_line(self):
        x = np.array([2.0])
        grid = TimeGrid(1.0, 16)
        batch = bridge_batch(grid, 1, x, RngStream(6, 0), 30000)
        mean_path = batch.values[:, :, 0].mean(axis=0)
        line = 2.0 * grid.times
        assert mean_path == pytest.approx(line, abs=0.02)

    def test_single_wrapper(self):
        p = sample_bridge(TimeGrid(1.0, 8), 2, np.array([1.0, 0.0]),
                          RngStream(9, 1))
        assert p.terminal == pytest.approx([1.0, 0.0], abs=1e-12)


class TestDeterministicPaths:
    def test_drift_path_is_line(self):
        grid = TimeGrid(2.0, 4)
        p = drift_path(grid, [1.0, -2.0])
        assert p.values[-1] == pytest.approx([1.0, -2.0])
        assert p.values[2] == pytest.approx([0.5, -1.0])

    def test_shift_path_broadcasts(self):
        grid = TimeGrid(1.0, 4)
        batch = bm_batch(grid, 2, RngStream(1, 0), 3)
        line = drift_path(grid, [1.0, 0.0])
        shifted = shift_path(batch, 2.0, line)
        assert isinstance(shifted, PathBatch)
        assert shifted.values[:, -1, 0] == pytest.approx(
            batch.values[:, -1, 0] + 2.0
        )
        single = shift_path(line, -1.0, line)
        assert isinstance(single, SampledPath)
        assert np.all(single.values == 0.0)

    def test_shift_requires_common_grid(self):
        a = drift_path(TimeGrid(1.0, 4), [1.0])
        b = drift_path(TimeGrid(1.0, 8), [1.0])
        with pytest.raises(ValueError, match="grids"):
            shift_path(a, 1.0, b)


def test_galerkin_project_zeroes_tail():
    a = np.arange(16, dtype=float).reshape(4, 4)
    cut = galerkin_project(a, 2)
    assert np.all(cut[2:, :] == 0.0) and np.all(cut[:, 2:] == 0.0)
    assert np.array_equal(cut[:2, :2], a[:2, :2])
    again = galerkin_project(cut, 2)
    assert np.array_equal(cut, again)


def test_path_csv_round_trip():
    grid = TimeGrid(1.0, 4)
    p = drift_path(grid, [1.0, -1.0])
    buf = io.StringIO()
    path_to_csv(p, buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["t", "x1", "x2"]
    assert len(rows) == 6
    assert float(rows[-1][1]) == pytest.approx(1.0)
    assert float(rows[3][2]) == pytest.approx(-0.5)


def test_batch_shape_validation():
    grid = TimeGrid(1.0, 4)
    with pytest.raises(ValueError):
        SampledPath(grid, np.zeros((4, 2)))
    with pytest.raises(ValueError):
        PathBatch(grid, np.zeros((3, 4, 2)))

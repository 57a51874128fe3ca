import json

import matplotlib.pyplot as plt
import numpy as np

from heiskern.mc import McEstimate
from heiskern.reports import (ExperimentResult, config_hash, ladder_figure,
                              profile_figure, tail_figure, write_results)
from heiskern.tails import TailReport


def toy_result(name="toy", passed=True, with_figure=False):
    figures = []
    if with_figure:
        figures.append(("toy.png", lambda: profile_figure(
            np.arange(3), {"a": np.array([1.0, 2.0, 3.0])},
            xlabel="x", ylabel="y", title="t")))
    return ExperimentResult(
        name=name,
        config={"seed": 3, "n_paths": 10},
        summary={"passed": passed, "gates": {}},
        detail_rows=[{"check": "one", "gap": 0.5},
                     {"check": "two", "gap": -0.25, "extra": 7}],
        figures=figures,
    )


class TestConfigHash:
    def test_stable_across_key_order(self):
        a = config_hash({"x": 1, "y": [1, 2]})
        b = config_hash({"y": [1, 2], "x": 1})
        assert a == b
        assert len(a) == 12

    def test_sensitive_to_values(self):
        assert config_hash({"x": 1}) != config_hash({"x": 2})

    def test_handles_numpy_and_estimates(self):
        cfg = {"arr": np.arange(3), "flag": np.bool_(True),
               "est": McEstimate(1.0, 0.1, 10, 4, 0)}
        h = config_hash(cfg)
        assert isinstance(h, str) and len(h) == 12


class TestWriteResults:
    def test_round_trip(self, tmp_path):
        manifest = write_results([toy_result()], tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["passed"] is True
        assert summary["experiments"]["toy"]["passed"] is True
        assert "timestamp" in summary
        lines = (tmp_path / "detail.csv").read_text().splitlines()
        assert lines[0].startswith("experiment,")
        assert len(lines) == 3
        assert manifest["figures"] == []

    def test_failure_propagates(self, tmp_path):
        write_results([toy_result(passed=True),
                       toy_result(name="bad", passed=False)], tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["passed"] is False

    def test_figures_written_and_suppressed(self, tmp_path):
        out_a = tmp_path / "a"
        manifest = write_results([toy_result(with_figure=True)], out_a)
        assert (out_a / "toy.png").exists()
        assert manifest["figures"] == [str(out_a / "toy.png")]
        out_b = tmp_path / "b"
        manifest = write_results([toy_result(with_figure=True)], out_b,
                                 no_figures=True)
        assert not (out_b / "toy.png").exists()
        assert manifest["figures"] == []

    def test_union_of_row_fields(self, tmp_path):
        res = toy_result()
        res.detail_rows.append({"check": "three", "only_here": 1.5})
        write_results([res], tmp_path)
        header = (tmp_path / "detail.csv").read_text().splitlines()[0]
        assert "only_here" in header
        assert "extra" in header

    def test_deterministic_modulo_timestamp(self, tmp_path):
        write_results([toy_result()], tmp_path / "one")
        write_results([toy_result()], tmp_path / "two")
        docs = []
        for sub in ("one", "two"):
            doc = json.loads((tmp_path / sub / "summary.json").read_text())
            doc.pop("timestamp")
            docs.append(doc)
        assert docs[0] == docs[1]


class TestFigureBuilders:
    def test_tail_figure(self):
        rep = TailReport(
            label="toy", thresholds=np.array([0.1, 0.2, 0.4]),
            p_hat=np.array([0.01, 0.1, 0.3]),
            ci_low=np.array([0.005, 0.08, 0.28]),
            ci_high=np.array([0.02, 0.12, 0.32]),
            bound_value=np.array([0.05, 0.2, 0.5]),
        )
        fig = tail_figure(rep, xlabel="eps")
        assert fig.axes[0].get_yscale() == "log"
        plt.close(fig)

    def test_profile_figure_with_bands(self):
        x = np.linspace(0, 1, 5)
        fig = profile_figure(x, {"m": x ** 2}, xlabel="x", ylabel="y",
                             title="t", bands={"b": (x ** 2 - 0.1,
                                                     x ** 2 + 0.1)})
        assert len(fig.axes) == 1
        plt.close(fig)

    def test_ladder_figure_loglog(self):
        eps = np.array([1e-3, 2e-3, 4e-3])
        fig = ladder_figure(eps, {"err": [1e-6, 4e-6, 1.6e-5]})
        ax = fig.axes[0]
        assert ax.get_xscale() == "log" and ax.get_yscale() == "log"
        plt.close(fig)


def test_result_passed_property():
    assert toy_result(passed=True).passed
    assert not toy_result(passed=False).passed
    # missing key counts as a failure, never a crash
    assert ExperimentResult("x", {}, {}, [], []).passed is False

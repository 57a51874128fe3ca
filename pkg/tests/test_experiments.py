import json

import numpy as np
import pytest

from heiskern import experiments as ex
from heiskern.groups import FormError
from heiskern.oracles import quasi_diagonalize

TINY = {"n_paths": 2000, "n_steps": 32, "seed": 3,
        "sb_paths": 8000, "sb_steps": 32, "c_points": 41}


class TestRegistry:
    def test_all_names_present(self):
        assert set(ex.EXPERIMENTS) == {
            "yor", "heat-kernel", "gamma", "quasi-invariance", "ibp",
            "tails", "fernique", "spectral"}

    def test_descriptions_and_defaults(self):
        for name, (fn, desc, defaults) in ex.EXPERIMENTS.items():
            assert callable(fn)
            assert len(desc) > 20
            assert defaults

    def test_listing_mentions_everything(self):
        text = ex.list_experiments()
        for name in list(ex.EXPERIMENTS) + ["all"]:
            assert name in text

    def test_unknown_name_raises(self):
        with pytest.raises(ex.ConfigError, match="unknown experiment"):
            ex.run_experiment("bogus", {})


class TestFormResolution:
    def test_default_is_h3(self):
        form = ex._form({})
        assert form.dim_w == 2 and form.dim_c == 1

    def test_inline_dict(self):
        spec = {"dim_w": 2, "dim_c": 1, "omegas": [[[0, 2], [-2, 0]]]}
        form = ex._form({"form": spec})
        assert form.omega(np.array([1.0, 0.0]), np.array([0.0, 1.0]))[0] == 2

    def test_inline_dict_bad_dims(self):
        spec = {"dim_w": 3, "dim_c": 1, "omegas": [[[0, 1], [-1, 0]]]}
        with pytest.raises(FormError):
            ex._form({"form": spec})

    def test_missing_file(self):
        with pytest.raises(ex.ConfigError, match="cannot read"):
            ex._form({"form": "/nowhere/form.json"})

    def test_form_file(self, tmp_path):
        p = tmp_path / "form.json"
        p.write_text(json.dumps(
            {"dim_w": 2, "dim_c": 1, "omegas": [[[0, 1], [-1, 0]]]}))
        form = ex._form({"form": str(p)})
        assert form.dim_w == 2

    def test_unrecognized_spec(self):
        with pytest.raises(ex.ConfigError, match="unrecognized"):
            ex._form({"form": 17})


class TestMcResolution:
    def test_defaults(self):
        mc = ex._mc({})
        assert mc.n_paths == 100000 and mc.n_steps == 1024

    def test_invalid_counts(self):
        with pytest.raises(ex.ConfigError):
            ex._mc({"n_paths": 0})


def test_two_block_matrix_angles():
    qd = quasi_diagonalize(ex.two_block_matrix(1.0, 0.5))
    assert np.allclose(sorted(qd.angles), [0.5, 1.0])


def test_gamma_rejects_other_forms():
    spec = {"dim_w": 4, "dim_c": 1,
            "omegas": [[[0, 1, 0, 0], [-1, 0, 0, 0],
                        [0, 0, 0, 1], [0, 0, -1, 0]]]}
    with pytest.raises(ex.ConfigError, match="Heisenberg"):
        ex.exp_gamma({**TINY, "form": spec})


def test_fd_order_ladder_orders():
    from heiskern.groups import SkewForm
    eps, errors, orders = ex.fd_order_ladder(SkewForm.heisenberg3(), 1.0,
                                             128, seed=5)
    assert set(errors) == {"log_density", "star_weight"}
    for name, order in orders.items():
        assert order >= 1.9, (name, order, errors[name])


def test_run_all_returns_every_experiment():
    results = ex.run_experiment("all", dict(TINY))
    assert [r.name for r in results] == list(ex.EXPERIMENTS)
    for res in results:
        assert "passed" in res.summary
        assert res.detail_rows
        assert isinstance(res.summary["gates"], dict)


def test_summary_is_json_serializable():
    res = ex.run_experiment("spectral", {"seed": 4, "n_matrices": 5})[0]
    blob = json.dumps(res.summary, default=str)
    assert "gates" in blob

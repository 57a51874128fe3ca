import json

from click.testing import CliRunner

from heiskern.cli import main


def run(args, env=None):
    return CliRunner().invoke(main, args, env=env, catch_exceptions=False)


def read_summary(out_dir):
    with open(f"{out_dir}/summary.json") as fh:
        return json.load(fh)


class TestExitCodes:
    def test_pass_is_zero(self, tmp_path):
        res = run(["spectral", "--out", str(tmp_path), "--seed", "3"])
        assert res.exit_code == 0
        assert "PASS  spectral" in res.output
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "detail.csv").exists()

    def test_tolerance_failure_is_one_and_report_written(self, tmp_path):
        # 8 steps leaves a 1/8 relative discretization bias on the Ito
        # second moment, far beyond its 2 percent gate
        res = run(["yor", "--out", str(tmp_path), "--seed", "3",
                   "--paths", "20000", "--steps", "8"])
        assert res.exit_code == 1
        assert "FAIL  yor" in res.output
        summary = read_summary(tmp_path)
        assert summary["passed"] is False
        gate = summary["experiments"]["yor"]["gates"]["ito_second_moment"]
        assert gate["passed"] is False

    def test_unknown_experiment_is_two(self, tmp_path):
        res = run(["nonsense", "--out", str(tmp_path)])
        assert res.exit_code == 2
        assert "unknown experiment" in res.output

    def test_malformed_config_is_two(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        res = run(["spectral", "--config", str(cfg),
                   "--out", str(tmp_path / "o")])
        assert res.exit_code == 2
        assert "not valid JSON" in res.output

    def test_missing_config_file_is_two(self, tmp_path):
        res = run(["spectral", "--config", str(tmp_path / "absent.json"),
                   "--out", str(tmp_path / "o")])
        assert res.exit_code == 2

    def test_dimension_mismatch_is_two(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        form = {"dim_w": 4, "dim_c": 1,
                "omegas": [[[0, 1, 0, 0], [-1, 0, 0, 0],
                            [0, 0, 0, 1], [0, 0, -1, 0]]]}
        cfg.write_text(json.dumps({"form": form, "n_paths": 100,
                                   "n_steps": 8}))
        res = run(["gamma", "--config", str(cfg),
                   "--out", str(tmp_path / "o")])
        assert res.exit_code == 2

    def test_malformed_form_is_two(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(
            {"form": {"dim_w": 2, "dim_c": 2, "omegas": [[[0, 1], [-1, 0]]]},
             "n_paths": 100, "n_steps": 8}))
        res = run(["heat-kernel", "--config", str(cfg),
                   "--out", str(tmp_path / "o")])
        assert res.exit_code == 2


class TestListing:
    def test_list_prints_table(self):
        res = run(["list"])
        assert res.exit_code == 0
        for name in ("yor", "heat-kernel", "gamma", "quasi-invariance",
                     "ibp", "tails", "fernique", "spectral", "all"):
            assert name in res.output


class TestPrecedence:
    def test_flags_override_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 1, "n_matrices": 4}))
        out = tmp_path / "o"
        res = run(["spectral", "--config", str(cfg), "--seed", "2",
                   "--out", str(out)])
        assert res.exit_code == 0
        summary = read_summary(out)
        used = summary["experiments"]["spectral"]["config"]
        assert used["seed"] == 2
        assert used["n_matrices"] == 4

    def test_env_threads_fallback(self, tmp_path):
        out = tmp_path / "o"
        res = run(["spectral", "--seed", "3", "--out", str(out)],
                  env={"HEISKERN_THREADS": "2"})
        assert res.exit_code == 0

    def test_bad_env_threads_is_two(self, tmp_path):
        res = run(["spectral", "--out", str(tmp_path)],
                  env={"HEISKERN_THREADS": "lots"})
        assert res.exit_code == 2

    def test_threads_flag_beats_env(self, tmp_path):
        res = run(["spectral", "--seed", "3", "--out", str(tmp_path),
                   "--threads", "1"],
                  env={"HEISKERN_THREADS": "lots"})
        assert res.exit_code == 0


class TestFigureSwitch:
    def test_figures_default_on(self, tmp_path):
        run(["spectral", "--seed", "3", "--out", str(tmp_path)])
        assert (tmp_path / "spectral_residuals.png").exists()

    def test_no_figures(self, tmp_path):
        res = run(["spectral", "--seed", "3", "--out", str(tmp_path),
                   "--no-figures"])
        assert res.exit_code == 0
        assert not (tmp_path / "spectral_residuals.png").exists()
        assert (tmp_path / "summary.json").exists()


class TestDeterminism:
    def test_threads_do_not_change_numbers(self, tmp_path):
        docs = []
        for threads in ("1", "2"):
            out = tmp_path / f"t{threads}"
            res = run(["yor", "--seed", "11", "--paths", "9000",
                       "--steps", "32", "--threads", threads,
                       "--out", str(out), "--no-figures"])
            assert res.exit_code in (0, 1)
            doc = read_summary(out)
            doc.pop("timestamp")
            # threads feed the config hash but must not move any number
            doc.pop("config_hash")
            docs.append(doc)
        assert docs[0] == docs[1]

    def test_same_invocation_identical_bytes(self, tmp_path):
        texts = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            run(["spectral", "--seed", "9", "--out", str(out),
                 "--no-figures"])
            doc = json.loads((out / "summary.json").read_text())
            doc.pop("timestamp")
            texts.append(json.dumps(doc, sort_keys=True))
        assert texts[0] == texts[1]

import json
import os
import subprocess
import sys

import pytest

from churnet.cli import EXIT_DATA, EXIT_OK, EXIT_VALIDATION, cli_dispatch

GOOD_CSV = """person_id,firm_id,role,start_date,end_date,gender,region
P1,F1,REP,2010-01-01,2010-07-01,F,HK
P2,F1,RO,2010-01-01,,M,
P3,F1,REP,2010-02-01,,F,
P4,F1,REP,2010-02-01,,M,
"""

SYNTH_CFG = {
    "seed": 3,
    "synth": {
        "n_agents": 200,
        "n_firms": 8,
        "months": 30,
        "base_hazard": 0.05,
    },
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


class TestIngest:
    def test_good_file(self, tmp_path, capsys):
        f = tmp_path / "reg.csv"
        f.write_text(GOOD_CSV)
        assert cli_dispatch(["ingest", str(f)]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["n_professionals"] == 4
        assert doc["n_firms"] == 1

    def test_bad_rows_exit_2_with_line_numbers(self, tmp_path, capsys):
        f = tmp_path / "reg.csv"
        f.write_text(GOOD_CSV + "P9,F1,REP,2010-09-01,2010-01-01,F,\n")
        assert cli_dispatch(["ingest", str(f)]) == EXIT_DATA
        assert "line 6" in capsys.readouterr().err

    def test_malformed_header_exit_2(self, tmp_path, capsys):
        f = tmp_path / "reg.csv"
        f.write_text("wrong,header\n1,2\n")
        assert cli_dispatch(["ingest", str(f)]) == EXIT_DATA

    def test_jsonl(self, tmp_path, capsys):
        f = tmp_path / "reg.jsonl"
        f.write_text(
            '{"person_id": "P1", "firm_id": "F1", "role": "REP", '
            '"start_date": "2010-01-01", "end_date": null}\n'
        )
        assert cli_dispatch(["ingest", str(f), "--format", "jsonl"]) == EXIT_OK


class TestConfigValidation:
    def test_unknown_top_key_exit_1(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"nope": {}, "synth": SYNTH_CFG["synth"]})
        assert cli_dispatch(["simulate", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
        assert "unknown config keys" in capsys.readouterr().err

    def test_unknown_section_key_exit_1(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"synth": {"n_agents": 10, "bogus": 1}})
        assert cli_dispatch(["simulate", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
        assert "bogus" in capsys.readouterr().err

    def test_unreadable_config_exit_1(self, tmp_path):
        assert (
            cli_dispatch(["simulate", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")])
            == EXIT_VALIDATION
        )

    def test_missing_subcommand_exit_1(self):
        assert cli_dispatch([]) == EXIT_VALIDATION


class TestSimulate:
    def test_outputs_and_manifest(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SYNTH_CFG)
        out = tmp_path / "sim"
        assert cli_dispatch(["simulate", cfg, "--out", str(out)]) == EXIT_OK
        assert (out / "registry.csv").exists()
        truth = json.loads((out / "ground_truth.json").read_text())
        assert truth["config"]["n_agents"] == 200
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 3
        assert len(manifest["config_sha256"]) == 64

    def test_seed_override(self, tmp_path):
        cfg = write_cfg(tmp_path, SYNTH_CFG)
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli_dispatch(["--seed", "9", "simulate", cfg, "--out", str(a)]) == EXIT_OK
        assert cli_dispatch(["--seed", "9", "simulate", cfg, "--out", str(b)]) == EXIT_OK
        assert (a / "registry.csv").read_text() == (b / "registry.csv").read_text()
        c = tmp_path / "c"
        assert cli_dispatch(["simulate", cfg, "--out", str(c)]) == EXIT_OK
        assert (a / "registry.csv").read_text() != (c / "registry.csv").read_text()


class TestGraphFeatures:
    def test_employee_graph_outputs(self, tmp_path):
        cfg = write_cfg(tmp_path, SYNTH_CFG)
        out = tmp_path / "g"
        code = cli_dispatch(["graph", cfg, "--month", "2011-06", "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "edges.csv").read_text().startswith("src,dst,weight")
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["n_nodes"] > 0

    def test_firm_graph_scheme_from_config(self, tmp_path):
        doc = dict(SYNTH_CFG)
        doc["graph"] = {"firm_scheme": "recency", "recency_lambda": 0.2}
        cfg = write_cfg(tmp_path, doc)
        out = tmp_path / "g"
        code = cli_dispatch(["graph", cfg, "--month", "2011-06", "--kind", "firm", "--out", str(out)])
        assert code == EXIT_OK

    def test_month_outside_grid_exit_1(self, tmp_path):
        cfg = write_cfg(tmp_path, SYNTH_CFG)
        code = cli_dispatch(["graph", cfg, "--month", "2030-01", "--out", str(tmp_path / "g")])
        assert code == EXIT_VALIDATION

    def test_features_matrix(self, tmp_path):
        doc = dict(SYNTH_CFG)
        doc["features"] = {"catalog": "no_network"}
        cfg = write_cfg(tmp_path, doc)
        out = tmp_path / "f"
        code = cli_dispatch(["features", cfg, "--month", "2011-06", "--out", str(out)])
        assert code == EXIT_OK
        header = (out / "features_2011-06.csv").read_text().splitlines()[0]
        assert header.startswith("person_id,firm_id,month,")
        cat = json.loads((out / "catalog.json").read_text())
        assert len(cat) == 18


class TestTrainEvalAndReport:
    def cfg_doc(self):
        doc = dict(SYNTH_CFG)
        doc["features"] = {"catalog": "no_network"}
        doc["model"] = {"n_trees": 10, "max_depth": 3, "learning_rate": 0.2,
                        "min_leaf": 5, "row_subsample": 1.0}
        doc["walkforward"] = {
            "first_test_month": "2012-02",
            "last_test_month": "2012-05",
            "gap_months": 1,
            "calibration_slice_months": 4,
        }
        return doc

    def test_train_eval_outputs(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, self.cfg_doc())
        out = tmp_path / "run"
        code = cli_dispatch(["--threads", "1", "--deterministic", "train-eval", cfg, "--out", str(out)])
        assert code == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert len(rep["per_month"]) == 4
        assert (out / "metrics_by_month.csv").exists()
        svg = (out / "charts" / "metrics_over_time.svg").read_text()
        assert svg.startswith("<svg")

    def test_thread_determinism(self, tmp_path):
        cfg = write_cfg(tmp_path, self.cfg_doc())
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli_dispatch(["--threads", "1", "--deterministic", "train-eval", cfg, "--out", str(a)]) == EXIT_OK
        assert cli_dispatch(["--threads", "3", "--deterministic", "train-eval", cfg, "--out", str(b)]) == EXIT_OK
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()

    def test_variants_report(self, tmp_path):
        doc = self.cfg_doc()
        doc["features"] = {"catalog": "default"}
        doc["walkforward"]["variants"] = {
            "full": list(_default_names()),
            "no_network": list(_nonet_names()),
        }
        doc["walkforward"]["baseline"] = "no_network"
        doc["walkforward"]["last_test_month"] = "2012-03"
        cfg = write_cfg(tmp_path, doc)
        out = tmp_path / "run"
        assert cli_dispatch(["--threads", "1", "train-eval", cfg, "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert set(rep["reports"]) == {"full", "no_network"}
        assert "ap" in rep["deltas"]["full"]

    def test_report_reemits(self, tmp_path):
        cfg = write_cfg(tmp_path, self.cfg_doc())
        out = tmp_path / "run"
        assert cli_dispatch(["--threads", "1", "--deterministic", "train-eval", cfg, "--out", str(out)]) == EXIT_OK
        (out / "metrics_by_month.csv").unlink()
        assert cli_dispatch(["--deterministic", "report", str(out)]) == EXIT_OK
        assert (out / "metrics_by_month.csv").exists()

    def test_report_empty_dir_exit_1(self, tmp_path):
        assert cli_dispatch(["report", str(tmp_path)]) == EXIT_VALIDATION


class TestContagionCommand:
    def test_outputs(self, tmp_path):
        doc = dict(SYNTH_CFG)
        doc["contagion"] = {"window_months": 6, "thresholds": [0.0, 0.3], "min_peers": 3}
        cfg = write_cfg(tmp_path, doc)
        out = tmp_path / "c"
        assert cli_dispatch(["--deterministic", "contagion", cfg, "--out", str(out)]) == EXIT_OK
        lines = (out / "contagion.csv").read_text().splitlines()
        assert lines[0] == "threshold,n_above,rate_above,baseline,relative_lift"
        assert len(lines) == 3
        assert (out / "charts" / "lift_curve.svg").exists()


class TestEntryPoint:
    def test_console_script_runs(self, tmp_path):
        f = tmp_path / "reg.csv"
        f.write_text(GOOD_CSV)
        env = dict(os.environ, CHURNET_THREADS="2")
        proc = subprocess.run(
            [sys.executable, "-m", "churnet.cli", "ingest", str(f)]
            if _no_console_script()
            else ["churnet", "ingest", str(f)],
            capture_output=True, text=True, env=env,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["n_records"] == 4


def _default_names():
    from churnet.features import default_catalog

    return default_catalog().names


def _nonet_names():
    from churnet.features import no_network_catalog

    return no_network_catalog().names


def _no_console_script():
    from shutil import which

    return which("churnet") is None

import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from bbgky_bose import cli

SMOKE = """
[scenario]
N = 4
lambda = 0.2
orders = [2]
t_final = 1.0
dt = 0.1
exact = true

[integrator]
rtol = 1e-8
atol = 1e-10
"""


def write_config(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_manifest(out_dir):
    with open(Path(out_dir) / "manifest.json") as fh:
        return json.load(fh)


class TestValidate:
    def test_good_config(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMOKE)
        assert cli.main(["validate", cfg]) == 0
        assert "orders=[2]" in capsys.readouterr().out

    def test_missing_file(self, tmp_path):
        assert cli.main(["validate", str(tmp_path / "nope.toml")]) == 2

    def test_both_couplings_rejected(self, tmp_path):
        bad = SMOKE.replace("lambda = 0.2", "lambda = 0.2\nU = 0.1")
        assert cli.main(["validate", write_config(tmp_path, bad)]) == 2

    def test_order_out_of_range(self, tmp_path):
        bad = SMOKE.replace("orders = [2]", "orders = [4]")  # needs obar <= N-1
        assert cli.main(["validate", write_config(tmp_path, bad)]) == 2

    def test_invalid_toml(self, tmp_path):
        assert cli.main(["validate", write_config(tmp_path, "scenario = [")]) == 2

    def test_unknown_mode(self, tmp_path):
        bad = SMOKE + "\n[correction]\nmodes = [\"magic\"]\n"
        assert cli.main(["validate", write_config(tmp_path, bad)]) == 2


class TestRun:
    def test_smoke_outputs(self, tmp_path):
        cfg = write_config(tmp_path, SMOKE)
        out = tmp_path / "out"
        assert cli.main(["run", cfg, "--out", str(out)]) == 0
        manifest = read_manifest(out)
        assert manifest["schema"] == 1
        labels = {r["label"] for r in manifest["runs"]}
        assert labels == {"exact", "obar2_none"}
        for run in manifest["runs"]:
            assert run["termination"] == "completed"
            for fname in run["files"].values():
                assert (out / run["label"] / fname).exists()
        imb = np.genfromtxt(out / "obar2_none" / "imbalance.csv",
                            delimiter=",", names=True)
        assert len(imb) == 11
        assert abs(imb["t"][-1] - 1.0) < 1e-12

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, SMOKE)
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            assert cli.main(["run", cfg, "--out", str(out)]) == 0
            outs.append(out)
        for csv in sorted(outs[0].rglob("*.csv")):
            twin = outs[1] / csv.relative_to(outs[0])
            assert csv.read_bytes() == twin.read_bytes(), csv.name

    def test_invalid_config_exit_2(self, tmp_path):
        bad = write_config(tmp_path, SMOKE.replace("N = 4", "N = 1"))
        assert cli.main(["run", bad, "--out", str(tmp_path / "o")]) == 2

    def test_io_failure_exit_3(self, tmp_path):
        cfg = write_config(tmp_path, SMOKE)
        blocker = tmp_path / "blocker"
        blocker.write_text("file, not a directory")
        assert cli.main(["run", cfg, "--out", str(blocker / "sub")]) == 3

    def test_stiffness_abort_is_diagnosed(self, tmp_path):
        cfg = write_config(
            tmp_path,
            SMOKE.replace("atol = 1e-10", "atol = 1e-10\nmax_steps_per_dt = 3"))
        out = tmp_path / "out"
        assert cli.main(["run", cfg, "--out", str(out)]) == 0
        runs = {r["label"]: r for r in read_manifest(out)["runs"]}
        assert runs["obar2_none"]["termination"] == "StiffnessAbort"
        assert runs["exact"]["termination"] == "completed"

    def test_correction_modes_produce_runs(self, tmp_path):
        text = SMOKE + "\n[correction]\nmodes = [\"none\", \"eom\"]\n"
        out = tmp_path / "out"
        assert cli.main(["run", write_config(tmp_path, text), "--out", str(out)]) == 0
        labels = {r["label"] for r in read_manifest(out)["runs"]}
        assert {"obar2_none", "obar2_eom"} <= labels
        assert (out / "obar2_eom" / "corrections.csv").exists()

    def test_trace_distance_files_written(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["run", write_config(tmp_path, SMOKE), "--out", str(out)]) == 0
        dist = np.genfromtxt(out / "obar2_none" / "tracedist_o1.csv",
                             delimiter=",", names=True)
        assert np.all(dist["distance"] >= 0)
        assert np.all(dist["distance"] < 0.1)  # short, benign run

    def test_env_thread_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BBGKY_BOSE_THREADS", "1")
        out = tmp_path / "out"
        assert cli.main(["run", write_config(tmp_path, SMOKE), "--out", str(out)]) == 0

    def test_console_entry_point(self, tmp_path):
        cfg = write_config(tmp_path, SMOKE)
        proc = subprocess.run(
            [sys.executable, "-m", "bbgky_bose.cli", "validate", cfg],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "ok:" in proc.stdout


class TestManifest:
    def test_config_echo_and_energy(self, tmp_path):
        out = tmp_path / "out"
        assert cli.main(["run", write_config(tmp_path, SMOKE), "--out", str(out)]) == 0
        manifest = read_manifest(out)
        assert manifest["config"]["N"] == 4
        assert manifest["config"]["closure"] == "compat"
        assert manifest["config"]["cluster_weights"] == "wick"
        for run in manifest["runs"]:
            assert run["energy"]["max_rel_drift"] < 1e-8

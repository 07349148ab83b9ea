import json
import os
import subprocess
import sys

import pytest

from loopsim.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def chain_files(tmp_path):
    """A 2-neuron chain network plus a single kick stimulus."""
    net = {
        "schema_version": 1,
        "signal_velocity": 2e7,
        "detection_efficiency": 1.0,
        "neurons": [
            {
                "position": [0.0, 0.0],
                "dendrite_tree": {"soma": {"tau": "inf", "mode": "accumulate-passthrough",
                                           "sign": 1}, "dendrites": []},
                "threshold": 1.0,
                "gain": None,
                "t_refractory": 50000,
            }
            for _ in range(2)
        ],
        "edges": [{"pre": 0, "post": 1, "synapse_id": 0, "delay": 100,
                   "extra_latency": 100}],
        "synapses": [{"level": 199, "n_levels": 200, "sign": 1, "w_max": 1.0,
                      "meta_depth": 0, "m_max": 5, "p0": 1.0, "chi": 0.5,
                      "stp_factor": 1.0, "last_pre": None, "last_post": None,
                      "prevail": 0}],
        "meta": {},
    }
    net_path = tmp_path / "net.json"
    net_path.write_text(json.dumps(net))
    stim_path = tmp_path / "stim.json"
    stim_path.write_text(json.dumps([{"t_ps": 0, "neuron_id": 0, "amplitude": 1.0}]))
    return net_path, stim_path


class TestGenerate:
    def test_small_world_writes_file_and_report(self, tmp_path, capsys):
        out = tmp_path / "net.json"
        code = run_cli("generate", "small-world", "--n", "100", "--k", "6",
                       "--p", "0.1", "--seed", "7", "--out", str(out))
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["clustering"] <= 1.0
        doc = json.loads(out.read_text())
        assert len(doc["neurons"]) == 100

    def test_byte_identical_across_runs(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            code = run_cli("generate", "scale-free", "--n", "100", "--m", "3",
                           "--seed", "1", "--out", str(out))
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_generator_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            run_cli("generate", "mystery-graph", "--n", "10")
        assert e.value.code == 2

    def test_bad_parameters_exit_2(self, tmp_path, capsys):
        code = run_cli("generate", "small-world", "--n", "4", "--k", "4",
                       "--out", str(tmp_path / "x.json"))
        assert code == 2

    def test_inhibitory_and_plasticity_flags(self, tmp_path, capsys):
        out = tmp_path / "net.json"
        code = run_cli("generate", "small-world", "--n", "50", "--k", "4",
                       "--p", "0.2", "--seed", "3", "--out", str(out),
                       "--inhibitory-fraction", "0.2", "--stdp", "--stp")
        assert code == 0
        doc = json.loads(out.read_text())
        assert "stdp" in doc["plasticity"] and "stp" in doc["plasticity"]
        signs = {s["sign"] for s in doc["synapses"]}
        assert signs == {1, -1}


class TestSimulate:
    def test_demo_chain_two_line_log(self, chain_files, tmp_path, capsys):
        net, stim = chain_files
        spikes = tmp_path / "out.csv"
        state = tmp_path / "state.json"
        code = run_cli("simulate", "--network", str(net), "--stimulus", str(stim),
                       "--t-end-ps", "1000000", "--seed", "1",
                       "--out-spikes", str(spikes), "--out-state", str(state))
        assert code == 0
        assert spikes.read_text() == "t_ps,neuron_id\n0,0\n100,1\n"
        summary = capsys.readouterr().out
        assert "events/s:" in summary and "spikes: 2" in summary
        snap = json.loads(state.read_text())
        assert snap["spikes"] == 2 and not snap["partial"]

    def test_same_seed_identical_csv(self, chain_files, tmp_path):
        net, stim = chain_files
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run_cli("simulate", "--network", str(net), "--stimulus", str(stim),
                           "--t-end-ps", "1000000", "--seed", "5",
                           "--out-spikes", str(out)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_t_end_zero_exit_2(self, chain_files, tmp_path, capsys):
        net, stim = chain_files
        code = run_cli("simulate", "--network", str(net), "--stimulus", str(stim),
                       "--t-end-ps", "0", "--out-spikes", str(tmp_path / "x.csv"))
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_validation_failure_exit_2(self, chain_files, tmp_path, capsys):
        net, stim = chain_files
        doc = json.loads(net.read_text())
        doc["edges"][0]["delay"] = 999  # breaks the distance/velocity invariant
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        code = run_cli("simulate", "--network", str(bad), "--stimulus", str(stim),
                       "--t-end-ps", "1000", "--out-spikes", str(tmp_path / "x.csv"))
        assert code == 2

    def test_trials_fan_out(self, chain_files, tmp_path, capsys):
        net, stim = chain_files
        spikes = tmp_path / "out.csv"
        code = run_cli("simulate", "--network", str(net), "--stimulus", str(stim),
                       "--t-end-ps", "1000000", "--seed", "5", "--trials", "3",
                       "--out-spikes", str(spikes))
        assert code == 0
        for i in range(3):
            assert (tmp_path / f"out.t{i}.csv").exists()
        # deterministic network: all trials identical logs
        assert (tmp_path / "out.t0.csv").read_bytes() == (tmp_path / "out.t2.csv").read_bytes()

    def test_queue_overflow_exit_3_partial_log(self, tmp_path, capsys):
        from loopsim import topology
        from loopsim.core import save_network

        spec = topology.generate_small_world(20, 4, 0.0, seed=1, t_refractory=0,
                                             tau=1e12)
        net = tmp_path / "net.json"
        save_network(spec, net)
        stim = tmp_path / "stim.json"
        stim.write_text(json.dumps(
            [{"t_ps": 0, "neuron_id": i, "amplitude": 2.0} for i in range(20)]
        ))
        spikes = tmp_path / "out.csv"
        state = tmp_path / "state.json"
        code = run_cli("simulate", "--network", str(net), "--stimulus", str(stim),
                       "--t-end-ps", str(10**12), "--queue-cap", "50",
                       "--out-spikes", str(spikes), "--out-state", str(state))
        assert code == 3
        assert spikes.exists()  # partial log still written
        assert json.loads(state.read_text())["partial"] is True


class TestAnalyze:
    def make_log(self, tmp_path, lines):
        p = tmp_path / "spikes.csv"
        p.write_text("t_ps,neuron_id\n" + "".join(lines))
        return p

    def test_empty_log_report(self, tmp_path, capsys):
        p = self.make_log(tmp_path, [])
        out = tmp_path / "report.json"
        code = run_cli("analyze", "--spikes", str(p), "--out", str(out))
        assert code == 0
        report = json.loads(out.read_text())
        assert report["avalanches"]["count"] == 0
        assert report["size_fit"] is None

    def test_known_partition(self, tmp_path):
        # bins of width 10: [1, 1, 0, 2, 3] -> avalanches of size 2 and 5
        lines = ["0,0\n", "10,1\n", "30,0\n", "31,1\n", "40,0\n", "41,1\n", "42,2\n"]
        p = self.make_log(tmp_path, lines)
        out = tmp_path / "report.json"
        code = run_cli("analyze", "--spikes", str(p), "--out", str(out),
                       "--bin-width-ps", "10")
        assert code == 0
        report = json.loads(out.read_text())
        assert report["avalanches"]["count"] == 2
        assert report["avalanches"]["total_spikes"] == 7
        assert report["avalanches"]["max_size"] == 5

    def test_malformed_line_exit_2(self, tmp_path, capsys):
        p = self.make_log(tmp_path, ["0,0\n", "oops\n"])
        code = run_cli("analyze", "--spikes", str(p), "--out", str(tmp_path / "r.json"))
        assert code == 2
        assert "line 3" in capsys.readouterr().err

    def test_band_resolution_exit_2(self, tmp_path, capsys):
        p = self.make_log(tmp_path, ["0,0\n", "10000,0\n", "20000,1\n"])
        code = run_cli("analyze", "--spikes", str(p), "--out", str(tmp_path / "r.json"),
                       "--bands", "1e6:5e6")
        assert code == 2

    def test_plot_csvs(self, tmp_path):
        lines = [f"{t},{t % 3}\n" for t in range(0, 10_000, 37)]
        p = self.make_log(tmp_path, lines)
        plots = tmp_path / "plots"
        code = run_cli("analyze", "--spikes", str(p), "--out", str(tmp_path / "r.json"),
                       "--bin-width-ps", "100", "--plots-dir", str(plots))
        assert code == 0
        for name in ("avalanche_sizes.csv", "rate.csv", "spectrum.csv"):
            assert (plots / name).exists()


class TestScale:
    def test_paper_preset(self, capsys):
        assert run_cli("scale", "--preset", "paper") == 0
        out = capsys.readouterr().out
        assert "1e+12" in out and "1 W" in out

    def test_paper_preset_json(self, capsys):
        assert run_cli("scale", "--preset", "paper", "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["pool_ratio"] == 1.0e12
        assert doc["power_w"] == 1.0

    def test_power_args(self, capsys):
        assert run_cli("scale", "--n", "1e6", "--rate", "2e7", "--energy", "5e-14") == 0
        assert "1 W" in capsys.readouterr().out

    def test_zero_device_size_exit_2(self, capsys):
        assert run_cli("scale", "--v", "1e7", "--w", "0") == 2

    def test_nothing_requested_exit_2(self, capsys):
        assert run_cli("scale") == 2


def test_version_string(capsys):
    with pytest.raises(SystemExit) as e:
        run_cli("--version")
    assert e.value.code == 0
    out = capsys.readouterr().out
    assert "loopsim" in out and "schema" in out


def test_console_entrypoint_subprocess(tmp_path):
    env = dict(os.environ, LOOPSIM_LOG="ERROR")
    proc = subprocess.run(
        [sys.executable, "-m", "loopsim", "scale", "--preset", "paper", "--json"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["pool_ratio"] == 1.0e12

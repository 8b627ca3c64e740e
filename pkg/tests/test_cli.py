import json
import subprocess
import sys

import pytest

from netpost.cli import main
from netpost.graph import read_edge_list


def _cfg(tmp_path, name, obj):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(obj))
    return str(p)


def _run(tmp_path, command, cfg, out, *extra):
    return main([command, "--config", _cfg(tmp_path, f"{command}-{out}", cfg),
                 "--out", str(tmp_path / out), *extra])


def _manifest(tmp_path, out):
    return json.loads((tmp_path / out / "manifest.json").read_text())


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("gen")
    cfg = {"N": 12, "model": "kinetic-ising", "M": 400, "seed": 1, "avg_degree": 2,
           "w_mean": 0.8, "mode": "parallel"}
    assert _run(tmp, "generate", cfg, "g") == 0
    return tmp


class TestPipeline:
    def test_generate_outputs(self, generated):
        man = _manifest(generated, "g")
        assert set(man["outputs"]) == {"truth.tsv", "truth_theta.tsv", "dataset.csv"}
        assert man["seed"] == 1 and man["meta"]["E"] == 12
        assert "generate" in man["timings"]

    def test_reconstruct(self, generated):
        cfg = {"dataset": str(generated / "g" / "dataset.csv"), "model": "kinetic-ising"}
        assert _run(generated, "reconstruct", cfg, "r") == 0
        man = _manifest(generated, "r")
        assert {"map.tsv", "map_theta.tsv", "typical.tsv", "trace.json"} <= set(man["outputs"])
        assert str(generated / "g" / "dataset.csv") in man["inputs"]
        assert read_edge_list(generated / "r" / "map.tsv").n_edges > 0

    def test_sample_compare_and_thread_determinism(self, generated):
        g = generated / "g"
        cfg = {"dataset": str(g / "dataset.csv"), "model": "kinetic-ising", "sweeps": 8,
               "burn_in": 2, "thin": 3, "chains": 2, "snapshots": True,
               "reference": str(g / "truth.tsv")}
        assert _run(generated, "sample", cfg, "s1") == 0
        assert _run(generated, "sample", cfg, "s2", "--threads", "2") == 0
        a, b = _manifest(generated, "s1"), _manifest(generated, "s2")
        assert a["outputs"] == b["outputs"]
        assert b["config"]["threads"] == 2
        idx = json.loads((generated / "s1" / "samples" / "chain1" / "samples.json").read_text())
        assert [s["sweep"] for s in idx] == [2, 5]
        assert (generated / "s1" / idx[0]["file"]).exists()

        cmp = {"dataset": str(g / "dataset.csv"), "marginals": str(generated / "s1" / "marginals.tsv"),
               "top_k": 5}
        assert _run(generated, "compare", cmp, "c") == 0
        ineq = json.loads((generated / "c" / "inequalities.json").read_text())
        assert ineq == {"pearson_violations": [], "mi_violations": []}
        tops = json.loads((generated / "c" / "top_pairs.json").read_text())
        assert set(tops) == {"cov", "pearson", "mi", "pi"} and len(tops["pi"]) == 5

    def test_map_vs_mp_protocol(self, generated):
        cfg = {"model": "kinetic-ising", "sweeps": 6, "burn_in": 2,
               "protocol": {"name": "map-vs-mp", "truth": str(generated / "g" / "truth.tsv"),
                            "M": [30], "seeds": [0, 1], "mode": "parallel"}}
        assert _run(generated, "sample", cfg, "p") == 0
        lines = (generated / "p" / "map_vs_mp.tsv").read_text().splitlines()
        assert lines[0].split("\t")[:4] == ["M", "seed", "s_map", "s_mp"]
        assert len(lines) == 3

    def test_bench_scaling(self, tmp_path):
        cfg = {"N": [10, 20], "min_sweeps": 40, "sweeps_per_node": 1, "rounds": 1,
               "mixes": {"uniform": {"w_t": 0, "w_u": 1, "w_n": 0}}}
        assert _run(tmp_path, "bench-scaling", cfg, "b") == 0
        man = _manifest(tmp_path, "b")
        assert set(man["slopes"]) == {"uniform"}


class TestNoiseOnly:
    def test_map_is_near_empty(self, tmp_path):
        cfg = {"N": 15, "model": "kinetic-ising", "M": 300, "seed": 4, "avg_degree": 0,
               "mode": "parallel"}
        assert _run(tmp_path, "generate", cfg, "g") == 0
        rec = {"dataset": str(tmp_path / "g" / "dataset.csv"), "model": "kinetic-ising"}
        assert _run(tmp_path, "reconstruct", rec, "r") == 0
        assert read_edge_list(tmp_path / "r" / "map.tsv", n_nodes=15).n_edges <= 2


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        assert _run(tmp_path, "generate", {"N": 10, "model": "potts", "M": 5}, "x") == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "no.json"), "--out", str(tmp_path)]) == 2

    def test_bad_threads(self, tmp_path):
        cfg = {"N": 10, "model": "kinetic-ising", "M": 5}
        assert _run(tmp_path, "generate", cfg, "x", "--threads", "0") == 2

    def test_missing_dataset(self, tmp_path, capsys):
        cfg = {"dataset": str(tmp_path / "none.csv"), "model": "kinetic-ising"}
        assert _run(tmp_path, "reconstruct", cfg, "x") == 3
        assert "data error" in capsys.readouterr().err

    def test_corrupt_dataset(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("garbage\n1,2\n")
        assert _run(tmp_path, "reconstruct", {"dataset": str(bad), "model": "gaussian"}, "x") == 3

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "netpost.cli", "--version"],
                             capture_output=True, text=True)
        assert res.returncode == 0 and "netpost" in res.stdout

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from condthin import __version__
from condthin.cli import ExperimentSpec, cmd_ratio_cdf, load_config, main
from condthin.montecarlo import ConfigError, ScenarioConfig


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return str(path)


def read_output(path):
    lines = open(path).read().splitlines()
    header = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return header, body


def rows_of(body):
    return list(csv.DictReader(io.StringIO("\n".join(body))))


@pytest.mark.parametrize(
    "content",
    ['{"p": 0.5,', '[1, 2]', '{"p": 2.0}', '{"lambda": -1}', '{"alpha": 2}', '{"bogus": 1}',
     '{"trials": 0}', '{"format": "xml"}', '{"threshold_grid_db": [5, 1, 3]}', '{"lam": 1, "lambda": 1}'],
)
def test_malformed_config_exits_2_without_output(tmp_path, content, capsys):
    cfg = write_config(tmp_path, content)
    out = tmp_path / "out.csv"
    assert main(["coverage", "--config", cfg, "--output", str(out)]) == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["coverage", "--config", str(tmp_path / "nope.json")]) == 2


def test_unknown_command_exits_2():
    assert main(["frobnicate"]) == 2


def test_unwritable_output_exits_2(tmp_path):
    assert main(["coverage", "--trials", "5", "--output", str(tmp_path / "missing" / "x.csv")]) == 2


def test_lambda_alias(tmp_path):
    assert load_config(write_config(tmp_path, {"lambda": 2.0}))["lam"] == 2.0


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {"p": 0.5, "thinning": 0.5}))


def test_coverage_output(tmp_path):
    cfg = write_config(tmp_path, {"p_list": [0.0, 0.5, 1.0], "threshold_grid_db": [-10, 20, 7], "seed": 3})
    out = tmp_path / "cov.csv"
    assert main(["coverage", "--config", cfg, "--trials", "400", "--output", str(out)]) == 0
    header, body = read_output(out)
    assert header[0] == f"# condthin {__version__}"
    conf = json.loads(header[1].removeprefix("# config: "))
    assert conf["scenario"]["seed"] == 3 and conf["scenario"]["trials"] == 400
    assert conf["scenario"]["window_radius"] == pytest.approx(ScenarioConfig().radius)
    assert "output_path" not in conf and "workers" not in conf
    rows = rows_of(body)
    assert len(rows) == 3 * 7
    for p in ("0.0", "0.5", "1.0"):
        sub = [r for r in rows if r["p"] == p]
        analytic = np.array([float(r["analytic"]) for r in sub])
        empirical = np.array([float(r["empirical"]) for r in sub])
        assert np.all(np.diff(analytic) <= 0) and np.all(np.diff(empirical) <= 0)
        lo = np.array([float(r["ci_lo"]) for r in sub])
        hi = np.array([float(r["ci_hi"]) for r in sub])
        assert np.all((lo <= empirical) & (empirical <= hi))
        if p == "0.0":
            assert np.all(analytic == 1.0) and np.all(empirical == 1.0)
    assert not (tmp_path / "cov.csv.partial").exists()


def test_ratio_cdf_json(tmp_path):
    out = tmp_path / "r.json"
    cfg = write_config(tmp_path, {"p_list": [0.5], "format": "json"})
    assert main(["ratio-cdf", "--config", cfg, "--trials", "300", "--output", str(out)]) == 0
    header, body = read_output(out)
    data = json.loads("\n".join(body))
    assert len(data) == 200
    assert set(data[0]) == {"p", "r", "analytic_cdf", "empirical_cdf", "ks_distance"}
    assert data[0]["r"] == 1.0 and data[-1]["r"] == 6.0
    assert any("redraws=" in h for h in header)


def test_ratio_cdf_rejects_p_zero(tmp_path):
    cfg = write_config(tmp_path, {"p_list": [0.0, 0.5]})
    assert main(["ratio-cdf", "--config", cfg]) == 2


def test_generative_output(tmp_path, capsys):
    cfg = write_config(tmp_path, {"p_list": [0.5], "threshold_grid_db": [0, 10, 3], "trials": 2})
    assert main(["generative", "--config", cfg]) == 0
    out = capsys.readouterr().out.splitlines()
    rows = rows_of([l for l in out if not l.startswith("#")])
    assert len(rows) == 3
    for r in rows:
        assert float(r["gap_analytic"]) == pytest.approx(float(r["generative"]) - float(r["analytic"]))
        assert float(r["analytic_baseline"]) < float(r["analytic"])


def test_output_independent_of_workers(tmp_path):
    blobs = []
    for w in (1, 3):
        path = tmp_path / f"w{w}.csv"
        spec = ExperimentSpec(
            command="ratio-cdf", scenario=ScenarioConfig(trials=200, seed=4), p_list=(0.3, 1.0),
            output_path=str(path), workers=w,
        )
        cmd_ratio_cdf(spec)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_same_seed_same_bytes_different_seed_differs(tmp_path):
    def run(seed, name):
        path = tmp_path / name
        assert main(["coverage", "--trials", "100", "--seed", str(seed), "--output", str(path)]) == 0
        return path.read_bytes()

    assert run(5, "a.csv") == run(5, "b.csv")
    assert run(5, "a.csv") != run(6, "c.csv")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "condthin", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "ratio-cdf" in res.stdout

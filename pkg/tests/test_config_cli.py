import json
from pathlib import Path

import numpy as np
import pytest

from hjlab.cli import main
from hjlab.config import ConfigError, parse_config
from hjlab.domain_grid import Domain, GridFunction, build_grid
from hjlab.runner import RunManifest, config_digest, emit_plot_data, run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """
mode = "stationary"
[problem]
m = 2.0
delta = 1.0
[domain]
kind = "interval"
lo = -1.0
hi = 1.0
resolution = 20
"""


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.tol == 1e-8 and cfg.max_iter == 1_000_000
    assert cfg.seed == 0 and cfg.problem_spec().m == 2.0


@pytest.mark.parametrize("text,match", [
    (MINIMAL.replace("m = 2.0", "m = 0.5"), "m > 1"),
    (MINIMAL.replace("m = 2.0", "m = 2.0\nm = 3.0"), "parse error"),
    (MINIMAL.replace("delta = 1.0", "delta = 1.0\ncolour = 1"), "unknown key"),
    (MINIMAL.replace('kind = "interval"', 'kind = "torus"'), "domain.kind"),
    (MINIMAL.replace("hi = 1.0", "hi = -2.0"), "non-positive"),
    (MINIMAL.replace("resolution = 20", "resolution = 2"), "resolution"),
    (MINIMAL.replace("delta = 1.0", "delta = 0.0"), "delta > 0"),
    (MINIMAL.replace('mode = "stationary"', 'mode = "dance"'), "mode"),
    (MINIMAL + '[solver]\nrule = "fast"\n', "rule"),
    (MINIMAL.replace("delta = 1.0", 'delta = 1.0\nb = { form = "cosine", c0 = 1.0, amp = 0.1, phase = 2.0 }'),
     "unknown key"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_metric_center_geometry_checked():
    text = (CONFIGS / "metric_eikonal.toml").read_text().replace("center = [0.0]", "center = [3.5]")
    with pytest.raises(ConfigError, match="metric.center"):
        parse_config(text)


def test_digest_stable_under_reordering():
    a = parse_config(MINIMAL)
    reordered = """
[domain]
resolution = 20
hi = 1.0
lo = -1.0
kind = "interval"
[problem]
delta = 1.0
m = 2.0
"""
    b = parse_config('mode = "stationary"\n' + reordered)
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest(a.with_override("problem.m", 3.0))


def test_plot_data_kinds(tmp_path):
    g1 = build_grid(Domain.interval(0, 1), 10)
    f = emit_plot_data(GridFunction(g1, g1.coords[..., 0]), "profile", tmp_path / "p.csv")[0]
    lines = f.read_text().splitlines()
    assert lines[0] == "x,value" and len(lines) == 12
    g2 = build_grid(Domain.box([0, 0], [1, 1]), 8)
    f = emit_plot_data(GridFunction(g2, np.zeros(g2.shape)), "field", tmp_path / "f.csv")[0]
    assert f.read_text().splitlines()[0] == "x,y,value"
    csv_path, side = emit_plot_data(([1, 2, 4], [3, 6, 12]), "scaling", tmp_path / "s.csv")
    assert json.loads(side.read_text())["slope"] == pytest.approx(1.0)
    assert csv_path.read_text().splitlines()[0] == "log_parameter,log_K"
    with pytest.raises(ValueError):
        emit_plot_data(GridFunction(g2, np.zeros(g2.shape)), "profile", tmp_path / "x.csv")


def test_cli_uncertified_dt_exit_1(tmp_path, capsys):
    code = main(["solve-stationary", str(CONFIGS / "uncertified_dt.toml"), "--output", str(tmp_path)])
    assert code == 1
    assert "not monotone" in capsys.readouterr().err


def test_cli_negative_control_exit_2(tmp_path):
    assert main(["verify", str(CONFIGS / "verify_negative_control.toml"), "--output", str(tmp_path)]) == 2
    assert main(["report", str(tmp_path)]) == 2


def test_cli_mode_mismatch_exit_1(tmp_path):
    assert main(["metric", str(CONFIGS / "stationary_1d.toml"), "--output", str(tmp_path)]) == 1


def test_cli_set_overrides_scalar(tmp_path):
    out = tmp_path / "o"
    assert main(["solve-stationary", str(CONFIGS / "stationary_1d.toml"), "--output", str(out),
                 "--set", "domain.resolution=20"]) == 0
    assert json.loads((out / "config.json").read_text())["domain"]["resolution"] == 20


def test_metric_run_manifest_and_reproducibility(tmp_path):
    cfg = parse_config((CONFIGS / "metric_eikonal.toml").read_text()).with_override("domain.resolution", 40)
    man = run(cfg, tmp_path / "a")
    assert man.passed
    assert "metric_mu0.csv" in man.files and "reports/subadditivity.json" in man.files
    for f in man.files:
        assert (tmp_path / "a" / f).exists()
    run(cfg, tmp_path / "b")
    for f in man.files:
        if f.endswith(".csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    target = tmp_path / "a" / "metric_mu0.csv"
    before = target.read_bytes()
    target.unlink()
    run(cfg, tmp_path / "a")
    assert target.read_bytes() == before
    loaded = RunManifest.load(tmp_path / "a")
    assert loaded.files == man.files and loaded.config_digest == man.config_digest


def test_sweep_emits_scaling_table(tmp_path, monkeypatch):
    monkeypatch.setenv("HJLAB_WORKERS", "2")
    cfg = parse_config((CONFIGS / "sweep_mu.toml").read_text()).with_override("domain.resolution", 20)
    man = run(cfg, tmp_path)
    assert man.passed
    side = json.loads((tmp_path / "plot" / "scaling.json").read_text())
    assert side["slope"] == pytest.approx(0.5, abs=0.05)
    assert "run_000/manifest.json" in man.files


def test_time_and_state_constraint_modes(tmp_path):
    for name in ("time_1d", "state_constraint_m15"):
        cfg = parse_config((CONFIGS / f"{name}.toml").read_text())
        man = run(cfg, tmp_path / name)
        assert man.passed, man.reports

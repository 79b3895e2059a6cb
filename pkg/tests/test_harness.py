import json
import subprocess
import sys

import numpy as np
import pytest

from hspde import cli
from hspde.harness import (
    ExperimentConfig,
    HypothesisError,
    StageError,
    estimates_from_run,
    export_plotdata,
    region_csv,
    resolve_config,
    run_experiment,
)
from hspde.presets import get_preset, list_presets, operator_preset
from hspde.regularity import RegularityQuery
from hspde.spectral import EllipticOperatorSpec

CONTRACT_PRESETS = [
    "laplacian-d1",
    "laplacian-d2",
    "varcoef-d1",
    "heat-white-d1-baseline",
    "colored-d1-thm31",
    "fractional-alpha-sweep",
]


def small_config(out_dir, **extra):
    cfg = {
        "name": "unit",
        "domain": {"dimension": 1, "grid_size": 64, "mode_cutoff": 64},
        "noise": {"theta": 0.0, "truncation": 64},
        "plan": {"seed": 11, "steps": 2048, "replicas": 4, "space_count": 64},
        "query": {"theorem": "prop32", "d": 1, "q": 8, "p": 4},
        "output_dir": str(out_dir),
    }
    cfg.update(extra)
    return cfg


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    cfg = small_config(out)
    manifest = run_experiment(cfg)
    return cfg, manifest, out / manifest.run_id


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def test_contract_preset_names_all_present():
    names = dict(list_presets())
    for name in CONTRACT_PRESETS:
        assert name in names and names[name]


def test_every_preset_yields_a_valid_config():
    for name, _ in list_presets():
        raw = get_preset(name)
        config = ExperimentConfig.from_dict(raw)
        assert config.run_id.startswith(name + "-")
        assert len(config.run_id.rsplit("-", 1)[1]) == 10
        if config.query is not None:
            RegularityQuery(**config.query)


def test_preset_copies_are_independent():
    a = get_preset("laplacian-d1")
    a["plan"]["seed"] = -1
    assert get_preset("laplacian-d1")["plan"]["seed"] != -1


def test_unknown_preset_lists_available():
    with pytest.raises(KeyError, match="available"):
        get_preset("not-a-preset")


def test_operator_presets():
    spec = operator_preset("smooth-varcoef")
    assert isinstance(spec, EllipticOperatorSpec)
    with pytest.raises(KeyError, match="available"):
        operator_preset("not-an-operator")


# ---------------------------------------------------------------------------
# config resolution: flags > file > preset
# ---------------------------------------------------------------------------

def test_resolution_precedence(tmp_path):
    file_cfg = tmp_path / "cfg.json"
    file_cfg.write_text(json.dumps({"plan": {"replicas": 3, "steps": 512}}))
    merged = resolve_config("laplacian-d1", file_cfg,
                            ["plan.replicas=2", "plan.T=0.5"])
    assert merged["plan"]["replicas"] == 2      # override beats file
    assert merged["plan"]["steps"] == 512       # file beats preset
    assert merged["plan"]["T"] == 0.5           # override beats preset
    assert merged["plan"]["seed"] == 101        # untouched preset value


def test_config_file_may_reference_a_preset(tmp_path):
    file_cfg = tmp_path / "cfg.json"
    file_cfg.write_text(json.dumps({"preset": "laplacian-d1",
                                    "plan": {"seed": 5}}))
    merged = resolve_config(None, file_cfg, [])
    assert merged["plan"]["seed"] == 5
    assert merged["domain"]["grid_size"] == 128


def test_override_values_are_json_parsed():
    merged = resolve_config("laplacian-d1", None,
                            ["query=null", "g.kind=preset", "plan.seed=9"])
    assert merged["query"] is None
    assert merged["g"]["kind"] == "preset"
    assert merged["plan"]["seed"] == 9
    with pytest.raises(ValueError, match="form"):
        resolve_config("laplacian-d1", None, ["plan.seed"])


def test_seed_is_required(tmp_path):
    cfg = small_config(tmp_path)
    del cfg["plan"]["seed"]
    with pytest.raises(ValueError, match="seed"):
        ExperimentConfig.from_dict(cfg)


def test_unknown_config_keys_rejected(tmp_path):
    cfg = small_config(tmp_path, typo_section={})
    with pytest.raises(ValueError, match="typo_section"):
        ExperimentConfig.from_dict(cfg)


def test_run_id_tracks_content(tmp_path):
    a = ExperimentConfig.from_dict(small_config(tmp_path))
    b = ExperimentConfig.from_dict(small_config(tmp_path))
    assert a.run_id == b.run_id
    c_cfg = small_config(tmp_path)
    c_cfg["plan"]["seed"] = 12
    assert ExperimentConfig.from_dict(c_cfg).run_id != a.run_id


# ---------------------------------------------------------------------------
# pipeline persistence
# ---------------------------------------------------------------------------

def test_standard_outputs_exist(completed_run):
    _, manifest, run_dir = completed_run
    for name in ("estimates.csv", "region.csv", "verdict.json",
                 "manifest.json"):
        assert name in manifest.outputs
        assert (run_dir / name).is_file()
    assert all(status == "ok" for status in manifest.stages.values())


def test_estimates_table_schema(completed_run):
    _, _, run_dir = completed_run
    lines = (run_dir / "estimates.csv").read_text().splitlines()
    assert lines[0] == "alpha,kind,mode,value,fit_r2,lag_lo,lag_hi,replicas"
    rows = [line.split(",") for line in lines[1:]]
    assert [(r[1], r[2]) for r in rows] == [
        ("temporal", "pointwise"), ("temporal", "sup-space"),
        ("spatial", "pooled")]
    assert all(r[0] == "2" and r[7] == "4" for r in rows)
    assert all(0.0 <= float(r[3]) <= 1.5 for r in rows)


def test_rerun_is_byte_identical(completed_run):
    cfg, _, run_dir = completed_run
    before = {name: (run_dir / name).read_bytes()
              for name in ("estimates.csv", "region.csv", "verdict.json")}
    run_experiment(cfg)
    for name, payload in before.items():
        assert (run_dir / name).read_bytes() == payload


def test_manifest_reproduces_the_run(completed_run):
    _, manifest, run_dir = completed_run
    stored = json.loads((run_dir / "manifest.json").read_text())
    assert stored["run_id"] == manifest.run_id
    assert stored["versions"]["numpy"] == np.__version__
    echo = ExperimentConfig.from_dict(stored["config"])
    assert echo.run_id == manifest.run_id
    derived = stored["derived"]
    assert derived["budget"] == pytest.approx(0.125)
    assert 0 < derived["sigma"] < 0.5 and 0 < derived["delta"] < 0.5


def test_trajectories_only_persisted_on_request(completed_run, tmp_path):
    _, _, run_dir = completed_run
    assert not list(run_dir.glob("trajectories*"))
    cfg = small_config(tmp_path, persist_trajectories=True)
    cfg["plan"].update({"steps": 512, "replicas": 2})
    manifest = run_experiment(cfg)
    persisted = tmp_path / manifest.run_id
    assert (persisted / "trajectories.bin").is_file()
    assert (persisted / "trajectories.json").is_file()
    recomputed = estimates_from_run(persisted)
    assert recomputed == (persisted / "estimates.csv").read_text()


def test_stage_error_names_stage_and_keeps_partial_manifest(tmp_path):
    cfg = small_config(tmp_path,
                       operator={"kind": "varcoef", "name": "nope"})
    with pytest.raises(StageError) as err:
        run_experiment(cfg)
    assert err.value.stage == "build"
    manifests = list(tmp_path.glob("*/manifest.json"))
    assert len(manifests) == 1
    stages = json.loads(manifests[0].read_text())["stages"]
    assert stages["build"].startswith("failed")
    assert "simulate" not in stages


def test_hypothesis_violation_aborts_build(tmp_path):
    cfg = small_config(
        tmp_path,
        noise={"theta": 0.05, "truncation": 64},
        g={"kind": "preset", "name": "bump", "m": 8, "q": 16},
        query={"theorem": "colored", "d": 1, "q": 16, "theta": 0.05, "m": 8})
    with pytest.raises(HypothesisError, match="theta"):
        run_experiment(cfg)
    manifests = list(tmp_path.glob("*/manifest.json"))
    assert len(manifests) == 1


def test_sweep_produces_monotonicity_verdict(tmp_path):
    cfg = small_config(tmp_path, query=None,
                       sweep={"alpha": [1.0, 2.0], "slack": 0.03})
    cfg["plan"].update({"steps": 1024, "replicas": 2, "T": 0.5})
    manifest = run_experiment(cfg)
    verdict = manifest.verdict
    assert verdict["kind"] == "alpha-sweep"
    assert verdict["alphas"] == [1.0, 2.0]
    assert len(verdict["beta_hats"]) == 2
    assert verdict["slack"] == 0.03
    assert isinstance(verdict["passed"], bool)
    est = (tmp_path / manifest.run_id / "estimates.csv").read_text()
    assert sum(1 for line in est.splitlines()[1:]) == 6  # 3 rows per alpha


def test_pipeline_can_stop_early(tmp_path):
    cfg = small_config(tmp_path)
    cfg["plan"].update({"steps": 512, "replicas": 2})
    manifest = run_experiment(cfg, until="simulate")
    run_dir = tmp_path / manifest.run_id
    assert not (run_dir / "estimates.csv").exists()
    manifest = run_experiment(cfg, until="estimate")
    assert (run_dir / "estimates.csv").is_file()
    assert not (run_dir / "verdict.json").exists()
    with pytest.raises(ValueError, match="stage"):
        run_experiment(cfg, until="plot")


def test_vacuous_region_run():
    cfg = get_preset("laplacian-d2")
    import tempfile
    cfg["output_dir"] = tempfile.mkdtemp()
    manifest = run_experiment(cfg)
    verdict = manifest.verdict
    assert verdict["passed"] is True
    assert verdict["beta_hat"] is None
    assert "empty region" in verdict["note"]
    assert "region.csv" not in manifest.outputs


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def test_export_region_matches_query(completed_run):
    _, _, run_dir = completed_run
    text = export_plotdata(run_dir, "region")
    query = RegularityQuery("prop32", d=1, q=8, p=4)
    assert text == region_csv(query)
    first = text.splitlines()[1].split(",")
    assert (float(first[0]), float(first[1])) == (0.0, 0.25)


def test_export_requires_persisted_trajectories(completed_run):
    _, _, run_dir = completed_run
    with pytest.raises(FileNotFoundError, match="persist"):
        export_plotdata(run_dir, "increments")


def test_export_unknown_kind_and_missing_run(completed_run, tmp_path):
    _, _, run_dir = completed_run
    with pytest.raises(ValueError, match="kind"):
        export_plotdata(run_dir, "heatmap")
    with pytest.raises(FileNotFoundError, match="unknown run"):
        export_plotdata(tmp_path / "no-such-run", "region")


def test_export_increments_and_trajectory(tmp_path):
    cfg = small_config(tmp_path, persist_trajectories=True)
    cfg["plan"].update({"steps": 512, "replicas": 2})
    manifest = run_experiment(cfg)
    run_dir = tmp_path / manifest.run_id
    inc = export_plotdata(run_dir, "increments").splitlines()
    assert inc[0] == "axis,lag,median_max_increment"
    axes = {line.split(",")[0] for line in inc[1:]}
    assert axes == {"time", "space"}
    path = export_plotdata(run_dir, "trajectory", max_replicas=1)
    header = path.read_text().splitlines()[0]
    assert header.startswith("replica,")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def run_cli(argv, capsys):
    try:
        code = cli.main(argv)
    except SystemExit as exc:  # argparse errors route through SystemExit
        code = exc.code
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_cli_region_worked_example(capsys):
    code, out, _ = run_cli(["region", "--theorem", "prop32", "--d", "1",
                            "--q", "8", "--p", "4"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "beta,gamma_max,theorem,params"
    assert lines[1] == "0,0.25,prop32,d=1;q=8;p=4"
    assert len(lines) == 34


def test_cli_region_needs_query_flags(capsys):
    code, _, err = run_cli(["region", "--d", "1", "--q", "8"], capsys)
    assert code == 4


def test_cli_presets_lists_contract_names(capsys):
    code, out, _ = run_cli(["presets"], capsys)
    assert code == 0
    for name in CONTRACT_PRESETS:
        assert name in out


def test_cli_gamma_norm_table(capsys):
    code, out, _ = run_cli(["gamma-norm", "--kind", "identity", "--N", "4",
                            "--p", "2", "--samples", "20000", "--seed", "7"],
                           capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "estimate,std_error,N,samples"
    est, se, n, samples = lines[1].split(",")
    assert float(est) == pytest.approx(2.0, abs=5 * float(se))
    assert (n, samples) == ("4", "20000")


def test_cli_gamma_norm_other_kinds(capsys):
    for kind in ("gaussian", "rank-one"):
        code, out, _ = run_cli(["gamma-norm", "--kind", kind, "--N", "6",
                                "--p", "4", "--samples", "5000",
                                "--seed", "3"], capsys)
        assert code == 0
        assert float(out.splitlines()[1].split(",")[0]) > 0


def test_cli_fracpow_check_hits_tolerance(capsys):
    code, out, _ = run_cli(["fracpow-check", "--nodes", "200"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "z,method,relative_error,nodes"
    assert len(lines) == 7
    for line in lines[1:]:
        z, method, err, nodes = line.split(",")
        assert method in ("quadrature", "balakrishnan")
        assert float(err) < 1e-7
        assert nodes == "200"


def test_cli_run_and_verify_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(small_config(tmp_path / "runs")))
    code, out, _ = run_cli(["run", "--config", str(cfg_path)], capsys)
    assert code == 0
    assert "PASS" in out
    code, out, _ = run_cli(["verify", "--config", str(cfg_path),
                            "--set", "query.p=400", "--set", "query.q=400"],
                           capsys)
    assert code == 2
    assert "FAIL" in out


def test_cli_hypothesis_failure_exits_3(tmp_path, capsys):
    cfg = small_config(
        tmp_path / "runs",
        noise={"theta": 0.05, "truncation": 64},
        g={"kind": "preset", "name": "bump", "m": 8, "q": 16},
        query={"theorem": "colored", "d": 1, "q": 16, "theta": 0.05, "m": 8})
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code, _, err = run_cli(["run", "--config", str(cfg_path)], capsys)
    assert code == 3
    assert "hypothesis" in err


def test_cli_stage_error_exits_4(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(small_config(
        tmp_path / "runs", operator={"kind": "varcoef", "name": "nope"})))
    code, _, err = run_cli(["run", "--config", str(cfg_path)], capsys)
    assert code == 4
    assert "build" in err


def test_cli_needs_a_config_source(capsys):
    code, _, err = run_cli(["run"], capsys)
    assert code == 4
    assert "--preset" in err


def test_cli_simulate_then_estimate_from_run(tmp_path, capsys):
    cfg = small_config(tmp_path / "runs")
    cfg["plan"].update({"steps": 512, "replicas": 2})
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(["simulate", "--config", str(cfg_path)], capsys)
    assert code == 0
    run_dir = out.splitlines()[0].split(" -> ")[1]
    code, out, _ = run_cli(["estimate", "--run", run_dir], capsys)
    assert code == 0
    assert out.splitlines()[0] == \
        "alpha,kind,mode,value,fit_r2,lag_lo,lag_hi,replicas"


def test_cli_export_region_without_run(capsys):
    code, out, _ = run_cli(["export", "region", "--theorem", "prop32",
                            "--d", "1", "--p", "4", "--q", "8"], capsys)
    assert code == 0
    assert out.splitlines()[1].startswith("0,0.25,")


def test_cli_export_missing_run_errors(tmp_path, capsys):
    code, _, err = run_cli(["export", "increments",
                            "--run", str(tmp_path / "missing")], capsys)
    assert code == 4
    assert "unknown run" in err


def test_console_script_is_wired():
    proc = subprocess.run([sys.executable, "-m", "hspde.cli", "presets"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "laplacian-d1" in proc.stdout

import hashlib
import json
from pathlib import Path

import pytest

from sandwich.cli import ConfigError, config_digest, main, parse_config

SMALL = {"n_gauss": 50_000, "n_boundary": 2000, "n_shell": 2000, "grid_in_ball": 2000, "n_region": 2000}


def halfspace_cfg(**over):
    cfg = {"concept": {"type": "halfspace", "w": [1.0], "tau": 0.0}, "eps": 0.4, "s": 1, "sigma": 1.0,
           "seed": 5, "budgets": dict(SMALL)}
    cfg.update(over)
    return cfg


def run(tmp_path, command, cfg, *extra):
    p = tmp_path / f"{command}.json"
    p.write_text(json.dumps(cfg))
    code = main([command, "--config", str(p), "--out", str(tmp_path / "runs"), *extra])
    seed = int(extra[extra.index("--seed") + 1]) if "--seed" in extra else None
    try:
        raw = parse_config(cfg, seed).raw
    except ConfigError:
        return code, None
    return code, tmp_path / "runs" / f"{command}-{config_digest(command, raw)}"


def manifest(d: Path) -> dict:
    return json.loads((d / "manifest.json").read_text())


def test_build_and_recertify(tmp_path):
    code, d = run(tmp_path, "build-sandwich", halfspace_cfg())
    assert code == 0
    m = manifest(d)
    assert m["verdict"] == "PASS" and m["schema_version"] == 1
    assert m["summary"]["degree"] == 958
    for f in m["files"]:
        assert hashlib.sha256((d / f["name"]).read_bytes()).hexdigest() == f["sha256"]
    code2, d2 = run(tmp_path, "certify", halfspace_cfg(), "--pair", str(d / "pair.json"))
    assert code2 == 0 and manifest(d2)["verdict"] == "PASS"


def test_constant_concept(tmp_path):
    code, d = run(tmp_path, "build-sandwich", halfspace_cfg(concept={"type": "constant", "dim": 1, "value": 1}))
    assert code == 0
    s = manifest(d)["summary"]
    assert s["degree"] == 2 * s["ell2"] and s["ell1"] == 0


@pytest.mark.parametrize("patch,field", [({"eps": 1.5}, "eps"), ({"s": 0.5}, "s"), ({"sigma": 0.8}, "sigma"),
                                         ({"seed": None}, "seed"), ({"concept": {"type": "halfspace", "w": [1.0]}}, "tau"),
                                         ({"budgets": {"n_gaus": 3}}, "budgets.n_gaus")])
def test_malformed_config(tmp_path, capsys, patch, field):
    cfg = halfspace_cfg(**patch)
    if cfg.get("seed") is None:
        cfg.pop("seed")
    code, _ = run(tmp_path, "build-sandwich", cfg)
    assert code == 2
    assert field in capsys.readouterr().err


def test_not_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{eps: ")
    assert main(["build-sandwich", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_fit_failure_exit_code(tmp_path):
    code, d = run(tmp_path, "build-sandwich", halfspace_cfg(degree_cap=50))
    assert code == 3
    m = manifest(d)
    assert m["verdict"] == "FAIL" and "fit_failure" in m["diagnostics"]


def test_parse_config_defaults():
    cfg = parse_config({"concept": {"type": "halfspace", "w": [1.0, 0.0], "tau": 0.1}, "seed": 1})
    assert cfg.eps == 0.2 and cfg.s == 1.0 and cfg.dist(2).dim == 2
    with pytest.raises(ConfigError, match="distribution.dim"):
        parse_config({"concept": {"type": "halfspace", "w": [1.0], "tau": 0.1}, "seed": 1,
                      "distribution": {"dim": 3}})


def test_lp_oracle_and_smoothness(tmp_path):
    cfg = halfspace_cfg(lp={"degrees": [1, 3, 5]}, smoothness={"rhos": [0.05, 0.1], "n": 100_000, "reference": 0.7979})
    code, d = run(tmp_path, "lp-oracle", cfg)
    assert code == 0
    rows = (d / "lp_gap.csv").read_text().splitlines()
    assert rows[0].startswith("degree,gap") and len(rows) == 4
    assert (d / "lp_gap.svg").read_text().startswith("<svg")
    code, d = run(tmp_path, "estimate-smoothness", cfg)
    assert code == 0 and len((d / "smoothness.csv").read_text().splitlines()) == 3


def test_sigma_estimate(tmp_path):
    cfg = halfspace_cfg(sigma="estimate", smoothness={"rhos": [0.05, 0.1], "n": 50_000})
    code, d = run(tmp_path, "build-sandwich", cfg)
    assert code == 0
    sig = manifest(d)["summary"]["sigma"]
    assert sig["source"] == "estimate" and sig["sigma"] >= 1.0


def test_fool_test(tmp_path):
    cfg = halfspace_cfg(concept={"type": "halfspace", "w": [1.0], "tau": 0.3}, fool={"deltas": [0.01], "n": 50_000})
    code, d = run(tmp_path, "fool-test", cfg)
    assert code == 0
    rows = (d / "fooling.csv").read_text().splitlines()
    assert len(rows) == 3 and all(r.endswith(",1") for r in rows[1:])
    assert (d / "adversary_0.01.csv").exists() and (d / "quadrature_distribution.csv").exists()


SCAN = {"scan": {"eps": [0.4, 0.3], "instances": [
    {"name": "intersection-k1", "size": 1, "concept": {"type": "intersection", "halfspaces": [{"w": [1.0], "tau": 0.5}]}}]}}


def test_degree_scan_and_reproducibility(tmp_path):
    cfg = halfspace_cfg(**SCAN)
    code, d = run(tmp_path, "degree-scan", cfg)
    assert code == 0
    m = manifest(d)
    assert m["summary"]["dominance"] and not m["summary"]["partial"]
    first = (d / "degree_scan.csv").read_bytes()
    lines = first.decode().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, r.split(","))) for r in lines[1:]]
    for r in rows:
        assert r["status"] == "ok" and r["dominance"] == "1"
        assert int(r["lp_degree"]) <= int(r["construction_degree"])
    # rerun with more threads into a fresh directory
    other = tmp_path / "again"
    other.mkdir()
    code2, d2 = run(other, "degree-scan", cfg, "--threads", "2")
    assert code2 == 0 and (d2 / "degree_scan.csv").read_bytes() == first


def test_seed_override_changes_run_dir(tmp_path):
    cfg = halfspace_cfg(concept={"type": "constant", "dim": 1, "value": -1})
    _, d1 = run(tmp_path, "build-sandwich", cfg)
    _, d2 = run(tmp_path, "build-sandwich", cfg, "--seed", "9")
    assert d1 != d2 and manifest(d2)["config"]["seed"] == 9


def test_bad_threads(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(halfspace_cfg()))
    assert main(["build-sandwich", "--config", str(p), "--threads", "0"]) == 2

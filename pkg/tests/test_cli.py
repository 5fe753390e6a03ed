import json

import numpy as np
import pytest
import yaml

from geochemad.cli import main
from geochemad.config import load_config, parse_config
from geochemad.errors import ConfigError
from geochemad.geodata import parse_deposits_csv
from geochemad.pipeline import StageError, prepare, cmd_gridmap, cmd_run, cmd_synth, read_scored_csv, write_scored_csv
from geochemad.spatial import read_ascii_grid
from geochemad.synth import SynthConfig

FAST = {
    "zscore": {},
    "mahalanobis": {},
    "knn_dist": {"k": 5},
    "isolation_forest": {"n_trees": 20, "seed": 1},
    "ocsvm": {"max_iter": 50},
    "ae": {"epochs": 2, "hidden": 8, "latent": 2},
    "vae": {"epochs": 2, "hidden": 8, "latent": 2},
    "t1": {"k": 4, "d_model": 8, "heads": 2, "ff_width": 8, "n_layers": 1, "edm_epochs": 1},
    "geochemformer": {"k": 4, "d_model": 8, "heads": 2, "ff_width": 8, "n_layers": 1,
                      "scl_epochs": 1, "edm_epochs": 1},
}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    cmd_synth(SynthConfig(n_samples=300, seed=5), d, "s")
    return d


def write_cfg(d, detectors, name="run.yaml", out="out", **extra):
    doc = {"dataset": "s", "data": {"survey": "s_survey.csv", "deposits": "s_deposits.csv"},
           "detectors": detectors, "output": {"dir": out, "figures": False}, **extra}
    path = d / name
    path.write_text(yaml.safe_dump(doc))
    return path


def test_minimal_pipeline(synth_dir):
    res = cmd_run(write_cfg(synth_dir, [{"kind": "zscore"}], out="min"))
    out = res.out_dir
    assert sorted(p.name for p in out.glob("scores_*.csv")) == ["scores_zscore.csv"]
    assert sorted(p.name for p in out.glob("report_*.json")) == ["report_zscore.json"]
    ids, pos, s = read_scored_csv(out / "scores_zscore.csv")
    assert len(ids) == 300 and np.all(np.isfinite(s))
    header = (out / "scores_zscore.csv").read_text().splitlines()[0]
    assert header == "SAMPLEID,x,y,score"


def test_all_nine_detectors_and_table(synth_dir):
    blocks = [{"kind": k, "params": p} for k, p in FAST.items()]
    cfg = write_cfg(synth_dir, blocks, name="all.yaml", out="all")
    doc = yaml.safe_load(cfg.read_text())
    doc["output"]["figures"] = True
    cfg.write_text(yaml.safe_dump(doc))
    res = cmd_run(cfg)
    out = res.out_dir
    assert len(list(out.glob("scores_*.csv"))) == 9
    rows = (out / "comparison.csv").read_text().splitlines()
    assert rows[0].split(",")[1:] == list(FAST)
    cells = rows[1].split(",")
    for kind, cell in zip(FAST, cells[1:]):
        rep = json.loads((out / f"report_{kind}.json").read_text())
        assert float(cell) == rep["aggregates"]["auc_mean"]
    assert (out / "auc_comparison.png").stat().st_size > 0
    assert (out / "map_geochemformer.png").stat().st_size > 0


def test_rerun_is_byte_identical(synth_dir, tmp_path):
    blocks = [{"kind": "zscore"}, {"kind": "isolation_forest", "params": {"n_trees": 20}},
              {"kind": "ae", "params": {"epochs": 2}}]
    a = cmd_run(write_cfg(synth_dir, blocks, name="a.yaml", out=str(tmp_path / "a"))).out_dir
    b = cmd_run(write_cfg(synth_dir, blocks, name="b.yaml", out=str(tmp_path / "b"))).out_dir
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_jobs_match_sequential(synth_dir, tmp_path):
    blocks = [{"kind": "zscore"}, {"kind": "knn_dist"}, {"kind": "ae", "params": {"epochs": 2}}]
    a = cmd_run(write_cfg(synth_dir, blocks, name="j1.yaml", out=str(tmp_path / "j1"))).out_dir
    b = cmd_run(write_cfg(synth_dir, blocks, name="j2.yaml", out=str(tmp_path / "j2")), jobs=3).out_dir
    for p in a.glob("scores_*.csv"):
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_failure_keeps_manifest(synth_dir):
    # more neighbours than samples: the kNN detector refuses to fit
    blocks = [{"kind": "zscore"}, {"kind": "knn_dist", "params": {"k": 5000}}]
    doc = {"dataset": "s", "data": {"survey": "s_survey.csv", "deposits": "s_deposits.csv"},
           "detectors": blocks, "output": {"dir": "fail", "figures": False}}
    path = synth_dir / "fail.yaml"
    path.write_text(yaml.safe_dump(doc))
    with pytest.raises(StageError) as info:
        cmd_run(path)
    assert info.value.stage == "fit:knn_dist"
    manifest = json.loads((synth_dir / "fail" / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["failed_stage"] == info.value.stage
    assert "scores_zscore.csv" in manifest["artifacts"]
    assert main(["run", str(path)]) == 1


def test_config_errors(synth_dir, tmp_path):
    with pytest.raises(ConfigError):
        parse_config({"data": {"survey": "a"}, "detectors": [{"kind": "zscore"}]})
    with pytest.raises(ConfigError):
        parse_config({"data": {"survey": "a", "deposits": "b"}, "detectors": [{"kind": "bogus"}]})
    with pytest.raises(ConfigError):
        parse_config({"data": {"survey": "a", "deposits": "b"}, "detectors": [{"kind": "zscore"}],
                      "preprocess": {"transform": "alr"}})
    with pytest.raises(ConfigError):
        parse_config({"data": {"survey": "a", "deposits": "b"}, "detectors": [{"kind": "zscore"}], "x": 1})
    bad = tmp_path / "bad.yaml"
    bad.write_text("data: [unclosed")
    assert main(["run", str(bad)]) == 1
    missing = write_cfg(tmp_path, [{"kind": "zscore"}])
    assert main(["run", str(missing)]) == 1


def test_data_error_exit_code(tmp_path):
    (tmp_path / "s_survey.csv").write_text("SAMPLEID,x,y,Au_ppb\nA,1,1,abc\n")
    (tmp_path / "s_deposits.csv").write_text("SiteID,ProjectID,x,y\nD,P,1,1\n")
    assert main(["run", str(write_cfg(tmp_path, [{"kind": "zscore"}]))]) == 2


def test_output_env_default(synth_dir, monkeypatch, tmp_path):
    monkeypatch.setenv("GEOCHEMAD_OUTPUT_DIR", str(tmp_path / "env_out"))
    doc = {"data": {"survey": str(synth_dir / "s_survey.csv"), "deposits": str(synth_dir / "s_deposits.csv")},
           "detectors": [{"kind": "zscore"}]}
    assert parse_config(doc).output.dir == tmp_path / "env_out"


def test_pca_selection_and_ilr(synth_dir):
    blocks = [{"kind": "mahalanobis"}, {"kind": "geochemformer", "params": FAST["geochemformer"]}]
    cfg = write_cfg(synth_dir, blocks, name="pca.yaml", out="pca",
                    preprocess={"transform": "ilr", "selection": {"strategy": "pca", "variance_threshold": 0.8}})
    res = cmd_run(cfg)
    assert res.reports["geochemformer"].n_matched > 0


def test_select_first_transforms_the_subcomposition(synth_dir):
    pre = {"transform": "clr", "standardize": False, "target_element": "Cu",
           "selection": {"strategy": "manual", "elements": ["Au", "As", "Sb"]}}
    base = {"data": {"survey": "s_survey.csv", "deposits": "s_deposits.csv"}, "detectors": [{"kind": "zscore"}]}
    first = prepare(parse_config({**base, "preprocess": {**pre, "order": "select_first"}}, synth_dir))
    after = prepare(parse_config({**base, "preprocess": pre}, synth_dir))
    raw = first.survey.values
    names = [n.lower() for n in first.survey.symbols]
    sub = np.log(raw[:, [names.index(e) for e in ("au", "as", "sb")]])
    np.testing.assert_allclose(first.matrix.data, sub - sub.mean(1, keepdims=True), atol=1e-12)
    np.testing.assert_allclose(first.matrix.data.sum(1), 0.0, atol=1e-9)
    # selecting after a full CLR keeps the whole-composition geometric mean
    assert np.abs(after.matrix.data.sum(1)).max() > 1e-3
    # a target outside the subset still comes from the full composition
    np.testing.assert_allclose(first.target, after.target)
    with pytest.raises(ConfigError):
        parse_config({**base, "preprocess": {"order": "select_first", "selection": {"strategy": "pca"}}})


def test_synth_command(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "a"), "--seed", "42"]) == 0
    assert main(["synth", "--out", str(tmp_path / "b"), "--seed", "43"]) == 0
    a = (tmp_path / "a" / "synth_survey.csv").read_bytes()
    assert a != (tmp_path / "b" / "synth_survey.csv").read_bytes()
    cfg = load_config(tmp_path / "a" / "synth_run.yaml")
    assert cfg.survey.is_file()
    conf = tmp_path / "synth.yaml"
    conf.write_text("n_samples: 200\nseed: 3\n")
    assert main(["synth", "--config", str(conf), "--out", str(tmp_path / "c")]) == 0
    conf.write_text("n_samples: 1\n")
    assert main(["synth", "--config", str(conf), "--out", str(tmp_path / "d")]) == 1


def test_synth_default_round_trips_through_run(tmp_path):
    paths = cmd_synth(None, tmp_path, "synth")
    doc = yaml.safe_load(paths["run_config"].read_text())
    doc["output"]["figures"] = False
    paths["run_config"].write_text(yaml.safe_dump(doc))
    assert main(["run", str(paths["run_config"])]) == 0


def test_inspect(synth_dir, capsys):
    assert main(["inspect", str(synth_dir / "s_survey.csv"), "--json"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["n_samples"] == 300 and stats["n_elements"] == 12


def _scored(tmp_path, pos, scores):
    return write_scored_csv(tmp_path / "sc.csv", [f"S{i}" for i in range(len(pos))], pos, scores)


def test_gridmap_constant_and_single_cell(tmp_path):
    rng = np.random.default_rng(0)
    pos = rng.uniform(0, 1, size=(50, 2))
    path = _scored(tmp_path, pos, np.full(50, 2.5))
    out = cmd_gridmap(path, tmp_path / "c.asc", nx=5)["scores"]
    layer = read_ascii_grid(out)
    np.testing.assert_allclose(layer.values, 2.5)
    out = cmd_gridmap(path, tmp_path / "one.asc", cell_size=2.0)["scores"]
    assert read_ascii_grid(out).values.shape == (1, 1)


def test_gridmap_oracle_minimum_near_deposit(synth_dir, tmp_path):
    ids, pos, _ = read_scored_csv(cmd_run(write_cfg(synth_dir, [{"kind": "zscore"}], out="g")).out_dir
                                  / "scores_zscore.csv")
    dep = np.array([d.position for d in parse_deposits_csv(synth_dir / "s_deposits.csv")])
    d = np.sqrt(((pos[:, None] - dep[None]) ** 2).sum(-1)).min(1)
    path = _scored(tmp_path, pos, -(-d))  # distance itself: the minimum sits on a deposit
    paths = cmd_gridmap(path, tmp_path / "o.asc", method="idw", deposits=synth_dir / "s_deposits.csv")
    layer = read_ascii_grid(paths["scores"])
    r, c = np.unravel_index(np.nanargmin(layer.values), layer.values.shape)
    centre = layer.grid.cell_centers()[r, c]
    assert np.sqrt(((dep - centre) ** 2).sum(1)).min() <= SynthConfig().halo_radius
    counts = read_ascii_grid(paths["deposits"]).values
    assert counts.sum() == len(dep)
    assert main(["gridmap", str(path), str(tmp_path / "m.asc"), "--nx", "8"]) == 0

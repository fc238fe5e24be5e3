import json
import re

import numpy as np
import pytest

from gradsub import cli, formats
from gradsub.cli import load_checkpoint, main
from gradsub.config import parse_config

SMALL = """
total_steps = 10
probe_every = 5
pretrain_steps = 4
pretrain_batch = 4
batch_action = 4
batch_grounding = 2
model.d = 8
"""


@pytest.fixture
def small_cfg(tmp_path):
    def make(extra=""):
        path = tmp_path / f"cfg{abs(hash(extra))}.txt"
        path.write_text(SMALL + extra)
        return str(path)

    return make


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


# -- pss -----------------------------------------------------------------------


def test_pss_hand_values(tmp_path, capsys):
    a, b = tmp_path / "a.grdm", tmp_path / "b.grdm"
    formats.write_grdm(a, np.array([[1.0], [0.0], [0.0]]))
    formats.write_grdm(b, np.array([[1.0], [1.0], [0.0]]) / np.sqrt(2))
    code, out, _ = run(["pss", str(a), str(b)], capsys)
    assert code == 0
    result = json.loads(out)
    assert result["value"] == pytest.approx(0.5, abs=1e-12)
    assert (result["rank_a"], result["rank_b"]) == (1, 1)
    code, out, _ = run(["pss", str(a), str(a)], capsys)
    assert json.loads(out)["value"] == 1.0


def test_pss_exit_codes(tmp_path, capsys):
    a = tmp_path / "a.grdm"
    formats.write_grdm(a, np.eye(3))
    trunc = tmp_path / "t.grdm"
    trunc.write_bytes(a.read_bytes()[:-5])
    tall = tmp_path / "c.grdm"
    formats.write_grdm(tall, np.ones((4, 2)))
    zero = tmp_path / "z.grdm"
    formats.write_grdm(zero, np.zeros((3, 2)))
    code, _, err = run(["pss", str(a), str(trunc)], capsys)
    assert code == 2 and "payload length mismatch" in err
    code, _, _ = run(["pss", str(a), str(tall)], capsys)
    assert code == 3
    code, _, _ = run(["pss", str(a), str(zero)], capsys)
    assert code == 4
    code, _, _ = run(["pss", str(a), str(tmp_path / "missing.grdm")], capsys)
    assert code == 2


def test_pss_tol_flag(tmp_path, capsys):
    a, b = tmp_path / "a.grdm", tmp_path / "b.grdm"
    formats.write_grdm(a, np.diag([1.0, 1e-6]))
    formats.write_grdm(b, np.array([[0.0], [1.0]]))
    _, out, _ = run(["pss", str(a), str(b)], capsys)
    assert json.loads(out)["rank_a"] == 2
    _, out, _ = run(["pss", str(a), str(b), "--tol", "1e-3"], capsys)
    assert json.loads(out) == {"value": 0.0, "rank_a": 1, "rank_b": 1, "principal_cosines": [0.0]}


# -- train ---------------------------------------------------------------------


def test_train_outputs_and_determinism(tmp_path, small_cfg, capsys):
    cfg = small_cfg()
    code, _, _ = run(["train", "--config", cfg, "--out", str(tmp_path / "r1")], capsys)
    assert code == 0
    run(["train", "--config", cfg, "--out", str(tmp_path / "r2")], capsys)
    for name in ("report.csv", "final.ckpt", "init.ckpt", "config-echo.txt"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    rows = formats.parse_report_csv((tmp_path / "r1" / "report.csv").read_text())
    assert [r["step"] for r in rows] == [0, 5, 10]
    echo = (tmp_path / "r1" / "config-echo.txt").read_text()
    assert "model.d = 8" in echo and "optim.lr = 0.001" in echo
    assert parse_config(echo) == parse_config(SMALL)


def test_checkpoint_load_save_identical_bytes(tmp_path, small_cfg, capsys):
    run(["train", "--config", small_cfg(), "--out", str(tmp_path)], capsys)
    path = tmp_path / "final.ckpt"
    config, model = load_checkpoint(path)
    cli.save_checkpoint(tmp_path / "again.ckpt", config, model.state())
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_vanilla_train_keeps_grounding_head(tmp_path, small_cfg, capsys):
    run(["train", "--config", small_cfg("strategy.name = Vanilla\n"), "--out", str(tmp_path)], capsys)
    _, init = load_checkpoint(tmp_path / "init.ckpt")
    _, final = load_checkpoint(tmp_path / "final.ckpt")
    for name in ("ground.w", "ground.b"):
        assert np.array_equal(init.params[name].data, final.params[name].data)
    assert not np.array_equal(init.params["act.w2"].data, final.params["act.w2"].data)


def test_train_config_error(tmp_path, small_cfg, capsys):
    code, _, err = run(["train", "--config", small_cfg("model.bogus = 1\n"), "--out", str(tmp_path)], capsys)
    assert code == 2 and "model.bogus" in err
    code, _, _ = run(["train", "--config", str(tmp_path / "nope.txt"), "--out", str(tmp_path)], capsys)
    assert code == 2


def test_train_divergence(tmp_path, small_cfg, capsys):
    with np.errstate(all="ignore"):
        code, _, err = run(["train", "--config", small_cfg("optim.lr = 1e300\n"), "--out", str(tmp_path)], capsys)
    assert code == 5 and "divergence" in err


# -- study ---------------------------------------------------------------------


def test_study_files(tmp_path, small_cfg, capsys):
    out = tmp_path / "study"
    code, _, _ = run(["study", "--config", small_cfg(), "--seeds", "1,2", "--out", str(out)], capsys)
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    reports = [n for n in names if n.startswith("report-")]
    assert len(reports) == 6
    assert set(names) - set(reports) == {"summary.csv", "pss_curves.svg"}
    for n in reports:
        formats.parse_report_csv((out / n).read_text())
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("#") and "0.25" in summary[0] and "0.42" in summary[0]
    assert "not reproducible" in summary[0]
    body = [line for line in summary if not line.startswith("#")]
    assert body[0] == cli.SUMMARY_HEADER
    assert [line.split(",")[0] for line in body[1:]] == ["Vanilla", "Cotrain", "SpatiallyGuided"]
    svg = (out / "pss_curves.svg").read_text()
    assert svg.count("<polyline") == 3
    assert 'viewBox="0 0 800 500"' in svg


def test_study_bad_seeds(tmp_path, small_cfg, capsys):
    code, _, _ = run(["study", "--config", small_cfg(), "--seeds", "a,b", "--out", str(tmp_path)], capsys)
    assert code == 2


# -- sweep ---------------------------------------------------------------------


def test_sweep_rows(tmp_path, small_cfg, capsys):
    code, _, _ = run(
        ["sweep", "--config", small_cfg(), "--ratios", "1:1,1:5,1:10,1:15,1:20", "--out", str(tmp_path)], capsys
    )
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "ratio,grounding_mse,action_mse,final_pss"
    assert [line.split(",")[0] for line in lines[1:]] == ["1:1", "1:5", "1:10", "1:15", "1:20"]


def test_single_ratio_sweep_matches_train(tmp_path, small_cfg, capsys):
    cfg = small_cfg()
    run(["sweep", "--config", cfg, "--ratios", "1:10", "--out", str(tmp_path / "s")], capsys)
    run(["train", "--config", cfg, "--out", str(tmp_path / "t")], capsys)
    row = (tmp_path / "s" / "sweep.csv").read_text().splitlines()[1].split(",")
    last = formats.parse_report_csv((tmp_path / "t" / "report.csv").read_text())[-1]
    assert float(row[1]) == last["grounding_mse"] and float(row[2]) == last["action_mse"]


@pytest.mark.parametrize("ratios", ["0:1", "1", "a:b", ""])
def test_sweep_bad_ratio(tmp_path, small_cfg, capsys, ratios):
    code, _, _ = run(["sweep", "--config", small_cfg(), "--ratios", ratios, "--out", str(tmp_path)], capsys)
    assert code == 2


# -- dump-probe-grads ----------------------------------------------------------


def test_dump_round_trip(tmp_path, small_cfg, capsys):
    from gradsub import cotrainer, synthtasks

    run(["train", "--config", small_cfg(), "--out", str(tmp_path)], capsys)
    ckpt = str(tmp_path / "final.ckpt")
    code, _, _ = run(["dump-probe-grads", ckpt, "--out", str(tmp_path / "d1")], capsys)
    assert code == 0
    run(["dump-probe-grads", ckpt, "--out", str(tmp_path / "d2")], capsys)
    for name in ("g_spat.grdm", "g_act.grdm"):
        data = (tmp_path / "d1" / name).read_bytes()
        assert data == (tmp_path / "d2" / name).read_bytes()
        assert formats.decode_grdm(data).shape == (8, 8)
    config, model = load_checkpoint(ckpt)
    dumped = [str(tmp_path / "d1" / n) for n in ("g_spat.grdm", "g_act.grdm")]
    _, out, _ = run(["pss", *dumped, "--tol", repr(config.probe.rank_tol)], capsys)
    probes = synthtasks.probe_batches(config.probe_seed, config.strategy.use_prompt, config.task)
    direct = cotrainer.probe_pss(model, probes, config.probe.param, tol=config.tol)
    assert abs(json.loads(out)["value"] - direct.pss) < 1e-12
    # the last report row probes the same final parameters
    last = formats.parse_report_csv((tmp_path / "report.csv").read_text())[-1]
    assert abs(json.loads(out)["value"] - last["pss"]) < 1e-12


def test_dump_bad_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"CKPX\x01\x00\x00\x00\x00\x00")
    code, _, err = run(["dump-probe-grads", str(bad), "--out", str(tmp_path)], capsys)
    assert code == 2 and "bad magic" in err


def test_usage_error_is_exit_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_svg_emitter_basics():
    from gradsub import svg

    text = svg.line_chart([("a", [0, 1, 2], [0.1, float("nan"), 0.3]), ("b<&>", [0, 2], [1, 0])])
    assert text.count("<polyline") == 2
    assert "b&lt;&amp;&gt;" in text
    assert len(re.findall(r"<text[^>]*text-anchor=\"middle\" font-size=\"11\"", text)) == 11

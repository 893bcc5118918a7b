import csv
import io
import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from cpwq import cli, config
from cpwq.errors import ConfigError, NoConvergence
from cpwq.resfit import evaluate_s21, ResonanceModel, write_trace

PAPER = Path(__file__).resolve().parent.parent / "configs" / "paper.json"


def raw_paper():
    return json.loads(PAPER.read_text())


def write_cfg(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def without_timestamp(text):
    doc = json.loads(text)
    doc.pop("generated_at")
    return doc


# -- extract -----------------------------------------------------------------

def test_extract_paper_impedances(capsys):
    code, out, _ = run(capsys, "extract", "--config", PAPER)
    assert code == 0
    res = json.loads(out)["results"]
    assert res["lines"]["Z_r"]["value"] == pytest.approx(50.22, rel=5e-3)
    assert res["lines"]["Z_f"]["value"] == pytest.approx(48.33, rel=5e-3)
    assert res["lines"]["Z_r"]["unit"] == "ohm"
    assert 0 < res["coupler"]["kappa"]["value"] < 0.2
    assert res["matrices"]["lc_residual"]["value"] < 1e-8


def test_every_number_carries_a_unit(capsys):
    _, out, _ = run(capsys, "qfactor", "--config", PAPER)

    def walk(node):
        if isinstance(node, dict):
            if "value" in node or "re" in node:
                assert "unit" in node
                return
            for v in node.values():
                walk(v)

    walk(json.loads(out)["results"])


def test_missing_field_exit_code_and_path(tmp_path, capsys):
    raw = raw_paper()
    del raw["materials"]["epsilon_eff"]
    code, out, err = run(capsys, "extract", "--config", write_cfg(tmp_path, raw))
    assert code == 2
    assert out == ""
    assert "materials" in err


def test_missing_length_reports_path(tmp_path):
    raw = raw_paper()
    del raw["lengths_um"]["l_o"]
    with pytest.raises(ConfigError) as err:
        config.parse(raw)
    assert err.value.path == "lengths_um.l_o"


def test_invalid_json_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "extract", "--config", bad)[0] == 2
    assert run(capsys, "extract", "--config", tmp_path / "nope.json")[0] == 2


def test_report_round_trip(tmp_path, capsys):
    first = tmp_path / "first.json"
    assert run(capsys, "qfactor", "--config", PAPER, "--out", first)[0] == 0
    # a report is itself a valid config document
    second = tmp_path / "second.json"
    assert run(capsys, "qfactor", "--config", first, "--out", second)[0] == 0
    assert without_timestamp(first.read_text()) == without_timestamp(second.read_text())


def test_csv_report(capsys):
    code, out, _ = run(capsys, "extract", "--config", PAPER, "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["field", "value", "unit"]
    fields = {r[0]: r for r in rows[1:]}
    assert float(fields["lines.Z_r"][1]) == pytest.approx(50.22, rel=5e-3)


# -- qfactor -----------------------------------------------------------------

def test_qfactor_side_by_side(capsys):
    code, out, _ = run(capsys, "qfactor", "--config", PAPER)
    assert code == 0
    res = json.loads(out)["results"]
    numeric = res["numeric_pole"]["Q_l"]["value"]
    closed = res["perturbative"]["matched_formula"]["Q_e"]["value"]
    assert closed == pytest.approx(numeric, rel=0.02)
    assert res["perturbative"]["Q_e"]["value"] == pytest.approx(closed, rel=1e-6)
    assert abs(res["agreement"]["Q_relative_deviation"]["value"]) < 0.02
    assert res["network"]["f_r0"]["value"] == pytest.approx(6.01e9, rel=2e-3)


def test_decoupled_q_is_null_with_flag(tmp_path, capsys):
    raw = raw_paper()
    raw["coupler_override"] = {"kappa": 0.0, "Z2": 50.0}
    raw["resonator_cpw"] = None
    code, out, _ = run(capsys, "qfactor", "--config", write_cfg(tmp_path, raw))
    assert code == 0
    res = json.loads(out)["results"]
    for q in (res["perturbative"]["Q_e"], res["numeric_pole"]["Q_l"]):
        assert q["value"] is None and q["flag"] == "infinite"


def test_mode_flag(capsys):
    _, out, _ = run(capsys, "qfactor", "--config", PAPER, "--mode", "2")
    res = json.loads(out)["results"]
    assert res["network"]["mode"] == 2
    assert res["network"]["f_r0"]["value"] == pytest.approx(3 * 6.0079e9, rel=1e-3)
    assert run(capsys, "qfactor", "--config", PAPER, "--mode", "0")[0] == 2


def test_numerical_failure_exit_code(monkeypatch, capsys):
    def fail(*a, **k):
        raise NoConvergence("forced")

    monkeypatch.setattr(cli, "find_pole", fail)
    code, _, err = run(capsys, "qfactor", "--config", PAPER)
    assert code == 3
    assert "forced" in err


# -- sweep -------------------------------------------------------------------

def small_sweep(tmp_path, count=3):
    raw = raw_paper()
    raw["sweep"] = {"parameter": "w3", "start": 2, "stop": 16, "count": count, "scale": "log"}
    return write_cfg(tmp_path, raw)


def test_sweep_csv_row_count(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--config", small_sweep(tmp_path, 4), "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][0] == "value"
    assert len(rows) == 1 + 4
    q = [float(r[rows[0].index("Q_l")]) for r in rows[1:]]
    assert all(a < b for a, b in zip(q, q[1:]))


def test_parallel_sweep_matches_serial(tmp_path, capsys):
    cfg = small_sweep(tmp_path)
    _, serial, _ = run(capsys, "sweep", "--config", cfg)
    _, parallel, _ = run(capsys, "sweep", "--config", cfg, "--parallel", "2")
    assert without_timestamp(serial) == without_timestamp(parallel)


def test_sweep_rejects_bad_parameter(tmp_path, capsys):
    raw = raw_paper()
    raw["sweep"]["parameter"] = "cross_section.widths_um[9]"
    assert run(capsys, "sweep", "--config", write_cfg(tmp_path, raw))[0] == 2
    assert run(capsys, "sweep", "--config", PAPER, "--parallel", "0")[0] == 2


def test_sweep_values():
    assert config.sweep_values({"start": 1, "stop": 128, "count": 8, "scale": "log"}) == pytest.approx(
        [1, 2, 4, 8, 16, 32, 64, 128]
    )
    assert config.sweep_values({"start": 0, "stop": 1, "count": 3, "scale": "linear"}) == pytest.approx(
        [0, 0.5, 1]
    )


def test_with_value_alias():
    raw = config.with_value(raw_paper(), "w3", 9.0)
    assert raw["cross_section"]["widths_um"] == [16, 9.0, 7]
    assert raw_paper()["cross_section"]["widths_um"][1] == 4
    assert config.with_value(raw_paper(), "lengths_um.l_o", 5)["lengths_um"]["l_o"] == 5


# -- spar --------------------------------------------------------------------

def test_spar_csv_and_fit(tmp_path, capsys):
    trace = tmp_path / "spar.csv"
    assert run(capsys, "spar", "--config", PAPER, "--format", "csv", "--out", trace)[0] == 0
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["f_Hz", "re_S21", "im_S21"]
    assert len(rows) == 1 + 401
    _, out, _ = run(capsys, "qfactor", "--config", PAPER)
    q_pole = json.loads(out)["results"]["numeric_pole"]["Q_l"]["value"]
    _, out, _ = run(capsys, "fit", trace)
    assert json.loads(out)["results"]["parameters"]["Q_l"]["value"] == pytest.approx(q_pole, rel=1e-2)


def test_spar_json_is_lossless(capsys):
    _, out, _ = run(capsys, "spar", "--config", PAPER)
    pts = json.loads(out)["results"]["points"]
    for p in pts[::40]:
        s11, s21 = complex(*p["S11"]), complex(*p["S21"])
        assert abs(s11) ** 2 + abs(s21) ** 2 == pytest.approx(1.0, abs=1e-6)


# -- fit ---------------------------------------------------------------------

def test_fit_bundled_trace(capsys):
    data = resources.files("cpwq") / "data"
    truth = json.loads((data / "synthetic_truth.json").read_text())["parameters"]
    with resources.as_file(data / "synthetic_trace.csv") as path:
        code, out, _ = run(capsys, "fit", path)
    assert code == 0
    got = json.loads(out)["results"]["parameters"]
    for k, v in truth.items():
        assert got[k]["value"] == pytest.approx(v, rel=1e-6), k


def test_fit_batch_directory(tmp_path, capsys):
    for k, Q in enumerate((5e3, 1e4, 2e4)):
        m = ResonanceModel(1.0, 0.0, 1e-8, 0.0, Q, 2 * Q, 6e9 + k * 1e8)
        f = np.linspace(m.f_r - 5 * m.f_r / Q, m.f_r + 5 * m.f_r / Q, 201)
        write_trace(tmp_path / f"t{k}.csv", f, evaluate_s21(m, f))
    code, out, _ = run(capsys, "fit", tmp_path)
    assert code == 0
    records = json.loads(out)["results"]
    assert [r["trace"] for r in records] == ["t0.csv", "t1.csv", "t2.csv"]
    assert [r["parameters"]["Q_l"]["value"] for r in records] == pytest.approx([5e3, 1e4, 2e4])
    code, out, _ = run(capsys, "fit", tmp_path, "--format", "csv")
    assert len(out.strip().splitlines()) == 1 + 3


def test_fit_malformed_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("f_Hz,re,im\n1e9,1,0\n2e9,x,0\n")
    code, _, err = run(capsys, "fit", bad)
    assert code == 2
    assert "bad.csv:3" in err

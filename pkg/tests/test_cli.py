import csv

import pytest

from pilotwave import acceptance, cli
from pilotwave.acceptance import Check
from pilotwave.integrate import NodeCollisionError

FIG1 = "experiment = sg\nalpha2 = 0.4\nbeta2 = 0.6\nz0 = 0.2\n"


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "f1.cfg"
    p.write_text(FIG1)
    return p


def test_run_prints_the_outcome(cfg, tmp_path, capsys):
    out, fig = tmp_path / "t.csv", tmp_path / "t.svg"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out), "--fig", str(fig)]) == 0
    text = capsys.readouterr().out
    assert "destination: upBeam" in text and "sigma_z: +1" in text
    assert "packetCapture" in text
    assert out.read_text().startswith("t,x,z,")
    assert fig.read_text().startswith("<svg")


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("alpha2=0.5\nbeta2=0.6\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_epr_figure_is_refused(tmp_path):
    p = tmp_path / "epr.cfg"
    p.write_text("experiment=epr alpha2=0.5 beta2=0.5\n")
    assert cli.main(["run", "--config", str(p), "--fig", str(tmp_path / "x.svg")]) == 2


def test_integration_failures_exit_1(cfg, monkeypatch):
    def boom(*a, **k):
        raise NodeCollisionError("trajectory reached a node")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["run", "--config", str(cfg)]) == 1


def test_ensemble(cfg, tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert cli.main(["ensemble", "--config", str(cfg), "--samples", "200", "--seed", "4",
                     "--out", str(out)]) == 0
    assert "up fraction" in capsys.readouterr().out
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["sample", "z0", "z_final", "beam"] and len(rows) == 201
    assert cli.main(["ensemble", "--config", str(cfg), "--samples", "0"]) == 2


def test_ghz(capsys):
    assert cli.main(["ghz", "--table"]) == 0
    text = capsys.readouterr().out
    assert "0 of 64" in text and "+1" in text and "-1" in text
    assert len(text.splitlines()) > 64


def test_verify_reports_failures(monkeypatch, capsys):
    monkeypatch.setattr(acceptance, "CHECKS", (lambda: Check(1, "ok", True, ""),
                                               lambda: Check(2, "bad", False, "")))
    assert cli.main(["verify"]) == 1
    text = capsys.readouterr().out
    assert "[PASS] 01" in text and "[FAIL] 02" in text and "1/2" in text

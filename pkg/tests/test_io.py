import csv
import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pilotwave.detectors import DetectorSpec
from pilotwave.integrate import IntegratorControls
from pilotwave.io import (ConfigError, FigureOptions, RunConfig, density_image, emit_csv,
                          emit_figure, parse_config, parse_run_config, region_tags,
                          serialize_config, table_rows)
from pilotwave.scenarios import ScenarioSpec, run, run_sg

FIG1 = """experiment = sg
alpha2 = 0.4  # up
beta2 = 0.6
z0 = 0.2
"""


def test_parse_worked_example():
    spec = parse_config(FIG1)
    assert spec == ScenarioSpec(experiment="sg", alpha2=0.4, beta2=0.6, z0=0.2)


def test_parse_accepts_compact_and_multi_key_lines():
    spec = parse_config("alpha2=0.5 beta2=0.5\nwavelength = 0.5 detector=spinFlip\n"
                        "experiment=interferometerWithDetector")
    assert spec.k == pytest.approx(4 * math.pi)
    assert spec.detector == DetectorSpec("spinFlip")


def test_empty_input_lists_required_keys():
    with pytest.raises(ConfigError, match="alpha2, beta2"):
        parse_config("")


def test_norm_error_names_the_line():
    with pytest.raises(ConfigError) as info:
        parse_config("alpha2=0.5\n\nbeta2=0.6\n")
    assert info.value.line == 3
    assert str(info.value).startswith("line 3:")


@pytest.mark.parametrize("text,line", [
    ("alpha2=0.5\nbeta2=0.5\ncolour=red\n", 3),
    ("alpha2=0.5\nbeta2=0.5\n\na = -1\n", 4),
    ("alpha2=0.5\nbeta2=0.5\nalpha2=0.5\n", 3),
    ("alpha2=0.5\nbeta2=0.5\nk=3 wavelength=2\n", 3),
    ("alpha2=half\nbeta2=0.5\n", 1),
    ("alpha2=0.5 beta2\n", 1),
])
def test_bad_lines_are_reported(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line


def test_inconsistent_values_become_config_errors():
    with pytest.raises(ConfigError):
        parse_config("alpha2=0.5 beta2=0.5 experiment=interferometerWithDetector")
    with pytest.raises(ConfigError):
        parse_config("alpha2=0.5 beta2=0.5 detector_b=5")


def test_run_config_output_keys():
    cfg = parse_run_config(FIG1 + "out = a.csv\nfig=b.svg resolution=50 compare_approx=yes\n")
    assert (cfg.out, cfg.fig, cfg.compare_approx) == ("a.csv", "b.svg", True)
    assert cfg.figure == FigureOptions(resolution=50)


detectors = st.one_of(st.none(), st.builds(
    DetectorSpec, st.sampled_from(["bohmianPosition", "spinFlip", "phaseFlip", "ringVelocity"]),
    arm=st.sampled_from(["upper", "lower"]), b=st.floats(2, 50), R=st.floats(0.1, 5),
    k_ring=st.floats(1, 100), mass_ratio=st.floats(0.1, 10)))


@st.composite
def specs(draw):
    a2 = draw(st.floats(0, 1))
    det = draw(detectors)
    exp = "interferometerWithDetector" if det else draw(
        st.sampled_from(["sg", "sgReversed", "emptyWave", "epr", "ghz"]))
    ctl = IntegratorControls(method=draw(st.sampled_from(["auto", "rk4Adaptive"])),
                             max_step=draw(st.floats(1e-3, 1)),
                             rel_tol=draw(st.floats(1e-12, 1e-3)))
    return ScenarioSpec(experiment=exp, alpha2=a2, beta2=1 - a2, phase=draw(st.floats(-3, 3)),
                        z0=draw(st.one_of(st.none(), st.floats(-0.5, 0.5))),
                        packet=draw(st.sampled_from(["rect", "gauss"])),
                        spin_mode=draw(st.sampled_from(["spinful", "spinless"])),
                        k=draw(st.floats(1, 100)), T=draw(st.floats(1, 5)),
                        seed=draw(st.integers(0, 2**31)), detector=det, controls=ctl)


@settings(max_examples=100, deadline=None)
@given(specs())
def test_serialisation_round_trips(spec):
    assert parse_config(serialize_config(spec)) == spec


def test_run_config_round_trips():
    cfg = RunConfig(ScenarioSpec(z0=0.1), "x.csv", None, FigureOptions(resolution=40), True)
    assert parse_run_config(serialize_config(cfg)) == cfg


def _read_csv(path):
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#event,")]
    events = [ln for ln in lines if ln.startswith("#event,")]
    return list(csv.reader(body)), events


def test_csv_tags_the_capture(tmp_path):
    res = run_sg(ScenarioSpec(alpha2=0.4, beta2=0.6, z0=0.2,
                              controls=IntegratorControls(sample_dt=0.005)))
    emit_csv(res, tmp_path / "f1.csv")
    rows, events = _read_csv(tmp_path / "f1.csv")
    header = rows[0]
    assert header[:3] == ["t", "x", "z"] and header[-1] == "region"
    assert {"w_up", "w_down"} <= set(header)
    tag = {float(r[0]): r[-1] for r in rows[1:]}
    assert tag[0.37] == "overlap"
    assert tag[0.375] == "post"
    assert any(",packetCapture," in e for e in events)


def test_csv_for_an_empty_run(tmp_path):
    res = run_sg(ScenarioSpec(t_end=0.0))
    emit_csv(res, tmp_path / "e.csv")
    rows, _ = _read_csv(tmp_path / "e.csv")
    assert len(rows) == 2


def test_ring_run_has_an_angle_column(tmp_path):
    res = run(ScenarioSpec(experiment="interferometerWithDetector",
                           detector=DetectorSpec("ringVelocity")))
    header, rows = table_rows(res)
    assert header[3] == "theta_tilde"
    # before the neutron exists its coordinate is blank
    assert rows[0][3] == "nan" and rows[-1][3] != "nan"


def test_epr_columns():
    header, _ = table_rows(run(ScenarioSpec(experiment="epr", z0=0.2, z2=-0.1)))
    assert header[2:4] == ["z", "z2"]


def test_csv_is_deterministic(tmp_path):
    spec = ScenarioSpec(experiment="interferometerWithDetector", spin_mode="spinless",
                        detector=DetectorSpec("phaseFlip"))
    emit_csv(run(spec), tmp_path / "a.csv")
    emit_csv(run(spec), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_region_tags_cover_each_phase():
    tags = region_tags(run(ScenarioSpec(experiment="emptyWave")).trajectory)
    # the split starts in full overlap, the arms ride apart, then recombine
    phases = [t for i, t in enumerate(tags) if i == 0 or tags[i - 1] != t]
    assert phases == ["overlap", "ride", "overlap", "post"]


def test_figure_structure(tmp_path):
    res = run(ScenarioSpec(experiment="emptyWave", spin_mode="spinless"), with_approx=True)
    emit_figure(res, tmp_path / "f.svg", FigureOptions(resolution=60))
    text = (tmp_path / "f.svg").read_text()
    assert "<image" in text and "data:image/png;base64," in text
    assert re.search(r'<polyline[^>]*class="trajectory"', text)
    assert re.search(r'<polyline[^>]*stroke-dasharray[^>]*class="approx"', text)


def test_blank_scenario_figure():
    res = run_sg(ScenarioSpec(alpha2=1.0, beta2=0.0, z0=0.1))
    img, tt, zz = density_image(res, FigureOptions(resolution=40))
    for col in img.T:
        band = col[col > 0]
        # a single box: flat shading of height a
        assert np.ptp(band) < 1e-12
        assert band.size * (zz[1] - zz[0]) == pytest.approx(1.0, abs=2 * (zz[1] - zz[0]))
    assert np.allclose(np.diff(res.trajectory.z) / np.diff(res.trajectory.t), 1.0)


def test_same_spin_lens_shows_fringes():
    res = run(ScenarioSpec(experiment="emptyWave", spin_mode="spinless"))
    img, tt, zz = density_image(res, FigureOptions(resolution=400))
    col = img[:, np.argmin(np.abs(tt))]
    inside = col[(zz > -0.45)[::-1] & (zz < 0.45)[::-1]]
    peaks = np.sum((inside[1:-1] > inside[:-2]) & (inside[1:-1] > inside[2:]))
    # fringe spacing is half the wavelength across a unit overlap
    assert peaks >= 5
    assert inside.min() < 0.3 * inside.max()

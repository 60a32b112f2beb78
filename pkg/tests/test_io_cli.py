import json

import numpy as np
import pytest

from fueterlab.cli import UsageError, main, parse_config_text
from fueterlab.fields3d import random_smooth_section
from fueterlab.fueter4d import Grid4, random_section4
from fueterlab.io import (
    FormatError,
    load_section,
    save_section,
    section_from_bytes,
    section_to_bytes,
    sphere_map_from_bytes,
    sphere_map_to_bytes,
    trajectory_from_bytes,
    trajectory_to_bytes,
)
from fueterlab.numerics import Grid3
from fueterlab.spheregrid import SphereGrid
from fueterlab.spheremaps import random_sphere_map
from fueterlab.targets import get_target

TN = get_target("taubnut")


# ---- binary formats ----------------------------------------------------------------

def test_section_round_trip_is_bitwise(tmp_path):
    s = random_smooth_section(Grid3(6), TN, 1)
    back = section_from_bytes(section_to_bytes(s))
    assert back.target.target_id == "taubnut"
    assert np.array_equal(back.values, s.values)
    assert np.array_equal(back.winding, s.winding)
    save_section(tmp_path / "s.fuet", s)
    assert np.array_equal(load_section(tmp_path / "s.fuet").values, s.values)


def test_four_dimensional_section_round_trip():
    s = random_section4(Grid4(4), get_target("flat"), 2)
    back = section_from_bytes(section_to_bytes(s))
    assert back.values.shape == (4, 4, 4, 4, 4)
    assert np.array_equal(back.values, s.values)


def test_sphere_map_round_trip():
    f = random_sphere_map(SphereGrid(8), TN, 3)
    back = sphere_map_from_bytes(sphere_map_to_bytes(f))
    assert np.array_equal(back.values, f.values)
    assert back.convention.tag == f.convention.tag
    assert back.grid.m == 8


def test_trajectory_round_trip():
    path = [random_smooth_section(Grid3(4), TN, k) for k in range(3)]
    slices, dt, t0 = trajectory_from_bytes(trajectory_to_bytes(path, 0.25, -1.0))
    assert (dt, t0) == (0.25, -1.0)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(slices, path))


def test_corrupt_payloads_are_rejected():
    blob = section_to_bytes(random_smooth_section(Grid3(4), TN, 0))
    with pytest.raises(FormatError):
        section_from_bytes(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError):
        section_from_bytes(blob[:-8])
    with pytest.raises(FormatError):
        section_from_bytes(blob[:10])
    with pytest.raises(FormatError):
        sphere_map_from_bytes(blob)
    traj = trajectory_to_bytes([random_smooth_section(Grid3(4), TN, 0)] * 2, 0.1)
    for bad in (traj[:-8], traj[:20], traj + b"\0"):
        with pytest.raises(FormatError):
            trajectory_from_bytes(bad)


# ---- command line ------------------------------------------------------------------

def test_config_text_parsing():
    cfg = parse_config_text("# header\nsuite = jets\n\ntol.jet = 1e-9  # inline\n")
    assert cfg == {"suite": "jets", "tol.jet": "1e-9"}
    with pytest.raises(UsageError):
        parse_config_text("suite jets")


def test_run_writes_manifest_and_artifacts(tmp_path, capsys):
    assert main(["run", "--suite", "jets", "--seed", "5", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    for key in ("config", "rng", "versions", "convention_table_version", "conventions",
                "checks", "failures", "artifacts", "timestamp"):
        assert key in man
    assert man["rng"]["seed"] == 5 and man["failures"] == []
    assert all((tmp_path / a).exists() for a in man["artifacts"])
    assert "PASS jets:" in capsys.readouterr().out


def test_failing_check_gives_exit_code_one(tmp_path):
    assert main(["run", "--suite", "jets", "--tol.jet=1e-300", "--out", str(tmp_path)]) == 1
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["failures"] and man["config"]["tolerances"]["jet"] == 1e-300


def test_config_file_and_environment(tmp_path, monkeypatch):
    conf = tmp_path / "run.conf"
    conf.write_text("suite.id = jets\nseed = 9\n")
    monkeypatch.setenv("FUETERLAB_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", str(conf)]) == 0
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert man["config"]["seed"] == 9


@pytest.mark.parametrize("argv", [
    ["run", "--suite", "nope"],
    ["run", "--suite", "jets", "--target", "k3"],
    ["run", "--suite", "jets", "--bogus.key", "1"],
    ["run", "--suite", "jets", "--convention.sphere", "sideways"],
    ["run"],
    ["describe", "nope"],
])
def test_usage_errors_exit_with_two(argv, tmp_path, monkeypatch):
    monkeypatch.setenv("FUETERLAB_OUT", str(tmp_path))
    assert main(argv) == 2


def test_describe_lists_every_suite(capsys):
    assert main(["describe", "all"]) == 0
    text = capsys.readouterr().out
    for suite in ("energy-identity-3d", "stokes", "twistor", "solve", "fueter4d"):
        assert suite in text

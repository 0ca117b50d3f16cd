import json

import numpy as np
import pytest

from tdsstab.benchmark_systems import OSCILLATOR_BLOCK, block_system, slow_plant, two_block_system, unstable_plant
from tdsstab.cli import (
    EXIT_DEGENERATE,
    EXIT_MISSING,
    EXIT_SCHEMA,
    EXIT_USAGE,
    EXIT_VALIDATION,
    SystemFile,
    dump_system,
    load_system,
    main,
)
from tdsstab.quasipoly import default_omega_max

SQRT3 = np.sqrt(3.0)


def _block_file(A1, A2):
    return {
        "n": len(A1),
        "terms": [
            {"delay": 0.0, "variable": False, "matrix": np.asarray(A1).tolist()},
            {"delay": 0.0, "variable": True, "matrix": np.asarray(A2).tolist()},
        ],
    }


def _plant_file(plant):
    return {
        "n": plant.n,
        "plant": {"A0": plant.A0.tolist(), "A1": plant.A1.tolist(), "h": plant.h, "B": plant.B.tolist()},
    }


def _run(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, out


def test_crossings(write_json, tmp_path):
    path = write_json("osc.json", _block_file(*OSCILLATOR_BLOCK))
    code, out = _run(["crossings", path, "--omega-max", "5", "--tau-max", "8"], tmp_path)
    report = json.loads(out.read_text())

    assert code == 0
    assert report["schema"] == 1
    assert report["command"] == "crossings"
    crossings = report["result"]["crossings"]
    np.testing.assert_allclose([c["omega"] for c in crossings], [1.0, SQRT3], atol=1e-8)
    assert [c["tendency"] for c in crossings] == [-1, 1]
    np.testing.assert_allclose(crossings[1]["delays"], 2 * np.pi / SQRT3 * np.arange(3), atol=1e-6)


def test_crossings_csv(write_json, tmp_path):
    path = write_json("osc.json", _block_file(*OSCILLATOR_BLOCK))
    code, out = _run(["crossings", path, "--omega-max", "5", "--format", "csv"], tmp_path, "out.csv")
    lines = out.read_text().splitlines()

    assert code == 0
    assert lines[0] == "omega,theta,tau_0,tau_1,tendency"
    assert len(lines) == 3


def test_stability_decomposes_degenerate_system(tmp_path):
    path = tmp_path / "two_block.json"
    dump_system(SystemFile(4, two_block_system()), str(path))
    code, out = _run(["stability", str(path), "--tau-max", "5"], tmp_path)
    report = json.loads(out.read_text())

    assert code == 0
    assert report["warnings"] == ["degenerate crossing at omega = 1; decomposed"]
    result = report["result"]
    assert result["decomposed"]
    assert result["residual"] < 1e-7
    assert [b["dim"] for b in result["blocks"]] == [2, 2]
    assert result["minimum"]["nu"] == 2
    np.testing.assert_allclose(result["minimum"]["intervals"], [[np.pi, 2 * np.pi / SQRT3]], atol=1e-6)


def test_stability_without_decomposition(tmp_path):
    path = tmp_path / "two_block.json"
    dump_system(SystemFile(4, two_block_system()), str(path))

    assert main(["stability", str(path), "--no-decompose"]) == EXIT_DEGENERATE


def test_design_place(write_json, tmp_path):
    path = write_json("slow.json", _plant_file(slow_plant()))
    code, out = _run(["design-place", path, "--tau", "0.1", "--pole=-0.3254+0.3254j"], tmp_path)
    design = json.loads(out.read_text())["result"]["design"]

    assert code == 0
    np.testing.assert_allclose(design["K"], [40.5925, -105.0352], rtol=1e-3)
    assert design["placed_poles"] == [[-0.3254, 0.3254], [-0.3254, -0.3254]]


def test_design_place_needs_complex_pole(write_json, tmp_path):
    path = write_json("slow.json", _plant_file(slow_plant()))
    assert main(["design-place", path, "--tau", "0.1", "--pole=-0.5"]) == EXIT_VALIDATION


def test_design_stabilize_csv(write_json, tmp_path):
    path = write_json("plant.json", _plant_file(unstable_plant()))
    code, out = _run(["design-stabilize", path, "--gain=1,-5", "--tau-max", "2", "--format", "csv"], tmp_path, "d.csv")
    lines = out.read_text().splitlines()

    assert code == 0
    assert lines[0] == "k1,k2,tau_lo,tau_hi"
    k1, k2, lo, hi = (float(v) for v in lines[1].split(","))
    assert (k1, k2) == (1.0, -5.0)
    np.testing.assert_allclose([lo, hi], [0.4540, 0.9469], atol=1e-3)


def test_check_controllable(write_json, tmp_path):
    path = write_json("plant.json", _plant_file(unstable_plant()))
    code, out = _run(["check-controllable", path, "--format", "csv"], tmp_path, "c.csv")

    assert code == 0
    assert out.read_text().splitlines() == ["controllable", "true"]


def test_roots(write_json, tmp_path):
    path = write_json("scalar.json", _block_file([[0.0]], [[-1.0]]))
    code, out = _run(["roots", path, "--tau", "1"], tmp_path)
    roots = json.loads(out.read_text())["result"]["roots"]

    assert code == 0
    np.testing.assert_allclose(roots[0], [-0.31813150520476, 1.33723570143069], atol=1e-8)


def test_simulate_closed_loop(write_json, tmp_path):
    path = write_json("plant.json", _plant_file(unstable_plant()))
    code, out = _run(
        ["simulate", path, "--gain=1,-5", "--tau", "0.7", "--t-end", "1", "--history", "const:1", "--format", "csv"],
        tmp_path,
        "sim.csv",
    )
    lines = out.read_text().splitlines()

    assert code == 0
    assert lines[0] == "t,x1,x2"
    assert lines[1] == "0.0,1.0,1.0"


def test_missing_file(tmp_path):
    assert main(["crossings", str(tmp_path / "nope.json")]) == EXIT_MISSING


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["crossings", str(path)]) == EXIT_SCHEMA


def test_missing_terms(write_json):
    assert main(["crossings", write_json("empty.json", {"n": 2})]) == EXIT_SCHEMA


def test_nan_entry(tmp_path):
    path = tmp_path / "nan.json"
    path.write_text(
        '{"n": 1, "terms": [{"delay": 0, "matrix": [[NaN]]}, {"delay": 0, "variable": true, "matrix": [[1]]}]}'
    )
    assert main(["crossings", str(path)]) == EXIT_VALIDATION


def test_two_undelayed_terms(write_json):
    data = {"n": 1, "terms": [{"delay": 0, "matrix": [[1]]}, {"delay": 0, "matrix": [[2]]}]}
    assert main(["crossings", write_json("two.json", data)]) == EXIT_VALIDATION


def test_malformed_pole_is_usage_error(write_json):
    path = write_json("slow.json", _plant_file(slow_plant()))
    with pytest.raises(SystemExit) as exc:
        main(["design-place", path, "--tau", "0.1", "--pole=abc"])
    assert exc.value.code == EXIT_USAGE


def test_malformed_gain_range_is_usage_error(write_json):
    path = write_json("plant.json", _plant_file(unstable_plant()))
    with pytest.raises(SystemExit) as exc:
        main(["design-stabilize", path, "--gain-range=1:0:3"])
    assert exc.value.code == EXIT_USAGE


def test_system_file_round_trip(tmp_path):
    sf = SystemFile(2, unstable_plant().to_system(), unstable_plant())
    path = tmp_path / "plant.json"
    dump_system(sf, str(path))
    loaded = load_system(str(path))

    np.testing.assert_array_equal(loaded.plant.A0, sf.plant.A0)
    assert loaded.plant.h == sf.plant.h
    assert [t.key for t in loaded.system.terms] == [t.key for t in sf.system.terms]
    np.testing.assert_array_equal(loaded.system.B, sf.system.B)


def test_load_plant_only(write_json):
    sf = load_system(write_json("plant.json", _plant_file(unstable_plant())))

    assert sf.n == 2
    assert sf.system.has_fixed_delays
    assert sf.plant.h == 3.2


def test_repeated_runs_are_byte_identical(write_json, tmp_path):
    path = write_json("osc.json", _block_file(*OSCILLATOR_BLOCK))
    argv = ["stability", path, "--tau-max", "5", "--omega-max", "5"]
    _, first = _run(argv, tmp_path, "first.json")
    _, second = _run(argv, tmp_path, "second.json")

    assert first.read_bytes() == second.read_bytes()


def test_config_echoes_effective_frequency_bound(write_json, tmp_path):
    path = write_json("osc.json", _block_file(*OSCILLATOR_BLOCK))
    _, out = _run(["stability", path, "--tau-max", "5"], tmp_path)
    report = json.loads(out.read_text())

    expected = default_omega_max(block_system(OSCILLATOR_BLOCK))
    assert report["config"]["omega_max"] == pytest.approx(expected)
    assert report["result"]["blocks"][0]["omega_max"] == pytest.approx(expected)


def test_directory_as_system_file(tmp_path):
    assert main(["crossings", str(tmp_path)]) == EXIT_MISSING

import json

import pytest

from sdlab.cli import compare, main, read_csv
from sdlab.config import config_from_dict, load_config
from sdlab.errors import ConfigError, SchemaMismatch

SHEAR = {"kind": "two_level_shear", "mu": 0.7, "gamma": 0.3}
SIN2 = {"name": "sin2_periodic", "period": 0.8}


def _write(tmp_path, name, cfg):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(tmp_path, name, cfg, *extra):
    out = tmp_path / f"out_{name}"
    code = main([cfg["experiment"], "--config", _write(tmp_path, name, cfg), "--out", str(out), *extra])
    return code, out


SMALL = {
    "upscale": {"experiment": "upscale", "deformation": SHEAR, "densities": [SIN2], "n_grid": [16, 64, 256],
                "r_grid": [0.1]},
    "localize": {"experiment": "localize", "deformation": SHEAR, "densities": [SIN2], "r_grid": [0.25, 0.05, 0.01],
                 "params": {"pad": 0.05, "boundary_layer": True}},
    "iterate": {"experiment": "iterate", "deformation": SHEAR, "densities": [SIN2], "n_grid": [64, 1024],
                "r_grid": [0.25, 0.015625]},
    "reversed": {"experiment": "reversed", "deformation": SHEAR, "densities": [SIN2], "n_grid": [8],
                 "r_grid": [0.01, 0.0001]},
    "crystal": {"experiment": "crystal", "params": {"rotations": 5, "generated": 5, "deformations": 2}, "seed": 3},
    "cell": {"experiment": "cell", "params": {"pairs": 4, "oracle_trials": 2000}, "seed": 2},
    "validate-density": {"experiment": "validate-density", "densities": ["abs", SIN2]},
}


@pytest.mark.parametrize("name", sorted(SMALL))
def test_each_subcommand_passes_and_writes_reports(tmp_path, name):
    code, out = _run(tmp_path, name, SMALL[name])
    assert code == 0
    stem = name.replace("-", "_")
    header, rows = read_csv(out / f"{stem}.csv")
    assert header and rows
    summary = json.loads((out / f"{stem}.json").read_text())
    assert summary["all_pass"] and summary["experiment"] == name


def test_failing_check_exits_two(tmp_path):
    cfg = dict(SMALL["upscale"], n_grid=[4, 8], checks={"rel_tol": 1e-14})
    code, out = _run(tmp_path, "strict", cfg)
    assert code == 2
    assert (out / "upscale.csv").exists()


def test_single_cell_problem(tmp_path):
    cfg = {"experiment": "cell", "params": {"A": [[3.0, 0.0], [0.0, 4.0]], "B": [[0.0, 0.0], [0.0, 0.0]]}}
    code, out = _run(tmp_path, "onecell", cfg)
    assert code == 0
    summary = json.loads((out / "cell.json").read_text())
    assert summary["info"]["mode"] == "exact"
    assert summary["info"]["value"] == pytest.approx(1.0 + 7.0)


@pytest.mark.parametrize("bad", [
    {"experiment": "upscale", "n_grid": [], "r_grid": [0.1]},
    {"experiment": "upscale", "n_grid": [16, 8, 32], "r_grid": [0.1]},
    {"experiment": "localize", "r_grid": [0.1], "quadrature": {"cells_per_radius": 2}},
    {"experiment": "crystal", "seed": 2 ** 64},
    {"experiment": "nope"},
    {"experiment": "upscale", "typo": 1},
])
def test_bad_configs_exit_one(tmp_path, bad):
    assert main([bad["experiment"] if bad["experiment"] in SMALL else "upscale", "--config",
                 _write(tmp_path, "bad", bad)]) == 1


def test_usage_errors_exit_one(tmp_path):
    assert main(["upscale"]) == 1
    assert main(["upscale", "--config", str(tmp_path / "missing.json")]) == 1
    # config for one experiment passed to another subcommand
    assert main(["localize", "--config", _write(tmp_path, "u", SMALL["upscale"])]) == 1


def test_shipped_bad_config_exits_one():
    import pathlib
    path = pathlib.Path(__file__).resolve().parent.parent / "configs" / "bad_empty_grid.json"
    assert main(["upscale", "--config", str(path)]) == 1


def test_same_seed_gives_identical_csv(tmp_path):
    cfg = SMALL["cell"]
    _, a = _run(tmp_path, "a", cfg)
    _, b = _run(tmp_path, "b", cfg)
    assert (a / "cell.csv").read_bytes() == (b / "cell.csv").read_bytes()
    _, c = _run(tmp_path, "c", cfg, "--seed", "99")
    assert (a / "cell.csv").read_bytes() != (c / "cell.csv").read_bytes()


def test_csv_format(tmp_path):
    _, out = _run(tmp_path, "fmt", SMALL["upscale"])
    raw = (out / "upscale.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    header, rows = read_csv(out / "upscale.csv")
    assert header == ["n", "r", "E_alpha_r", "I_alpha_r", "abs_err", "rel_err"]
    assert float(rows[0][2]) == float(repr(float(rows[0][2])))


def test_pad_choice_does_not_change_extended_energy(tmp_path):
    base = SMALL["localize"]
    _, a = _run(tmp_path, "p1", base)
    _, b = _run(tmp_path, "p2", dict(base, params={"pad": 0.3, "boundary_layer": True}))
    diff = compare(a / "localize.csv", b / "localize.csv")
    assert diff["I_extended"]["max_abs"] < 1e-6
    assert main(["compare", str(a / "localize.csv"), str(b / "localize.csv"), "--tol", "1e-6"]) == 0


def test_compare_reports_differences_for_other_density(tmp_path):
    base = SMALL["upscale"]
    _, a = _run(tmp_path, "d1", base)
    _, b = _run(tmp_path, "d2", dict(base, densities=[{"name": "sin2_periodic", "period": 0.5}]))
    diff = compare(a / "upscale.csv", b / "upscale.csv")
    assert diff["E_alpha_r"]["max_abs"] > 1e-3
    assert diff["n"]["max_abs"] == 0.0
    assert main(["compare", str(a / "upscale.csv"), str(b / "upscale.csv"), "--tol", "1e-6"]) == 2


def test_compare_schema_mismatch(tmp_path):
    _, a = _run(tmp_path, "s1", SMALL["upscale"])
    _, b = _run(tmp_path, "s2", SMALL["validate-density"])
    with pytest.raises(SchemaMismatch):
        compare(a / "upscale.csv", b / "validate_density.csv")
    assert main(["compare", str(a / "upscale.csv"), str(b / "validate_density.csv")]) == 1
    _, c = _run(tmp_path, "s3", dict(SMALL["upscale"], n_grid=[16, 64]))
    with pytest.raises(SchemaMismatch):
        compare(a / "upscale.csv", c / "upscale.csv")


def test_config_overrides_and_alias(tmp_path):
    cfg = config_from_dict({"experiment": "localize", "density": "abs", "r_grid": [0.1]}, seed=5, refine=1)
    assert cfg.densities == ["abs"] and cfg.seed == 5
    assert cfg.plan().cells_per_radius == 16
    with pytest.raises(ConfigError):
        config_from_dict({"n_grid": [1]})
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "neg", {"experiment": "localize", "r_grid": [-0.1]}))

import json

import numpy as np
import pytest

from emdcal import io
from emdcal.cli import main
from emdcal.experiments import ExperimentConfig, make_signal
from emdcal.errors import InputError
from emdcal.forward_ops import random_lio
from emdcal.grid_core import FluxField, GridFn, discrete_gradient_matrix


def write(tmp_path, name, g):
    p = tmp_path / name
    io.write_grid(g, p)
    return str(p)


def half_line(first):
    data = np.zeros(8)
    data[:4] = 2.0 if first else 0.0
    data[4:] = 0.0 if first else 2.0
    return GridFn(1, 8, 1.0, 1 / 8, data)


def test_emd_command(tmp_path, capsys):
    a = write(tmp_path, "a.json", half_line(True))
    b = write(tmp_path, "b.json", half_line(False))
    flux = tmp_path / "m.json"
    assert main(["emd", "--a", a, "--b", b, "--flux", str(flux)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.5, rel=1e-3)
    m = io.read_flux(flux)
    assert isinstance(m, FluxField) and m.ny == 8


def test_structure_command(tmp_path, capsys):
    g = GridFn(1, 8, 1.0, 1 / 8, np.r_[np.ones(4), -np.ones(4)])
    assert main(["structure", "--f", write(tmp_path, "f.json", g)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(0.25, rel=1e-3)


def test_bad_input_exit_codes(tmp_path, capsys):
    a = write(tmp_path, "a.json", half_line(True))
    neg = write(tmp_path, "n.json", GridFn(1, 8, 1.0, 1 / 8, -np.ones(8)))
    other = write(tmp_path, "o.json", GridFn(2, 4, 0.5, 0.25, np.ones(8)))
    assert main(["emd", "--a", a, "--b", neg]) == 2
    assert main(["emd", "--a", a, "--b", other]) == 2
    assert main(["emd", "--a", a, "--b", str(tmp_path / "missing.json")]) == 4
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["structure", "--f", str(bad)]) == 2
    assert main(["make-op", "--nx", "4", "--ny", "4"]) == 2
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"emd": {"bogus": 1}}))
    assert main(["structure", "--config", str(conf), "--f", a]) == 2
    err = capsys.readouterr().err
    assert "error" in err


def test_singular_inversion_exit_code(tmp_path):
    op = tmp_path / "op.json"
    io.write_op(np.zeros((4, 4)), op)
    b = write(tmp_path, "b.json", GridFn(2, 2, 0.5, 0.5, np.ones(4)))
    assert main(["invert", "--op", str(op), "--b", b, "--reg", "tikhonov", "--out", str(tmp_path / "u.json")]) == 3


def test_make_op_and_invert_roundtrip(tmp_path):
    op = tmp_path / "op.json"
    assert main(["make-op", "--nx", "8", "--ny", "10", "--seed", "4", "--out", str(op)]) == 0
    L = io.read_op(op)
    assert (L != random_lio(4, 8, 10)).nnz == 0
    u = make_signal("rings", 8)
    b = write(tmp_path, "b.json", GridFn(10, 10, 0.1, 0.1, L @ u.data))
    out = tmp_path / "u.json"
    assert main(["invert", "--op", str(op), "--b", b, "--reg", "tikhonov", "--lambda", "1e-10",
                 "--out", str(out)]) == 0
    rec = io.read_grid(out)
    assert np.allclose(rec.data, u.data, atol=1e-4)


def test_calibrate_command(tmp_path, capsys):
    ops = []
    for s in (1, 2):
        p = tmp_path / f"L{s}.json"
        io.write_op(random_lio(s, 8, 10), p)
        ops += ["--op", str(p)]
    out = tmp_path / "cal"
    assert main(["calibrate", *ops, "--theta-hat", "0", "--step", "0.5", "--snr", "25",
                 "--max-iter", "2000", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert set(summary["contrasts"]) == {"struc", "l1", "l2"}
    rows = io.read_table(out / "report.csv")
    assert [r["theta1"] for r in rows] == [0.0, 0.5, 1.0]
    assert main(["calibrate", "--op", ops[1], "--theta-hat", "0", "--out", str(out)]) == 2


def small_config(tmp_path, **kw):
    doc = {"nx": 8, "ny": 12, "exp3_nx": 8, "ny_list": [8, 12], "theta_step": 0.5,
           "exp1_probe_thetas": [0.5], "emd": {"max_iter": 1500},
           "study_emd": {"max_iter": 300, "tol": 1e-3}, "noise_ells": [1, 2], "noise_trials": 2,
           "noise_resolution": 8, "restriction_ells": [2, 3], "restriction_ell_max": 4}
    doc.update(kw)
    p = tmp_path / "conf.json"
    p.write_text(json.dumps(doc))
    return str(p)


@pytest.mark.parametrize("argv,expected", [
    (["experiment", "--id", "1"], "exp1_summary.csv"),
    (["experiment", "--id", "2"], "exp2_contrasts.csv"),
    (["experiment", "--id", "3"], "exp3_table.csv"),
    (["noise-scaling"], "noise_scaling.csv"),
    (["restriction-study"], "restriction_orders.csv"),
])
def test_experiment_commands(tmp_path, argv, expected, capsys):
    out = tmp_path / "run"
    assert main([*argv, "--config", small_config(tmp_path), "--seed", "5", "--out", str(out)]) == 0
    manifest = io.read_json(out / "manifest.json")
    assert expected in manifest["files"]
    assert manifest["config"]["operator_seed"] == 5
    for f in manifest["files"]:
        assert (out / f).exists()
    assert not (out / "FAILED").exists()


def test_experiment_is_reproducible(tmp_path):
    conf = small_config(tmp_path)
    for d in ("a", "b"):
        assert main(["experiment", "--id", "1", "--config", conf, "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a" / "exp1_report.csv").read_text() == (tmp_path / "b" / "exp1_report.csv").read_text()


def test_experiment_config_rejects_unknown_keys():
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"nx": 8, "colour": "red"})
    with pytest.raises(InputError):
        ExperimentConfig(experiment="9")


def test_ring_signal():
    u = make_signal("rings", 64)
    assert set(np.unique(u.data)) == {0.2, 1.0}
    v = u.values
    assert np.array_equal(v, v.T) and np.array_equal(v, v[::-1])
    # anisotropic total variation of three circles: jump * 8r each
    C = discrete_gradient_matrix(64, 64, 1 / 64, 1 / 64)
    tv = np.abs(C @ u.data).sum() / 64**2
    assert tv == pytest.approx(0.8 * 8 * (0.12 + 0.24 + 0.36), rel=0.05)
    with pytest.raises(InputError):
        make_signal("stars", 16)


def test_grid_io_roundtrip(tmp_path, rng):
    g = GridFn(3, 5, 0.2, 0.1, rng.standard_normal(15))
    io.write_grid(g, tmp_path / "g.json")
    assert io.read_grid(tmp_path / "g.json") == g
    rows = [{"a": 1, "b": 0.1 + 0.2, "c": True, "d": "x"}]
    io.write_table(rows, tmp_path / "t.csv")
    assert io.read_table(tmp_path / "t.csv") == rows

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emdcal.calibration import (
    DyadicNoiseSpec,
    NoiseModel,
    ThetaGrid,
    cell_averages,
    contrast,
    dyadic_noise,
    inject_noise,
    noise_bound,
    restriction_study,
    sweep,
)
from emdcal.emd_solver import EmdConfig
from emdcal.errors import InputError, NonPositiveValue, ResolutionMismatch, ZeroSignal
from emdcal.experiments import make_family, make_signal
from emdcal.grid_core import GridFn
from emdcal.inversion import InversionConfig


def grid(vals):
    vals = np.asarray(vals, dtype=float)
    return GridFn.from_array(vals, 1 / vals.shape[0], 1 / vals.shape[1])


@given(st.floats(0.5, 100), st.integers(0, 2**31))
def test_noise_hits_target_snr(snr, seed):
    b = grid(np.arange(1.0, 17.0).reshape(4, 4))
    noisy = inject_noise(b, NoiseModel(snr, seed))
    eta = noisy.data - b.data
    assert np.linalg.norm(b.data) / np.linalg.norm(eta) == pytest.approx(snr, rel=1e-12)


def test_noise_deterministic_and_seed_dependent():
    b = grid(np.ones((3, 3)))
    a1 = inject_noise(b, NoiseModel(5, 7)).data
    a2 = inject_noise(b, NoiseModel(5, 7)).data
    a3 = inject_noise(b, NoiseModel(5, 8)).data
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, a3)
    assert inject_noise(b, NoiseModel()) is b


def test_noise_errors():
    with pytest.raises(ZeroSignal):
        inject_noise(grid(np.zeros((2, 2))), NoiseModel(5))
    with pytest.raises(InputError):
        NoiseModel(0)
    with pytest.raises(InputError):
        NoiseModel(5, kind="pink")


def test_contrast():
    assert contrast([1.0, 3.0]) == pytest.approx(0.5)
    assert contrast([2.0, 2.0, 2.0]) == 0.0
    with pytest.raises(NonPositiveValue):
        contrast([0.0, 1.0])
    with pytest.raises(NonPositiveValue):
        contrast([])


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=20), st.floats(1e-3, 1e3))
def test_contrast_scale_invariant_and_bounded(v, c):
    k = contrast(v)
    assert 0 <= k < 1
    assert contrast(np.asarray(v) * c) == pytest.approx(k, abs=1e-12)


def test_theta_grid():
    g = ThetaGrid.uniform(0.25)
    assert g.axes == ((0.0, 0.25, 0.5, 0.75, 1.0),)
    assert len(ThetaGrid.uniform(0.5, 2).points()) == 9
    assert ThetaGrid.uniform(0.05).axes[0][1] == 0.05
    with pytest.raises(InputError):
        ThetaGrid.uniform(0.3)
    with pytest.raises(InputError):
        ThetaGrid(((0.5, 0.2),))
    with pytest.raises(InputError):
        ThetaGrid(((0.0, 1.5),))


def test_dyadic_noise_structure():
    spec = DyadicNoiseSpec(2, 2, 0.0, 1.0, seed=3)
    h = dyadic_noise(spec, 16)
    v = h.values
    blocks = v.reshape(4, 4, 4, 4)
    assert np.all(blocks == blocks[:, :1, :, :1])
    assert np.unique(v).size == 16
    with pytest.raises(ResolutionMismatch):
        dyadic_noise(spec, 6)
    one = dyadic_noise(DyadicNoiseSpec(1, 3, seed=1), 16)
    assert one.data.size == 16 and np.unique(one.data).size == 8


def test_dyadic_noise_moments():
    w = np.concatenate([dyadic_noise(DyadicNoiseSpec(2, 4, 0.5, 2.0, "uniform", s)).data for s in range(40)])
    assert w.mean() == pytest.approx(0.5, abs=0.1)
    assert w.std() == pytest.approx(2.0, rel=0.05)


def test_noise_bound():
    assert noise_bound(1) == 0.5
    assert noise_bound(3) == pytest.approx(-(1 / 8) * math.log2(1 / 8))


def test_cell_averages_exact_for_polynomials():
    g = cell_averages(lambda y1, y2: y1 * y2**2, 4)
    c = (np.arange(4) + 0.5) / 4
    exact = np.outer(c, c**2 + (1 / 4) ** 2 / 12)
    assert np.allclose(g.values, exact, atol=1e-14)


def test_restriction_constant_field_has_zero_structure():
    out = restriction_study("constant", range(2, 4), 4)
    assert out["reference"] == 0.0
    assert all(r["gap"] == 0.0 for r in out["rows"])
    with pytest.raises(InputError):
        restriction_study("ramp", range(2, 5), 4)


@pytest.fixture(scope="module")
def small_sweep():
    fam = make_family(1, 1, 8, 12)
    u = make_signal("rings", 8)
    nm = NoiseModel(25, 2)
    inv = InversionConfig()
    cfg = EmdConfig(max_iter=3000)
    return fam, u, nm, inv, cfg, sweep(fam, u, ThetaGrid.uniform(0.25), (0.0,), nm, inv, cfg, keep=[(0.0,)])


def test_sweep_report_shape(small_sweep):
    *_, rep = small_sweep
    assert len(rep.thetas) == 5 and rep.valid.all()
    assert set(rep.minimizers) == {"struc", "l1", "l2"}
    assert (0.0,) in rep.details
    assert rep.details["measurement_noisy"].data.size == 144
    rows = rep.rows()
    assert rows[0]["theta1"] == 0.0 and math.isnan(rows[0]["theta2"])
    assert rep.to_dict()["metadata"]["theta_hat"] == [0.0]


def test_sweep_deterministic_and_thread_independent(small_sweep):
    fam, u, nm, inv, cfg, rep = small_sweep
    again = sweep(fam, u, ThetaGrid.uniform(0.25), (0.0,), nm, inv, cfg, threads=2)
    for m in ("struc", "l1", "l2"):
        assert np.array_equal(rep.values(m), again.values(m))


def test_sweep_records_failures_as_invalid():
    fam = make_family(1, 1, 4, 6)
    rep = sweep(fam, grid(np.zeros((4, 4))), ThetaGrid.uniform(0.5), (0.0,), NoiseModel(),
                emd_cfg=EmdConfig(max_iter=200))
    # zero signal: every residual is zero, so structure is zero and contrasts are undefined
    assert rep.valid.all()
    assert math.isnan(rep.contrasts["l2"])
    with pytest.raises(InputError):
        sweep(fam, grid(np.zeros((4, 4))), ThetaGrid.uniform(0.5, 2), (0.0,), NoiseModel())
    with pytest.raises(InputError):
        sweep(fam, grid(np.zeros((5, 5))), ThetaGrid.uniform(0.5), (0.0,), NoiseModel())

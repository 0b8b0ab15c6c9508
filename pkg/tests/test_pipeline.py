import math

import numpy as np
import pytest

from spheredepth.cddc import DepthRange, bin_centers
from spheredepth.distfit import FitConfig
from spheredepth.pipeline import PipelineConfig, anchored_histogram, interior_mask, logits_for_widths, run_pipeline
from spheredepth.sphere_geom import ErpGeometry, make_layout
from spheredepth.synth import AxisBox, ConstantSphere, SceneSpec, VoronoiCells

R10 = DepthRange(0.0, 10.0)


def test_logits_for_widths_reproduce_widths(rng):
    widths = rng.uniform(0.1, 1.0, 12)
    widths *= 10 / widths.sum()
    hist = bin_centers(logits_for_widths(widths), R10)
    np.testing.assert_allclose(hist.widths, widths, rtol=1e-12)


@pytest.mark.parametrize("anchor", [0.01, 0.3, 3.14159, 5.0, 9.97])
def test_anchored_histogram_hits_anchor(anchor):
    hist = anchored_histogram(anchor, 100, R10)
    assert hist.bins == 100
    assert np.min(np.abs(hist.centers - anchor)) < 1e-12


def test_anchored_histogram_rejects_edges():
    with pytest.raises(ValueError):
        anchored_histogram(0.0, 10, R10)


def test_voronoi_fixture_exact_on_interiors():
    layout = make_layout(18)
    depths = tuple(np.random.default_rng(2).uniform(0.5, 9.5, 18))
    result = run_pipeline(SceneSpec(VoronoiCells(layout, depths), R10, seed=2), ErpGeometry(128, 256), layout)
    interior = result.interior
    assert interior.mean() > 0.5
    np.testing.assert_allclose(result.regional[interior], result.gt[interior], atol=1e-9)
    assert set(result.reports) == {"holistic", "regional", "fused"}


def test_interior_mask_excludes_borders():
    layout = make_layout(18)
    # the margin is four feature pixels, so the interior grows with resolution
    fractions = []
    for height in (64, 128, 256):
        geom = ErpGeometry.from_height(height)
        fractions.append(interior_mask(layout, geom, geom.halved()).mean())
    assert 0 < fractions[0] < fractions[1] < fractions[2] < 1


def test_constant_scene_gives_constant_maps():
    result = run_pipeline(SceneSpec(ConstantSphere(4.0), R10), ErpGeometry(32, 64), make_layout(18))
    for d in (result.holistic, result.regional, result.fused):
        assert np.ptp(d) == 0.0
    assert abs(result.holistic[0, 0] - 4.0) <= 0.05


def test_holistic_quantization_bound():
    result = run_pipeline(SceneSpec(AxisBox((2.0, 3.0, 1.5)), R10), ErpGeometry(32, 64), make_layout(18))
    assert np.max(np.abs(result.holistic - result.gt)) <= result.holistic_hist.widths.max() / 2 + 1e-12


def test_random_mode_is_seeded():
    spec = SceneSpec(AxisBox((2.0, 3.0, 1.5)), R10, seed=5)
    cfg = PipelineConfig(mode="random", bins=16, c1=8, c2=4)
    a = run_pipeline(spec, ErpGeometry(16, 32), make_layout(18), cfg)
    b = run_pipeline(spec, ErpGeometry(16, 32), make_layout(18), cfg)
    np.testing.assert_array_equal(a.fused, b.fused)
    assert np.all((a.fused > 0) & (a.fused < 10))
    c = run_pipeline(SceneSpec(spec.scene, R10, seed=6), ErpGeometry(16, 32), make_layout(18), cfg)
    assert not np.array_equal(a.fused, c.fused)


def test_fitted_holistic_bins():
    spec = SceneSpec(AxisBox((2.0, 3.0, 1.5)), R10)
    cfg = PipelineConfig(bins=20, holistic_bins="fit", fit=FitConfig(bins=20, steps=30))
    result = run_pipeline(spec, ErpGeometry(16, 32), make_layout(18), cfg)
    assert result.holistic_hist.bins == 20
    assert math.isfinite(result.loss)


def test_unknown_modes():
    spec = SceneSpec(ConstantSphere(2.0), R10)
    with pytest.raises(ValueError):
        run_pipeline(spec, ErpGeometry(16, 32), make_layout(18), PipelineConfig(mode="magic"))
    with pytest.raises(ValueError):
        run_pipeline(spec, ErpGeometry(16, 32), make_layout(18), PipelineConfig(holistic_bins="magic"))

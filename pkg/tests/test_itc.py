import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from vap.core import GistPrediction, Kind, ScenePrediction
from vap.itc import FusionParams, correction, decide, fuse, r_magnitude, r_sign

mp.mp.dps = 40
MU, SIGMA, B, C = mp.mpf(1) / 5, mp.mpf(1) / 3, mp.mpf(10), mp.mpf(1) / 8
unit = st.floats(0.0, 1.0)


def mag_ref(p):
    return mp.exp(-((mp.mpf(p) - MU) ** 2) / (2 * SIGMA ** 2))


def sign_ref(p):
    return mp.tanh(B * (mp.mpf(p) - C))


class TestScalars:
    def test_magnitude_peak(self):
        assert r_magnitude(0.2) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("k, expected", [(1, 0.606531), (2, 0.135335)])
    def test_magnitude_at_sigma_multiples(self, k, expected):
        p = float(MU + k * SIGMA)
        assert abs(float(r_magnitude(p)) - float(mag_ref(MU + k * SIGMA))) < 1e-12
        assert abs(float(r_magnitude(p)) - expected) < 1e-6

    @pytest.mark.parametrize("p, expected", [(0.125, 0.0), (0.0, -0.848284), (0.625, 0.999909)])
    def test_sign(self, p, expected):
        assert abs(float(r_sign(p)) - float(sign_ref(p))) < 1e-12
        assert abs(float(r_sign(p)) - expected) < 1e-6

    def test_correction_composition(self):
        ref = mp.mpf("0.8") * mag_ref("0.2") * sign_ref("0.625")
        assert abs(float(correction(0.8, 0.2, 0.625)) - float(ref)) < 1e-12
        assert abs(float(correction(0.8, 0.2, 0.625)) - 0.799927) < 1e-5

    @given(unit, unit)
    def test_correction_zero_cases(self, conf, p):
        assert correction(conf, p, 0.125) == 0.0
        assert correction(0.0, p, conf) == 0.0

    @given(st.floats(0.0, 0.4))
    def test_magnitude_symmetric_about_mu(self, d):
        assert float(r_magnitude(0.2 + d)) == pytest.approx(float(r_magnitude(0.2 - d)), rel=1e-12)

    @given(unit, unit)
    def test_sign_increasing_and_odd(self, x, y):
        if x < y:
            assert r_sign(x) < r_sign(y) or np.isclose(r_sign(x), r_sign(y))
        assert float(r_sign(0.125 + x / 4)) == pytest.approx(-float(r_sign(0.125 - x / 4)), abs=1e-15)

    @given(unit)
    def test_magnitude_range(self, p):
        assert 0.0 < r_magnitude(p) <= 1.0

    def test_params_validated(self):
        with pytest.raises(ValueError):
            FusionParams(c=1.5)
        with pytest.raises(ValueError):
            FusionParams(sigma=0)


def scene(conf, prior):
    return ScenePrediction(0, conf), np.asarray(prior, dtype=float)


class TestFuse:
    def test_silenced_pathways_are_identity(self, catalog):
        rng = np.random.default_rng(0)
        p = rng.uniform(size=len(catalog))
        fused = fuse(p, scene(0.0, rng.uniform(size=len(catalog))), GistPrediction(Kind.NATURAL, 0.0), FusionParams(),
                     catalog)
        assert np.array_equal(fused.corrected, p)
        assert fused.argmax == int(np.argmax(p))

    def test_disabled_pathways_are_identity(self, catalog):
        p = np.linspace(0, 1, len(catalog))
        fused = fuse(p, None, None, FusionParams(), catalog)
        assert np.array_equal(fused.corrected, p) and fused.label == len(catalog) - 1

    def test_car_boat_ambiguity(self, catalog):
        car, boat = catalog.index("car"), catalog.index("boat")
        p = np.zeros(len(catalog))
        p[[car, boat]] = 0.3
        prior = np.full(len(catalog), 0.01)
        prior[car] = 0.625
        fused = fuse(p, scene(1.0, prior), None, FusionParams(), catalog)
        expected = mag_ref("0.3") * (mp.tanh(5) - mp.tanh(mp.mpf("-1.15")))
        # the gap holds before clipping; clipping then pins car at 1 and boat at 0
        gap = (p[car] + fused.scene_correction[car]) - (p[boat] + fused.scene_correction[boat])
        assert gap == pytest.approx(float(expected), abs=1e-12)
        assert (fused.corrected[car], fused.corrected[boat]) == (1.0, 0.0)
        assert fused.argmax == car

    def test_confident_scores_move_little(self, catalog):
        car = catalog.index("car")
        p = np.zeros(len(catalog))
        p[car] = 0.99
        prior = np.zeros(len(catalog))  # the most negative correction possible
        fused = fuse(p, scene(1.0, prior), None, FusionParams(), catalog)
        bound = float(mp.exp(-(mp.mpf("0.79") ** 2) / (mp.mpf(2) / 9)))
        assert abs(fused.corrected[car] - 0.99) <= float(r_magnitude(0.99)) <= bound + 1e-12
        assert bound == pytest.approx(0.060298, abs=1e-6)

    def test_gist_pathway_uses_kind_agreement(self, catalog):
        p = np.full(len(catalog), 0.2)
        fused = fuse(p, None, GistPrediction(Kind.NATURAL, 0.9), FusionParams(), catalog)
        dog, car = catalog.index("dog"), catalog.index("car")
        assert fused.gist_correction[dog] == pytest.approx(0.9 * float(sign_ref("0.9")))
        assert fused.gist_correction[car] == pytest.approx(0.9 * float(sign_ref("0.1")))

    def test_threshold_withholds_label(self, catalog):
        fused = fuse(np.full(len(catalog), 0.3), None, None, FusionParams(), catalog)
        assert fused.label is None and fused.confidence == pytest.approx(0.3)

    def test_length_mismatch(self, catalog):
        with pytest.raises(ValueError):
            fuse(np.zeros(3), None, None, FusionParams(), catalog)

    def test_ties_after_clipping_follow_bottom_up(self):
        label, conf = decide(np.array([1.0, 1.0, 0.2]), np.array([0.1, 0.6, 0.2]), 0.5)
        assert (label, conf) == (1, 1.0)

    @given(st.lists(unit, min_size=25, max_size=25), st.lists(unit, min_size=25, max_size=25), unit, unit,
           st.booleans())
    def test_bounds(self, p, prior, sconf, gconf, natural):
        from vap.core import CategoryCatalog
        catalog = CategoryCatalog.default()
        p = np.array(p)
        g = GistPrediction(Kind.NATURAL if natural else Kind.MAN_MADE, gconf)
        fused = fuse(p, scene(sconf, prior), g, FusionParams(), catalog)
        assert np.all((fused.corrected >= 0) & (fused.corrected <= 1))
        assert np.all(np.abs(fused.corrected - p) <= 2.0 + 1e-12)
        assert np.all(np.abs(fused.scene_correction) <= sconf + 1e-12)

    @given(st.lists(unit, min_size=25, max_size=25), st.lists(unit, min_size=25, max_size=25),
           st.integers(0, 24), st.floats(0.0, 0.5), unit)
    def test_monotone_in_prior(self, p, prior, i, bump, sconf):
        from vap.core import CategoryCatalog
        catalog = CategoryCatalog.default()
        prior = np.array(prior)
        higher = prior.copy()
        higher[i] = min(1.0, higher[i] + bump)
        lo = fuse(np.array(p), scene(sconf, prior), None, FusionParams(), catalog)
        hi = fuse(np.array(p), scene(sconf, higher), None, FusionParams(), catalog)
        assert hi.corrected[i] >= lo.corrected[i]

"""
Tests for bladder phantoms, the medium, the patch and fill profiles.
Run with: pytest tests/test_phantom.py -v
"""

import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import ParameterError, ProfileRangeError
from app.sim.phantom import (
    BladderPhantom,
    MicturitionProfile,
    TissueMedium,
    TransducerArray,
    TransducerElement,
    phantom_volume,
    profile_volume_at,
    sphere_radius_for_volume,
    wall_intersections,
)


def single_element(x: float = 0.0, y: float = 0.0, direction=(0.0, 0.0, 1.0)) -> TransducerArray:
    """Array whose element 1 sits at (x, y); the others are far off to the side."""
    elements = [TransducerElement(id=1, position=(x, y), beam_direction=direction)]
    elements += [TransducerElement(id=i, position=(140.0, 140.0)) for i in (2, 3, 4)]
    return TransducerArray(elements=tuple(elements), patch_extent=(300.0, 300.0))


class TestWallIntersections:
    """Test per-beam wall depth queries."""

    def test_on_axis_sphere(self):
        """Ray through the center of a sphere at (0,0,60) r=40 hits at 20 and 100 mm."""
        depths = wall_intersections(single_element(), BladderPhantom.sphere((0, 0, 60), 40), TissueMedium())
        assert depths[1].anterior == pytest.approx(20.0)
        assert depths[1].posterior == pytest.approx(100.0)

    def test_offset_ray_misses(self):
        """A ray 50 mm off axis misses a 40 mm sphere."""
        depths = wall_intersections(single_element(x=50.0), BladderPhantom.sphere((0, 0, 60), 40), TissueMedium())
        assert depths[1] is None

    def test_on_axis_ellipsoid(self):
        """Ellipsoid (40,30,25) at (0,0,50) gives walls at 25 and 75 mm on axis."""
        phantom = BladderPhantom.ellipsoid((0, 0, 50), (40, 30, 25))
        depths = wall_intersections(single_element(), phantom, TissueMedium())
        assert depths[1].anterior == pytest.approx(25.0)
        assert depths[1].posterior == pytest.approx(75.0)

    def test_tangent_ray_is_a_miss(self):
        """A ray grazing the sphere (one intersection) counts as a miss."""
        depths = wall_intersections(single_element(x=40.0), BladderPhantom.sphere((0, 0, 60), 40), TissueMedium())
        assert depths[1] is None

    def test_element_inside_phantom_is_a_miss(self):
        """An element inside the phantom sees no anterior wall."""
        depths = wall_intersections(single_element(), BladderPhantom.sphere((0, 0, 10), 40), TissueMedium())
        assert depths[1] is None

    def test_chord_equals_diameter_on_axis(self):
        """Posterior minus anterior is 2r for on-axis rays through random spheres."""
        rng = np.random.default_rng(3)
        for _ in range(50):
            r = rng.uniform(10, 60)
            phantom = BladderPhantom.sphere((0, 0, r + rng.uniform(1, 30)), r)
            d = wall_intersections(single_element(), phantom, TissueMedium())[1]
            assert d.posterior - d.anterior == pytest.approx(2 * r, rel=1e-12)

    def test_joint_translation_invariance(self):
        """Moving phantom and patch together leaves all depths unchanged."""
        array = TransducerArray.default_grid()
        phantom = BladderPhantom.ellipsoid((3, -2, 55), (45, 35, 30))
        before = wall_intersections(array, phantom, TissueMedium())
        offset = (12.5, -40.0, 7.25)
        after = wall_intersections(array.translated(offset), phantom.translated(offset), TissueMedium())
        for i in (1, 2, 3, 4):
            assert after[i].anterior == pytest.approx(before[i].anterior, rel=1e-12)
            assert after[i].posterior == pytest.approx(before[i].posterior, rel=1e-12)

    def test_tilted_beam(self):
        """A beam tilted toward the center still meets the sphere along its direction."""
        direction = (-0.2, 0.0, 1.0)
        depths = wall_intersections(single_element(x=10.0, direction=direction), BladderPhantom.sphere((0, 0, 50), 20), TissueMedium())
        d = np.array(direction) / np.linalg.norm(direction)
        hit = np.array([10.0, 0.0, 0.0]) + depths[1].anterior * d
        assert np.linalg.norm(hit - np.array([0, 0, 50])) == pytest.approx(20.0)

    def test_flask_neck_does_not_shadow_body(self):
        """On-axis beams see the body walls; the neck behind the body extends the posterior wall."""
        phantom = BladderPhantom.flask_from_volume(250.0, center=(0, 0, 60))
        r = phantom.shape.radius
        side = single_element(x=0.5 * r)
        d = wall_intersections(side, phantom, TissueMedium())[1]
        chord = 2 * math.sqrt(r ** 2 - (0.5 * r) ** 2)
        assert d.posterior - d.anterior == pytest.approx(chord)
        axial = wall_intersections(single_element(), phantom, TissueMedium())[1]
        assert axial.anterior == pytest.approx(60 - r)
        assert axial.posterior == pytest.approx(60 + math.sqrt(r ** 2 - 100.0) + 30.0)

    def test_shallow_wall_warns(self, caplog):
        """A wall inside the pre-wall layer is reported."""
        with caplog.at_level(logging.WARNING, logger="app.sim.phantom"):
            wall_intersections(single_element(), BladderPhantom.sphere((0, 0, 50), 40), TissueMedium())
        assert "pre-wall layer" in caplog.text


class TestVolumes:
    """Test analytic phantom volumes."""

    def test_sphere_250(self):
        assert phantom_volume(BladderPhantom.sphere((0, 0, 60), 39.08)) == pytest.approx(250.0, abs=0.1)

    def test_unit_ellipsoid(self):
        assert phantom_volume(BladderPhantom.ellipsoid((0, 0, 50), (10, 10, 10))) == pytest.approx(4.19, abs=0.01)

    def test_zero_radius_rejected(self):
        with pytest.raises(ValidationError):
            BladderPhantom.sphere((0, 0, 60), 0.0)

    def test_sphere_formula(self):
        for r in (1.0, 17.3, 62.04):
            assert phantom_volume(BladderPhantom.sphere((0, 0, 100), r)) == pytest.approx(4 / 3 * math.pi * r ** 3 / 1000, rel=1e-12)

    @pytest.mark.parametrize("volume", [20.0, 84.0, 250.0, 800.0])
    def test_sphere_from_volume_round_trip(self, volume):
        assert BladderPhantom.sphere_from_volume(volume).volume_ml() == pytest.approx(volume, rel=1e-9)

    @pytest.mark.parametrize("volume", [250.0, 500.0])
    def test_flask_nominal_volume(self, volume):
        """A flask built for a nominal volume holds it in body plus neck."""
        flask = BladderPhantom.flask_from_volume(volume)
        assert flask.volume_ml() == pytest.approx(volume, rel=1e-9)
        assert flask.shape.neck_radius == 10.0

    def test_anchored_sphere_touches_pre_wall_depth(self):
        medium = TissueMedium.abdominal()
        phantom = BladderPhantom.anchored(300.0, medium)
        assert phantom.shape.center[2] - phantom.shape.radius == pytest.approx(medium.pre_wall_offset)

    def test_bounding_diameters(self):
        assert BladderPhantom.ellipsoid((0, 0, 60), (50, 40, 30)).bounding_diameters_cm() == pytest.approx((10, 8, 6))


class TestMediumAndArray:
    """Test medium and patch validation."""

    def test_medium_defaults(self):
        medium = TissueMedium()
        assert (medium.speed_of_sound, medium.attenuation_coeff, medium.pre_wall_offset) == (1480.0, 0.3, 15.0)

    def test_negative_attenuation_rejected(self):
        with pytest.raises(ValidationError):
            TissueMedium(attenuation_coeff=-0.1)

    def test_default_grid(self):
        array = TransducerArray.default_grid()
        assert sorted(e.id for e in array.elements) == [1, 2, 3, 4]
        assert {e.position for e in array.elements} == {(-7.5, 7.5), (7.5, 7.5), (7.5, -7.5), (-7.5, -7.5)}

    def test_duplicate_ids_rejected(self):
        elements = tuple(TransducerElement(id=1, position=(0, 0)) for _ in range(4))
        with pytest.raises(ValidationError):
            TransducerArray(elements=elements)

    def test_element_outside_patch_rejected(self):
        elements = tuple(TransducerElement(id=i, position=(20.0 * i, 0)) for i in (1, 2, 3, 4))
        with pytest.raises(ValidationError):
            TransducerArray(elements=elements)

    def test_beam_direction_normalized(self):
        assert TransducerElement(id=1, position=(0, 0), beam_direction=(0, 0, 5)).beam_direction == (0, 0, 1)


class TestMicturitionProfile:
    """Test fill profile interpolation."""

    def test_midpoint(self):
        profile = MicturitionProfile.linear_fill(0.0, 400.0, 240.0)
        assert profile_volume_at(profile, 120.0) == pytest.approx(200.0)

    def test_endpoint(self):
        profile = MicturitionProfile.linear_fill(0.0, 400.0, 240.0)
        assert profile_volume_at(profile, 0.0) == 0.0

    def test_piecewise(self):
        profile = MicturitionProfile(samples=((0, 50), (30, 80), (60, 140)))
        assert profile.volume_at(45.0) == pytest.approx(110.0)

    def test_out_of_range(self):
        profile = MicturitionProfile.linear_fill(0.0, 400.0, 240.0)
        with pytest.raises(ProfileRangeError):
            profile_volume_at(profile, 241.0)

    def test_unordered_times_rejected(self):
        with pytest.raises(ValidationError):
            MicturitionProfile(samples=((0, 10), (0, 20)))

    def test_phantom_at(self):
        profile = MicturitionProfile.linear_fill(20.0, 400.0, 240.0)
        assert profile.phantom_at(120.0, TissueMedium()).volume_ml() == pytest.approx(210.0)

    def test_empty_bladder_has_no_phantom(self):
        profile = MicturitionProfile.linear_fill(0.0, 400.0, 240.0)
        assert profile.phantom_at(0.0, TissueMedium()) is None
        assert profile.phantom_at(30.0, TissueMedium()).volume_ml() == pytest.approx(50.0)

    def test_fill_then_void(self):
        profile = MicturitionProfile.linear_fill(20.0, 400.0, 240.0, void_residual_ml=20.0, void_duration_min=2.0)
        assert profile.samples == ((0.0, 20.0), (240.0, 400.0), (242.0, 20.0))
        assert profile.end == 242.0
        assert profile_volume_at(profile, 241.0) == pytest.approx(210.0)
        assert profile_volume_at(profile, 242.0) == pytest.approx(20.0)

    def test_void_after_a_hold(self):
        profile = MicturitionProfile.linear_fill(20.0, 400.0, 240.0).with_void(250.0, 0.0, 5.0)
        assert profile_volume_at(profile, 245.0) == pytest.approx(400.0)
        assert profile_volume_at(profile, 252.5) == pytest.approx(200.0)
        assert profile_volume_at(profile, 255.0) == 0.0
        assert profile.phantom_at(255.0, TissueMedium()) is None

    @pytest.mark.parametrize("t_min,residual,duration", [(100.0, 10.0, 1.0), (240.0, 500.0, 1.0), (240.0, 10.0, 0.0)])
    def test_invalid_void(self, t_min, residual, duration):
        profile = MicturitionProfile.linear_fill(20.0, 400.0, 240.0)
        with pytest.raises(ParameterError):
            profile.with_void(t_min, residual, duration)

    def test_radius_for_volume(self):
        assert sphere_radius_for_volume(1000.0) == pytest.approx(62.04, abs=0.01)

import math

import numpy as np
import pytest

from nhimld.models import ModelError
from nhimld.slices import (EmptySliceError, EnergySpec, SliceSpec, grid_states, momentum_on_shell, onshell_window,
                           shell_states, state_on_shell)


class TestSliceSpec:
    def test_partition_required(self):
        with pytest.raises(ModelError):
            SliceSpec(2, {1: 0.0}, (0, 2), ((0, 1), (0, 1)), 1)
        with pytest.raises(ModelError):
            SliceSpec(2, {1: 0.0, 3: 0.0}, (0, 2), ((0, 1), (0, 1)), 3)

    def test_strict_sign(self):
        with pytest.raises(ModelError):
            SliceSpec(2, {1: 0.0}, (0, 2), ((0, 1), (0, 1)), 3, sign=0)

    def test_empty_window(self):
        with pytest.raises(ModelError):
            SliceSpec.uxpx_2dof(0.0, (1.0, 1.0))

    def test_dict_round_trip(self, model3):
        for slc in (SliceSpec.uxpx_2dof(-7.1, (4.0, 7.0), (-1.0, 1.0)),
                    SliceSpec.bottleneck_3dof(model3, "z", ((1.0, 4.0), (-1.0, 1.0)))):
            assert SliceSpec.from_dict(slc.to_dict()) == slc

    def test_labels_and_event(self):
        slc = SliceSpec.uxpx_2dof(-7.0)
        assert slc.labels() == ("x", "px")
        ev = slc.section_event()
        assert (ev.coordinate, ev.value, ev.direction) == (1, -7.0, 1)


class TestMomentum:
    def test_harmonic_value(self, model2):
        # at y = 0 the potential is x^2 / 2
        slc = SliceSpec.uxpx_2dof(0.0)
        assert momentum_on_shell(model2, slc, (0.0, 0.0), 0.125) == pytest.approx(0.5, abs=1e-15)

    def test_off_shell_is_none(self, model2):
        slc = SliceSpec.uxpx_2dof(0.0)
        assert momentum_on_shell(model2, slc, (10.0, 0.0), 1.0) is None
        # zero radicand is excluded by the strict sign condition
        assert momentum_on_shell(model2, slc, (0.0, math.sqrt(2.0)), 1.0) is None

    def test_reconstruction_exact(self, model2, model3, rng):
        for m, slc, e in ((model2, SliceSpec.uxpx_2dof(-7.1), 15.25),
                          (model3, SliceSpec.bottleneck_3dof(model3, "y", ((2.5, 7.5), (-2, 2))), 24.0)):
            pts = rng.uniform(-6, 6, size=(500, 2)) if m.dof == 2 else rng.uniform((2.5, -2), (7.5, 2), (500, 2))
            st, mask = shell_states(m, slc, e, pts)
            assert mask.any()
            assert np.max(np.abs(m.energies(st[mask]) - e)) < 1e-12
            assert np.all(st[mask, slc.recovered] > 0)
            assert np.all(np.isnan(st[~mask]))

    def test_state_on_shell(self, model2):
        s = state_on_shell(model2, SliceSpec.uxpx_2dof(0.0), (0.3, 0.1), 1.0)
        assert s.q[1] == 0.0 and s.p[1] > 0 and model2.energy(s) == pytest.approx(1.0, abs=1e-14)

    def test_dimension_mismatch(self, model3):
        with pytest.raises(ModelError):
            shell_states(model3, SliceSpec.uxpx_2dof(0.0), 1.0, np.zeros((1, 2)))

    def test_grid_layout(self, model2):
        slc = SliceSpec.uxpx_2dof(0.0, (-1, 1), (-2, 2))
        states, mask = grid_states(model2, slc, 10.0, (5, 9))
        assert states.shape == (5, 9, 4) and mask.shape == (5, 9)
        assert states[4, 0, 0] == 1.0 and states[4, 0, 2] == -2.0


class TestWindow:
    def test_harmonic_disk(self, model2):
        # on y = 0 the region is x^2 + p_x^2 < 2 e
        (x0, x1), (p0, p1) = onshell_window(model2, SliceSpec.uxpx_2dof(0.0), 2.0, margin=0.0)
        assert (x0, x1, p0, p1) == pytest.approx((-2, 2, -2, 2), abs=1e-10)

    def test_margin_covers_region(self, model2):
        slc = SliceSpec.uxpx_2dof(-7.1)
        (x0, x1), (p0, p1) = onshell_window(model2, slc, 15.25)
        _, mask = grid_states(model2, SliceSpec.uxpx_2dof(-7.1, (x0, x1), (p0, p1)), 15.25, 101)
        assert mask.any() and not mask[0].any() and not mask[-1].any()
        assert not mask[:, 0].any() and not mask[:, -1].any()

    def test_empty(self, model2):
        with pytest.raises(EmptySliceError):
            onshell_window(model2, SliceSpec.uxpx_2dof(-7.1), 10.0)

    def test_unbounded_needs_range(self, model3):
        slc = SliceSpec.bottleneck_3dof(model3, "x", ((9, 12), (-1, 1)))
        with pytest.raises(ModelError):
            onshell_window(model3, slc, 24.0)
        (x0, x1), _ = onshell_window(model3, slc, 24.0, (9.0, 12.0))
        assert (x0, x1) == (9.0, 12.0)


def test_energy_spec(model2):
    es = EnergySpec.from_model(model2, excess=0.125)
    assert es.total == pytest.approx(15.25, abs=1e-12)
    with pytest.raises(ModelError):
        EnergySpec.from_model(model2, total=1.0, excess=1.0)

"""Slot geometry, grid classification, scenario validation and files."""

import json

import numpy as np
import pytest
from scipy import ndimage

from mesahs import barriers, scenarios
from mesahs.errors import ConfigError, EnvelopeError
from mesahs.geometry import (FARFIELD, FLUID, SLOT, Scenario, SlotGeometry,
                             build_grid, load_scenario, radial_u_init)


class TestSlotGeometry:
    def test_ball_normals_unit_and_outward(self):
        geom = SlotGeometry.ball((0.5, -0.25), 1.5, sample_spacing=0.05)
        norms = np.linalg.norm(geom.normals, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)
        outward = ((geom.boundary_samples - [0.5, -0.25]) * geom.normals).sum(axis=1)
        assert np.all(outward > 0)

    def test_ball_3d_samples_on_sphere(self):
        geom = SlotGeometry.ball((0.0, 0.0, 0.0), 1.0, sample_spacing=0.2)
        r = np.linalg.norm(geom.boundary_samples, axis=1)
        assert np.allclose(r, 1.0, atol=1e-12)

    def test_overlapping_balls_rejected(self):
        with pytest.raises(ConfigError):
            SlotGeometry.union_of_balls([(0, 0), (1, 0)], [0.6, 0.6])

    def test_signed_distance_ball(self):
        geom = SlotGeometry.ball((0.0, 0.0), 1.0)
        d = geom.signed_distance(np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.0]]))
        assert d[0] == pytest.approx(-1.0)
        assert d[1] == pytest.approx(1.0)
        assert abs(d[2]) < 1e-12

    def test_rounded_polygon_contains(self):
        square = [(0, 0), (1, 0), (1, 1), (0, 1)]
        geom = SlotGeometry.rounded_polygon(square, rounding=0.2,
                                            sample_spacing=0.05)
        inside = geom.contains(np.array([[0.5, 0.5], [1.15, 0.5], [-0.3, -0.3]]))
        assert inside.tolist() == [True, True, False]
        # corner region is rounded: the sharp-corner point is outside
        assert not geom.contains(np.array([[1.19, 1.19]]))[0]
        norms = np.linalg.norm(geom.normals, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)

    def test_nonconvex_polygon_rejected(self):
        vertices = [(0, 0), (2, 0), (1, 0.2), (0, 2)]
        with pytest.raises(ConfigError):
            SlotGeometry.rounded_polygon(vertices, rounding=0.1)


class TestBuildGrid:
    def test_unit_ball_cell_counts(self):
        geom = SlotGeometry.ball((0.0, 0.0), 1.0, sample_spacing=0.05)
        grid = build_grid(geom, h=0.1, margin=4.0)
        counts = grid.counts()
        assert counts["slot"] * grid.h ** 2 == pytest.approx(np.pi, abs=0.15)
        # farfield band present on every edge
        assert np.all(grid.mask[0, :] == FARFIELD)
        assert np.all(grid.mask[:, -1] == FARFIELD)
        # partition: every cell has exactly one role
        assert set(np.unique(grid.mask)) == {FLUID, SLOT, FARFIELD}
        assert sum(counts[k] for k in ("fluid", "slot", "farfield")) == counts["total"]

    def test_two_disjoint_slots_two_components(self):
        geom = SlotGeometry.union_of_balls([(-1.5, 0), (1.5, 0)], [0.5, 0.5],
                                           sample_spacing=0.05)
        grid = build_grid(geom, h=0.125, margin=2.0)
        _, ncomp = ndimage.label(grid.slot)
        assert ncomp == 2

    def test_margin_below_envelope_rejected_with_requirement(self, radial_coarse):
        env = barriers.supersolution_envelope(radial_coarse)
        need = float(env.radius(radial_coarse.t_max))
        with pytest.raises(EnvelopeError, match="margin >="):
            build_grid(radial_coarse.geometry, h=1 / 16, margin=1.0,
                       required_radius=need)
        build_grid(radial_coarse.geometry, h=1 / 16, margin=need + 0.5,
                   required_radius=need)

    def test_fluid_cells_have_all_neighbors(self):
        geom = SlotGeometry.ball((0.0, 0.0), 1.0, sample_spacing=0.05)
        grid = build_grid(geom, h=0.125, margin=1.5)
        fluid = grid.fluid
        assert not fluid[0, :].any() and not fluid[-1, :].any()
        assert not fluid[:, 0].any() and not fluid[:, -1].any()


class TestScenario:
    def test_u_init_range_enforced(self, radial_coarse):
        bad = radial_coarse.u_init.copy()
        bad[bad.shape[0] // 2, bad.shape[1] // 2] = 1.5
        with pytest.raises(ConfigError, match=r"\[0, 1\]"):
            Scenario(geometry=radial_coarse.geometry, grid=radial_coarse.grid,
                     u_init=bad, p_samples=radial_coarse.p_samples,
                     t_max=0.3, m_list=(16, 64))

    def test_u_init_near_band_rejected(self, radial_coarse):
        bad = radial_coarse.u_init.copy()
        bad[1, 1] = 0.5
        with pytest.raises(ConfigError, match="compactly supported"):
            Scenario(geometry=radial_coarse.geometry, grid=radial_coarse.grid,
                     u_init=bad, p_samples=radial_coarse.p_samples,
                     t_max=0.3, m_list=(16, 64))

    def test_negative_pressure_rejected(self, radial_coarse):
        p = radial_coarse.p_samples.copy()
        p[0] = -1.0
        with pytest.raises(ConfigError):
            Scenario(geometry=radial_coarse.geometry, grid=radial_coarse.grid,
                     u_init=radial_coarse.u_init, p_samples=p,
                     t_max=0.3, m_list=(16, 64))

    def test_m_list_must_increase(self, radial_coarse):
        with pytest.raises(ConfigError):
            Scenario(geometry=radial_coarse.geometry, grid=radial_coarse.grid,
                     u_init=radial_coarse.u_init,
                     p_samples=radial_coarse.p_samples,
                     t_max=0.3, m_list=(64, 16))

    def test_coarse_boundary_sampling_rejected(self):
        geom = SlotGeometry.ball((0.0, 0.0), 1.0, sample_spacing=0.5)
        grid = build_grid(geom, h=0.125, margin=1.5)
        with pytest.raises(ConfigError, match="sample spacing"):
            Scenario(geometry=geom, grid=grid, u_init=np.zeros(grid.shape),
                     p_samples=np.ones(geom.boundary_samples.shape[0]),
                     t_max=0.3, m_list=(16, 64))

    def test_immutable_arrays(self, radial_coarse):
        with pytest.raises(ValueError):
            radial_coarse.u_init[0, 0] = 0.5


class TestAnnulusScenario:
    def test_default_profile(self):
        sc = scenarios.annulus_scenario(h=1 / 16, t_max=0.5, m_list=(8, 16, 32))
        center, _ = sc.geometry.bounding_center_radius()
        r = sc.grid.radius_from(center)
        fluid = sc.grid.fluid
        inner = fluid & (r < 2.85)
        assert np.all(sc.u_init[inner] == 0.0)
        plateau = fluid & (r > 3.1) & (r < 4.9)
        assert np.allclose(sc.u_init[plateau], 1.0)

    def test_query_at_r4(self):
        for eps in (0.0, 0.25):
            sc = scenarios.annulus_scenario(h=1 / 16, eps_patch=eps,
                                            t_max=0.5, m_list=(8, 16, 32))
            center, _ = sc.geometry.bounding_center_radius()
            r = sc.grid.radius_from(center)
            cell = np.unravel_index(np.argmin(np.abs(r - 4.0)), r.shape)
            assert sc.u_init[cell] == pytest.approx(1.0 - eps)

    def test_full_eps_gives_zero_data(self):
        sc = scenarios.annulus_scenario(h=1 / 16, eps_patch=1.0, t_max=0.5,
                                        m_list=(8, 16, 32))
        assert np.all(sc.u_init == 0.0)


class TestScenarioFiles:
    def _write(self, path, spec):
        path.write_text(json.dumps(spec))
        return path

    def test_round_trip_radial(self, tmp_path):
        spec = {
            "dimension": 2,
            "slot": {"centers": [[0.0, 0.0]], "radii": [1.0]},
            "grid": {"h": 0.125, "margin": 2.0},
            "u_init": {"kind": "radial",
                       "breakpoints": [[0.0, 0.3], [1.8, 0.3], [2.0, 0.0]]},
            "p": {"kind": "constant", "value": 2.0},
            "t_max": 0.25, "m_list": [16, 64], "lambda": 0.3,
        }
        sc = load_scenario(self._write(tmp_path / "s.json", spec))
        assert sc.max_datum == 2.0
        assert sc.lambda_bound == 0.3
        assert sc.grid.h == 0.125
        center, _ = sc.geometry.bounding_center_radius()
        r = sc.grid.radius_from(center)
        inside = sc.grid.fluid & (r < 1.7)
        assert np.allclose(sc.u_init[inside], 0.3)

    def test_raster_round_trip(self, tmp_path):
        spec = {
            "dimension": 2,
            "slot": {"centers": [[0.0, 0.0]], "radii": [1.0]},
            "grid": {"h": 0.25, "margin": 2.0},
            "u_init": {"kind": "constant", "value": 0.0},
            "p": {"kind": "constant", "value": 1.0},
            "t_max": 0.25, "m_list": [16, 64],
        }
        base = load_scenario(self._write(tmp_path / "base.json", spec))
        u = np.zeros(base.grid.shape)
        u[base.grid.shape[0] // 2 + 6, base.grid.shape[1] // 2] = 0.75
        raw = tmp_path / "u.bin"
        raw.write_bytes(np.ascontiguousarray(u, dtype="<f8").tobytes())
        spec["u_init"] = {"kind": "raster", "path": "u.bin",
                          "shape": list(base.grid.shape)}
        sc = load_scenario(self._write(tmp_path / "raster.json", spec))
        assert sc.u_init.max() == 0.75
        assert (sc.u_init > 0).sum() == 1

    def test_positive_constant_rejected(self, tmp_path):
        spec = {
            "dimension": 2,
            "slot": {"centers": [[0.0, 0.0]], "radii": [1.0]},
            "grid": {"h": 0.25, "margin": 2.0},
            "u_init": {"kind": "constant", "value": 0.5},
            "p": {"kind": "constant", "value": 1.0},
            "t_max": 0.25, "m_list": [16, 64],
        }
        with pytest.raises(ConfigError, match="compactly"):
            load_scenario(self._write(tmp_path / "bad.json", spec))

    def test_missing_key_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(self._write(tmp_path / "broken.json", {"dimension": 2}))

    def test_content_hash_stable(self, radial_coarse):
        assert radial_coarse.content_hash() == radial_coarse.content_hash()


class TestRadialProfile:
    def test_breakpoints_must_increase(self, radial_coarse):
        with pytest.raises(ConfigError):
            radial_u_init(radial_coarse.grid, radial_coarse.geometry,
                          [(1.0, 0.0), (0.5, 1.0)])

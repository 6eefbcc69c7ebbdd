import numpy as np
import pytest

from aclab.analysis import (
    AMBIGUOUS,
    BOUNDARY_LAYER,
    INTERNAL_LAYER,
    FitError,
    bound_report,
    classify_layer,
    decay_fit,
    layer_thickness,
    limit_partition,
    measured_constant_stable,
)
from aclab.boundary_data import BoundaryData
from aclab.energy import build_comparison_field, make_field
from aclab.geometry import build_stadium, distance_field


def step_b(eps, c0=2.0):
    return BoundaryData(mode="step_h3", m=1, eps=eps, c0=c0,
                        a_minus=[-1.0], a_plus=[1.0], bound_m=2.0)


class TestClassifyLayer:
    def test_comparison_fields_classify_as_built(self, quartic,
                                                 quartic_connection):
        eps = 0.04
        d = build_stadium(2.0, 1.0, eps / 4)
        b = step_b(eps)
        f_int = build_comparison_field(d, quartic, b, quartic_connection,
                                       "internal_layer", eps)
        assert classify_layer(f_int, d, quartic).classification == INTERNAL_LAYER
        f_bl = build_comparison_field(d, quartic, b, quartic_connection,
                                      "boundary_layer_ABCD", eps)
        assert classify_layer(f_bl, d, quartic).classification == BOUNDARY_LAYER

    def test_scale_consistency_under_refinement(self, quartic,
                                                quartic_connection):
        eps = 0.08
        labels = []
        for dx in (eps / 4, eps / 8):
            d = build_stadium(2.0, 1.0, dx)
            f = build_comparison_field(d, quartic, step_b(eps),
                                       quartic_connection, "internal_layer", eps)
            labels.append(classify_layer(f, d, quartic).classification)
        assert labels[0] == labels[1] == INTERNAL_LAYER

    def test_ambiguous_field(self, quartic):
        eps = 0.08
        d = build_stadium(1.0, 1.0, eps / 4)
        f = make_field(d, step_b(eps), eps, fill=[0.0])
        assert classify_layer(f, d, quartic).classification == AMBIGUOUS

    def test_refuses_non_finite(self, quartic):
        eps = 0.08
        d = build_stadium(1.0, 1.0, eps / 4)
        f = make_field(d, step_b(eps), eps, fill=[0.0])
        f.values[d.inside] = np.nan
        with pytest.raises(ValueError):
            classify_layer(f, d, quartic)

    def test_level_curves_extracted(self, quartic, quartic_connection):
        eps = 0.04
        d = build_stadium(2.0, 1.0, eps / 4)
        f = build_comparison_field(d, quartic, step_b(eps), quartic_connection,
                                   "internal_layer", eps)
        rep = classify_layer(f, d, quartic)
        assert len(rep.level_curves) >= 2


class TestDecayFit:
    def test_synthetic_roundtrip(self, quartic):
        eps = 0.05
        d = build_stadium(2.0, 1.0, eps / 4)
        f = make_field(d, step_b(eps), eps, fill=[1.0])
        k_true, big_k = 1.2, 0.8
        dist = distance_field(d, "R")
        f.values[..., 0] = 1.0 - big_k * np.exp(-k_true * dist / eps)
        f.values[~d.inside] = 1.0
        fit = decay_fit(f, d, [1.0], "R", region_mask=~d.rectangle_mask(),
                        delta0=0.79)
        assert fit.k == pytest.approx(k_true, abs=1e-3)
        assert fit.K == pytest.approx(big_k, abs=1e-3)
        assert fit.r_squared > 0.999

    def test_reparameterization_invariance(self, quartic):
        # joint rescaling of eps and distances leaves the fitted k unchanged
        for scale in (1.0, 2.0):
            eps = 0.04 * scale
            d = build_stadium(2.0 * scale, 1.0 * scale, eps / 4)
            f = make_field(d, step_b(eps), eps, fill=[1.0])
            dist = distance_field(d, "R")
            f.values[..., 0] = 1.0 - 0.7 * np.exp(-1.4 * dist / eps)
            f.values[~d.inside] = 1.0
            fit = decay_fit(f, d, [1.0], "R", region_mask=~d.rectangle_mask(),
                            delta0=0.69)
            assert fit.k == pytest.approx(1.4, abs=1e-3)

    def test_constant_field_refused(self, quartic):
        eps = 0.05
        d = build_stadium(2.0, 1.0, eps / 4)
        f = make_field(d, step_b(eps), eps, fill=[1.0])
        f.values[..., 0] = 1.0
        with pytest.raises(FitError):
            decay_fit(f, d, [1.0], "R", delta0=0.5)


class TestThickness:
    def test_thickness_of_synthetic_layer(self, quartic):
        eps = 0.04
        d = build_stadium(1.0, 2.0, eps / 4)
        f = make_field(d, step_b(eps), eps, fill=[-1.0])
        _, Y = d.cell_centers()
        t_true = 0.3
        f.values[..., 0] = np.tanh((t_true - Y) / (np.sqrt(2) * eps))
        t = layer_thickness(f, quartic, 0.5, [1.0])
        assert t == pytest.approx(t_true, abs=2 * d.dx)


class TestBoundReport:
    def test_boundary_rows(self, quartic):
        from aclab.energy import EnergyBreakdown

        d = build_stadium(1.0, 2.0, 0.02)
        sigma = 0.9428
        eps = 0.08
        bd = EnergyBreakdown(total=2 * sigma * 1.0 + 0.05, kinetic_x=0,
                             kinetic_y=0, potential_part=0, eps=eps)
        rows = bound_report(bd, "boundary", sigma, eps, d,
                            directional=2 * sigma * 1.0 - 0.02)
        names = [r.name for r in rows]
        assert names == ["upper_total", "lower_directional_sqrt",
                         "lower_directional_refined"]
        up = rows[0]
        assert up.constant == pytest.approx(0.05 / (eps * abs(np.log(eps)) ** 3))
        lo = rows[1]
        assert lo.constant == pytest.approx(0.02 / np.sqrt(eps))

    def test_internal_rows_flag_intro_discrepancy(self, quartic):
        from aclab.energy import EnergyBreakdown

        d = build_stadium(2.0, 1.0, 0.02)
        bd = EnergyBreakdown(total=1.9, kinetic_x=0, kinetic_y=0,
                             potential_part=0, eps=0.05)
        rows = bound_report(bd, "internal", 0.9428, 0.05, d, directional=1.85)
        assert rows[0].leading == pytest.approx(2 * 0.9428 * 1.0)
        assert "introduction" in rows[0].note

    def test_constant_caps_flag_failures(self, quartic):
        from aclab.energy import EnergyBreakdown

        d = build_stadium(1.0, 2.0, 0.02)
        bd = EnergyBreakdown(total=10.0, kinetic_x=0, kinetic_y=0,
                             potential_part=0, eps=0.05)
        rows = bound_report(bd, "boundary", 0.9428, 0.05, d,
                            constant_caps={"upper_total": 1.0})
        assert not rows[0].satisfied


class TestLimitPartition:
    def test_step_map_fixed_point(self, quartic, quartic_connection):
        eps = 0.05
        d = build_stadium(2.0, 1.0, eps / 4)
        f = make_field(d, step_b(eps), eps, fill=[1.0])
        f.values[..., 0] = np.where(d.rectangle_mask(), 1.0, -1.0)
        res = limit_partition(f, d, quartic, a_minus=[-1.0], a_plus=[1.0])
        assert res.l1_distance == 0.0
        assert res.l1_to_step_map == 0.0

    def test_layer_field_distance_scales_with_eps(self, quartic,
                                                  quartic_connection):
        dists = []
        for eps in (0.08, 0.04):
            d = build_stadium(2.0, 1.0, eps / 4)
            f = build_comparison_field(d, quartic, step_b(eps),
                                       quartic_connection, "internal_layer", eps)
            res = limit_partition(f, d, quartic, a_minus=[-1.0], a_plus=[1.0])
            dists.append(res.l1_to_step_map)
        assert dists[1] < dists[0]
        assert dists[0] / dists[1] == pytest.approx(2.0, rel=0.4)


def test_build_layer_report_composes(quartic, quartic_connection):
    from aclab.analysis import build_layer_report

    eps = 0.04
    d = build_stadium(2.0, 1.0, eps / 4)
    f = build_comparison_field(d, quartic, step_b(eps), quartic_connection,
                               "internal_layer", eps)
    rep = build_layer_report(f, d, quartic, quartic_connection.action,
                             [-1.0], [1.0])
    assert rep.classification == INTERNAL_LAYER
    assert rep.thickness is not None and rep.probe_x == 1.0
    assert rep.decay is not None and rep.decay.k > 0
    assert [r.name for r in rep.bounds][0] == "upper_total"


def test_measured_constant_stability_helper():
    assert measured_constant_stable([1.0, 1.2, 0.9])
    assert measured_constant_stable([0.0, -0.5, 0.0])          # all slack
    assert not measured_constant_stable([0.1, 1.0, 10.0])      # blowing up
    assert measured_constant_stable([3.0, 2.0, 1.5], factor=3.0)

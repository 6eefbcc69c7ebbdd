import numpy as np
import pytest

from aclab.geometry import (
    TAG_MINUS,
    TAG_PLUS,
    DomainShapeError,
    ResolutionError,
    build_disc,
    build_from_sdf,
    build_stadium,
    distance_field,
    validate_h2,
)


class TestStadium:
    def test_area_and_perimeter(self):
        d = build_stadium(2.0, 1.0, 1.0 / 64)
        exact_area = 2.0 * 1.0 + np.pi * 0.25
        exact_perim = 2 * 2.0 + np.pi * 1.0
        assert abs(d.area - exact_area) <= 2 * d.dx * exact_perim
        assert d.perimeter() == pytest.approx(exact_perim, rel=1e-3)

    def test_plus_boundary_length(self):
        d = build_stadium(2.0, 1.0, 1.0 / 64)
        assert d.boundary_length(TAG_PLUS) == pytest.approx(4.0)

    def test_h2_check(self):
        validate_h2(build_stadium(0.5, 1.0, 1.0 / 64))
        validate_h2(build_stadium(2.0, 1.0, 1.0 / 64))

    def test_tag_partition_and_placement(self):
        d = build_stadium(1.0, 1.0, 1.0 / 48)
        gi, gj = np.nonzero(d.ghost)
        tags = d.boundary_tag[gi, gj]
        assert np.all((tags == TAG_PLUS) | (tags == TAG_MINUS))
        # plus-tagged projections lie on y in {0, h}, x in (0, l)
        proj = d.ghost_projection[gi, gj][tags == TAG_PLUS]
        on_lines = (np.abs(proj[:, 1]) < 1e-9) | (np.abs(proj[:, 1] - 1.0) < 1e-9)
        assert np.all(on_lines)
        assert np.all((proj[:, 0] > 0) & (proj[:, 0] < 1.0))

    def test_resolution_guard(self):
        with pytest.raises(ResolutionError):
            build_stadium(1.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            build_stadium(-1.0, 1.0, 0.01)

    def test_refinement_converges_first_order(self):
        exact_area = 1.0 + np.pi * 0.25
        errs = []
        for dx in (1 / 40, 1 / 80, 1 / 160):
            d = build_stadium(1.0, 1.0, dx)
            errs.append(abs(d.area - exact_area))
        assert errs[2] < errs[0]
        exact_perim = 2.0 + np.pi
        perr = [abs(build_stadium(1.0, 1.0, dx).perimeter() - exact_perim)
                for dx in (1 / 40, 1 / 160)]
        assert perr[1] < perr[0]


class TestDisc:
    def test_area_perimeter(self):
        d = build_disc(1.0, 1.0 / 128)
        assert d.area == pytest.approx(np.pi, abs=0.05)
        assert d.perimeter() == pytest.approx(2 * np.pi, rel=1e-3)

    def test_all_boundary_minus(self):
        d = build_disc(1.0, 1.0 / 64)
        gi, gj = np.nonzero(d.ghost)
        assert np.all(d.boundary_tag[gi, gj] == TAG_MINUS)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            build_disc(0.0, 0.01)


class TestDistanceFields:
    def test_stadium_center_distances(self):
        d = build_stadium(2.0, 1.0, 1.0 / 64)
        i = int(round((1.0 - d.x0) / d.dx))
        j = int(round((0.5 - d.y0) / d.dx))
        assert distance_field(d, "boundary_plus")[i, j] == pytest.approx(0.5, abs=d.dx)
        assert distance_field(d, "R")[i, j] == 0.0
        assert distance_field(d, "complement_R")[i, j] == pytest.approx(1.0, abs=d.dx)

    def test_point_on_plus_boundary(self):
        d = build_stadium(2.0, 1.0, 1.0 / 64)
        i = int(round((1.0 - d.x0) / d.dx))
        j0 = int(round((0.0 - d.y0) / d.dx))
        assert distance_field(d, "boundary_plus")[i, j0] <= d.dx

    def test_disc_center(self):
        d = build_disc(1.0, 1.0 / 64)
        i = int(round((0.0 - d.x0) / d.dx))
        j = int(round((0.0 - d.y0) / d.dx))
        assert distance_field(d, "boundary")[i, j] == pytest.approx(1.0, abs=d.dx)

    def test_unknown_target(self):
        d = build_disc(1.0, 1.0 / 64)
        with pytest.raises(KeyError):
            distance_field(d, "nope")
        with pytest.raises(KeyError):
            distance_field(d, "R")  # disc has no rectangle

    @pytest.mark.parametrize("target", ["boundary", "boundary_plus",
                                        "boundary_minus", "R", "complement_R"])
    def test_lipschitz_on_grid(self, target):
        d = build_stadium(1.0, 1.0, 1.0 / 48)
        f = distance_field(d, target)
        for axis in (0, 1):
            diff = np.abs(np.diff(f, axis=axis))
            assert np.all(diff <= d.dx + d.dx + 1e-12)


class TestGenericSdf:
    def test_sdf_domain_accepts_h2(self):
        l, h = 1.0, 0.5

        def sdf(x, y):
            cx = np.clip(x, 0.0, l)
            return np.hypot(x - cx, y - h / 2) - h / 2

        d = build_from_sdf(sdf, (-h / 2, l + h / 2, 0.0, h), 1 / 72, l, h)
        assert d.area == pytest.approx(l * h + np.pi * (h / 2) ** 2 / 1, abs=0.05)

    def test_sdf_domain_rejects_bad_rectangle(self):
        # a disc does not satisfy the rectangle hypothesis for this (l, h)
        def sdf(x, y):
            return np.hypot(x - 0.5, y - 0.5) - 0.45

        with pytest.raises(DomainShapeError):
            build_from_sdf(sdf, (0.0, 1.0, 0.0, 1.0), 1 / 64, 1.0, 1.0)


def test_grid_symmetry_about_midline():
    # lattice anchored at integer faces so the stadium mirrors onto itself
    d = build_stadium(1.0, 1.0, 1.0 / 40)
    X, _ = d.cell_centers()
    xs = X[:, 0]
    mirrored = 1.0 - xs[::-1]
    assert np.allclose(xs, mirrored, atol=1e-12)
    assert np.array_equal(d.inside, d.inside[::-1, :])

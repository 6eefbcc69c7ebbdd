import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aclab.potential import (
    ConstantsNotValidError,
    Potential,
    PotentialDomainError,
    eval_gradient,
    eval_potential,
    make_potential,
    quartic_double_well,
    validate_hypotheses,
    well_constants,
)


def test_quartic_well_values(quartic):
    assert eval_potential(quartic, [1.0]) == 0.0
    assert eval_potential(quartic, [-1.0]) == 0.0
    assert eval_potential(quartic, [0.0]) == pytest.approx(0.25)


def test_two_well_value_at_origin(planar_two_well):
    assert eval_potential(planar_two_well, [0.0, 0.0]) == pytest.approx(1.0)


def test_gradient_critical_points(quartic):
    assert eval_gradient(quartic, [1.0]) == pytest.approx([0.0])
    assert eval_gradient(quartic, [0.0]) == pytest.approx([0.0])
    assert eval_gradient(quartic, [0.5]) == pytest.approx([-0.375])


def test_gradient_matches_finite_differences(quartic, planar_two_well,
                                             planar_triple_well):
    rng = np.random.default_rng(0)
    step = 1e-5
    for p in (quartic, planar_two_well, planar_triple_well):
        pts = rng.uniform(-1, 1, size=(100, p.dimension))
        pts *= p.coercivity_radius / np.maximum(np.linalg.norm(pts, axis=1,
                                                               keepdims=True), 1.0)
        for u in pts:
            g = p.grad(u)
            for j in range(p.dimension):
                e = np.zeros(p.dimension)
                e[j] = step
                fd = (p.eval(u + e) - p.eval(u - e)) / (2 * step)
                assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_non_finite_input_rejected(quartic):
    with pytest.raises(PotentialDomainError):
        eval_potential(quartic, [np.nan])
    with pytest.raises(PotentialDomainError):
        eval_gradient(quartic, [np.inf])


def test_well_constants_quartic(quartic):
    wc = well_constants(quartic, 0.1)
    # sampled sphere {0.9, 1.1}: 2W/delta^2 = (2 -+ delta)^2 / 2
    assert wc.c_w**2 == pytest.approx(1.805, rel=1e-9)
    assert wc.big_c_w**2 == pytest.approx(2.205, rel=1e-9)
    assert wc.c_w <= wc.big_c_w


def test_well_constants_hessian_limit(quartic):
    # delta -> 0: both constants approach the Hessian value W''(+-1) = 2
    wc = well_constants(quartic, 1e-4)
    assert wc.c_w**2 == pytest.approx(2.0, abs=1e-3)
    assert wc.big_c_w**2 == pytest.approx(2.0, abs=1e-3)


def test_well_constants_bracket_holds_on_samples(quartic, planar_two_well):
    rng = np.random.default_rng(1)
    for p in (quartic, planar_two_well):
        delta = 0.25 * p.min_well_separation
        wc = well_constants(p, delta)
        if p.dimension == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            th = rng.uniform(0, 2 * np.pi, 5000)
            dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        for a in p.wells:
            w = p.eval(a + delta * dirs)
            assert np.all(w >= 0.5 * wc.c_w**2 * delta**2 * (1 - 1e-9))
            assert np.all(w <= 0.5 * wc.big_c_w**2 * delta**2 * (1 + 1e-9))


def test_well_constants_rejects_bad_delta(quartic):
    with pytest.raises(ValueError):
        well_constants(quartic, 0.0)
    with pytest.raises(ValueError):
        well_constants(quartic, 1.5)  # beyond half the well separation


def test_well_constants_invalid_trapping():
    # a potential that vanishes on a whole circle: trapping must fail
    def ev(u):
        return (np.sum(u**2, axis=-1) - 1.0) ** 2

    def gr(u):
        return 4.0 * (np.sum(u**2, axis=-1) - 1.0)[..., None] * u

    p = Potential("ring", 2, [[1.0, 0.0], [-1.0, 0.0]], ev, gr, 3.0)
    with pytest.raises(ConstantsNotValidError):
        well_constants(p, 0.3)


def test_validate_hypotheses_zoo_passes(quartic, planar_two_well,
                                        planar_triple_well):
    for p in (quartic, planar_two_well, planar_triple_well):
        report = validate_hypotheses(p, sample_budget=4096)
        assert report.passed, [c.name for c in report.failed_checks()]


def test_validate_hypotheses_rejects_infinite_zero_set():
    def ev(u):
        return np.sin(u[..., 0]) ** 2

    def gr(u):
        return (2 * np.sin(u[..., 0]) * np.cos(u[..., 0]))[..., None]

    p = Potential("sin2", 1, [[0.0]], ev, gr, 10.0)
    report = validate_hypotheses(p, sample_budget=4096)
    names = [c.name for c in report.failed_checks()]
    assert "finite_zero_set" in names


def test_validate_hypotheses_budget_precondition(quartic):
    with pytest.raises(ValueError):
        validate_hypotheses(quartic, sample_budget=10)


def test_hessians_positive_definite(quartic, planar_two_well, planar_triple_well):
    for p in (quartic, planar_two_well, planar_triple_well):
        for i in range(p.n_wells):
            ev = np.linalg.eigvalsh(p.hess_at_well(i))
            assert np.all(ev > 0)


def test_registry_lookup():
    p = make_potential("two_well")
    assert p.dimension == 2
    with pytest.raises(KeyError):
        make_potential("no_such_potential")


@given(st.floats(min_value=-1.9, max_value=1.9))
@settings(max_examples=60, deadline=None)
def test_quartic_nonnegative_everywhere(u):
    p = quartic_double_well()
    w = float(p.eval([u]))
    assert w >= 0.0
    if abs(abs(u) - 1.0) > 1e-6:
        assert w > 0.0


@given(st.floats(min_value=0.01, max_value=0.35))
@settings(max_examples=20, deadline=None)
def test_trapping_bracket_random_delta(delta):
    p = quartic_double_well()
    wc = well_constants(p, delta)
    assert 0 < wc.c_w <= wc.big_c_w

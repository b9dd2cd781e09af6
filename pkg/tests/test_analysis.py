import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magadv.analysis import (ErrorRecord, convergence_orders, cross_section,
                             discrete_energy_norm, error_norms, oscillation_metric)
from magadv.fe_space import DiscreteField, build_space, interpolate
from magadv.forms import StabilizationConfig, stabilization_deltas
from magadv.mesh import build_uniform_mesh
from tests.test_forms import patch_spec


@pytest.fixture(scope="module")
def poly_setting():
    spec = patch_spec(2, 1)
    m = build_uniform_mesh(2, 4)
    sp = build_space(m, 1)
    cfg = StabilizationConfig(alpha="upwind", c0=StabilizationConfig.default_c0(2))
    deltas = stabilization_deltas(sp, spec, cfg)
    return spec, sp, cfg, deltas


def test_error_norms_vanish_at_interpolant(poly_setting):
    spec, sp, cfg, deltas = poly_setting
    ih = interpolate(sp, spec.exact.value)
    parts, l2 = error_norms(sp, spec, ih, cfg, deltas)
    assert l2 < 1e-12
    for val in (parts.curl, parts.l2, parts.advection, parts.jumps, parts.boundary):
        assert val < 1e-20
    assert parts.total == pytest.approx(
        parts.curl + parts.l2 + parts.advection + parts.jumps + parts.boundary
    )


def test_error_norms_quadratic_scaling(poly_setting):
    spec, sp, cfg, deltas = poly_setting
    ih = interpolate(sp, spec.exact.value)
    rng = np.random.default_rng(1)
    w = rng.standard_normal(sp.n_dofs)
    one = DiscreteField(sp, ih.coeffs + w)
    two = DiscreteField(sp, ih.coeffs + 2.0 * w)
    p1, l1 = error_norms(sp, spec, one, cfg, deltas)
    p2, l2 = error_norms(sp, spec, two, cfg, deltas)
    assert l2 == pytest.approx(2.0 * l1, rel=1e-10)
    for a, b in [(p1.curl, p2.curl), (p1.l2, p2.l2), (p1.advection, p2.advection),
                 (p1.jumps, p2.jumps), (p1.boundary, p2.boundary)]:
        if a > 1e-14:
            assert b == pytest.approx(4.0 * a, rel=1e-9)


def test_error_norms_nonnegative_parts(poly_setting):
    spec, sp, cfg, deltas = poly_setting
    rng = np.random.default_rng(2)
    for _ in range(5):
        u = DiscreteField(sp, rng.standard_normal(sp.n_dofs))
        parts, _ = error_norms(sp, spec, u, cfg, deltas)
        for val in (parts.curl, parts.l2, parts.advection, parts.jumps, parts.boundary):
            assert val >= 0.0
        disc = discrete_energy_norm(sp, spec, u, cfg, deltas)
        assert disc.norm >= 0.0


def test_error_norms_variant_drops_jumps(poly_setting):
    spec, sp, cfg, deltas = poly_setting
    rng = np.random.default_rng(3)
    u = DiscreteField(sp, rng.standard_normal(sp.n_dofs))
    full, _ = error_norms(sp, spec, u, cfg, deltas)
    s2, _ = error_norms(sp, spec, u, cfg, deltas, variant="s2_only")
    assert s2.jumps == 0.0
    assert full.jumps > 0.0
    assert s2.curl == pytest.approx(full.curl)
    with pytest.raises(ValueError):
        error_norms(sp, spec, u, cfg, deltas, variant="bogus")


def test_error_norms_requires_exact(poly_setting):
    _, sp, cfg, deltas = poly_setting
    from magadv.problem import make_example

    layer = make_example(4)
    u = DiscreteField(sp, np.zeros(sp.n_dofs))
    with pytest.raises(ValueError):
        error_norms(sp, layer, u, cfg, deltas)


def test_convergence_orders_arithmetic():
    recs = [ErrorRecord(N=8, dofs=10, l2_error=4e-2, energy_error=8e-2),
            ErrorRecord(N=16, dofs=40, l2_error=1e-2, energy_error=4e-2)]
    out = convergence_orders(recs)
    assert out[0].l2_order is None
    assert out[1].l2_order == pytest.approx(2.0)
    assert out[1].energy_order == pytest.approx(1.0)

    const = [ErrorRecord(N=4, dofs=1, l2_error=5e-3),
             ErrorRecord(N=8, dofs=1, l2_error=5e-3)]
    assert convergence_orders(const)[1].l2_order == pytest.approx(0.0)

    with pytest.raises(ValueError):
        convergence_orders([ErrorRecord(N=8, dofs=1, l2_error=1.0),
                            ErrorRecord(N=24, dofs=1, l2_error=0.5)])


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1e6))
def test_convergence_orders_scale_invariant(scale):
    errs = [3.1e-1, 8.4e-2, 2.2e-2]
    def records(s):
        return [ErrorRecord(N=4 * 2**i, dofs=1, l2_error=s * e)
                for i, e in enumerate(errs)]
    a = convergence_orders(records(1.0))
    b = convergence_orders(records(scale))
    for ra, rb in zip(a[1:], b[1:]):
        assert rb.l2_order == pytest.approx(ra.l2_order, rel=1e-9)


def constant_field(sp, vec):
    return interpolate(sp, lambda p: np.broadcast_to(vec, (len(p), 2)).copy())


def test_oscillation_metric_trivial_cases():
    sp = build_space(build_uniform_mesh(2, 4), 1)
    u = constant_field(sp, [0.5, 0.0])
    box = (0.1, 0.7, 0.1, 0.7)
    assert oscillation_metric(u, 0, box, (0.0, 1.0)) == (0.0, 0.0)
    # field exactly at the upper bound: closed bound, no overshoot
    assert oscillation_metric(u, 0, box, (0.0, 0.5)) == (0.0, 0.0)
    over, under = oscillation_metric(u, 0, box, (0.6, 1.0))
    assert over == 0.0 and under == pytest.approx(0.1)
    with pytest.raises(ValueError):
        oscillation_metric(u, 0, (0.5, 0.5, 0.1, 0.7), (0.0, 1.0))


def test_cross_section_basics():
    sp = build_space(build_uniform_mesh(2, 4), 1)
    u = constant_field(sp, [0.25, 0.75])
    rows = cross_section(u, 0, axis=0, offset=0.5, n_samples=31)
    assert rows.shape == (31, 2)
    assert np.allclose(rows[:, 1], 0.25, atol=1e-12)
    rows2 = cross_section(u, 1, axis=1, offset=0.25, n_samples=7)
    assert rows2.shape == (7, 2)
    assert np.allclose(rows2[:, 1], 0.75, atol=1e-12)
    with pytest.raises(ValueError):
        cross_section(u, 0, axis=0, offset=1.5)

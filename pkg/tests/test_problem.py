import numpy as np
import pytest
import sympy

from magadv.fe_space import build_space
from magadv.forms import ElementContext, StabilizationConfig
from magadv.mesh import build_uniform_mesh
from magadv.problem import (MissingFieldData, friedrichs_rho, friedrichs_sample_points,
                            lie_advection, make_example, manufactured_problem)


def sym_fields(dim, rng, degree=2):
    """Random polynomial (beta, u) pair with all derivative closures."""
    syms = sympy.symbols("x y z")[:dim]
    monos = [1]
    for s in syms:
        monos += [s, s**2]
    if dim == 2:
        monos.append(syms[0] * syms[1])
    else:
        monos += [syms[0] * syms[1], syms[0] * syms[2], syms[1] * syms[2]]

    def rand_vec():
        return [sum(float(c) * m for c, m in zip(rng.standard_normal(len(monos)), monos))
                for _ in range(dim)]

    return manufactured_problem(dim, rand_vec(), rand_vec(), 0, 1.0)


def eval_all(spec, pts):
    ex = spec.exact
    return dict(
        b=spec.beta(pts), bj=spec.beta_jac(pts), u=ex.value(pts), c=ex.curl(pts),
        ju=ex.jacobian(pts),
    )


def test_lie_trivial_constant():
    b = np.array([[2.0, 1.0, 3.0]])
    u = np.array([[1.0, -1.0, 4.0]])
    zero = np.zeros((1, 3, 3))
    out = lie_advection(b, u, np.zeros((1, 3)), zero, zero)
    assert np.abs(out).max() == 0.0


def test_lie_hand_example_linear_beta():
    # beta=(x,0,0), u=(1,0,0): advection = grad(x) = (1,0,0), dual = 0
    pts = np.array([[0.3, 0.4, 0.5], [1.0, 2.0, 3.0]])
    b = np.stack([pts[:, 0], np.zeros(2), np.zeros(2)], axis=1)
    bj = np.zeros((2, 3, 3))
    bj[:, 0, 0] = 1.0
    u = np.broadcast_to([1.0, 0.0, 0.0], (2, 3)).copy()
    fwd = lie_advection(b, u, np.zeros((2, 3)), np.zeros((2, 3, 3)), bj)
    dual = lie_advection(b, u, np.zeros((2, 3)), np.zeros((2, 3, 3)), bj, dual=True)
    assert np.allclose(fwd, [1.0, 0.0, 0.0])
    assert np.abs(dual).max() < 1e-14
    # sum identity: L u + dual L u = (-div beta I + grad beta + grad beta^T) u
    rhs = (-1.0 * u + np.einsum("nij,nj->ni", bj + np.transpose(bj, (0, 2, 1)), u))
    assert np.allclose(fwd + dual, rhs)


def test_lie_hand_example_shear():
    # beta=(1,0,0), u=(y,0,0): -beta x curl u = (0,1,0)... total advection = 0
    pts = np.array([[0.2, 0.7, 0.1]])
    b = np.broadcast_to([1.0, 0.0, 0.0], (1, 3)).copy()
    u = np.array([[0.7, 0.0, 0.0]])
    ju = np.zeros((1, 3, 3))
    ju[0, 0, 1] = 1.0  # du1/dy
    curl = np.array([[0.0, 0.0, -1.0]])
    out = lie_advection(b, u, curl, ju, np.zeros((1, 3, 3)))
    assert np.abs(out).max() < 1e-14
    # and grad(beta.u) alone is (0,1,0)
    grad_bu = np.einsum("nji,nj->ni", ju, b)
    assert np.allclose(grad_bu, [[0.0, 1.0, 0.0]])


def test_lie_missing_data_errors():
    b = np.ones((1, 2))
    u = np.ones((1, 2))
    with pytest.raises(MissingFieldData):
        lie_advection(b, u)
    with pytest.raises(MissingFieldData):
        lie_advection(b, u, dual=True)


@pytest.mark.parametrize("dim", [2, 3])
def test_identity_sum_randomized(dim):
    rng = np.random.default_rng(21)
    for trial in range(5):
        spec = sym_fields(dim, rng)
        pts = rng.random((200, dim))
        d = eval_all(spec, pts)
        fwd = lie_advection(d["b"], d["u"], d["c"], d["ju"], d["bj"])
        dual = lie_advection(d["b"], d["u"], d["c"], d["ju"], d["bj"], dual=True)
        div_b = np.trace(d["bj"], axis1=1, axis2=2)
        rhs = (-div_b[:, None] * d["u"]
               + np.einsum("nij,nj->ni", d["bj"] + np.transpose(d["bj"], (0, 2, 1)), d["u"]))
        scale = max(np.abs(fwd).max(), 1.0)
        assert np.abs(fwd + dual - rhs).max() < 1e-10 * scale


def test_2d_rotation_matrix_form():
    # scalar-curl implementation agrees with the rotated-divergence form
    rng = np.random.default_rng(33)
    spec = sym_fields(2, rng)
    pts = rng.random((50, 2))
    d = eval_all(spec, pts)
    out = lie_advection(d["b"], d["u"], d["c"], d["ju"], d["bj"])
    # R grad(...)-style form: -R beta * div(R u) + grad(beta . u)
    c = d["ju"][:, 1, 0] - d["ju"][:, 0, 1]  # div(Ru) = scalar curl
    rbeta = np.stack([d["b"][:, 1], -d["b"][:, 0]], axis=1)
    grad_bu = (np.einsum("nji,nj->ni", d["ju"], d["b"])
               + np.einsum("nji,nj->ni", d["bj"], d["u"]))
    alt = -rbeta * c[:, None] + grad_bu
    assert np.abs(out - alt).max() < 1e-12


@pytest.mark.parametrize("dim,k", [(2, 1), (2, 2), (3, 1)])
def test_integration_by_parts_per_cell(dim, k):
    """(adv u, v)_T = (u, adv* v)_T + <beta.n, u.v>_dT for discrete fields and
    polynomial beta, exactly at quadrature level."""
    spec = make_example(2 if dim == 2 else 1, eps=1.0)
    m = build_uniform_mesh(dim, 4 if dim == 2 else 2)
    sp = build_space(m, k)
    cfg = StabilizationConfig(c0=StabilizationConfig.default_c0(dim))
    ctx = ElementContext(sp, spec, cfg)
    rng = np.random.default_rng(17)
    cu = rng.standard_normal(sp.n_dofs)
    cv = rng.standard_normal(sp.n_dofs)
    for c in range(0, m.n_cells, max(1, m.n_cells // 10)):
        V = ctx.ct.value(c)
        J = ctx.ct.jacobian(c)
        wq = ctx.ct.wdet[c]
        du, dv = cu[sp.cell_dofs[c]], cv[sp.cell_dofs[c]]
        uval = np.einsum("qid,i->qd", V, du)
        vval = np.einsum("qid,i->qd", V, dv)
        ujac = np.einsum("qidm,i->qdm", J, du)
        vjac = np.einsum("qidm,i->qdm", J, dv)
        beta, bjac = ctx.beta_c[c], ctx.betajac_c[c]
        lu = (np.einsum("qdm,qm->qd", ujac, beta)
              + np.einsum("qmd,qm->qd", bjac, uval))
        div_b = np.trace(bjac, axis1=1, axis2=2)
        lsv = (-div_b[:, None] * vval
               + np.einsum("qij,qj->qi", bjac, vval)
               - np.einsum("qij,qj->qi", vjac, beta))
        lhs = (wq * (lu * vval).sum(1)).sum()
        rhs = (wq * (uval * lsv).sum(1)).sum()
        for f in m.cell_facets[c]:
            side = 0 if m.facet_cells[f, 0] == c else 1
            sgn = 1.0 if side == 0 else -1.0
            wf = ctx.ft.w * m.facet_measures[f]
            tru = np.einsum("qid,i->qd", ctx.ft.trace_value(f, side), du)
            trv = np.einsum("qid,i->qd", ctx.ft.trace_value(f, side), dv)
            rhs += sgn * (wf * ctx.bn[f] * (tru * trv).sum(1)).sum()
        assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), 1.0)


def test_friedrichs_examples():
    m = build_uniform_mesh(2, 4)
    pts = friedrichs_sample_points(m)
    rep = friedrichs_rho(make_example(2, eps=1e-6), pts)
    assert rep.min_rho == pytest.approx(1.0, abs=1e-12)
    assert rep.passed
    assert rep.n_samples == len(pts)

    m3 = build_uniform_mesh(3, 2)
    rep1 = friedrichs_rho(make_example(1, eps=1e-6), friedrichs_sample_points(m3))
    s = np.array([[0.0, 0.5, -0.25], [0.5, 0.0, -0.5], [-0.25, -0.5, 0.0]])
    assert rep1.min_rho == pytest.approx(8.0 + np.linalg.eigvalsh(s)[0], abs=1e-10)
    assert rep1.passed

    rep0 = friedrichs_rho(make_example(4), pts)  # gamma=0, constant beta
    assert rep0.min_rho == pytest.approx(0.0, abs=1e-14)
    assert not rep0.passed


@pytest.mark.parametrize("ex", [1, 2])
def test_manufactured_strong_form_complex_step(ex):
    """f reproduces the strong operator applied to u, checked with a
    complex-step derivative oracle independent of the symbolic path."""
    spec = make_example(ex, eps=1e-3)
    dim = spec.dim
    rng = np.random.default_rng(2)
    pts = rng.random((80, dim)) * 0.96 + 0.02
    h = 1e-25

    def cs_jacobian(fn, pts, width):
        out = np.empty((len(pts), width, dim))
        for a in range(dim):
            p = pts.astype(complex).copy()
            p[:, a] += 1j * h
            out[:, :, a] = np.imag(np.atleast_2d(fn(p)).reshape(len(pts), width)) / h
        return out

    curl_grad = cs_jacobian(spec.exact.curl, pts, 1 if dim == 2 else 3)
    if dim == 2:
        curlcurl = np.stack([curl_grad[:, 0, 1], -curl_grad[:, 0, 0]], axis=1)
    else:
        curlcurl = np.stack([
            curl_grad[:, 2, 1] - curl_grad[:, 1, 2],
            curl_grad[:, 0, 2] - curl_grad[:, 2, 0],
            curl_grad[:, 1, 0] - curl_grad[:, 0, 1],
        ], axis=1)

    def beta_dot_u(p):
        return (np.asarray(spec.beta(p)) * np.asarray(spec.exact.value(p))).sum(1)

    grad_bu = cs_jacobian(beta_dot_u, pts, 1)[:, 0, :]
    b = spec.beta(pts)
    c = spec.exact.curl(pts)
    if dim == 2:
        adv = np.stack([-b[:, 1] * c, b[:, 0] * c], axis=1) + grad_bu
    else:
        adv = -np.cross(b, c) + grad_bu
    f_oracle = spec.eps * curlcurl + adv + spec.gamma(pts)[:, None] * spec.exact.value(pts)
    assert np.abs(f_oracle - spec.f(pts)).max() < 1e-10


def test_make_example_presets():
    e4 = make_example(4, eps=1e-6)
    pts = np.array([[0.3, 0.4]])
    assert np.allclose(e4.beta(pts), [[1.0, 2.0]])
    assert np.allclose(e4.f(pts), [[1.0, 1.0]])
    assert e4.gamma(pts)[0] == 0.0
    assert e4.g is None and e4.exact is None

    e5 = make_example(5)
    assert e5.eps == pytest.approx(1e-3)
    inside = np.array([[0.5, 0.5], [0.5, 0.26]])
    outside = np.array([[0.5, 0.1], [0.5, 0.9]])
    assert np.allclose(e5.f(inside), 1.0)
    assert np.allclose(e5.f(outside), 0.0)

    e6 = make_example(6, eps=1e-6)
    assert np.allclose(e6.beta(pts), [[1.0, 0.0]])
    assert np.allclose(e6.f(pts), [[1.0, 0.0]])

    e3 = make_example(3)
    assert e3.dim == 2 and e3.exact is not None
    e3b = make_example(3, dim=3)
    assert e3b.dim == 3

    with pytest.raises(ValueError):
        make_example(7)
    with pytest.raises(ValueError):
        manufactured_problem(2, ["x", "y"], ["1", "0"], 0, -1.0)

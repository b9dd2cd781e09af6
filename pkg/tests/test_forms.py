import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magadv.analysis import discrete_energy_norm, energy_norm_matrix
from magadv.fe_space import DiscreteField, build_space, interpolate
from magadv.forms import (ElementContext, StabilizationConfig, apply_dirichlet, assemble,
                          compute_delta, curl_inverse_constant, jump, lifting_apply,
                          stabilization_deltas, weighted_average)
from magadv.mesh import build_uniform_mesh, _finish_mesh
from magadv.problem import friedrichs_rho, friedrichs_sample_points, make_example, \
    manufactured_problem
from magadv.solve import solve_linear


def patch_spec(dim, k):
    if k == 1:
        u = ["y", "x"] if dim == 2 else ["y", "z", "x"]
    else:
        u = ["y*y + x", "x*x - y"] if dim == 2 else ["y*y + z", "z*z + x", "x*x - y"]
    beta = ["1", "2"] if dim == 2 else ["1", "2", "3"]
    return manufactured_problem(dim, u, beta, 1, 1.0)


# ---- weighted average identities --------------------------------------------

def test_weighted_average_identities_randomized():
    rng = np.random.default_rng(101)
    for _ in range(1000):
        v1p, v1m, v2p, v2m = rng.standard_normal((4, 3))
        ap = rng.uniform(-1.0, 2.0)
        am = 1.0 - ap
        j1, j2 = jump(v1p, v1m), jump(v2p, v2m)
        avg1a = weighted_average(v1p, v1m, ap)
        avg1 = weighted_average(v1p, v1m, 0.5)
        avg2_1ma = weighted_average(v2p, v2m, am)
        bracket = ap - am
        assert np.abs(avg1a - (avg1 + 0.5 * bracket * j1)).max() < 1e-12
        lhs = v1p @ v2p - v1m @ v2m
        rhs = avg1a @ j2 + j1 @ avg2_1ma
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))
        lhs3 = 0.5 * (v1p @ v1p - v1m @ v1m)
        rhs3 = j1 @ avg1a - 0.5 * bracket * (j1 @ j1)
        assert abs(lhs3 - rhs3) < 1e-12 * max(1.0, abs(lhs3))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=13, max_size=13))
def test_weighted_average_identities_hypothesis(vals):
    v1p, v1m, v2p, v2m = (np.array(vals[i:i + 3]) for i in (0, 3, 6, 9))
    ap = vals[12]
    j1, j2 = jump(v1p, v1m), jump(v2p, v2m)
    lhs = v1p @ v2p - v1m @ v2m
    rhs = weighted_average(v1p, v1m, ap) @ j2 + j1 @ weighted_average(v2p, v2m, 1 - ap)
    assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs), np.abs(vals).max() ** 2)


def test_upwind_weight_condition():
    """-beta.n+ (a+ - a-) equals |beta.n| pointwise for the upwind rule, and
    boundary facets carry 0 (outflow) / 1 (inflow)."""
    from magadv.forms import alpha_plus_values
    from magadv.mesh import BoundaryLabel

    m = build_uniform_mesh(2, 4)
    spec = make_example(2, eps=1e-3)
    cfg = StabilizationConfig(alpha="upwind")
    ctx = ElementContext(sp := build_space(m, 1), spec, cfg)
    ap = ctx.alpha_p
    am = 1.0 - ap
    assert np.abs(ap + am - 1.0).max() < 1e-15
    interior = ~m.facet_boundary
    lhs = -ctx.bn[interior] * (ap[interior] - am[interior])
    assert np.abs(lhs - np.abs(ctx.bn[interior])).max() < 1e-14
    labels = ctx.labels
    assert np.all(ap[m.facet_boundary & (labels == BoundaryLabel.OUTFLOW)] == 0.0)
    assert np.all(ap[m.facet_boundary & (labels == BoundaryLabel.INFLOW)] == 1.0)
    # centered rule
    ctx_c = ElementContext(sp, spec, StabilizationConfig(alpha="centered"))
    assert np.all(ctx_c.alpha_p[interior] == 0.5)
    # custom two-valued rule still sums to one
    ctx_w = ElementContext(sp, spec, StabilizationConfig(alpha=0.7))
    assert np.all(ctx_w.alpha_p[interior] == 0.7)


# ---- lifting operator --------------------------------------------------------

def reference_cell_space(k=1):
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = _finish_mesh(2, verts, np.array([[0, 1, 2]]), N=0)
    return build_space(mesh, k)


def test_lifting_zero_data():
    sp = reference_cell_space()
    nq = len(sp.facet_tables(sp.facet_quadrature()).w)
    vals = [np.zeros((nq, 2))] * 3
    alph = [np.ones(nq)] * 3
    c = lifting_apply(sp, 0, vals, alph)
    assert np.abs(c).max() == 0.0


@pytest.mark.parametrize("k", [1, 2])
def test_lifting_adjoint_identity(k):
    """(r_alpha(v), w)_T = <alpha v, w>_dT for every basis w, with the volume
    side evaluated by independent dense quadrature."""
    sp = reference_cell_space(k)
    mesh = sp.mesh
    ft = sp.facet_tables(sp.facet_quadrature())
    nq = len(ft.w)
    rng = np.random.default_rng(5)
    vals = [rng.standard_normal((nq, 2)) for _ in range(3)]
    alph = [np.ones(nq), np.full(nq, 0.3), np.zeros(nq)]
    coeffs = lifting_apply(sp, 0, vals, alph)

    dense = sp.cell_quadrature(2 * k + 6)
    ct = sp.cell_tables(dense)
    lift_vals = np.einsum("qid,i->qd", ct.value(0), coeffs)
    for w in range(sp.n_local):
        wt = np.einsum("qd,qd,q->", lift_vals, ct.value(0)[:, w, :], ct.wdet[0])
        bnd = 0.0
        for lf, f in enumerate(mesh.cell_facets[0]):
            wf = ft.w * mesh.facet_measures[f]
            trw = ft.trace_value(f, 0)[:, w, :]
            bnd += (wf * alph[lf] * (vals[lf] * trw).sum(1)).sum()
        assert abs(wt - bnd) < 1e-10 * max(1.0, abs(bnd))


def test_lifting_constant_on_one_facet():
    sp = reference_cell_space(1)
    ft = sp.facet_tables(sp.facet_quadrature())
    nq = len(ft.w)
    vals = [np.zeros((nq, 2)) for _ in range(3)]
    alph = [np.zeros(nq) for _ in range(3)]
    vals[0][:, 0] = 1.0
    alph[0][:] = 1.0
    coeffs = lifting_apply(sp, 0, vals, alph)
    assert np.abs(coeffs).max() > 0


def test_lifting_stability_scaling():
    """sup ||r(v)||_T / (h^-1/2 ||v||_dT) is mesh-size independent."""
    ratios = []
    for N in (4, 16, 64):
        m = build_uniform_mesh(2, N)
        sp = build_space(m, 1)
        ft = sp.facet_tables(sp.facet_quadrature())
        ct = sp.cell_tables(sp.cell_quadrature())
        c = 0
        V = ct.value(c)
        M = np.einsum("q,qic,qjc->ij", ct.wdet[c], V, V)
        # data vector = values at all facet quadrature points; sup via the
        # generalized eigenvalue problem of ||r(v)||^2 against ||v||^2_dT
        rows = []
        wts = []
        for f in m.cell_facets[c]:
            wf = ft.w * m.facet_measures[f]
            tr = ft.trace_value(f, 0 if m.facet_cells[f, 0] == c else 1)
            for q in range(len(wf)):
                for d in range(2):
                    e = np.zeros((len(wf), 2))
                    e[q, d] = 1.0
                    rows.append(np.einsum("q,qd,qid->i", wf, e, tr))
                    wts.append(wf[q])
        Q = np.stack(rows, axis=1)
        W = np.diag(wts)
        a = Q.T @ np.linalg.solve(M, Q)
        lam = np.linalg.eigvalsh(np.linalg.solve(W, a))
        h = m.cell_diameters[c]
        ratios.append(np.sqrt(lam.max() * h))
    ratios = np.array(ratios)
    assert np.all(ratios < 10.0)
    assert ratios.max() / ratios.min() < 1.05


# ---- lifted-form identity over the mesh -------------------------------------

@pytest.mark.parametrize("dim,k", [(2, 1), (2, 2), (3, 1), (3, 2)])
def test_global_lifting_identity(dim, k):
    """Facet-sum form equals the cell-sum lifted form for random pairs."""
    spec = make_example(2 if dim == 2 else 1, eps=1e-2)
    N = 4 if dim == 2 else 2
    m = build_uniform_mesh(dim, N)
    sp = build_space(m, k)
    cfg = StabilizationConfig(alpha="upwind", c0=StabilizationConfig.default_c0(dim))
    ctx = ElementContext(sp, spec, cfg)
    rng = np.random.default_rng(8)
    for _ in range(5):
        cu = rng.standard_normal(sp.n_dofs)
        cv = rng.standard_normal(sp.n_dofs)
        facet_sum = 0.0
        for f in range(m.n_facets):
            wf = ctx.ft.w * m.facet_measures[f]
            bnq = ctx.bn[f]
            if m.facet_cells[f, 1] == -1:
                if ctx.labels[f] != -1:  # only inflow boundary contributes
                    continue
                c0 = m.facet_cells[f, 0]
                u0 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 0), cu[sp.cell_dofs[c0]])
                v0 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 0), cv[sp.cell_dofs[c0]])
                facet_sum += (wf * bnq * (u0 * v0).sum(1)).sum()
            else:
                c0, c1 = m.facet_cells[f]
                u0 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 0), cu[sp.cell_dofs[c0]])
                u1 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 1), cu[sp.cell_dofs[c1]])
                v0 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 0), cv[sp.cell_dofs[c0]])
                v1 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 1), cv[sp.cell_dofs[c1]])
                ap = ctx.alpha_p[f]
                wavg = ap[:, None] * v0 + (1 - ap)[:, None] * v1
                facet_sum += (wf * bnq * ((u0 - u1) * wavg).sum(1)).sum()
        cell_sum = 0.0
        for c in range(m.n_cells):
            ker = ctx.cell_kernel(c)
            lift = ker["lam_beta"] @ cu[ker["ext"]]
            vloc = cv[sp.cell_dofs[c]]
            cell_sum += lift @ (ker["M"] @ vloc)
        assert abs(facet_sum - cell_sum) < 1e-10 * max(1.0, abs(facet_sum))


# ---- stabilization parameter --------------------------------------------------

def test_compute_delta_regimes():
    cfg = StabilizationConfig(c0=0.4 / np.sqrt(2), c1=1.0, cap_c_inv=0.0, cap_rho0=None)
    h = np.sqrt(2) / 16
    # advection regime: paper experiment rule delta = 0.4/N
    d = compute_delta(cfg, h, 1e-6, beta_max=np.sqrt(5.0))
    assert d == pytest.approx(0.4 / 16)
    # diffusion regime
    d2 = compute_delta(cfg, h, 1.0, beta_max=np.sqrt(5.0))
    assert d2 == pytest.approx(cfg.c1 * h * h / 1.0)
    # gamma cap active
    cfg3 = StabilizationConfig(c0=0.4 / np.sqrt(2), cap_c_inv=0.0, cap_rho0=1.0)
    d3 = compute_delta(cfg3, h, 1e-6, beta_max=np.sqrt(5.0), gamma_max=10.0)
    assert d3 == pytest.approx(1.0 / 200.0)
    # gamma cap skipped when gamma == 0
    d4 = compute_delta(cfg3, h, 1e-6, beta_max=np.sqrt(5.0), gamma_max=0.0)
    assert d4 == pytest.approx(0.4 / 16)
    # curl-inverse cap
    cfg5 = StabilizationConfig(c0=10.0, cap_c_inv=8.0, cap_rho0=None)
    d5 = compute_delta(cfg5, h, 1.0, beta_max=1e9)
    assert d5 == pytest.approx(h * h / (2 * 64.0))


def test_curl_inverse_constant_measured():
    m = build_uniform_mesh(2, 2)
    assert curl_inverse_constant(build_space(m, 1)) == 0.0
    sp2 = build_space(m, 2)
    c = curl_inverse_constant(sp2)
    assert c > 0
    # inequality holds and is attained over random fields
    rule = sp2.cell_quadrature()
    ct = sp2.cell_tables(rule, want_curl_jac=True)
    rng = np.random.default_rng(4)
    best = 0.0
    for _ in range(100):
        v = rng.standard_normal(sp2.n_local)
        cell = 1
        cc = np.einsum("qid,i->qd", ct.curlcurl(cell), v)
        cu = np.einsum("qi,i->q", ct.curl(cell), v)
        num = np.sqrt((ct.wdet[cell] * (cc**2).sum(1)).sum())
        den = np.sqrt((ct.wdet[cell] * cu**2).sum())
        h = m.cell_diameters[cell]
        if den > 1e-14:
            ratio = num * h / den
            best = max(best, ratio)
            assert ratio <= c * (1 + 1e-10)
    assert best > 0.2 * c


def test_stabilization_deltas_defaults():
    spec = make_example(2, eps=1e-6)
    m = build_uniform_mesh(2, 8)
    sp = build_space(m, 1)
    cfg = StabilizationConfig(c0=StabilizationConfig.default_c0(2))
    deltas = stabilization_deltas(sp, spec, cfg)
    assert np.allclose(deltas, 0.4 / 8, rtol=1e-12)


# ---- assembly ----------------------------------------------------------------

@pytest.mark.parametrize("dim,k", [(2, 1), (2, 2), (3, 1)])
def test_patch_solutions(dim, k):
    spec = patch_spec(dim, k)
    m = build_uniform_mesh(dim, 2)
    sp = build_space(m, k)
    cfg = StabilizationConfig(c0=StabilizationConfig.default_c0(dim))
    exact = interpolate(sp, spec.exact.value)
    for variant in ("galerkin", "supg"):
        system = apply_dirichlet(assemble(sp, spec, cfg, variant), sp, spec)
        u, res = solve_linear(system)
        assert res < 1e-10
        assert np.abs(u.coeffs - exact.coeffs).max() < 1e-9


def test_supg_equals_galerkin_without_stabilization():
    spec = make_example(2, eps=1e-2)
    m = build_uniform_mesh(2, 4)
    sp = build_space(m, 1)
    cfg = StabilizationConfig(alpha="centered", c0=StabilizationConfig.default_c0(2))
    a = assemble(sp, spec, cfg, "galerkin").matrix()
    b = assemble(sp, spec, cfg, "supg", deltas=np.zeros(m.n_cells)).matrix()
    diff = (a - b).tocoo()
    scale = np.abs(a.data).max()
    assert (np.abs(diff.data).max() if diff.nnz else 0.0) < 1e-12 * scale


def test_jump_penalty_symmetric_psd():
    spec = make_example(2, eps=1e-2)
    m = build_uniform_mesh(2, 4)
    sp = build_space(m, 1)
    cfg = StabilizationConfig(alpha="upwind", c0=StabilizationConfig.default_c0(2))
    a0 = assemble(sp, spec, cfg, "galerkin").matrix()
    a1 = assemble(sp, spec, cfg, "s1_only").matrix()
    s1 = (a1 - a0).toarray()
    assert np.abs(s1 - s1.T).max() < 1e-12
    eig = np.linalg.eigvalsh(s1)
    assert eig.min() > -1e-11


def test_variant_validation():
    spec = make_example(2, eps=1e-2)
    sp = build_space(build_uniform_mesh(2, 2), 1)
    cfg = StabilizationConfig()
    with pytest.raises(ValueError):
        assemble(sp, spec, cfg, "bogus")
    with pytest.raises(ValueError):
        assemble(sp, spec, cfg, "sold")  # missing directions


def test_apply_dirichlet_values():
    spec = make_example(2, eps=1e-3)
    m = build_uniform_mesh(2, 4)
    sp = build_space(m, 1)
    cfg = StabilizationConfig(c0=StabilizationConfig.default_c0(2))
    system = apply_dirichlet(assemble(sp, spec, cfg, "supg"), sp, spec)
    ih = interpolate(sp, spec.exact.value)
    bidx = np.nonzero(sp.boundary_dofs)[0]
    assert np.array_equal(system.constrained, bidx)
    assert np.allclose(system.constrained_values, ih.coeffs[bidx])
    assert np.allclose(system.rhs[bidx], ih.coeffs[bidx])
    mat = system.matrix()
    for i in bidx[:10]:
        row = mat.getrow(i)
        assert row.nnz == 1 and row[0, i] == pytest.approx(1.0)

    # homogeneous data: zero boundary values
    spec0 = make_example(4)
    system0 = apply_dirichlet(assemble(sp, spec0, cfg, "galerkin"), sp, spec0)
    assert np.abs(system0.constrained_values).max() == 0.0


def test_assembled_system_shape_and_triplets():
    spec = make_example(2, eps=1e-2)
    sp = build_space(build_uniform_mesh(2, 2), 1)
    cfg = StabilizationConfig(c0=StabilizationConfig.default_c0(2))
    system = assemble(sp, spec, cfg, "supg")
    mat = system.matrix()
    assert mat.shape == (sp.n_dofs, sp.n_dofs)
    rows, cols, _ = system.triplets
    pairs = set(zip(rows.tolist(), cols.tolist()))
    assert len(pairs) == mat.nnz  # no duplicate entries after finalization


def test_coercivity_sampled_small():
    spec = make_example(2, eps=1e-6)
    m = build_uniform_mesh(2, 4)
    sp = build_space(m, 1)
    rho0 = friedrichs_rho(spec, friedrichs_sample_points(m)).min_rho
    cfg = StabilizationConfig(alpha="upwind", c0=StabilizationConfig.default_c0(2),
                              cap_rho0=rho0, cap_c_inv=curl_inverse_constant(sp))
    deltas = stabilization_deltas(sp, spec, cfg)
    amat = assemble(sp, spec, cfg, "supg", deltas=deltas).matrix()
    gmat = energy_norm_matrix(sp, spec, cfg, deltas, l2_weight=rho0)
    rng = np.random.default_rng(12)
    free = ~sp.boundary_dofs
    for _ in range(20):
        v = np.zeros(sp.n_dofs)
        v[free] = rng.standard_normal(free.sum())
        quad_a = v @ (amat @ v)
        quad_n = v @ (gmat @ v)
        assert quad_a >= 0.5 * quad_n * (1 - 1e-9) - 1e-12

    # the Gram matrix agrees with the direct norm evaluation
    v = np.zeros(sp.n_dofs)
    v[free] = rng.standard_normal(free.sum())
    parts = discrete_energy_norm(sp, spec, DiscreteField(sp, v), cfg, deltas,
                                 l2_weight=rho0)
    assert v @ (gmat @ v) == pytest.approx(parts.total, rel=1e-10)

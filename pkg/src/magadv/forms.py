"""Discrete forms: lifting operator, stabilized advection, system assembly.

The bilinear form is assembled as the plain Galerkin form plus optional
stabilization pieces:

  * an upwind jump penalty on interior facets (switching the facet average
    from centered to upwind-weighted), and
  * an elementwise residual stabilization testing the full residual operator
    against the weighted discrete advection of the test function.

The discrete advection of a function on a cell subtracts the lifting of its
weighted facet jumps, so its local matrix couples the cell's DOFs with all
facet neighbors' DOFs. Assembly walks cells and facets in ascending order and
accumulates triplets, which keeps results independent of any parallel
scheduling.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .fe_space import FeSpace, interpolate
from .mesh import BoundaryLabel, classify_boundary_facets
from .problem import ProblemSpec, friedrichs_rho, friedrichs_sample_points

VARIANTS = ("galerkin", "s1_only", "s2_only", "supg", "sold")


@dataclass
class StabilizationConfig:
    """Facet weights, stabilization parameters and their admissibility caps.

    alpha: "upwind", "centered", or a float giving a constant plus-side weight
    (the minus side gets 1 - alpha). c0 scales the advection-regime parameter
    delta = c0 * h_T; c1 the diffusion-regime delta = c1 * h_T^2 / eps. The
    caps use the measured curl inverse constant and the reaction bound
    rho0 / (2 ||gamma||_inf^2); either cap is skipped when its data is absent.
    """

    alpha: object = "upwind"
    c0: float = 0.4 / np.sqrt(2.0)
    c1: float = 1.0
    c_sigma: float = 1.1
    cap_c_inv: float = None
    cap_rho0: float = None
    use_s1: bool = True
    use_s2: bool = True
    strong_dirichlet: bool = True
    theta: float = 0.5
    sold_tol: float = 1e-8
    sold_max_iter: int = 50

    @staticmethod
    def default_c0(dim: int) -> float:
        # makes delta = 0.4 / N on the uniform meshes (h_T = sqrt(dim)/N)
        return 0.4 / np.sqrt(dim)


def jump(v_plus, v_minus):
    return np.asarray(v_plus) - np.asarray(v_minus)


def weighted_average(v_plus, v_minus, alpha_plus):
    ap = np.asarray(alpha_plus)
    return ap[..., None] * np.asarray(v_plus) + (1.0 - ap)[..., None] * np.asarray(v_minus)


def alpha_plus_values(config, beta_n, labels, facet_boundary):
    """Plus-side facet weight at every facet quadrature point (nf, nq).

    Interior facets follow the configured rule; boundary facets are fixed to
    0 on outflow and 1 on inflow.
    """
    if config.alpha == "upwind":
        ap = np.where(beta_n > 0.0, 0.0, 1.0)
    elif config.alpha == "centered":
        ap = np.full_like(beta_n, 0.5)
    else:
        a = float(config.alpha)
        ap = np.full_like(beta_n, a)
    ap[facet_boundary & (labels == BoundaryLabel.OUTFLOW)] = 0.0
    ap[facet_boundary & (labels == BoundaryLabel.INFLOW)] = 1.0
    return ap


def curl_inverse_constant(space: FeSpace) -> float:
    """Measured constant C in ||curl curl v|| <= C h^-1 ||curl v|| over the
    local spaces of this mesh's cell shapes (0 when curl curl vanishes
    identically, as for k=1)."""
    rule = space.cell_quadrature()
    best = 0.0
    from .fe_space import _map_tables

    for s, jac in enumerate(space.class_jac):
        tab = _map_tables(space.ref, jac, True, rule.points)
        det = np.linalg.det(jac)
        w = rule.weights * det
        cells_in_class = np.nonzero(space.class_of == s)[0]
        h = space.mesh.cell_diameters[cells_in_class[0]]
        cc = tab["curlcurl"]
        cu = tab["curl"]
        if cu.ndim == 2:
            cu = cu[:, :, None]
        a = np.einsum("q,qid,qjd->ij", w, cc, cc)
        b = np.einsum("q,qid,qjd->ij", w, cu, cu) / h**2
        if np.abs(a).max() < 1e-28:
            continue
        lam, vec = np.linalg.eigh(b)
        keep = lam > 1e-12 * lam.max()
        basis = vec[:, keep] / np.sqrt(lam[keep])
        red = basis.T @ a @ basis
        best = max(best, float(np.linalg.eigvalsh(red).max()))
    return float(np.sqrt(max(best, 0.0)))


def compute_delta(config: StabilizationConfig, h_t, eps, beta_max, gamma_max=0.0):
    """Streamline stabilization parameter for one cell (or arrays of cells).

    Advection-dominated cells (beta_max * h / (2 eps) > 1) get c0 * h; others
    c1 * h^2 / eps. The result is clamped to h^2 / (2 C_inv^2 eps) and, when
    the cell's reaction bound is positive, to rho0 / (2 ||gamma||^2)."""
    h_t = np.asarray(h_t, dtype=float)
    beta_max = np.asarray(beta_max, dtype=float)
    gamma_max = np.asarray(gamma_max, dtype=float)
    adv = beta_max * h_t / (2.0 * eps) > 1.0
    delta = np.where(adv, config.c0 * h_t, config.c1 * h_t**2 / eps)
    if config.cap_c_inv is not None and config.cap_c_inv > 0:
        delta = np.minimum(delta, h_t**2 / (2.0 * config.cap_c_inv**2 * eps))
    if config.cap_rho0 is not None and config.cap_rho0 > 0:
        safe = np.where(gamma_max > 0, gamma_max, 1.0)
        gcap = np.where(gamma_max > 0, config.cap_rho0 / (2.0 * safe**2), np.inf)
        delta = np.minimum(delta, gcap)
    return delta if delta.ndim else float(delta)


def stabilization_deltas(space: FeSpace, spec: ProblemSpec, config: StabilizationConfig):
    """Per-cell delta with measured cap constants filled in when absent."""
    cfg = config
    if cfg.cap_c_inv is None:
        cfg = _replace(cfg, cap_c_inv=curl_inverse_constant(space))
    if cfg.cap_rho0 is None and not spec.gamma_is_zero:
        rep = friedrichs_rho(spec, friedrichs_sample_points(space.mesh))
        cfg = _replace(cfg, cap_rho0=rep.min_rho)
    rule = space.cell_quadrature()
    tabs = space.cell_tables(rule, want_curl_jac=False)
    pts = tabs.phys.reshape(-1, space.dim)
    bmax = np.linalg.norm(spec.beta(pts), axis=1).reshape(space.mesh.n_cells, -1).max(axis=1)
    gmax = np.abs(spec.gamma(pts)).reshape(space.mesh.n_cells, -1).max(axis=1)
    return compute_delta(cfg, space.mesh.cell_diameters, spec.eps, bmax, gmax)


def _replace(cfg, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


@dataclass
class AssembledSystem:
    """Assembled sparse system plus the right-hand side. The matrix keeps the
    full DOF count; Dirichlet application records the constrained DOFs and
    rewrites their rows/columns symmetrically. Triplets are exposed in the
    canonical (row-major, deduplicated) ordering."""

    space: FeSpace
    mat: sps.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    constrained_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def matrix(self) -> sps.csr_matrix:
        return self.mat

    @property
    def triplets(self):
        coo = self.mat.tocoo()
        return coo.row, coo.col, coo.data

    @classmethod
    def from_matrix(cls, space, mat, rhs, constrained=None, values=None):
        return cls(space, mat.tocsr(), rhs,
                   constrained if constrained is not None else np.empty(0, dtype=np.int64),
                   values if values is not None else np.empty(0))


class _TripletAccumulator:
    """Triplet buffer compressed into CSR partial sums in fixed-size chunks,
    keeping peak memory bounded and results deterministic."""

    def __init__(self, n, flush_at=6_000_000):
        self.n = n
        self.flush_at = flush_at
        self.rows, self.cols, self.vals = [], [], []
        self.count = 0
        self.partial = None

    def add(self, rdof, cdof, block):
        self.rows.append(np.repeat(rdof, len(cdof)).astype(np.int32))
        self.cols.append(np.tile(cdof, len(rdof)).astype(np.int32))
        self.vals.append(np.asarray(block, dtype=float).ravel())
        self.count += block.size
        if self.count >= self.flush_at:
            self._flush()

    def _flush(self):
        if not self.rows:
            return
        mat = sps.coo_matrix(
            (np.concatenate(self.vals),
             (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.n, self.n),
        ).tocsr()
        mat.sum_duplicates()
        self.partial = mat if self.partial is None else self.partial + mat
        self.rows, self.cols, self.vals = [], [], []
        self.count = 0

    def finish(self) -> sps.csr_matrix:
        self._flush()
        if self.partial is None:
            self.partial = sps.csr_matrix((self.n, self.n))
        self.partial.sum_duplicates()
        return self.partial


class ElementContext:
    """Shared per-assembly data: field evaluations at quadrature points,
    facet weights, and per-cell lifting/advection tables."""

    def __init__(self, space: FeSpace, spec: ProblemSpec, config: StabilizationConfig,
                 cell_degree=None, facet_degree=None, labels=None, need_curlcurl=True):
        self.space = space
        self.spec = spec
        self.config = config
        mesh = space.mesh
        d = mesh.dim
        self.cell_rule = space.cell_quadrature(cell_degree)
        self.facet_rule = space.facet_quadrature(facet_degree)
        self.ct = space.cell_tables(self.cell_rule, want_curl_jac=need_curlcurl)
        self.ft = space.facet_tables(self.facet_rule)
        self.need_curlcurl = need_curlcurl

        pts = self.ct.phys.reshape(-1, d)
        nq = self.cell_rule.n_points
        self.beta_c = np.asarray(spec.beta(pts)).reshape(-1, nq, d)
        self.betajac_c = np.asarray(spec.beta_jac(pts)).reshape(-1, nq, d, d)
        self.gamma_c = np.asarray(spec.gamma(pts)).reshape(-1, nq)
        self.f_c = np.asarray(spec.f(pts)).reshape(-1, nq, d)

        fpts = self.ft.phys.reshape(-1, d)
        nqf = len(self.ft.w)
        self.beta_f = np.asarray(spec.beta(fpts)).reshape(-1, nqf, d)
        self.bn = np.einsum("fqd,fd->fq", self.beta_f, mesh.facet_normals)
        self.labels = labels if labels is not None else classify_boundary_facets(mesh, spec.beta)
        self.alpha_p = alpha_plus_values(config, self.bn, self.labels, mesh.facet_boundary)

    # -- per cell extended DOF structure -------------------------------------
    def cell_ext(self, c):
        mesh = self.space.mesh
        own = self.space.cell_dofs[c]
        ext = list(own)
        pos = {int(g): i for i, g in enumerate(own)}
        nb_pos = []
        for f in mesh.cell_facets[c]:
            c0, c1 = mesh.facet_cells[f]
            nb = c1 if c0 == c else c0
            if nb < 0:
                nb_pos.append(None)
                continue
            positions = []
            for g in self.space.cell_dofs[nb]:
                g = int(g)
                if g not in pos:
                    pos[g] = len(ext)
                    ext.append(g)
                positions.append(pos[g])
            nb_pos.append(np.asarray(positions, dtype=np.int64))
        return np.asarray(ext, dtype=np.int64), nb_pos

    def advection_table(self, c, values, jacobians, beta, beta_jac):
        """Elementwise advection of each basis slot at quadrature points:
        (Du) beta + (D beta)^T u."""
        return (
            np.einsum("qicm,qm->qic", jacobians, beta)
            + np.einsum("qmc,qim->qic", beta_jac, values)
        )

    def lifting_data(self, c, ext, nb_pos, want_axes=False):
        """Lifting data matrices for one cell.

        B_beta columns span the extended DOF set and give the moments of the
        weighted facet data beta.n [u] against the cell's own basis; B_axes
        (when requested) holds the same with beta.n replaced by each normal
        component. Boundary facets enter with the trace itself as the jump.
        """
        space, mesh = self.space, self.space.mesh
        d = mesh.dim
        n_loc = space.n_local
        n_ext = len(ext)
        B_beta = np.zeros((n_loc, n_ext))
        B_axes = np.zeros((d, n_loc, n_ext)) if want_axes else None
        own_slice = np.arange(n_loc)
        for lf, f in enumerate(mesh.cell_facets[c]):
            side = 0 if mesh.facet_cells[f, 0] == c else 1
            s_self = 1.0 if side == 0 else -1.0
            wf = self.ft.w * mesh.facet_measures[f]
            bnq = self.bn[f]
            ap = self.alpha_p[f]
            a_self = ap if side == 0 else 1.0 - ap
            tr_self = self.ft.trace_value(f, side)
            nb = nb_pos[lf]
            base_w = wf * a_self
            if nb is None:
                contrib = np.einsum("q,qid,qjd->ij", base_w * bnq, tr_self, tr_self)
                B_beta[:, own_slice] += s_self * contrib
                if want_axes:
                    con2 = np.einsum("q,qid,qjd->ij", base_w, tr_self, tr_self)
                    for a in range(d):
                        B_axes[a][:, own_slice] += (
                            s_self * mesh.facet_normals[f, a] * con2
                        )
            else:
                tr_nb = self.ft.trace_value(f, 1 - side)
                c_own = np.einsum("q,qid,qjd->ij", base_w * bnq, tr_self, tr_self)
                c_nb = np.einsum("q,qid,qjd->ij", base_w * bnq, tr_self, tr_nb)
                B_beta[:, own_slice] += s_self * c_own
                B_beta[:, nb] += -s_self * c_nb
                if want_axes:
                    d_own = np.einsum("q,qid,qjd->ij", base_w, tr_self, tr_self)
                    d_nb = np.einsum("q,qid,qjd->ij", base_w, tr_self, tr_nb)
                    for a in range(d):
                        na = mesh.facet_normals[f, a]
                        B_axes[a][:, own_slice] += s_self * na * d_own
                        B_axes[a][:, nb] += -s_self * na * d_nb
        return B_beta, B_axes

    def inflow_data_lift(self, c, mass):
        """Coefficients of the lifting of beta.n g over the cell's inflow
        facets, or None when there is no inflow data. Subtracting this from
        the lifted jump data makes the discrete residual vanish at exact
        solutions with nonhomogeneous traces; it is identically zero for
        g = 0."""
        if self.spec.g is None:
            return None
        mesh = self.space.mesh
        b = None
        for f in mesh.cell_facets[c]:
            if mesh.facet_cells[f, 1] != -1 or self.labels[f] != BoundaryLabel.INFLOW:
                continue
            wf = self.ft.w * mesh.facet_measures[f]
            gv = np.asarray(self.spec.g(self.ft.phys[f]))
            tr = self.ft.trace_value(f, 0)
            contrib = np.einsum("q,qd,qid->i", wf * self.bn[f], gv, tr)
            b = contrib if b is None else b + contrib
        if b is None:
            return None
        return np.linalg.solve(mass, b)

    def cell_kernel(self, c, want_axes=False):
        """All per-cell tables needed for stabilized assembly and norms."""
        space = self.space
        ext, nb_pos = self.cell_ext(c)
        V = self.ct.value(c)
        Jt = self.ct.jacobian(c)
        wq = self.ct.wdet[c]
        M = np.einsum("q,qic,qjc->ij", wq, V, V)
        B_beta, B_axes = self.lifting_data(c, ext, nb_pos, want_axes)
        lam_beta = np.linalg.solve(M, B_beta)
        lam_axes = None
        if want_axes:
            lam_axes = np.array([np.linalg.solve(M, B_axes[a]) for a in range(space.dim)])
        Lown = self.advection_table(c, V, Jt, self.beta_c[c], self.betajac_c[c])
        n_ext = len(ext)
        ltilde = np.zeros((len(wq), n_ext, space.dim))
        ltilde[:, : space.n_local, :] = Lown
        ltilde -= np.einsum("ix,qid->qxd", lam_beta, V)
        return {
            "ext": ext, "nb_pos": nb_pos, "V": V, "Jt": Jt, "wq": wq, "M": M,
            "lam_beta": lam_beta, "lam_axes": lam_axes, "Lown": Lown,
            "ltilde": ltilde,
            "curl": self.ct.curl(c),
            "curlcurl": self.ct.curlcurl(c) if self.need_curlcurl else None,
        }


def lifting_apply(space: FeSpace, cell: int, facet_values, facet_alpha,
                  facet_rule_degree=None):
    """Coefficients (in the cell's basis) of the lifting of weighted facet
    data: solves M c = b with b_i = sum_F int_F alpha v . w_i ds.

    facet_values / facet_alpha are lists over the cell's local facets with
    arrays (nq, d) / (nq,) at the facets' canonical quadrature points (use
    `facet_tables(...).phys` to obtain them).
    """
    mesh = space.mesh
    rule = space.facet_quadrature(facet_rule_degree)
    ft = space.facet_tables(rule)
    crule = space.cell_quadrature()
    ct = space.cell_tables(crule)
    V = ct.value(cell)
    M = np.einsum("q,qic,qjc->ij", ct.wdet[cell], V, V)
    b = np.zeros(space.n_local)
    for lf, f in enumerate(mesh.cell_facets[cell]):
        vals = np.asarray(facet_values[lf])
        alph = np.asarray(facet_alpha[lf])
        side = 0 if mesh.facet_cells[f, 0] == cell else 1
        tr = ft.trace_value(f, side)
        wf = ft.w * mesh.facet_measures[f]
        b += np.einsum("q,qd,qid->i", wf * alph, vals, tr)
    return np.linalg.solve(M, b)


def assemble(space: FeSpace, spec: ProblemSpec, config: StabilizationConfig,
             variant: str, deltas=None, sold_dirs=None, sold_sigma=None,
             context: ElementContext = None) -> AssembledSystem:
    """Assemble the requested variant's matrix and right-hand side.

    galerkin: unstabilized form. s1_only adds the facet jump penalty;
    s2_only adds the elementwise residual stabilization; supg adds both.
    sold additionally tests the residual against the advection of the test
    function along the frozen per-cell directions `sold_dirs` scaled by
    `sold_sigma`.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    use_s1 = variant in ("s1_only", "supg", "sold")
    use_s2 = variant in ("s2_only", "supg", "sold")
    is_sold = variant == "sold"
    if is_sold and (sold_dirs is None or sold_sigma is None):
        raise ValueError("sold variant requires sold_dirs and sold_sigma")

    mesh = space.mesh
    d = mesh.dim
    nc = mesh.n_cells
    ctx = context or ElementContext(space, spec, config, need_curlcurl=use_s2 or is_sold)
    if deltas is None:
        deltas = (stabilization_deltas(space, spec, config) if use_s2
                  else np.zeros(nc))
    deltas = np.asarray(deltas, dtype=float)

    acc = _TripletAccumulator(space.n_dofs)
    rhs = np.zeros(space.n_dofs)
    eps = spec.eps
    g_fun = spec.g
    scatter = acc.add

    need_lift = use_s2 or is_sold
    for c in range(nc):
        own = space.cell_dofs[c]
        if need_lift:
            ker = ctx.cell_kernel(c, want_axes=is_sold)
            V, Jt, wq, curl = ker["V"], ker["Jt"], ker["wq"], ker["curl"]
            Lown = ker["Lown"]
        else:
            V = ctx.ct.value(c)
            Jt = ctx.ct.jacobian(c)
            wq = ctx.ct.wdet[c]
            curl = ctx.ct.curl(c)
            Lown = ctx.advection_table(c, V, Jt, ctx.beta_c[c], ctx.betajac_c[c])
            ker = None

        # volume terms of the unstabilized form
        if d == 2:
            a_loc = eps * np.einsum("q,qi,qj->ij", wq, curl, curl)
        else:
            a_loc = eps * np.einsum("q,qid,qjd->ij", wq, curl, curl)
        a_loc += np.einsum("q,qjc,qic->ij", wq, Lown, V)
        a_loc += np.einsum("q,qic,qjc->ij", wq * ctx.gamma_c[c], V, V)
        scatter(own, own, a_loc)
        rhs[own] += np.einsum("q,qd,qid->i", wq, ctx.f_c[c], V)

        # boundary facet terms of the unstabilized form (inflow only)
        for lf, f in enumerate(mesh.cell_facets[c]):
            if mesh.facet_cells[f, 1] != -1 or ctx.labels[f] != BoundaryLabel.INFLOW:
                continue
            wf = ctx.ft.w * mesh.facet_measures[f]
            bnq = ctx.bn[f]
            tr = ctx.ft.trace_value(f, 0)
            blk = -np.einsum("q,qid,qjd->ij", wf * bnq, tr, tr)
            scatter(own, own, blk)
            if g_fun is not None:
                gv = np.asarray(g_fun(ctx.ft.phys[f]))
                rhs[own] += -np.einsum("q,qd,qid->i", wf * bnq, gv, tr)

        # residual stabilization
        if use_s2 or is_sold:
            ext = ker["ext"]
            ltilde = ker["ltilde"]
            n_loc = space.n_local
            if use_s2 and deltas[c] != 0.0:
                atilde = ltilde.copy()
                atilde[:, :n_loc, :] += eps * ker["curlcurl"]
                atilde[:, :n_loc, :] += ctx.gamma_c[c][:, None, None] * V
                s2 = deltas[c] * np.einsum("q,qtd,qrd->rt", wq, atilde, ltilde)
                scatter(ext, ext, s2)
                rhs[ext] += deltas[c] * np.einsum("q,qd,qrd->r", wq, ctx.f_c[c], ltilde)
                # inflow data tested against the advected test function
                if g_fun is not None:
                    _add_inflow_stab_rhs(ctx, c, ker, deltas[c], g_fun, rhs)
            if is_sold and sold_sigma[c] != 0.0:
                z = sold_dirs[c]
                lz = np.zeros_like(ltilde)
                lz[:, :n_loc, :] = np.einsum("qicm,m->qic", Jt, z)
                lam_z = np.einsum("a,aix->ix", z, ker["lam_axes"])
                lz -= np.einsum("ix,qid->qxd", lam_z, V)
                # full residual operator (reaction included, so the term still
                # vanishes at exact polynomial solutions when gamma != 0)
                rmat = ltilde.copy()
                rmat[:, :n_loc, :] += eps * ker["curlcurl"]
                rmat[:, :n_loc, :] += ctx.gamma_c[c][:, None, None] * V
                blk = sold_sigma[c] * np.einsum("q,qtd,qrd->rt", wq, rmat, lz)
                scatter(ext, ext, blk)
                data = ctx.f_c[c]
                lg = ctx.inflow_data_lift(c, ker["M"])
                if lg is not None:
                    data = data - np.einsum("i,qid->qd", lg, V)
                rhs[ext] += sold_sigma[c] * np.einsum("q,qd,qrd->r", wq, data, lz)

    # interior facet terms: centered average exchange plus optional jump
    # penalty switching it to the upwind-weighted average
    for f in mesh.interior_facets():
        c0, c1 = mesh.facet_cells[f]
        dofs = (space.cell_dofs[c0], space.cell_dofs[c1])
        tr = (ctx.ft.trace_value(f, 0), ctx.ft.trace_value(f, 1))
        wf = ctx.ft.w * mesh.facet_measures[f]
        bnq = ctx.bn[f]
        s1w = np.zeros_like(bnq)
        if use_s1:
            s1w = -(2.0 * ctx.alpha_p[f] - 1.0) * bnq / 2.0
        for a in (0, 1):          # test side
            s_a = 1.0 if a == 0 else -1.0
            for b in (0, 1):      # trial side
                s_b = 1.0 if b == 0 else -1.0
                wab = wf * (-bnq * s_b * 0.5 + s1w * s_a * s_b)
                blk = np.einsum("q,qid,qjd->ij", wab, tr[a], tr[b])
                scatter(dofs[a], dofs[b], blk)

    return AssembledSystem(space=space, mat=acc.finish(), rhs=rhs)


def _add_inflow_stab_rhs(ctx, c, ker, delta, g_fun, rhs):
    """- sum_{inflow facets} <beta.n, g . delta Ltilde v>, with the advected
    test function evaluated on the facet."""
    mesh = ctx.space.mesh
    d = mesh.dim
    for lf, f in enumerate(mesh.cell_facets[c]):
        if mesh.facet_cells[f, 1] != -1 or ctx.labels[f] != BoundaryLabel.INFLOW:
            continue
        wf = ctx.ft.w * mesh.facet_measures[f]
        bnq = ctx.bn[f]
        gv = np.asarray(g_fun(ctx.ft.phys[f]))
        trv = ctx.ft.trace_value(f, 0)
        trj = ctx.ft.trace_jacobian(f, 0)
        pts = ctx.ft.phys[f]
        beta_f = ctx.beta_f[f]
        bjac = np.asarray(ctx.spec.beta_jac(pts))
        l_own = (
            np.einsum("qicm,qm->qic", trj, beta_f)
            + np.einsum("qmc,qim->qic", bjac, trv)
        )
        ext = ker["ext"]
        n_loc = ctx.space.n_local
        ltr = np.zeros((len(wf), len(ext), d))
        ltr[:, :n_loc, :] = l_own
        ltr -= np.einsum("ix,qid->qxd", ker["lam_beta"], trv)
        rhs[ext] += -delta * np.einsum("q,qd,qxd->x", wf * bnq, gv, ltr)


def apply_dirichlet(system: AssembledSystem, space: FeSpace, spec: ProblemSpec) -> AssembledSystem:
    """Constrain tangential boundary DOFs to the interpolated trace data and
    eliminate them symmetrically, keeping the full system dimension."""
    if spec.exact is not None:
        values = interpolate(space, spec.exact.value).coeffs
    elif spec.g is not None:
        values = interpolate(space, spec.g).coeffs
    else:
        values = np.zeros(space.n_dofs)
    bmask = space.boundary_dofs
    bidx = np.nonzero(bmask)[0]
    bvals = np.zeros(space.n_dofs)
    bvals[bidx] = values[bidx]

    mat = system.matrix()
    rhs = system.rhs - mat @ bvals
    rhs[bidx] = bvals[bidx]
    free = sps.diags((~bmask).astype(float))
    pinned = sps.diags(bmask.astype(float))
    mat2 = (free @ mat @ free + pinned).tocsr()
    return AssembledSystem.from_matrix(space, mat2, rhs, bidx, bvals[bidx])

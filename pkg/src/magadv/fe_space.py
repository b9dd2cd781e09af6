"""Second-kind Nedelec (full vector-polynomial) H(curl) elements on simplices.

Local spaces are (P_k)^d for k in {1, 2}. Degrees of freedom are tangential
moments against orthonormal Legendre polynomials on edges, in-plane moments
against a per-face frame (3D, k=2), and interior moments (2D, k=2). All
functionals are defined on the physical mesh entities with ascending-vertex
orientation, so shared functionals agree between cells and tangential traces
are continuous by construction.

Cell-local bases are covariant-Piola images of the reference basis composed
with a per-cell change of basis that makes them dual to the physical
functionals; the change of basis is cached by cell congruence class and
vertex-ordering signature.
"""

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .mesh import Mesh, local_edge_pairs
from .quadrature import QuadratureRule, facet_barycentric, facet_rule, segment_rule, simplex_rule

_REF_VERTICES = {
    2: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    3: np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
}

_PERMS3 = list(permutations((0, 1, 2)))
_PERM_ID3 = {p: i for i, p in enumerate(_PERMS3)}
_PERMS2 = list(permutations((0, 1)))
_PERM_ID2 = {p: i for i, p in enumerate(_PERMS2)}


def monomial_exponents(dim: int, k: int) -> np.ndarray:
    """Exponent tuples of total degree <= k, ordered by degree then lex."""
    exps = []
    if dim == 2:
        for deg in range(k + 1):
            for a in range(deg, -1, -1):
                exps.append((a, deg - a))
    else:
        for deg in range(k + 1):
            for a in range(deg, -1, -1):
                for b in range(deg - a, -1, -1):
                    exps.append((a, b, deg - a - b))
    return np.asarray(exps, dtype=np.int64)


def eval_monomials(exps: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(pts)
    out = np.ones((len(pts), len(exps)))
    for a in range(pts.shape[1]):
        out *= pts[:, a, None] ** exps[None, :, a]
    return out


def eval_monomial_grads(exps, pts):
    pts = np.atleast_2d(pts)
    n, d = pts.shape
    out = np.zeros((n, len(exps), d))
    for a in range(d):
        e = exps.copy()
        mask = e[:, a] > 0
        e[mask, a] -= 1
        vals = eval_monomials(e, pts)
        out[:, :, a] = np.where(mask[None, :], exps[None, :, a] * vals, 0.0)
    return out


def eval_monomial_hessians(exps, pts):
    pts = np.atleast_2d(pts)
    n, d = pts.shape
    out = np.zeros((n, len(exps), d, d))
    for a in range(d):
        for b in range(d):
            e = exps.copy()
            fac = e[:, a].copy()
            e[:, a] = np.maximum(e[:, a] - 1, 0)
            fac2 = fac * e[:, b]
            ok = (exps[:, a] > 0) & (e[:, b] > 0)
            e[:, b] = np.maximum(e[:, b] - 1, 0)
            vals = eval_monomials(e, pts)
            out[:, :, a, b] = np.where(ok[None, :], fac2[None, :] * vals, 0.0)
    return out


def _shifted_legendre(n_moments: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal Legendre values on [0,1]: (n_moments, len(s))."""
    x = 2.0 * s - 1.0
    out = np.empty((n_moments, len(s)))
    p_prev = np.ones_like(x)
    p = x.copy()
    for i in range(n_moments):
        if i == 0:
            base = p_prev
        elif i == 1:
            base = p
        else:
            p_next = ((2 * i - 1) * x * p - (i - 1) * p_prev) / i
            p_prev, p = p, p_next
            base = p
        out[i] = np.sqrt(2.0 * i + 1.0) * base
    return out


@dataclass
class ReferenceElement:
    dim: int
    degree: int
    exps: np.ndarray = field(init=False)
    coef: np.ndarray = field(init=False)  # (n_basis, dim, n_mono)
    n_basis: int = field(init=False)
    edge_rule: QuadratureRule = field(init=False)
    face_rule: QuadratureRule = field(init=False)
    cell_rule: QuadratureRule = field(init=False)

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"unsupported degree {self.degree}; only k in {{1, 2}}")
        if self.dim not in (2, 3):
            raise ValueError(f"unsupported dim {self.dim}")
        d, k = self.dim, self.degree
        self.exps = monomial_exponents(d, k)
        nm = len(self.exps)
        self.n_basis = d * nm
        self.edge_rule = segment_rule(2 * k + 3)
        self.face_rule = facet_rule(3, 2 * k + 2) if d == 3 else None
        self.cell_rule = simplex_rule(d, 2 * k + 3)
        # duality matrix against unit monomial fields, then invert
        dual = np.zeros((self.n_basis, self.n_basis))
        verts = _REF_VERTICES[d]
        ids = np.arange(d + 1)

        def mono_fields(pts):
            m = eval_monomials(self.exps, pts)
            out = np.zeros((len(pts), self.n_basis, d))
            for c in range(d):
                out[:, c * nm:(c + 1) * nm, c] = m
            return out

        rows = apply_cell_functionals(self, verts, ids, mono_fields)
        dual[:, :] = rows
        self.coef_flat = np.linalg.solve(dual, np.eye(self.n_basis))
        # coef[i, c, m]: basis i written in unit monomial fields
        self.coef = np.transpose(self.coef_flat).reshape(self.n_basis, d, nm)

    # ---- local DOF layout -------------------------------------------------
    @property
    def n_edge_moments(self):
        return self.degree + 1

    @property
    def n_face_moments(self):
        return 3 if (self.dim == 3 and self.degree == 2) else 0

    @property
    def n_interior_moments(self):
        return 3 if (self.dim == 2 and self.degree == 2) else 0

    def values(self, pts):
        m = eval_monomials(self.exps, pts)
        return np.einsum("ncm,qm->qnc", self.coef, m)

    def jacobians(self, pts):
        g = eval_monomial_grads(self.exps, pts)
        return np.einsum("ncm,qmp->qncp", self.coef, g)

    def curls(self, pts):
        jac = self.jacobians(pts)
        return _curl_from_jac(jac)

    def curl_jacobians(self, pts):
        """Spatial derivatives of the reference curl.

        2D: gradient of the scalar curl, (nq, nb, 2).
        3D: Jacobian of the curl vector, (nq, nb, 3, 3).
        """
        h = eval_monomial_hessians(self.exps, pts)
        bh = np.einsum("ncm,qmap->qncap", self.coef, h)
        if self.dim == 2:
            return bh[:, :, 1, 0, :] - bh[:, :, 0, 1, :]
        out = np.empty(bh.shape[:2] + (3, 3))
        out[:, :, 0] = bh[:, :, 2, 1, :] - bh[:, :, 1, 2, :]
        out[:, :, 1] = bh[:, :, 0, 2, :] - bh[:, :, 2, 0, :]
        out[:, :, 2] = bh[:, :, 1, 0, :] - bh[:, :, 0, 1, :]
        return out


def _curl_from_jac(jac):
    if jac.shape[-1] == 2:
        return jac[..., 1, 0] - jac[..., 0, 1]
    out = np.empty(jac.shape[:-2] + (3,))
    out[..., 0] = jac[..., 2, 1] - jac[..., 1, 2]
    out[..., 1] = jac[..., 0, 2] - jac[..., 2, 0]
    out[..., 2] = jac[..., 1, 0] - jac[..., 0, 1]
    return out


def apply_cell_functionals(elem: ReferenceElement, verts, vertex_ids, fields_at):
    """Evaluate all local DOF functionals on given vector fields.

    verts: (d+1, d) physical cell vertices; vertex_ids: global ids fixing the
    ascending orientation of entities; fields_at(points) -> (npts, nf, d).
    Returns (n_loc, nf).
    """
    d, k = elem.dim, elem.degree
    pairs = local_edge_pairs(d)
    rows = []
    s = elem.edge_rule.points[:, 0]
    w = elem.edge_rule.weights
    leg = _shifted_legendre(k + 1, s)
    for la, lb in pairs:
        lo, hi = (la, lb) if vertex_ids[la] < vertex_ids[lb] else (lb, la)
        pts = verts[lo][None, :] + s[:, None] * (verts[hi] - verts[lo])[None, :]
        tang = verts[hi] - verts[lo]
        tang = tang / np.linalg.norm(tang)
        vals = fields_at(pts)  # (nq, nf, d)
        ut = np.einsum("qnd,d->qn", vals, tang)
        for i in range(k + 1):
            rows.append(np.einsum("q,qn->n", w * leg[i], ut))
    if elem.n_face_moments:
        lam = facet_barycentric(elem.face_rule)
        fw = elem.face_rule.weights
        for lf in range(4):
            locv = [v for v in range(4) if v != lf]
            order = np.argsort([vertex_ids[v] for v in locv], kind="stable")
            tri = [locv[o] for o in order]
            pa, pb, pc = verts[tri[0]], verts[tri[1]], verts[tri[2]]
            pts = np.einsum("qp,pd->qd", lam, np.stack([pa, pb, pc]))
            e1 = pb - pa
            e1 = e1 / np.linalg.norm(e1)
            wv = (pc - pa) - np.dot(pc - pa, e1) * e1
            e2 = wv / np.linalg.norm(wv)
            bary = (pa + pb + pc) / 3.0
            h_f = max(
                np.linalg.norm(pb - pa), np.linalg.norm(pc - pa), np.linalg.norm(pc - pb)
            )
            vals = fields_at(pts)
            rel = (pts - bary) / h_f
            w3 = np.einsum("qd,d->q", rel, e1)[:, None] * e1 + \
                np.einsum("qd,d->q", rel, e2)[:, None] * e2
            rows.append(np.einsum("q,qnd,d->n", fw, vals, e1))
            rows.append(np.einsum("q,qnd,d->n", fw, vals, e2))
            rows.append(np.einsum("q,qnd,qd->n", fw, vals, w3))
    if elem.n_interior_moments:
        rule = elem.cell_rule
        e = verts[1:] - verts[:1]
        detj = abs(np.linalg.det(e.T))
        pts = verts[0][None, :] + rule.points @ e
        vol = detj * rule.weights.sum()
        cw = rule.weights * detj / vol
        bary = verts.mean(axis=0)
        diff = verts[:, None, :] - verts[None, :, :]
        h_t = np.sqrt((diff**2).sum(-1)).max()
        vals = fields_at(pts)
        rows.append(np.einsum("q,qn->n", cw, vals[:, :, 0]))
        rows.append(np.einsum("q,qn->n", cw, vals[:, :, 1]))
        w3 = (pts - bary) / h_t
        rows.append(np.einsum("q,qnd,qd->n", cw, vals, w3))
    return np.stack(rows)


@dataclass
class FeSpace:
    mesh: Mesh
    degree: int
    ref: ReferenceElement
    n_dofs: int
    cell_dofs: np.ndarray       # (nc, n_loc)
    boundary_dofs: np.ndarray   # (n_dofs,) bool
    jac: np.ndarray             # (nc, d, d), x = p0 + J xhat
    jac_inv: np.ndarray
    jac_invT: np.ndarray
    det: np.ndarray             # (nc,)
    class_of: np.ndarray        # (nc,) congruence class index
    class_jac: np.ndarray       # (n_class, d, d)
    cc_idx: np.ndarray          # (nc,) index into cc_inv_unique
    cc_inv_unique: np.ndarray   # (nu, n_loc, n_loc)
    facet_side_perm: np.ndarray  # (nf, 2) permutation id per side
    _table_cache: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def n_local(self):
        return self.ref.n_basis

    def c_inv(self, c):
        return self.cc_inv_unique[self.cc_idx[c]]

    # ---- quadrature choices ----
    def cell_quadrature(self, degree=None):
        return simplex_rule(self.dim, degree if degree is not None else 2 * self.degree + 3)

    def facet_quadrature(self, degree=None):
        return facet_rule(self.dim, degree if degree is not None else 2 * self.degree + 2)

    def cell_tables(self, rule: QuadratureRule, want_curl_jac=False):
        key = ("cell", rule.degree, len(rule.weights), want_curl_jac)
        tab = self._table_cache.get(key)
        if tab is None:
            tab = _CellTables(self, rule, want_curl_jac)
            self._table_cache[key] = tab
        return tab

    def facet_tables(self, rule: QuadratureRule, want_jac=False):
        key = ("facet", rule.degree, len(rule.weights), want_jac)
        tab = self._table_cache.get(key)
        if tab is None:
            tab = _FacetTables(self, rule, want_jac)
            self._table_cache[key] = tab
        return tab


def build_space(mesh: Mesh, k: int) -> FeSpace:
    """Build the degree-k second-kind Nedelec space on a simplicial mesh."""
    ref = ReferenceElement(mesh.dim, k)
    d = mesh.dim
    nc = mesh.n_cells
    pts = mesh.vertices[mesh.cells]
    jac = np.transpose(pts[:, 1:, :] - pts[:, :1, :], (0, 2, 1))  # columns = edges
    det = np.linalg.det(jac)
    if np.any(det <= 0):
        raise ValueError("degenerate or inverted cell (det J <= 0)")
    jac_inv = np.linalg.inv(jac)
    jac_invT = np.transpose(jac_inv, (0, 2, 1))

    # congruence classes by Jacobian bytes
    keys = np.round(jac.reshape(nc, -1), 12)
    uniq, class_of = np.unique(keys, axis=0, return_inverse=True)
    class_jac = uniq.reshape(-1, d, d)

    pairs = local_edge_pairs(d)
    n_em = k + 1
    ne = mesh.n_edges
    dof_parts = [n_em * ne]
    if ref.n_face_moments:
        dof_parts.append(3 * mesh.n_facets)
    if ref.n_interior_moments:
        dof_parts.append(3 * nc)
    n_dofs = sum(dof_parts)

    n_loc = ref.n_basis
    cell_dofs = np.empty((nc, n_loc), dtype=np.int64)
    for c in range(nc):
        slots = []
        for le in range(len(pairs)):
            e = mesh.cell_edges[c, le]
            slots.extend(n_em * e + i for i in range(n_em))
        if ref.n_face_moments:
            for lf in range(4):
                f = mesh.cell_facets[c, lf]
                slots.extend(n_em * ne + 3 * f + j for j in range(3))
        if ref.n_interior_moments:
            slots.extend(n_em * ne + 3 * c + j for j in range(3))
        cell_dofs[c] = slots

    # facet-side permutations (sorted-global order of each side's local facet)
    nf = mesh.n_facets
    facet_side_perm = np.zeros((nf, 2), dtype=np.int8)
    perm_id = _PERM_ID3 if d == 3 else _PERM_ID2
    for f in range(nf):
        for s in range(2):
            c = mesh.facet_cells[f, s]
            if c < 0:
                continue
            lf = mesh.facet_local[f, s]
            locv = [v for v in range(d + 1) if v != lf]
            g = mesh.cells[c][locv]
            facet_side_perm[f, s] = perm_id[tuple(np.argsort(g, kind="stable"))]

    # per-cell change of basis, cached by (class, orientation signature)
    cache = {}
    cc_idx = np.empty(nc, dtype=np.int64)
    cc_list = []
    ref_vals_cache = {}

    def mapped_fields_factory(c):
        p0 = pts[c, 0]
        ji = jac_inv[c]
        jit = jac_invT[c]

        def fields_at(xp):
            xhat = (xp - p0) @ ji.T
            key = xhat.tobytes()
            vals = ref_vals_cache.get(key)
            if vals is None:
                vals = ref.values(xhat)
                ref_vals_cache[key] = vals
            return np.einsum("ab,qnb->qna", jit, vals)

        return fields_at

    for c in range(nc):
        bits = tuple(
            bool(mesh.cells[c, a] > mesh.cells[c, b]) for a, b in pairs
        )
        fperm = tuple(facet_side_perm[f, 0 if mesh.facet_cells[f, 0] == c else 1]
                      for f in mesh.cell_facets[c]) if d == 3 else ()
        sig = (int(class_of[c]), bits, fperm)
        at = cache.get(sig)
        if at is None:
            cmat = apply_cell_functionals(
                ref, pts[c], mesh.cells[c], mapped_fields_factory(c)
            )
            at = len(cc_list)
            cc_list.append(np.linalg.solve(cmat, np.eye(n_loc)))
            cache[sig] = at
        cc_idx[c] = at
    cc_inv_unique = np.stack(cc_list)

    boundary = np.zeros(n_dofs, dtype=bool)
    for f in mesh.boundary_facets():
        for e in mesh.facet_edges[f]:
            boundary[n_em * e:n_em * e + n_em] = True
        if ref.n_face_moments:
            base = n_em * ne + 3 * f
            boundary[base:base + 3] = True

    return FeSpace(
        mesh=mesh,
        degree=k,
        ref=ref,
        n_dofs=n_dofs,
        cell_dofs=cell_dofs,
        boundary_dofs=boundary,
        jac=jac,
        jac_inv=jac_inv,
        jac_invT=jac_invT,
        det=det,
        class_of=class_of,
        class_jac=class_jac,
        cc_idx=cc_idx,
        cc_inv_unique=cc_inv_unique,
        facet_side_perm=facet_side_perm,
    )


# ---- mapped tables ---------------------------------------------------------

def _map_tables(ref, jac, want_curl_jac, ref_pts):
    """Piola-mapped value/jacobian/curl[/curl-derivative] tables for one cell
    shape at given reference points."""
    d = ref.dim
    ji = np.linalg.inv(jac)
    jit = ji.T
    det = np.linalg.det(jac)
    v = ref.values(ref_pts)
    g = ref.jacobians(ref_pts)
    val = np.einsum("ab,qnb->qna", jit, v)
    jjac = np.einsum("ab,qnbp,pm->qnam", jit, g, ji)
    chat = _curl_from_jac(g)
    if d == 2:
        curl = chat / det
    else:
        curl = np.einsum("ab,qnb->qna", jac, chat) / det
    out = {"val": val, "jac": jjac, "curl": curl}
    if want_curl_jac:
        cj = ref.curl_jacobians(ref_pts)
        if d == 2:
            grad = np.einsum("ab,qnb->qna", jit, cj) / det
            cc = np.stack([grad[..., 1], -grad[..., 0]], axis=-1)
        else:
            dw = np.einsum("ab,qnbp,pm->qnam", jac, cj, ji) / det
            cc = _curl_from_jac(dw)
        out["curlcurl"] = cc
    return out


class _CellTables:
    """Per congruence class tables at a cell quadrature rule, plus physical
    points and scaled weights for every cell."""

    def __init__(self, space: FeSpace, rule: QuadratureRule, want_curl_jac):
        self.space = space
        self.rule = rule
        mesh = space.mesh
        self.phys = (
            mesh.vertices[mesh.cells[:, 0]][:, None, :]
            + np.einsum("qm,cdm->cqd", rule.points, space.jac)
        )
        self.wdet = rule.weights[None, :] * space.det[:, None]  # (nc, nq)
        self.cls = []
        for s in range(len(space.class_jac)):
            self.cls.append(
                _map_tables(space.ref, space.class_jac[s], want_curl_jac, rule.points)
            )

    def _get(self, c, name):
        tab = self.cls[self.space.class_of[c]][name]
        return np.einsum("ji,qj...->qi...", self.space.c_inv(c), tab)

    def value(self, c):
        return self._get(c, "val")

    def jacobian(self, c):
        return self._get(c, "jac")

    def curl(self, c):
        return self._get(c, "curl")

    def curlcurl(self, c):
        return self._get(c, "curlcurl")


class _FacetTables:
    """Traces of the mapped basis at facet quadrature points, in the facet's
    canonical (ascending-vertex) point order, cached per
    (class, local facet, vertex permutation)."""

    def __init__(self, space: FeSpace, rule: QuadratureRule, want_jac=False):
        self.space = space
        self.rule = rule
        self.want_jac = want_jac
        mesh = space.mesh
        d = mesh.dim
        lam = facet_barycentric(rule) if d == 3 else np.stack(
            [1.0 - rule.points[:, 0], rule.points[:, 0]], axis=1
        )
        self.phys = np.einsum("qp,fpd->fqd", lam, mesh.vertices[mesh.facet_vertices])
        self.w = rule.weights  # normalized: physical weights are w * |F|
        perms = _PERMS3 if d == 3 else _PERMS2
        verts = _REF_VERTICES[d]
        n_cls = len(space.class_jac)
        self.tabs = [[[None] * len(perms) for _ in range(d + 1)] for _ in range(n_cls)]
        for s in range(n_cls):
            for lf in range(d + 1):
                locv = [v for v in range(d + 1) if v != lf]
                for pid, perm in enumerate(perms):
                    ref_pts = np.einsum(
                        "qp,pd->qd", lam, verts[[locv[perm[p]] for p in range(d)]]
                    )
                    self.tabs[s][lf][pid] = _map_tables(
                        space.ref, space.class_jac[s], False, ref_pts
                    )

    def _side(self, f, side):
        c = self.space.mesh.facet_cells[f, side]
        lf = self.space.mesh.facet_local[f, side]
        pid = self.space.facet_side_perm[f, side]
        return c, self.tabs[self.space.class_of[c]][lf][pid]

    def trace_value(self, f, side):
        c, tab = self._side(f, side)
        return np.einsum("ji,qjd->qid", self.space.c_inv(c), tab["val"])

    def trace_jacobian(self, f, side):
        c, tab = self._side(f, side)
        return np.einsum("ji,qjdm->qidm", self.space.c_inv(c), tab["jac"])


# ---- interpolation and fields ----------------------------------------------

def interpolate(space: FeSpace, field) -> "DiscreteField":
    """Canonical interpolation: apply all DOF functionals to `field`, a
    callable mapping points (n, d) to values (n, d)."""
    mesh = space.mesh
    d = mesh.dim
    k = space.degree
    ref = space.ref
    coeffs = np.zeros(space.n_dofs)
    n_em = k + 1

    s = ref.edge_rule.points[:, 0]
    w = ref.edge_rule.weights
    leg = _shifted_legendre(n_em, s)
    ep = mesh.vertices[mesh.edges]  # (ne, 2, d)
    pts = ep[:, 0, None, :] + s[None, :, None] * (ep[:, 1] - ep[:, 0])[:, None, :]
    tang = ep[:, 1] - ep[:, 0]
    tang = tang / np.linalg.norm(tang, axis=1, keepdims=True)
    vals = np.asarray(field(pts.reshape(-1, d))).reshape(mesh.n_edges, len(s), d)
    ut = np.einsum("eqd,ed->eq", vals, tang)
    mom = np.einsum("iq,eq->ei", leg * w[None, :], ut)
    coeffs[: n_em * mesh.n_edges] = mom.reshape(-1)

    if ref.n_face_moments:
        lam = facet_barycentric(ref.face_rule)
        fw = ref.face_rule.weights
        fv = mesh.vertices[mesh.facet_vertices]  # ascending order already
        pa, pb, pc = fv[:, 0], fv[:, 1], fv[:, 2]
        pts = np.einsum("qp,fpd->fqd", lam, fv)
        e1 = pb - pa
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        wv = (pc - pa) - np.einsum("fd,fd->f", pc - pa, e1)[:, None] * e1
        e2 = wv / np.linalg.norm(wv, axis=1, keepdims=True)
        bary = (pa + pb + pc) / 3.0
        vals = np.asarray(field(pts.reshape(-1, d))).reshape(mesh.n_facets, len(fw), d)
        rel = (pts - bary[:, None, :]) / mesh.facet_diameters[:, None, None]
        w3 = (
            np.einsum("fqd,fd->fq", rel, e1)[..., None] * e1[:, None, :]
            + np.einsum("fqd,fd->fq", rel, e2)[..., None] * e2[:, None, :]
        )
        base = n_em * mesh.n_edges
        m1 = np.einsum("q,fqd,fd->f", fw, vals, e1)
        m2 = np.einsum("q,fqd,fd->f", fw, vals, e2)
        m3 = np.einsum("q,fqd,fqd->f", fw, vals, w3)
        coeffs[base + 0: base + 3 * mesh.n_facets: 3] = m1
        coeffs[base + 1: base + 3 * mesh.n_facets: 3] = m2
        coeffs[base + 2: base + 3 * mesh.n_facets: 3] = m3

    if ref.n_interior_moments:
        rule = ref.cell_rule
        tabs = space.cell_tables(rule)
        pts = tabs.phys  # (nc, nq, d)
        cw = rule.weights / rule.weights.sum()
        bary = mesh.cell_barycenters()
        vals = np.asarray(field(pts.reshape(-1, d))).reshape(mesh.n_cells, len(cw), d)
        w3 = (pts - bary[:, None, :]) / mesh.cell_diameters[:, None, None]
        base = n_em * mesh.n_edges
        m1 = np.einsum("q,cq->c", cw, vals[:, :, 0])
        m2 = np.einsum("q,cq->c", cw, vals[:, :, 1])
        m3 = np.einsum("q,cqd,cqd->c", cw, vals, w3)
        coeffs[base + 0: base + 3 * mesh.n_cells: 3] = m1
        coeffs[base + 1: base + 3 * mesh.n_cells: 3] = m2
        coeffs[base + 2: base + 3 * mesh.n_cells: 3] = m3

    return DiscreteField(space, coeffs)


def eval_physical(space: FeSpace, cell: int, ref_points):
    """Values and curls of the cell's global-slot basis at reference points.

    Returns (values (nq, n_loc, d), curls); curls are scalars in 2D and
    3-vectors in 3D.
    """
    ref_points = np.atleast_2d(ref_points)
    tabs = _map_tables(space.ref, space.jac[cell], False, ref_points)
    ci = space.c_inv(cell)
    val = np.einsum("ji,qjd->qid", ci, tabs["val"])
    curl = np.einsum("ji,qj...->qi...", ci, tabs["curl"])
    return val, curl


@dataclass
class DiscreteField:
    """Global coefficient vector tied to a space, evaluable pointwise."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} != dof count {self.space.n_dofs}"
            )

    def eval_at(self, points) -> np.ndarray:
        """Pointwise values (n, d); interface points resolve to the
        lower-coordinate-side cell."""
        from .mesh import locate_points

        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = locate_points(self.space.mesh, pts)
        out = np.empty_like(pts)
        for c in np.unique(cells):
            sel = np.nonzero(cells == c)[0]
            p0 = self.space.mesh.vertices[self.space.mesh.cells[c, 0]]
            xhat = (pts[sel] - p0) @ self.space.jac_inv[c].T
            val, _ = eval_physical(self.space, c, xhat)
            dof = self.coeffs[self.space.cell_dofs[c]]
            out[sel] = np.einsum("qid,i->qd", val, dof)
        return out

    def cell_values(self, cell: int, ref_points) -> np.ndarray:
        val, _ = eval_physical(self.space, cell, ref_points)
        return np.einsum("qid,i->qd", val, self.coeffs[self.space.cell_dofs[cell]])

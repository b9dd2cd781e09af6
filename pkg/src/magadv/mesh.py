"""Uniform simplicial meshes of the unit square/cube with facet topology.

Squares are split into two triangles by the (i,j)-(i+1,j+1) diagonal; cubes
into six tetrahedra by the sorted-coordinate (Kuhn) subdivision, which keeps
facets conforming between neighboring cubes. Facet normals are stored once
per facet, oriented out of the adjacent cell with the smaller index.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from itertools import permutations

import numpy as np

_LOCAL_EDGES = {
    2: [(0, 1), (0, 2), (1, 2)],
    3: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
}


class BoundaryLabel(IntEnum):
    INTERIOR = 0
    OUTFLOW = 1
    INFLOW = -1


class MixedFacetError(RuntimeError):
    """A boundary facet where beta.n changes sign beyond tolerance."""


@dataclass
class Mesh:
    dim: int
    vertices: np.ndarray        # (nv, dim)
    cells: np.ndarray           # (nc, dim+1), positively oriented
    cell_volumes: np.ndarray    # (nc,)
    cell_diameters: np.ndarray  # (nc,)
    # facet topology
    facet_vertices: np.ndarray  # (nf, dim) ascending global indices
    facet_cells: np.ndarray     # (nf, 2), second entry -1 on the boundary
    facet_local: np.ndarray     # (nf, 2) local facet index within each cell
    facet_normals: np.ndarray   # (nf, dim) unit, outward from facet_cells[:,0]
    facet_measures: np.ndarray  # (nf,)
    facet_diameters: np.ndarray  # (nf,)
    facet_boundary: np.ndarray  # (nf,) bool
    cell_facets: np.ndarray     # (nc, dim+1), facet opposite local vertex i
    # edge topology (in 2D edges coincide with facets but are numbered apart)
    edges: np.ndarray           # (ne, 2) ascending global indices
    cell_edges: np.ndarray      # (nc, 3 or 6) following _LOCAL_EDGES order
    facet_edges: np.ndarray     # (nf, 1 or 3) edge ids of each facet
    N: int = 0
    _edge_index: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facet_vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    def cell_points(self, cell):
        return self.vertices[self.cells[cell]]

    def facet_barycenters(self):
        return self.vertices[self.facet_vertices].mean(axis=1)

    def cell_barycenters(self):
        return self.vertices[self.cells].mean(axis=1)

    def interior_facets(self):
        return np.nonzero(~self.facet_boundary)[0]

    def boundary_facets(self):
        return np.nonzero(self.facet_boundary)[0]


def local_edge_pairs(dim):
    return _LOCAL_EDGES[dim]


def _kuhn_cells(N):
    """Vertex tuples of the six path tetrahedra per cube, positively oriented."""
    stride = (1, N + 1, (N + 1) ** 2)
    cells = []
    for k in range(N):
        for j in range(N):
            for i in range(N):
                v0 = i + (N + 1) * j + (N + 1) ** 2 * k
                for pi, perm in enumerate(permutations((0, 1, 2))):
                    v = [v0]
                    acc = v0
                    for ax in perm:
                        acc += stride[ax]
                        v.append(acc)
                    # odd permutations give det < 0: swap the last two vertices
                    if _perm_sign(perm) < 0:
                        v[2], v[3] = v[3], v[2]
                    cells.append(v)
    return np.asarray(cells, dtype=np.int64)


def _perm_sign(perm):
    sign = 1
    perm = list(perm)
    for a in range(len(perm)):
        for b in range(a + 1, len(perm)):
            if perm[a] > perm[b]:
                sign = -sign
    return sign


def build_uniform_mesh(dim: int, N: int) -> Mesh:
    """Uniform mesh of the unit square (dim=2) / cube (dim=3) with N segments
    per axis. Raises ValueError for invalid dim or N < 1."""
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")

    if dim == 2:
        xs = np.linspace(0.0, 1.0, N + 1)
        X, Y = np.meshgrid(xs, xs, indexing="xy")
        vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
        cells = []
        for j in range(N):
            for i in range(N):
                v00 = i + j * (N + 1)
                v10 = v00 + 1
                v01 = v00 + (N + 1)
                v11 = v01 + 1
                cells.append([v00, v10, v11])  # below the diagonal
                cells.append([v00, v11, v01])  # above the diagonal
        cells = np.asarray(cells, dtype=np.int64)
    else:
        xs = np.linspace(0.0, 1.0, N + 1)
        X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
        # index v = i + (N+1) j + (N+1)^2 k at coordinates (x_i, y_j, z_k)
        nv = (N + 1) ** 3
        vertices = np.empty((nv, 3))
        idx = np.arange(nv)
        vertices[:, 0] = xs[idx % (N + 1)]
        vertices[:, 1] = xs[(idx // (N + 1)) % (N + 1)]
        vertices[:, 2] = xs[idx // (N + 1) ** 2]
        cells = _kuhn_cells(N)

    return _finish_mesh(dim, vertices, cells, N)


def _finish_mesh(dim, vertices, cells, N):
    nc = len(cells)
    pts = vertices[cells]  # (nc, dim+1, dim)
    e = pts[:, 1:, :] - pts[:, :1, :]
    if dim == 2:
        det = e[:, 0, 0] * e[:, 1, 1] - e[:, 0, 1] * e[:, 1, 0]
        vol = det / 2.0
    else:
        det = np.einsum("cij,cij->c", e[:, 0:1, :], np.cross(e[:, 1, :], e[:, 2, :])[:, None, :])
        vol = det / 6.0
    if np.any(vol <= 0):
        raise ValueError("mesh has non-positively-oriented cells")
    diff = pts[:, :, None, :] - pts[:, None, :, :]
    diam = np.sqrt((diff**2).sum(-1)).max(axis=(1, 2))

    # facets: opposite local vertex l
    nloc = dim + 1
    facet_map = {}
    fverts, fcells, flocal = [], [], []
    for c in range(nc):
        cv = cells[c]
        for l in range(nloc):
            key = tuple(sorted(np.delete(cv, l)))
            fid = facet_map.get(key)
            if fid is None:
                fid = len(fverts)
                facet_map[key] = fid
                fverts.append(key)
                fcells.append([c, -1])
                flocal.append([l, -1])
            else:
                if fcells[fid][1] != -1:
                    raise ValueError("facet shared by more than two cells")
                fcells[fid][1] = c
                flocal[fid][1] = l
    facet_vertices = np.asarray(fverts, dtype=np.int64)
    facet_cells = np.asarray(fcells, dtype=np.int64)
    facet_local = np.asarray(flocal, dtype=np.int64)
    nf = len(facet_vertices)

    fp = vertices[facet_vertices]  # (nf, dim, dim)
    if dim == 2:
        tang = fp[:, 1] - fp[:, 0]
        meas = np.linalg.norm(tang, axis=1)
        normals = np.stack([tang[:, 1], -tang[:, 0]], axis=1) / meas[:, None]
        fdiam = meas.copy()
    else:
        cr = np.cross(fp[:, 1] - fp[:, 0], fp[:, 2] - fp[:, 0])
        nrm = np.linalg.norm(cr, axis=1)
        meas = 0.5 * nrm
        normals = cr / nrm[:, None]
        d2 = fp[:, :, None, :] - fp[:, None, :, :]
        fdiam = np.sqrt((d2**2).sum(-1)).max(axis=(1, 2))
    # orient out of the first adjacent cell
    fbary = fp.mean(axis=1)
    cbary = vertices[cells[facet_cells[:, 0]]].mean(axis=1)
    flip = np.einsum("fd,fd->f", normals, fbary - cbary) < 0
    normals[flip] *= -1.0

    cell_facets = np.full((nc, nloc), -1, dtype=np.int64)
    for f in range(nf):
        for s in range(2):
            c = facet_cells[f, s]
            if c >= 0:
                cell_facets[c, facet_local[f, s]] = f
    boundary = facet_cells[:, 1] == -1

    # edges
    pairs = _LOCAL_EDGES[dim]
    edge_index = {}
    edges = []
    cell_edges = np.empty((nc, len(pairs)), dtype=np.int64)
    for c in range(nc):
        cv = cells[c]
        for le, (a, b) in enumerate(pairs):
            key = (cv[a], cv[b]) if cv[a] < cv[b] else (cv[b], cv[a])
            eid = edge_index.get(key)
            if eid is None:
                eid = len(edges)
                edge_index[key] = eid
                edges.append(key)
            cell_edges[c, le] = eid
    edges = np.asarray(edges, dtype=np.int64)

    if dim == 2:
        facet_edges = np.array(
            [[edge_index[tuple(fv)]] for fv in facet_vertices], dtype=np.int64
        )
    else:
        facet_edges = np.array(
            [
                [
                    edge_index[(fv[0], fv[1])],
                    edge_index[(fv[0], fv[2])],
                    edge_index[(fv[1], fv[2])],
                ]
                for fv in facet_vertices
            ],
            dtype=np.int64,
        )

    return Mesh(
        dim=dim,
        vertices=vertices,
        cells=np.asarray(cells, dtype=np.int64),
        cell_volumes=vol,
        cell_diameters=diam,
        facet_vertices=facet_vertices,
        facet_cells=facet_cells,
        facet_local=facet_local,
        facet_normals=normals,
        facet_measures=meas,
        facet_diameters=fdiam,
        facet_boundary=boundary,
        cell_facets=cell_facets,
        edges=edges,
        cell_edges=cell_edges,
        facet_edges=facet_edges,
        N=N,
        _edge_index=edge_index,
    )


def facet_quadrature_points(mesh: Mesh, barycentric: np.ndarray) -> np.ndarray:
    """Physical quadrature points (nf, nq, dim) for all facets, in the
    canonical (ascending-vertex) parametrization shared by both sides."""
    fp = mesh.vertices[mesh.facet_vertices]  # (nf, dim, dim)
    return np.einsum("qp,fpd->fqd", barycentric, fp)


def classify_boundary_facets(mesh: Mesh, beta, quad_barycentric=None) -> np.ndarray:
    """Label boundary facets by the sign of beta.n at the barycenter:
    inflow where beta.n < 0, outflow where beta.n >= 0.

    Raises MixedFacetError when beta.n takes both signs over the facet's
    quadrature points beyond 1e-12 * max|beta| (such facets violate the
    single-side assumption on boundary facets).
    """
    labels = np.zeros(mesh.n_facets, dtype=np.int8)
    bidx = mesh.boundary_facets()
    if len(bidx) == 0:
        return labels
    bary = mesh.facet_barycenters()[bidx]
    n = mesh.facet_normals[bidx]
    bval = np.asarray(beta(bary))
    sb = np.einsum("fd,fd->f", bval, n)
    labels[bidx] = np.where(sb < 0.0, BoundaryLabel.INFLOW, BoundaryLabel.OUTFLOW)

    if quad_barycentric is None:
        from .quadrature import facet_barycentric, facet_rule

        quad_barycentric = facet_barycentric(facet_rule(mesh.dim, 4))
    pts = np.einsum("qp,fpd->fqd", quad_barycentric, mesh.vertices[mesh.facet_vertices[bidx]])
    flat = pts.reshape(-1, mesh.dim)
    bq = np.asarray(beta(flat)).reshape(len(bidx), -1, mesh.dim)
    sq = np.einsum("fqd,fd->fq", bq, n)
    tol = 1e-12 * max(np.abs(bq).max(), 1e-300)
    smin = np.minimum(sq.min(axis=1), sb)
    smax = np.maximum(sq.max(axis=1), sb)
    mixed = (smin < -tol) & (smax > tol)
    if np.any(mixed):
        bad = bidx[np.nonzero(mixed)[0][0]]
        raise MixedFacetError(
            f"boundary facet {bad} has beta.n of both signs (range "
            f"[{smin[mixed][0]:.3e}, {smax[mixed][0]:.3e}]); refine or adjust the mesh"
        )
    return labels


def facet_geometry(mesh: Mesh, facet: int):
    """(normal, measure, diameter, barycenter) of one facet."""
    if not 0 <= facet < mesh.n_facets:
        raise IndexError(f"facet id {facet} out of range")
    bary = mesh.vertices[mesh.facet_vertices[facet]].mean(axis=0)
    return (
        mesh.facet_normals[facet].copy(),
        float(mesh.facet_measures[facet]),
        float(mesh.facet_diameters[facet]),
        bary,
    )


def locate_points(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    """Cell index containing each point; points on cell interfaces resolve to
    the cell on the lower-coordinate side. Only valid for meshes produced by
    build_uniform_mesh."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    N = mesh.N
    if N <= 0:
        raise ValueError("locate_points requires a structured uniform mesh")
    if np.any(pts < -1e-12) or np.any(pts > 1 + 1e-12):
        raise ValueError("point outside the unit domain")
    scaled = pts * N
    idx = np.ceil(scaled).astype(np.int64) - 1  # lower-side tie-break
    idx = np.clip(idx, 0, N - 1)
    loc = scaled - idx  # in [0,1]^d within the box
    if mesh.dim == 2:
        i, j = idx[:, 0], idx[:, 1]
        lower = loc[:, 0] >= loc[:, 1]  # diagonal ties go to the lower triangle
        return 2 * (i + N * j) + np.where(lower, 0, 1)
    order = np.argsort(-loc, axis=1, kind="stable")  # descending local coords
    perms = list(permutations((0, 1, 2)))
    perm_ids = {p: n for n, p in enumerate(perms)}
    # cells were emitted with i fastest: box index is i + N j + N^2 k
    box = idx[:, 0] + N * idx[:, 1] + N * N * idx[:, 2]
    sub = np.array([perm_ids[tuple(o)] for o in order], dtype=np.int64)
    return 6 * box + sub


def write_mesh_dump(mesh: Mesh, path) -> None:
    """Plain-text dump: vertex table then cell table, whitespace-separated."""
    with open(path, "w") as fh:
        fh.write(f"# vertices {mesh.n_vertices} dim {mesh.dim}\n")
        for v in mesh.vertices:
            fh.write(" ".join(f"{x:.17g}" for x in v) + "\n")
        fh.write(f"# cells {mesh.n_cells}\n")
        for c in mesh.cells:
            fh.write(" ".join(str(int(i)) for i in c) + "\n")

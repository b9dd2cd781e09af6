"""Error norms, convergence tables, and layer diagnostics.

The mesh-dependent energy norm combines the eps-weighted curl, the L2 part,
the delta-weighted discrete advection, and the weighted facet terms

    eps ||curl e||^2 + w ||e||^2 + sum_T delta_T ||adv_h e||_T^2
    + 1/2 sum_{interior F} <|[alpha] beta.n|, |[e]|^2>
    + 1/2 sum_{boundary F} <|beta.n|, |e|^2>.

Tables report the variant with unit L2 weight; the coercivity statement uses
the reaction bound as the weight. The `s2_only` variant drops the interior
jump part (used when the facet weights are centered and the jump penalty is
off)."""

from dataclasses import dataclass

import numpy as np

from .fe_space import DiscreteField, FeSpace
from .forms import ElementContext, StabilizationConfig
from .problem import ProblemSpec

NORM_VARIANTS = ("full", "s2_only")


@dataclass
class EnergyNormParts:
    curl: float        # eps ||curl e||^2
    l2: float          # w ||e||^2
    advection: float   # sum_T delta_T ||adv_h e||^2
    jumps: float       # interior facet part
    boundary: float    # boundary facet part

    @property
    def total(self) -> float:
        return self.curl + self.l2 + self.advection + self.jumps + self.boundary

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.total))


@dataclass
class ErrorRecord:
    N: int
    dofs: int
    l2_error: float
    l2_order: float = None
    energy_error: float = None
    energy_order: float = None
    seconds: float = 0.0


def _norm_context(space, spec, config):
    deg = 2 * space.degree + 4
    return ElementContext(space, spec, config, cell_degree=deg, facet_degree=deg)


def error_norms(space: FeSpace, spec: ProblemSpec, u_h: DiscreteField,
                config: StabilizationConfig, deltas, variant="full",
                context: ElementContext = None):
    """Energy-norm parts and L2 error of u - u_h against the exact solution.

    The discrete advection of the error uses the analytic advection of u
    (interior jumps of u vanish; its inflow trace is lifted the same way the
    discrete operator lifts u_h's) minus the lifted discrete advection of u_h.
    """
    if variant not in NORM_VARIANTS:
        raise ValueError(f"unknown norm variant {variant!r}")
    if spec.exact is None:
        raise ValueError("error norms require an exact solution")
    ctx = context or _norm_context(space, spec, config)
    mesh = space.mesh
    deltas = np.asarray(deltas, dtype=float)
    coeffs = u_h.coeffs
    eps = spec.eps

    curl_part = l2_part = adv_part = 0.0
    for c in range(mesh.n_cells):
        need_lift = deltas[c] != 0.0
        ker = ctx.cell_kernel(c) if need_lift else None
        pts = ctx.ct.phys[c]
        wq = ctx.ct.wdet[c]
        dof = coeffs[space.cell_dofs[c]]
        val = ker["V"] if need_lift else ctx.ct.value(c)
        uh = np.einsum("qid,i->qd", val, dof)
        ue = spec.exact.value(pts)
        l2_part += (wq * ((ue - uh) ** 2).sum(1)).sum()
        curl_tab = ker["curl"] if need_lift else ctx.ct.curl(c)
        ch = np.einsum("qi...,i->q...", curl_tab, dof)
        ce = spec.exact.curl(pts)
        if mesh.dim == 2:
            curl_part += eps * (wq * (ce - ch) ** 2).sum()
        else:
            curl_part += eps * (wq * ((ce - ch) ** 2).sum(1)).sum()
        if need_lift:
            lh = np.einsum("qxd,x->qd", ker["ltilde"], coeffs[ker["ext"]])
            le = spec.exact.advection(pts)
            # the discrete advection of the exact solution also lifts its own
            # inflow trace (the boundary jump is the trace itself)
            lg = ctx.inflow_data_lift(c, ker["M"])
            if lg is not None:
                le = le - np.einsum("i,qid->qd", lg, val)
            adv_part += deltas[c] * (wq * ((le - lh) ** 2).sum(1)).sum()

    jump_part, bdry_part = _facet_error_parts(ctx, coeffs, spec.exact.value, variant)
    parts = EnergyNormParts(
        curl=float(curl_part), l2=float(l2_part), advection=float(adv_part),
        jumps=float(jump_part), boundary=float(bdry_part),
    )
    return parts, float(np.sqrt(l2_part))


def _facet_error_parts(ctx, coeffs, exact_value, variant):
    space = ctx.space
    mesh = space.mesh
    jump_part = 0.0
    bdry_part = 0.0
    for f in range(mesh.n_facets):
        wf = ctx.ft.w * mesh.facet_measures[f]
        bnq = ctx.bn[f]
        if mesh.facet_cells[f, 1] == -1:
            c = mesh.facet_cells[f, 0]
            tr = ctx.ft.trace_value(f, 0)
            uh = np.einsum("qid,i->qd", tr, coeffs[space.cell_dofs[c]])
            e = uh if exact_value is None else uh - exact_value(ctx.ft.phys[f])
            bdry_part += 0.5 * (wf * np.abs(bnq) * (e**2).sum(1)).sum()
        elif variant == "full":
            c0, c1 = mesh.facet_cells[f]
            u0 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 0), coeffs[space.cell_dofs[c0]])
            u1 = np.einsum("qid,i->qd", ctx.ft.trace_value(f, 1), coeffs[space.cell_dofs[c1]])
            jmp = u0 - u1
            weight = np.abs((2.0 * ctx.alpha_p[f] - 1.0) * bnq)
            jump_part += 0.5 * (wf * weight * (jmp**2).sum(1)).sum()
    return jump_part, bdry_part


def discrete_energy_norm(space: FeSpace, spec: ProblemSpec, v_h: DiscreteField,
                         config: StabilizationConfig, deltas, l2_weight=1.0,
                         variant="full", context: ElementContext = None) -> EnergyNormParts:
    """Energy norm of a discrete field itself (no exact solution involved);
    `l2_weight` is the coefficient of the L2 part."""
    ctx = context or _norm_context(space, spec, config)
    mesh = space.mesh
    deltas = np.asarray(deltas, dtype=float)
    coeffs = v_h.coeffs
    eps = spec.eps
    curl_part = l2_part = adv_part = 0.0
    for c in range(mesh.n_cells):
        need_lift = deltas[c] != 0.0
        ker = ctx.cell_kernel(c) if need_lift else None
        wq = ctx.ct.wdet[c]
        dof = coeffs[space.cell_dofs[c]]
        val = ker["V"] if need_lift else ctx.ct.value(c)
        uh = np.einsum("qid,i->qd", val, dof)
        l2_part += l2_weight * (wq * (uh**2).sum(1)).sum()
        curl_tab = ker["curl"] if need_lift else ctx.ct.curl(c)
        ch = np.einsum("qi...,i->q...", curl_tab, dof)
        if mesh.dim == 2:
            curl_part += eps * (wq * ch**2).sum()
        else:
            curl_part += eps * (wq * (ch**2).sum(1)).sum()
        if need_lift:
            lh = np.einsum("qxd,x->qd", ker["ltilde"], coeffs[ker["ext"]])
            adv_part += deltas[c] * (wq * (lh**2).sum(1)).sum()
    jump_part, bdry_part = _facet_error_parts(ctx, coeffs, None, variant)
    return EnergyNormParts(
        curl=float(curl_part), l2=float(l2_part), advection=float(adv_part),
        jumps=float(jump_part), boundary=float(bdry_part),
    )


def energy_norm_matrix(space: FeSpace, spec: ProblemSpec, config: StabilizationConfig,
                       deltas, l2_weight=1.0, variant="full",
                       context: ElementContext = None):
    """Sparse Gram matrix of the energy norm: |||v|||^2 = v^T G v for discrete
    coefficient vectors v."""
    from .forms import _TripletAccumulator

    ctx = context or _norm_context(space, spec, config)
    mesh = space.mesh
    deltas = np.asarray(deltas, dtype=float)
    eps = spec.eps
    acc = _TripletAccumulator(space.n_dofs)
    for c in range(mesh.n_cells):
        need_lift = deltas[c] != 0.0
        own = space.cell_dofs[c]
        wq = ctx.ct.wdet[c]
        if need_lift:
            ker = ctx.cell_kernel(c)
            val, curl = ker["V"], ker["curl"]
        else:
            val, curl = ctx.ct.value(c), ctx.ct.curl(c)
        blk = l2_weight * np.einsum("q,qic,qjc->ij", wq, val, val)
        if mesh.dim == 2:
            blk += eps * np.einsum("q,qi,qj->ij", wq, curl, curl)
        else:
            blk += eps * np.einsum("q,qid,qjd->ij", wq, curl, curl)
        acc.add(own, own, blk)
        if need_lift:
            lt = ker["ltilde"]
            acc.add(ker["ext"], ker["ext"],
                    deltas[c] * np.einsum("q,qxd,qyd->xy", wq, lt, lt))
    for f in range(mesh.n_facets):
        wf = ctx.ft.w * mesh.facet_measures[f]
        bnq = ctx.bn[f]
        if mesh.facet_cells[f, 1] == -1:
            c = mesh.facet_cells[f, 0]
            tr = ctx.ft.trace_value(f, 0)
            acc.add(space.cell_dofs[c], space.cell_dofs[c],
                    0.5 * np.einsum("q,qid,qjd->ij", wf * np.abs(bnq), tr, tr))
        elif variant == "full":
            weight = 0.5 * np.abs((2.0 * ctx.alpha_p[f] - 1.0) * bnq)
            c0, c1 = mesh.facet_cells[f]
            dofs = (space.cell_dofs[c0], space.cell_dofs[c1])
            tr = (ctx.ft.trace_value(f, 0), ctx.ft.trace_value(f, 1))
            for a in (0, 1):
                s_a = 1.0 if a == 0 else -1.0
                for b in (0, 1):
                    s_b = 1.0 if b == 0 else -1.0
                    acc.add(dofs[a], dofs[b],
                            s_a * s_b * np.einsum("q,qid,qjd->ij", wf * weight, tr[a], tr[b]))
    return acc.finish()


def convergence_orders(records):
    """Fill the order columns of consecutive records on h-halving meshes:
    order = log2(e_prev / e_curr). Raises for a non-doubling N sequence."""
    recs = list(records)
    for prev, cur in zip(recs, recs[1:]):
        if cur.N != 2 * prev.N:
            raise ValueError(f"N sequence must double each step; got {prev.N} -> {cur.N}")
        cur.l2_order = _order(prev.l2_error, cur.l2_error)
        if prev.energy_error is not None and cur.energy_error is not None:
            cur.energy_order = _order(prev.energy_error, cur.energy_error)
    return recs


def _order(e_prev, e_curr):
    if e_prev <= 0 or e_curr <= 0:
        return float("nan")
    return float(np.log2(e_prev / e_curr))


def oscillation_metric(u_h: DiscreteField, component: int, box, bounds, n_side=60):
    """(overshoot, undershoot) of a solution component over a sampling grid in
    `box` = (xmin, xmax, ymin, ymax), measured against `bounds` = (lo, hi)."""
    xmin, xmax, ymin, ymax = box
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("empty sampling box")
    lo, hi = bounds
    xs = np.linspace(xmin, xmax, n_side)
    ys = np.linspace(ymin, ymax, n_side)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = u_h.eval_at(pts)[:, component]
    overshoot = max(0.0, float(vals.max()) - hi)
    undershoot = max(0.0, lo - float(vals.min()))
    return overshoot, undershoot


def sample_component(u_h: DiscreteField, component: int, box, n_side=60):
    """Min/max of one component over a uniform grid in `box` (for deriving
    reference bounds)."""
    xmin, xmax, ymin, ymax = box
    xs = np.linspace(xmin, xmax, n_side)
    ys = np.linspace(ymin, ymax, n_side)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = u_h.eval_at(pts)[:, component]
    return float(vals.min()), float(vals.max())


def cross_section(u_h: DiscreteField, component: int, axis: int, offset: float,
                  n_samples: int = 201):
    """Samples of one component along an axis-aligned line: axis=0 fixes
    x=offset and varies y. Returns (coordinate, value) rows; interface points
    are evaluated from the lower-coordinate side."""
    if not 0.0 <= offset <= 1.0:
        raise ValueError("cross-section line lies outside the unit domain")
    t = np.linspace(0.0, 1.0, n_samples)
    pts = np.empty((n_samples, 2))
    pts[:, axis] = offset
    pts[:, 1 - axis] = t
    vals = u_h.eval_at(pts)[:, component]
    return np.stack([t, vals], axis=1)

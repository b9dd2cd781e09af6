"""Linear solves and the nonlinear residual-direction fixed-point iteration."""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .fe_space import DiscreteField, FeSpace
from .forms import (AssembledSystem, ElementContext, StabilizationConfig, apply_dirichlet,
                    assemble, stabilization_deltas)
from .problem import ProblemSpec


class SingularSystemError(RuntimeError):
    pass


@dataclass
class SolveReport:
    iterations: int
    final_update: float
    converged: bool
    residuals: list = field(default_factory=list)
    updates: list = field(default_factory=list)
    selected_iteration: int = None  # iterate returned when not converged


@dataclass
class SoldState:
    """State of the nonlinear iteration: current iterate, frozen per-cell
    directions and weights, and the update history."""

    iterate: DiscreteField
    directions: np.ndarray   # (nc, dim)
    sigma: np.ndarray        # (nc,)
    iteration: int = 0
    updates: list = field(default_factory=list)

    def __post_init__(self):
        if not np.all(np.isfinite(self.directions)):
            raise ValueError("nonlinear directions must be finite")
        if np.any(self.sigma < 0):
            raise ValueError("sigma weights must be nonnegative")


def solve_linear(system: AssembledSystem):
    """Direct sparse solve; returns (DiscreteField, relative residual)."""
    mat = system.matrix().tocsc()
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(system.rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solution contains non-finite entries")
    denom = np.linalg.norm(system.rhs)
    res = np.linalg.norm(mat @ x - system.rhs) / (denom if denom > 0 else 1.0)
    return DiscreteField(system.space, x), float(res)


def compute_sold_z(space: FeSpace, spec: ProblemSpec, config: StabilizationConfig,
                   u_h: DiscreteField, cell: int, context: ElementContext = None):
    """Minimal-norm direction z on one cell solving the least-squares problem
    || M(u) z - residual ||_{0,T} -> min, with M(u) = Du minus the liftings of
    the normal-weighted jumps of u, and residual = eps curlcurl u + advected u
    minus f. Rank deficiency is resolved by zeroing eigenvalues below
    1e-12 trace(G)."""
    ctx = context or ElementContext(space, spec, config)
    return _cell_direction(ctx, u_h.coeffs, cell)


def _cell_direction(ctx: ElementContext, coeffs, c):
    space = ctx.space
    ker = ctx.cell_kernel(c, want_axes=True)
    ext = ker["ext"]
    uext = coeffs[ext]
    uown = uext[: space.n_local]

    du = np.einsum("qicm,i->qcm", ker["Jt"], uown)
    lift_cols = np.einsum("aix,x->ai", ker["lam_axes"], uext)  # (d, n_loc)
    lifted = np.einsum("ai,qic->qca", lift_cols, ker["V"])     # (nq, d, d) columns a
    m_mat = du - lifted

    resid = np.einsum("qxd,x->qd", ker["ltilde"], uext)
    resid += ctx.spec.eps * np.einsum("qid,i->qd", ker["curlcurl"], uown)
    uval = np.einsum("qid,i->qd", ker["V"], uown)
    resid += ctx.gamma_c[c][:, None] * uval
    resid -= ctx.f_c[c]
    lg = ctx.inflow_data_lift(c, ker["M"])
    if lg is not None:
        resid += np.einsum("i,qid->qd", lg, ker["V"])

    wq = ker["wq"]
    G = np.einsum("q,qca,qcb->ab", wq, m_mat, m_mat)
    b = np.einsum("q,qca,qc->a", wq, m_mat, resid)
    lam, vec = np.linalg.eigh(G)
    tau = 1e-12 * max(np.trace(G), 0.0)
    inv = np.where(lam > tau, 1.0 / np.where(lam > tau, lam, 1.0), 0.0)
    z = vec @ (inv * (vec.T @ b))
    return z, G, b


def sold_directions(space, spec, config, u_h, context=None):
    """Per-cell minimal-norm directions for the residual stabilization."""
    ctx = context or ElementContext(space, spec, config)
    nc = space.mesh.n_cells
    z = np.empty((nc, space.dim))
    for c in range(nc):
        z[c], _, _ = _cell_direction(ctx, u_h.coeffs, c)
    return z


def residual_indicator(ctx: ElementContext, coeffs, sigma):
    """sigma-weighted L2 norm of the discrete residual, the scheme's own
    measure of how well an iterate satisfies the equation."""
    tot = 0.0
    for c in range(ctx.space.mesh.n_cells):
        if sigma[c] == 0.0:
            continue
        ker = ctx.cell_kernel(c)
        uext = coeffs[ker["ext"]]
        uown = uext[: ctx.space.n_local]
        r = np.einsum("qxd,x->qd", ker["ltilde"], uext)
        r += ctx.spec.eps * np.einsum("qid,i->qd", ker["curlcurl"], uown)
        r += ctx.gamma_c[c][:, None] * np.einsum("qid,i->qd", ker["V"], uown)
        r -= ctx.f_c[c]
        lg = ctx.inflow_data_lift(c, ker["M"])
        if lg is not None:
            r += np.einsum("i,qid->qd", lg, ker["V"])
        tot += sigma[c] * (ker["wq"] * (r**2).sum(1)).sum()
    return float(np.sqrt(tot))


def solve_sold(space: FeSpace, spec: ProblemSpec, config: StabilizationConfig,
               deltas=None, sigma=None, verbose=False):
    """Fixed-point iteration for the nonlinear residual-stabilized scheme.

    Starts from the stabilized linear solution and freezes the per-cell
    directions each step. The damping factor theta backtracks (halving, down
    to theta/64) whenever a step would grow the residual indicator by more
    than 20%, which keeps the orbit bounded; the map is generally not a
    contraction, so the iterate with the smallest residual indicator is
    returned rather than the last one. Non-convergence within the iteration
    budget is reported, not raised.
    """
    mesh = space.mesh
    if deltas is None:
        deltas = stabilization_deltas(space, spec, config)
    if sigma is None:
        sigma = np.full(mesh.n_cells, config.c_sigma / max(mesh.N, 1))
    sigma = np.asarray(sigma, dtype=float)
    ctx = ElementContext(space, spec, config)

    base = assemble(space, spec, config, "supg", deltas=deltas, context=ctx)
    if config.strong_dirichlet:
        sys0 = apply_dirichlet(base, space, spec)
    else:
        sys0 = base
    u, res0 = solve_linear(sys0)
    report = SolveReport(iterations=0, final_update=np.inf, converged=False,
                         residuals=[res0])

    if not np.any(sigma):
        report.converged = True
        report.final_update = 0.0
        report.iterations = 1
        return u, report

    r_cur = residual_indicator(ctx, u.coeffs, sigma)
    best_u, best_r, best_it = None, np.inf, 0
    for it in range(1, config.sold_max_iter + 1):
        state = SoldState(iterate=u,
                          directions=sold_directions(space, spec, config, u, context=ctx),
                          sigma=sigma, iteration=it, updates=report.updates)
        system = assemble(space, spec, config, "sold", deltas=deltas,
                          sold_dirs=state.directions, sold_sigma=state.sigma,
                          context=ctx)
        if config.strong_dirichlet:
            system = apply_dirichlet(system, space, spec)
        u_new, res = solve_linear(system)
        theta = config.theta
        for _ in range(6):
            mixed = theta * u_new.coeffs + (1.0 - theta) * u.coeffs
            r_next = residual_indicator(ctx, mixed, sigma)
            if r_next <= 1.2 * r_cur:
                break
            theta *= 0.5
        denom = max(np.linalg.norm(mixed), 1e-300)
        update = np.linalg.norm(mixed - u.coeffs) / denom
        u = DiscreteField(space, mixed)
        r_cur = r_next
        if r_next < best_r:
            best_u, best_r, best_it = u, r_next, it
        report.residuals.append(res)
        report.updates.append(update)
        report.iterations = it
        report.final_update = update
        if verbose:
            print(f"  nonlinear step {it}: update {update:.3e} "
                  f"residual {r_next:.3e} theta {theta:.3g}")
        if update <= config.sold_tol:
            report.converged = True
            break
    if best_u is not None and not report.converged:
        u = best_u
        report.selected_iteration = best_it
    return u, report

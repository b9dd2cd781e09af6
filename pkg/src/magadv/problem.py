"""PDE data: coefficients, advection operators, well-posedness check, presets.

The equation solved is

    curl(eps curl u) - beta x (curl u) + grad(beta . u) + gamma u = f

with the advection part grouped as the vector advection operator
`adv(u) = -beta x (curl u) + grad(beta . u)` and its formal dual
`adv*(v) = curl(beta x v) - beta div v`. Manufactured problems derive f, g
and all solution derivatives symbolically, so convergence studies are not
polluted by numerical differentiation error.
"""

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

from .mesh import Mesh


class MissingFieldData(ValueError):
    """An operator was asked for data the caller did not supply."""


@dataclass
class ExactSolution:
    value: callable        # (n, d) -> (n, d)
    curl: callable         # (n, d) -> (n,) in 2D, (n, 3) in 3D
    curlcurl: callable     # (n, d) -> (n, d)
    advection: callable    # (n, d) -> (n, d), the vector advection of u
    jacobian: callable     # (n, d) -> (n, d, d)


@dataclass
class ProblemSpec:
    dim: int
    eps: float
    beta: callable          # (n, d) -> (n, d)
    beta_jac: callable      # (n, d) -> (n, d, d), entries d beta_i / d x_j
    gamma: callable         # (n, d) -> (n,)
    f: callable             # (n, d) -> (n, d)
    g: callable = None      # boundary trace data in u-convention; None means 0
    exact: ExactSolution = None
    name: str = ""
    gamma_is_zero: bool = False

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"diffusion coefficient must be positive, got {self.eps}")


@dataclass
class FriedrichsReport:
    min_rho: float
    n_samples: int
    rho0: float
    passed: bool


def lie_advection(beta_value, field_value, field_curl=None, field_jac=None,
                  beta_jac=None, dual=False):
    """Vector advection `-beta x (curl u) + grad(beta . u)` at points, or its
    formal dual `curl(beta x v) - beta div v` when dual=True.

    Arrays are batched over the first axis. grad(beta.u) is assembled from the
    field and velocity Jacobians; missing data raises MissingFieldData.
    """
    b = np.atleast_2d(beta_value)
    u = np.atleast_2d(field_value)
    d = u.shape[1]
    if dual:
        if field_jac is None or beta_jac is None:
            raise MissingFieldData("dual advection needs field and velocity Jacobians")
        div_b = np.trace(beta_jac, axis1=1, axis2=2)
        return (
            -div_b[:, None] * u
            + np.einsum("nij,nj->ni", beta_jac, u)
            - np.einsum("nij,nj->ni", field_jac, b)
        )
    if field_curl is None or field_jac is None or beta_jac is None:
        raise MissingFieldData("advection needs the curl and both Jacobians")
    c = np.asarray(field_curl)
    if d == 2:
        minus_b_cross_curl = np.stack([-b[:, 1] * c, b[:, 0] * c], axis=1)
    else:
        minus_b_cross_curl = -np.cross(b, c)
    grad_bu = np.einsum("nji,nj->ni", field_jac, b) + np.einsum("nji,nj->ni", beta_jac, u)
    return minus_b_cross_curl + grad_bu


def friedrichs_rho(spec: ProblemSpec, points) -> FriedrichsReport:
    """Smallest eigenvalue of (gamma - div(beta)/2) I + sym(grad beta) over
    the sample points; `passed` compares against rho0 = min over samples > 0."""
    pts = np.atleast_2d(points)
    jb = np.asarray(spec.beta_jac(pts))
    g = np.asarray(spec.gamma(pts))
    div_b = np.trace(jb, axis1=1, axis2=2)
    sym = 0.5 * (jb + np.transpose(jb, (0, 2, 1)))
    mats = sym + (g - 0.5 * div_b)[:, None, None] * np.eye(spec.dim)[None]
    lam = np.linalg.eigvalsh(mats)[:, 0]
    mn = float(lam.min())
    return FriedrichsReport(min_rho=mn, n_samples=len(pts), rho0=mn, passed=mn > 0)


def friedrichs_sample_points(mesh: Mesh) -> np.ndarray:
    """Cell barycenters plus vertices, the default well-posedness sample grid."""
    return np.concatenate([mesh.cell_barycenters(), mesh.vertices], axis=0)


# ---- symbolic manufactured problems -----------------------------------------

def _as_batch(value, n):
    # keep complex inputs complex so derivative oracles can complex-step
    arr = np.asarray(value)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    return np.broadcast_to(arr, (n,))


def _lambdify_vector(syms, exprs):
    funcs = [sp.lambdify(syms, e, modules="numpy") for e in exprs]

    def closure(pts):
        pts = np.atleast_2d(pts)
        return np.stack([_as_batch(f(*pts.T), len(pts)) for f in funcs], axis=1)

    return closure


def _lambdify_scalar(syms, expr):
    f = sp.lambdify(syms, expr, modules="numpy")

    def closure(pts):
        pts = np.atleast_2d(pts)
        return _as_batch(f(*pts.T), len(pts)).copy()

    return closure


def _lambdify_matrix(syms, mat):
    d = mat.shape[0]
    entries = [[sp.lambdify(syms, mat[i, j], modules="numpy") for j in range(d)]
               for i in range(d)]

    def closure(pts):
        pts = np.atleast_2d(pts)
        cols = [np.stack([_as_batch(entries[i][j](*pts.T), len(pts))
                          for j in range(d)], axis=1) for i in range(d)]
        return np.stack(cols, axis=1)

    return closure


def _sym_curl(u, syms):
    d = len(syms)
    if d == 2:
        return sp.diff(u[1], syms[0]) - sp.diff(u[0], syms[1])
    x, y, z = syms
    return sp.Matrix([
        sp.diff(u[2], y) - sp.diff(u[1], z),
        sp.diff(u[0], z) - sp.diff(u[2], x),
        sp.diff(u[1], x) - sp.diff(u[0], y),
    ])


def _sym_vector_curl(c, syms):
    d = len(syms)
    if d == 2:
        return sp.Matrix([sp.diff(c, syms[1]), -sp.diff(c, syms[0])])
    return _sym_curl(c, syms)


def manufactured_problem(dim, u_exprs, beta_exprs, gamma_expr, eps,
                         name="manufactured") -> ProblemSpec:
    """Build a ProblemSpec whose f and g make the given expressions the exact
    solution. Expressions are sympy objects or strings in x, y[, z]."""
    syms = sp.symbols("x y z")[:dim]
    u = sp.Matrix([sp.sympify(e) for e in u_exprs])
    beta = sp.Matrix([sp.sympify(e) for e in beta_exprs])
    gamma = sp.sympify(gamma_expr)

    curl_u = _sym_curl(u, syms)
    curlcurl_u = _sym_vector_curl(curl_u, syms)
    bu = sum(beta[i] * u[i] for i in range(dim))
    grad_bu = sp.Matrix([sp.diff(bu, s) for s in syms])
    if dim == 2:
        minus_b_cross_curl = sp.Matrix([-beta[1] * curl_u, beta[0] * curl_u])
    else:
        minus_b_cross_curl = -beta.cross(curl_u)
    advection = minus_b_cross_curl + grad_bu
    f = eps * curlcurl_u + advection + gamma * u

    jac_u = sp.Matrix([[sp.diff(u[i], syms[j]) for j in range(dim)] for i in range(dim)])
    jac_b = sp.Matrix([[sp.diff(beta[i], syms[j]) for j in range(dim)] for i in range(dim)])

    exact = ExactSolution(
        value=_lambdify_vector(syms, list(u)),
        curl=(_lambdify_scalar(syms, curl_u) if dim == 2
              else _lambdify_vector(syms, list(curl_u))),
        curlcurl=_lambdify_vector(syms, list(curlcurl_u)),
        advection=_lambdify_vector(syms, list(advection)),
        jacobian=_lambdify_matrix(syms, jac_u),
    )
    return ProblemSpec(
        dim=dim,
        eps=float(eps),
        beta=_lambdify_vector(syms, list(beta)),
        beta_jac=_lambdify_matrix(syms, jac_b),
        gamma=_lambdify_scalar(syms, gamma),
        f=_lambdify_vector(syms, list(f)),
        g=exact.value,
        exact=exact,
        name=name,
        gamma_is_zero=(gamma == 0),
    )


# ---- experiment presets ------------------------------------------------------

def _const_vec(vec):
    vec = np.asarray(vec, dtype=float)

    def closure(pts):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(vec, (len(pts), len(vec))).copy()

    return closure


def _zero_matrix(d):
    def closure(pts):
        pts = np.atleast_2d(pts)
        return np.zeros((len(pts), d, d))

    return closure


def _zero_scalar(pts):
    return np.zeros(len(np.atleast_2d(pts)))


def make_example(example_id: int, eps: float = None, dim: int = None) -> ProblemSpec:
    """The six experiment presets.

    1: 3D smooth manufactured solution, gamma=8, rotating beta.
    2: 2D smooth manufactured solution, gamma=1, solid-body beta.
    3: stabilization-split study; reuses 2 (dim=2, default) or 1 (dim=3).
    4: 2D boundary-layer problem, beta=(1,2), f=(1,1), g=0.
    5: 2D internal-layer problem, beta=(1,0), banded source, g=0.
    6: 2D oscillation benchmark for the nonlinear scheme, beta=(1,0), f=(1,0).
    """
    if example_id == 1:
        e = 1e-6 if eps is None else eps
        return manufactured_problem(
            3,
            ["y*exp(x*z)", "-x**2*y", "sin(x*y*z)"],
            ["1 - z/2", "2 + x", "3 - y"],
            8,
            e,
            name="example1",
        )
    if example_id == 2:
        e = 1e-6 if eps is None else eps
        return manufactured_problem(
            2,
            ["16*x*(1 - x)*y*(1 - y)", "exp(x)*sin(pi*x)*sin(pi*y)"],
            ["y - 1/2", "-x + 1/2"],
            1,
            e,
            name="example2",
        )
    if example_id == 3:
        d = 2 if dim is None else dim
        spec = make_example(1 if d == 3 else 2, eps=eps)
        spec.name = "example3"
        return spec
    if example_id == 4:
        e = 1e-6 if eps is None else eps
        return ProblemSpec(
            dim=2, eps=e,
            beta=_const_vec([1.0, 2.0]), beta_jac=_zero_matrix(2),
            gamma=_zero_scalar, f=_const_vec([1.0, 1.0]),
            g=None, exact=None, name="example4", gamma_is_zero=True,
        )
    if example_id == 5:
        e = 1e-3 if eps is None else eps

        def f_band(pts):
            pts = np.atleast_2d(pts)
            band = (pts[:, 1] > 0.25) & (pts[:, 1] < 0.75)
            out = np.zeros_like(pts)
            out[band] = 1.0
            return out

        return ProblemSpec(
            dim=2, eps=e,
            beta=_const_vec([1.0, 0.0]), beta_jac=_zero_matrix(2),
            gamma=_zero_scalar, f=f_band,
            g=None, exact=None, name="example5", gamma_is_zero=True,
        )
    if example_id == 6:
        e = 1e-6 if eps is None else eps
        return ProblemSpec(
            dim=2, eps=e,
            beta=_const_vec([1.0, 0.0]), beta_jac=_zero_matrix(2),
            gamma=_zero_scalar, f=_const_vec([1.0, 0.0]),
            g=None, exact=None, name="example6", gamma_is_zero=True,
        )
    raise ValueError(f"unknown example id {example_id}; valid ids are 1..6")

"""Experiment driver and CLI.

Subcommands:
  run          solve one configuration (layer/benchmark examples write VTK,
               cross-sections and metrics; manufactured ones a one-row CSV)
  convergence  sweep a doubling N list and emit the error table CSV
  mesh-info    print mesh statistics, optionally dump the plain-text tables
  export-vtk   solve one configuration and export the field

Configuration may come from a flat key=value file (--config); explicit CLI
flags override file values. Outputs are deterministic apart from the timing
column.
"""

import argparse
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from .analysis import (ErrorRecord, convergence_orders, cross_section, error_norms,
                       oscillation_metric, sample_component)
from .fe_space import DiscreteField, build_space, interpolate
from .forms import (StabilizationConfig, apply_dirichlet, assemble, stabilization_deltas)
from .mesh import build_uniform_mesh, write_mesh_dump
from .problem import make_example
from .solve import solve_linear, solve_sold

VARIANT_MAP = {
    "none": "galerkin",
    "s1": "s1_only",
    "s2": "s2_only",
    "supg": "supg",
    "sold": "sold",
}
GUARD_3D = {1: 16, 2: 8}


@dataclass
class RunConfig:
    example: int = 2
    dim: int = None          # inferred from the example when None
    k: int = 1
    N: tuple = (8,)
    eps: float = None        # example default when None
    variant: str = "supg"
    alpha: str = "upwind"
    c0: float = None         # 0.4/sqrt(dim) when None
    c1: float = 1.0
    sigma: float = 1.1
    theta: float = 0.5
    tol: float = 1e-8
    max_iter: int = 50
    out: str = "results"
    seed: int = 0
    verbose: bool = False
    force: bool = False

    def __post_init__(self):
        self.N = tuple(int(n) for n in (self.N if hasattr(self.N, "__iter__") else (self.N,)))
        if any(n < 1 for n in self.N):
            raise ValueError("mesh sizes must be positive")
        if self.variant not in VARIANT_MAP:
            raise ValueError(
                f"unknown variant {self.variant!r}; choose from {sorted(VARIANT_MAP)}"
            )
        if self.k not in (1, 2):
            raise ValueError("polynomial degree k must be 1 or 2")


def _resolve(config: RunConfig):
    spec = make_example(config.example, eps=config.eps,
                        dim=config.dim if config.example == 3 else None)
    dim = spec.dim
    if config.dim is not None and config.dim != dim:
        raise ValueError(f"example {config.example} is {dim}D, got --dim {config.dim}")
    if dim == 3 and not config.force:
        cap = GUARD_3D[config.k]
        if max(config.N) > cap:
            raise ValueError(
                f"3D runs with k={config.k} are capped at N={cap} for the direct "
                "solver; pass --force to override"
            )
    c0 = config.c0 if config.c0 is not None else StabilizationConfig.default_c0(dim)
    stab = StabilizationConfig(
        alpha=config.alpha, c0=c0, c1=config.c1, c_sigma=config.sigma,
        theta=config.theta, sold_tol=config.tol, sold_max_iter=config.max_iter,
    )
    return spec, stab


def solve_configuration(spec, stab, dim, N, k, variant, verbose=False):
    """Build space, assemble, constrain and solve one configuration.

    Returns (space, field, deltas, report_or_None).
    """
    mesh = build_uniform_mesh(dim, N)
    space = build_space(mesh, k)
    if variant == "sold":
        sigma = np.full(mesh.n_cells, stab.c_sigma / N)
        deltas = stabilization_deltas(space, spec, stab)
        u, report = solve_sold(space, spec, stab, deltas=deltas, sigma=sigma,
                               verbose=verbose)
        return space, u, deltas, report
    if variant in ("s2_only", "supg"):
        deltas = stabilization_deltas(space, spec, stab)
    else:
        deltas = np.zeros(mesh.n_cells)
    system = assemble(space, spec, stab, variant, deltas=deltas)
    system = apply_dirichlet(system, space, spec)
    u, res = solve_linear(system)
    if verbose:
        print(f"  N={N} variant={variant}: {space.n_dofs} dofs, residual {res:.2e}")
    return space, u, deltas, None


def run_convergence(config: RunConfig, variant=None, alpha=None):
    """Error records over the configured N sweep for one variant."""
    for prev, cur in zip(config.N, config.N[1:]):
        if cur != 2 * prev:
            raise ValueError(
                f"convergence tables need a doubling N sequence, got {config.N}"
            )
    spec, stab = _resolve(config)
    if alpha is not None:
        from dataclasses import replace

        stab = replace(stab, alpha=alpha)
    variant = variant or VARIANT_MAP[config.variant]
    norm_variant = "s2_only" if variant == "s2_only" else "full"
    records = []
    for N in config.N:
        t0 = time.perf_counter()
        space, u, deltas, _ = solve_configuration(
            spec, stab, spec.dim, N, config.k, variant, config.verbose
        )
        parts, l2 = error_norms(space, spec, u, stab, deltas, variant=norm_variant)
        records.append(ErrorRecord(
            N=N, dofs=space.n_dofs, l2_error=l2, energy_error=parts.norm,
            seconds=time.perf_counter() - t0,
        ))
    return convergence_orders(records)


def _fmt(x):
    return "-" if x is None else f"{x:.4e}"


def write_csv(records, path):
    """Header `N,dofs,l2_error,l2_order,energy_error,energy_order,seconds`;
    scientific notation with 5 significant digits, `-` for undefined orders."""
    with open(path, "w") as fh:
        fh.write("N,dofs,l2_error,l2_order,energy_error,energy_order,seconds\n")
        for r in records:
            fh.write(",".join([
                str(r.N), str(r.dofs), _fmt(r.l2_error), _fmt(r.l2_order),
                _fmt(r.energy_error), _fmt(r.energy_order), _fmt(r.seconds),
            ]) + "\n")
    return path


def write_vtk(space, u_h: DiscreteField, path, name="u"):
    """Legacy-VTK unstructured grid with the field as vertex data, averaging
    the adjacent cells' values (tangentially continuous fields are multivalued
    at vertices; the average is a display choice)."""
    from .quadrature import QuadratureRule
    from .fe_space import _REF_VERTICES

    mesh = space.mesh
    d = mesh.dim
    vrule = QuadratureRule(d, _REF_VERTICES[d], np.ones(d + 1), degree=-1)
    tabs = space.cell_tables(vrule)
    sums = np.zeros((mesh.n_vertices, d))
    counts = np.zeros(mesh.n_vertices)
    for c in range(mesh.n_cells):
        vals = np.einsum("qid,i->qd", tabs.value(c), u_h.coeffs[space.cell_dofs[c]])
        for loc, v in enumerate(mesh.cells[c]):
            sums[v] += vals[loc]
            counts[v] += 1.0
    point_data = sums / counts[:, None]

    cell_type = 5 if d == 2 else 10
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write(f"{name}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for v in mesh.vertices:
            coords = list(v) + [0.0] * (3 - d)
            fh.write(" ".join(f"{x:.9g}" for x in coords) + "\n")
        nloc = d + 1
        fh.write(f"CELLS {mesh.n_cells} {mesh.n_cells * (nloc + 1)}\n")
        for cverts in mesh.cells:
            fh.write(f"{nloc} " + " ".join(str(int(v)) for v in cverts) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        for _ in range(mesh.n_cells):
            fh.write(f"{cell_type}\n")
        fh.write(f"POINT_DATA {mesh.n_vertices}\n")
        fh.write(f"VECTORS {name} double\n")
        for v in point_data:
            comps = list(v) + [0.0] * (3 - d)
            fh.write(" ".join(f"{x:.9g}" for x in comps) + "\n")
    return path


def write_cross_section(rows, path):
    with open(path, "w") as fh:
        for coord, value in rows:
            fh.write(f"{coord:.9g}\t{value:.9g}\n")
    return path


def run_experiment(config: RunConfig):
    """Dispatch a full experiment; returns a dict of artifacts written."""
    import os

    os.makedirs(config.out, exist_ok=True)
    ex = config.example
    if ex in (1, 2):
        records = run_convergence(config)
        path = os.path.join(
            config.out, f"example{ex}_k{config.k}_{config.variant}.csv"
        )
        write_csv(records, path)
        return {"csv": [path], "records": records}
    if ex == 3:
        out = {"csv": [], "records": {}}
        for label, variant, alpha in (
            ("supg", "supg", "upwind"),
            ("s2_only", "s2_only", "centered"),
            ("s1_only", "s1_only", "upwind"),
        ):
            records = run_convergence(config, variant=variant, alpha=alpha)
            path = f"{config.out}/example3_k{config.k}_{label}.csv"
            write_csv(records, path)
            out["csv"].append(path)
            out["records"][label] = records
        return out
    if ex == 4:
        return _run_boundary_layer(config)
    if ex == 5:
        return _run_internal_layer(config)
    if ex == 6:
        return _run_sold_benchmark(config)
    raise ValueError(f"unknown example {ex}")


def _run_boundary_layer(config: RunConfig):
    spec, stab = _resolve(config)
    N = config.N[-1]
    out = {}
    fields = {}
    for variant in ("galerkin", "supg"):
        space, u, _, _ = solve_configuration(spec, stab, 2, N, config.k, variant,
                                             config.verbose)
        path = f"{config.out}/example4_{variant}_N{N}.vtk"
        write_vtk(space, u, path, name="u")
        fields[variant] = u
        out[variant] = path
    _, ref_u, _, _ = solve_configuration(spec, stab, 2, 4 * N, config.k,
                                                 "supg", config.verbose)
    box = (0.1, 0.7, 0.1, 0.7)
    bounds = sample_component(ref_u, 0, box)
    metrics = {}
    for variant, u in fields.items():
        metrics[variant] = oscillation_metric(u, 0, box, bounds)
    mpath = f"{config.out}/example4_metrics_N{N}.txt"
    with open(mpath, "w") as fh:
        fh.write(f"box {box} bounds {bounds[0]:.9g} {bounds[1]:.9g}\n")
        for variant, (over, under) in metrics.items():
            fh.write(f"{variant} overshoot {over:.9g} undershoot {under:.9g}\n")
    out["metrics"] = metrics
    out["metrics_path"] = mpath
    return out


def _run_internal_layer(config: RunConfig):
    spec, stab = _resolve(config)
    N = config.N[-1]
    variant = VARIANT_MAP[config.variant]
    space, u, _, _ = solve_configuration(spec, stab, 2, N, config.k, variant,
                                         config.verbose)
    vtk = write_vtk(space, u, f"{config.out}/example5_{variant}_N{N}.vtk", name="u")
    rows = cross_section(u, 0, axis=0, offset=0.5, n_samples=201)
    tsv = write_cross_section(rows, f"{config.out}/example5_section_N{N}.tsv")
    inside = rows[(rows[:, 0] > 0.3) & (rows[:, 0] < 0.7), 1]
    outside = rows[(rows[:, 0] < 0.2) | (rows[:, 0] > 0.8), 1]
    metrics = {
        "plateau_mean": float(np.mean(inside)),
        "outside_mean_abs": float(np.mean(np.abs(outside))),
    }
    return {"vtk": vtk, "section": tsv, "metrics": metrics}


def interior_sample_points(mesh):
    """Interior lattice points of every cell not touching the boundary.
    H(curl) fields are single-valued there, and the comparison region
    excludes cells where a coarse interpolant of an unresolved layer is
    itself an artifact."""
    eps = 1e-12
    keep = []
    for c in range(mesh.n_cells):
        verts = mesh.vertices[mesh.cells[c]]
        if np.all((verts > eps) & (verts < 1.0 - eps)):
            keep.append(c)
    lam = np.array([
        [0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5],
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ])
    verts = mesh.vertices[mesh.cells[keep]]
    return np.einsum("lp,cpd->cld", lam, verts).reshape(-1, mesh.dim)


def _run_sold_benchmark(config: RunConfig):
    """Reference (fine-mesh solve interpolated to the coarse space) compared
    against an over-stabilized linear solve and the nonlinear solve. Errors
    are max-norms over interior-cell sample points."""
    spec, stab = _resolve(config)
    from dataclasses import replace

    N = config.N[-1]
    n_ref = 8 * N
    mesh_c = build_uniform_mesh(2, N)
    space_c = build_space(mesh_c, config.k)

    _, ref_u, _, _ = solve_configuration(spec, stab, 2, n_ref, config.k,
                                                 "supg", config.verbose)
    u_ref = interpolate(space_c, lambda pts: ref_u.eval_at(pts))

    stab_big = replace(stab, c0=10.0 / np.sqrt(2.0))
    _, u_supg, _, _ = solve_configuration(spec, stab_big, 2, N, config.k, "supg",
                                          config.verbose)
    _, u_sold, _, report = solve_configuration(spec, stab, 2, N, config.k, "sold",
                                               config.verbose)

    pts = interior_sample_points(mesh_c)
    ref_vals = u_ref.eval_at(pts)
    err_supg = float(np.abs(u_supg.eval_at(pts) - ref_vals).max())
    err_sold = float(np.abs(u_sold.eval_at(pts) - ref_vals).max())

    artifacts = {}
    for name, u in (("reference", u_ref), ("supg", u_supg), ("sold", u_sold)):
        artifacts[name] = write_vtk(space_c, u, f"{config.out}/example6_{name}_N{N}.vtk",
                                    name="u")
        rows = cross_section(u, 0, axis=0, offset=0.5, n_samples=201)
        write_cross_section(rows, f"{config.out}/example6_{name}_section_N{N}.tsv")
    rpath = f"{config.out}/example6_report_N{N}.txt"
    with open(rpath, "w") as fh:
        fh.write(f"max_error_supg {err_supg:.9g}\n")
        fh.write(f"max_error_sold {err_sold:.9g}\n")
        fh.write(f"sold_iterations {report.iterations}\n")
        fh.write(f"sold_converged {report.converged}\n")
    return {
        "err_supg": err_supg, "err_sold": err_sold, "report": report,
        "artifacts": artifacts, "report_path": rpath,
    }


# ---- CLI --------------------------------------------------------------------

def _parse_config_file(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (expected key=value): {line!r}")
            key, val = line.split("=", 1)
            values[key.strip()] = val.strip()
    return values

_FIELD_TYPES = {
    "example": int, "dim": int, "k": int, "eps": float, "variant": str,
    "alpha": str, "c0": float, "c1": float, "sigma": float, "theta": float,
    "tol": float, "max_iter": int, "out": str, "seed": int,
    "verbose": lambda s: s.lower() in ("1", "true", "yes"),
    "force": lambda s: s.lower() in ("1", "true", "yes"),
}


def build_run_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        raw = _parse_config_file(args.config)
        for key, sval in raw.items():
            if key == "N":
                values["N"] = tuple(int(tok) for tok in sval.replace(",", " ").split())
            elif key in _FIELD_TYPES:
                values[key] = _FIELD_TYPES[key](sval)
            else:
                raise ValueError(f"unknown config key {key!r}")
    for f in fields(RunConfig):
        cli = getattr(args, f.name, None)
        if cli is not None:
            values[f.name] = tuple(cli) if f.name == "N" else cli
    return RunConfig(**values)


def _add_common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--example", type=int, choices=range(1, 7))
    p.add_argument("--dim", type=int, choices=(2, 3))
    p.add_argument("--k", type=int, choices=(1, 2))
    p.add_argument("--N", type=int, nargs="+")
    p.add_argument("--eps", type=float)
    p.add_argument("--variant", choices=sorted(VARIANT_MAP))
    p.add_argument("--alpha", choices=("upwind", "centered"))
    p.add_argument("--c0", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--verbose", action="store_const", const=True)
    p.add_argument("--force", action="store_const", const=True)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="magadv",
        description="Stabilized H(curl) solvers for magnetic advection-diffusion",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "convergence", "export-vtk"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "export-vtk":
            p.add_argument("--output", default=None, help="output .vtk path")
    p = sub.add_parser("mesh-info")
    p.add_argument("--dim", type=int, choices=(2, 3), required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--dump", help="write the plain-text vertex/cell tables here")

    args = parser.parse_args(argv)
    try:
        if args.command == "mesh-info":
            mesh = build_uniform_mesh(args.dim, args.N)
            print(f"dim {mesh.dim}  N {args.N}")
            print(f"vertices {mesh.n_vertices}  cells {mesh.n_cells}  "
                  f"facets {mesh.n_facets} ({mesh.facet_boundary.sum()} boundary)  "
                  f"edges {mesh.n_edges}")
            print(f"h_T {mesh.cell_diameters.max():.6g}  "
                  f"total volume {mesh.cell_volumes.sum():.12g}")
            if args.dump:
                write_mesh_dump(mesh, args.dump)
                print(f"wrote {args.dump}")
            return 0
        config = build_run_config(args)
        if args.command == "convergence":
            if config.example not in (1, 2, 3):
                raise ValueError("convergence tables need a manufactured example (1-3)")
            result = run_experiment(config)
            for path in result["csv"]:
                print(f"wrote {path}")
            return 0
        if args.command == "run":
            result = run_experiment(config)
            for key, val in sorted(result.items()):
                if isinstance(val, str):
                    print(f"wrote {val}")
                elif key == "metrics":
                    print(f"metrics: {val}")
            return 0
        if args.command == "export-vtk":
            spec, stab = _resolve(config)
            variant = VARIANT_MAP[config.variant]
            space, u, _, _ = solve_configuration(
                spec, stab, spec.dim, config.N[-1], config.k, variant, config.verbose
            )
            import os

            os.makedirs(config.out, exist_ok=True)
            path = args.output or (
                f"{config.out}/example{config.example}_{variant}_N{config.N[-1]}.vtk"
            )
            write_vtk(space, u, path)
            print(f"wrote {path}")
            return 0
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

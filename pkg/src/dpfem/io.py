"""CSV convergence tables and legacy-VTK field output.

CSV layout matches the study tables: ``grid,h,error,rate`` with ``%.6e``
errors, ``%.2f`` rates, and ``N/A`` in the first row.  Parsing and
re-serializing a file reproduces it byte for byte.
"""

from __future__ import annotations

import os

import numpy as np

from dpfem.analysis import ConvergenceReport
from dpfem.spaces import FunctionSpace

CSV_HEADER = "grid,h,error,rate"

_VTK_CELL_TYPES = {2: 5, 3: 10}  # triangle, tetrahedron


def format_report_csv(report: ConvergenceReport) -> str:
    lines = [CSV_HEADER]
    for grid, h, err, rate in report.rows():
        rate_s = "N/A" if rate is None else f"{rate:.2f}"
        lines.append(f"{grid},{h:.6e},{err:.6e},{rate_s}")
    return "\n".join(lines) + "\n"


def write_report_csv(report: ConvergenceReport, path: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(format_report_csv(report))
    return path


def read_report_csv(path: str, problem: str = "", scheme: str = "") -> ConvergenceReport:
    """Parse a study CSV back into a report (problem/scheme not stored in file)."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: expected header {CSV_HEADER!r}")
    grids, hs, errors, rates = [], [], [], []
    for line in lines[1:]:
        g, h, e, r = line.split(",")
        grids.append(int(g))
        hs.append(float(h))
        errors.append(float(e))
        rates.append(None if r == "N/A" else float(r))
    return ConvergenceReport(
        problem=problem, scheme=scheme, grids=grids, hs=hs, errors=errors, rates=rates
    )


# ----------------------------------------------------------------------
# VTK legacy ASCII output
# ----------------------------------------------------------------------


def _vertex_values(space: FunctionSpace, coeffs: np.ndarray) -> np.ndarray:
    """Per-cell vertex values of the field, shape (nc, d+1)."""
    d = space.mesh.dim
    local = coeffs[space.cell_dofs]
    if space.kind == "ncfem":
        # basis phi_i = 1 - d*lambda_i, so the value at vertex j is
        # sum_i c_i - d*c_j
        return local.sum(axis=1, keepdims=True) - d * local
    return local


def export_vtk(space: FunctionSpace, coeffs: np.ndarray, path: str, name: str = "u") -> str:
    """Write the field as a legacy ASCII VTK unstructured grid.

    Conforming fields use the shared mesh vertices; nonconforming and
    discontinuous fields get one point per cell vertex so interelement
    jumps survive in the output.
    """
    mesh = space.mesh
    d = mesh.dim
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.ndofs,):
        raise ValueError(f"expected {space.ndofs} coefficients, got shape {coeffs.shape}")

    if space.kind == "cfem":
        points = mesh.vertices
        conn = mesh.cells
        values = coeffs
    else:
        points = mesh.vertices[mesh.cells].reshape(-1, d)
        conn = np.arange(points.shape[0], dtype=np.int64).reshape(-1, d + 1)
        values = _vertex_values(space, coeffs).reshape(-1)

    if d == 2:
        points = np.column_stack([points, np.zeros(points.shape[0])])

    nc = conn.shape[0]
    lines = [
        "# vtk DataFile Version 3.0",
        name,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {points.shape[0]} double",
    ]
    lines.extend(" ".join(f"{x:.10g}" for x in pt) for pt in points)
    lines.append(f"CELLS {nc} {nc * (d + 2)}")
    lines.extend(f"{d + 1} " + " ".join(str(v) for v in cell) for cell in conn)
    lines.append(f"CELL_TYPES {nc}")
    lines.extend([str(_VTK_CELL_TYPES[d])] * nc)
    lines.append(f"POINT_DATA {points.shape[0]}")
    lines.append(f"SCALARS {name} double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{v:.10g}" for v in values)

    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path

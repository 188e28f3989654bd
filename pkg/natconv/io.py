# Copyright (C) 2025 The natconv authors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, version 3.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

"""
Field snapshots and their export (legacy VTK, CSV), thresholding, run histories,
solve-cost reports and HTML figures.
"""

import csv
import logging
from dataclasses import dataclass
from io import StringIO
from typing import Any, Literal

import numpy
from numpy import ndarray
from plotly.graph_objects import Figure, Heatmap # type: ignore[import-untyped]
from plotly.subplots import make_subplots # type: ignore[import-untyped]

from .base import Path, SetupError, dump_json, isa, parse_json, read, write
from .filter import DensityFilter, DesignField
from .mesh import Mesh
from .newton import SolveReport
from .physics import Problem, State, element_velocities, max_temperature_rise

log = logging.getLogger(__name__)

# direct-solve cost ratio of a 2-field against a 4-field model on the same mesh, (2/4)³
THEORETICAL_COST_RATIO = 1 / 8
FULL_ORDER_FIELDS = 4

@dataclass(frozen=True, eq=False)
class FieldSnapshot:
	iteration: int
	gamma: ndarray # per element, passive elements included
	gamma_tilde: ndarray
	p: ndarray
	t: ndarray
	u: ndarray # (n_elems, 2) centroid velocities
	psi: float
	g: float
	dT_max: float

	@property
	def speed(self) -> ndarray:
		return numpy.linalg.norm(self.u, axis=1)

	def check(self, mesh: Mesh) -> None:
		sizes = {
			"gamma": (self.gamma.shape, (mesh.n_elems,)), "gamma_tilde": (self.gamma_tilde.shape, (mesh.n_elems,)),
			"p": (self.p.shape, (mesh.n_nodes,)), "t": (self.t.shape, (mesh.n_nodes,)), "u": (self.u.shape, (mesh.n_elems, 2)),
		}
		if bad := [f"{k} {a} != {b}" for k, (a, b) in sizes.items() if a != b]:
			raise SetupError(f"snapshot does not fit the {mesh.nx}x{mesh.ny} mesh: {', '.join(bad)}")

def take_snapshot(problem: Problem, state: State, filt: DensityFilter, design: DesignField,
	iteration: int = 0, psi: float = float("nan"), g: float = float("nan")) -> FieldSnapshot:
	gamma = filt.passive.copy()
	gamma[filt.design] = design.gamma
	rho = design.gamma_tilde
	return FieldSnapshot(iteration, gamma, rho, state.p, state.t, element_velocities(problem, state, rho),
		psi, g, max_temperature_rise(problem, state))

def _num(x: float) -> str:
	return repr(float(x))

def export_vtk(f: Path | str, mesh: Mesh, snap: FieldSnapshot) -> None:
	"""
	ASCII legacy VTK structured grid with nodal p, t and element γ, γ̃, |u|, u.
	"""
	snap.check(mesh)
	lines = [
		"# vtk DataFile Version 3.0",
		f"natconv snapshot iteration {snap.iteration}",
		"ASCII",
		"DATASET STRUCTURED_GRID",
		f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
		f"POINTS {mesh.n_nodes} double",
	]
	lines += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.node_coords]
	lines.append(f"POINT_DATA {mesh.n_nodes}")
	for name, v in (("p", snap.p), ("t", snap.t)):
		lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [_num(x) for x in v]
	lines.append(f"CELL_DATA {mesh.n_elems}")
	for name, v in (("gamma", snap.gamma), ("gamma_tilde", snap.gamma_tilde), ("speed", snap.speed)):
		lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [_num(x) for x in v]
	lines.append("VECTORS velocity double")
	lines += [f"{_num(a)} {_num(b)} 0" for a, b in snap.u]
	write(f, "\n".join(lines) + "\n")

POINT_COLUMNS = ["node", "x", "y", "p", "t"]
CELL_COLUMNS = ["elem", "x", "y", "gamma", "gamma_tilde", "u_x", "u_y", "speed"]

def _table(header: list[str], cols: list[ndarray], index: ndarray) -> str:
	buf = StringIO()
	out = csv.writer(buf, lineterminator="\r\n")
	out.writerow(header)
	out.writerows([int(i), *(_num(c[k]) for c in cols)] for k, i in enumerate(index))
	return buf.getvalue()

def export_csv(stem: Path | str, mesh: Mesh, snap: FieldSnapshot) -> list[Path]:
	"""
	Write `<stem>_points.csv`, `<stem>_cells.csv` and a `<stem>.json` sidecar with the scalars.
	"""
	snap.check(mesh)
	stem = Path(stem)
	points = stem.with_name(stem.name + "_points.csv")
	cells = stem.with_name(stem.name + "_cells.csv")
	meta = stem.with_name(stem.name + ".json")
	x, c = mesh.node_coords, mesh.centroids
	write(points, _table(POINT_COLUMNS, [x[:, 0], x[:, 1], snap.p, snap.t], numpy.arange(mesh.n_nodes)))
	write(cells, _table(CELL_COLUMNS, [c[:, 0], c[:, 1], snap.gamma, snap.gamma_tilde, snap.u[:, 0], snap.u[:, 1], snap.speed],
		numpy.arange(mesh.n_elems)))
	write(meta, dump_json({
		"iteration": snap.iteration, "psi": snap.psi, "g": snap.g, "dT_max": snap.dT_max,
		"nx": mesh.nx, "ny": mesh.ny,
	}))
	return [points, cells, meta]

def _read_table(f: Path, header: list[str]) -> dict[str, ndarray]:
	rows = list(csv.reader(StringIO(read(f).decode(), newline="")))
	if not rows or rows[0] != header:
		raise SetupError(f"{f}: expected header {','.join(header)}")
	data = numpy.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(header))
	return {k: data[:, i] for i, k in enumerate(header)}

def import_csv(stem: Path | str) -> FieldSnapshot:
	stem = Path(stem)
	pts = _read_table(stem.with_name(stem.name + "_points.csv"), POINT_COLUMNS)
	cel = _read_table(stem.with_name(stem.name + "_cells.csv"), CELL_COLUMNS)
	meta = parse_json(stem.with_name(stem.name + ".json"))
	return FieldSnapshot(int(meta["iteration"]), cel["gamma"], cel["gamma_tilde"], pts["p"], pts["t"],
		numpy.column_stack([cel["u_x"], cel["u_y"]]), float(meta["psi"]), float(meta["g"]), float(meta["dT_max"]))

def export_snapshot(f: Path | str, mesh: Mesh, snap: FieldSnapshot, format: Literal["vtk", "csv"] = "vtk") -> list[Path]:
	try:
		match format:
			case "vtk":
				path = Path(f).with_suffix(".vtk")
				export_vtk(path, mesh, snap)
				return [path]
			case "csv":
				return export_csv(f, mesh, snap)
	except OSError as e:
		raise SetupError(f"cannot write snapshot to {f}: {e}") from e
	raise SetupError(f"unknown snapshot format {format!r}")

def threshold_design(gamma_tilde: ndarray, cutoff: float) -> tuple[ndarray, float]:
	"""
	Element-wise solid mask γ̃ ≥ cutoff and its volume fraction.
	"""
	if not (0 < cutoff < 1):
		raise SetupError(f"threshold must lie in (0, 1), got {cutoff}")
	solid = numpy.asarray(gamma_tilde) >= cutoff
	return solid, float(solid.mean()) if solid.size else 0.0

def report_cost(reports: list[SolveReport], n_nodes: int, phases: dict[str, float] | None = None) -> dict[str, Any]:
	"""
	Solve-cost summary: DOF counts of this model and of the 4-field full model, Newton work and timings.
	"""
	if not reports:
		raise SetupError("cost report needs at least one solve report")
	iters = [r.iterations for r in reports]
	return {
		"n_nodes": n_nodes,
		"n_dofs": 2 * n_nodes,
		"full_order_dofs": FULL_ORDER_FIELDS * n_nodes,
		"solves": len(reports),
		"newton_iterations": sum(iters),
		"max_newton_iterations": max(iters),
		"converged": sum(r.converged for r in reports),
		"solve_time": sum(r.wall_time for r in reports),
		"phases": dict(phases or {}),
		"theoretical_ratio": THEORETICAL_COST_RATIO,
	}

def format_cost(cost: dict[str, Any]) -> str:
	lines = [
		f"DOFs: {cost['n_dofs']:,} (2 per node, {cost['n_nodes']:,} nodes); 4-field model: {cost['full_order_dofs']:,}",
		f"solves: {cost['solves']} ({cost['converged']} converged), Newton iterations: {cost['newton_iterations']} total, {cost['max_newton_iterations']} max",
		f"solve time: {cost['solve_time']:.3f} s",
	]
	lines += [f"  {k}: {v:.3f} s" for k, v in cost["phases"].items()]
	lines.append(f"theoretical direct-solve cost ratio against the 4-field model: {cost['theoretical_ratio']:.1%}")
	return "\n".join(lines)

def write_history(f: Path | str, records: list[dict]) -> None:
	"""
	One JSON object per optimization iteration; `.zst` names are compressed.
	"""
	write(f, "".join(dump_json(r) + "\n" for r in records))

def read_history(f: Path | str) -> list[dict]:
	return [parse_json(line) for line in read(f).decode().splitlines() if line.strip()]

def write_reports(f: Path | str, reports: list[SolveReport]) -> None:
	write(f, dump_json([r.to_dict() for r in reports]))

def read_reports(f: Path | str) -> list[SolveReport]:
	out = []
	for d in parse_json(f):
		if not isa(d, dict):
			raise SetupError(f"{f}: malformed solve report")
		d["stages"] = [tuple(x) for x in d.get("stages", [])]
		out.append(SolveReport(**d))
	return out

def field_figure(mesh: Mesh, snap: FieldSnapshot, title: str = "") -> Figure:
	"""
	Side-by-side maps of γ̃, T and |u|.
	"""
	snap.check(mesh)
	c = mesh.centroids
	xe, ye = c[: mesh.nx, 0], c[:: mesh.nx, 1]
	xn, yn = mesh.node_coords[: mesh.nx + 1, 0], mesh.node_coords[:: mesh.nx + 1, 1]
	fig = make_subplots(rows=1, cols=3, subplot_titles=("design", "temperature", "speed"), horizontal_spacing=0.08)
	fig.add_trace(Heatmap(x=xe, y=ye, z=snap.gamma_tilde.reshape(mesh.ny, mesh.nx), colorscale="Greys", zmin=0, zmax=1,
		showscale=False), row=1, col=1)
	fig.add_trace(Heatmap(x=xn, y=yn, z=snap.t.reshape(mesh.ny + 1, mesh.nx + 1), colorscale="Inferno",
		colorbar=dict(x=0.63, len=0.9)), row=1, col=2)
	fig.add_trace(Heatmap(x=xe, y=ye, z=snap.speed.reshape(mesh.ny, mesh.nx), colorscale="Viridis",
		colorbar=dict(x=1.0, len=0.9)), row=1, col=3)
	for col in (1, 2, 3):
		fig.update_yaxes(scaleanchor=f"x{col if col > 1 else ''}", row=1, col=col)
	fig.update_layout(title_text=title or f"iteration {snap.iteration}, psi = {snap.psi:.6g}", template="simple_white")
	return fig

def write_figure(f: Path | str, fig: Figure) -> None:
	Path(f).parent.mkdir(parents=True, exist_ok=True)
	fig.write_html(str(f), include_plotlyjs="cdn")

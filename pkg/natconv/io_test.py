import numpy
import pytest

from .base import SetupError
from .filter import DensityFilter
from .io import (
	FieldSnapshot, export_snapshot, field_figure, format_cost, import_csv, read_history, read_reports, report_cost,
	take_snapshot, threshold_design, write_figure, write_history, write_reports,
)
from .mesh import Boundaries, build_structured_mesh
from .newton import SolveReport, solve_state
from .physics import MaterialSet, Problem

def _snapshot(nx: int = 2, ny: int = 2) -> tuple:
	m = build_structured_mesh(nx, ny, 1.0, 1.0)
	rng = numpy.random.default_rng(7)
	snap = FieldSnapshot(3, rng.uniform(size=m.n_elems), rng.uniform(size=m.n_elems), rng.normal(size=m.n_nodes),
		rng.normal(size=m.n_nodes), rng.normal(size=(m.n_elems, 2)), 1 / 3, -0.01, 2.5)
	return m, snap

def testset_vtk(tmp_path) -> None:
	m, snap = _snapshot()
	[path] = export_snapshot(tmp_path / "snap", m, snap, "vtk")
	assert path.name == "snap.vtk"
	lines = path.read_text().splitlines()
	assert lines[0] == "# vtk DataFile Version 3.0" and lines[3] == "DATASET STRUCTURED_GRID"
	assert "DIMENSIONS 3 3 1" in lines and "POINTS 9 double" in lines
	assert "POINT_DATA 9" in lines and "CELL_DATA 4" in lines and "VECTORS velocity double" in lines
	i = lines.index("SCALARS t double 1")
	assert [float(x) for x in lines[i + 2 : i + 11]] == snap.t.tolist()
	assert float(lines[-1].split()[1]) == snap.u[-1, 1]

def testset_csv_round_trip(tmp_path) -> None:
	m, snap = _snapshot(3, 2)
	paths = export_snapshot(tmp_path / "out" / "snap", m, snap, "csv")
	assert [p.name for p in paths] == ["snap_points.csv", "snap_cells.csv", "snap.json"]
	assert paths[0].read_bytes().startswith(b"node,x,y,p,t\r\n")
	back = import_csv(tmp_path / "out" / "snap")
	for k in ("gamma", "gamma_tilde", "p", "t", "u"):
		assert numpy.array_equal(getattr(back, k), getattr(snap, k))
	assert (back.iteration, back.psi, back.g, back.dT_max) == (3, 1 / 3, -0.01, 2.5)

def testset_snapshot_errors(tmp_path) -> None:
	m, snap = _snapshot()
	other = build_structured_mesh(3, 2, 1.0, 1.0)
	with pytest.raises(SetupError): export_snapshot(tmp_path / "a", other, snap, "vtk")
	with pytest.raises(SetupError): export_snapshot(tmp_path / "a", m, snap, "xml") # type: ignore
	(tmp_path / "file").write_text("")
	with pytest.raises(SetupError): export_snapshot(tmp_path / "file" / "a", m, snap, "vtk")

def testset_take_snapshot() -> None:
	m = build_structured_mesh(4, 4, 1.0, 1.0)
	bcs = Boundaries() \
		.tag(m, "bottom", 0.25, 0.75, "flux_T", 1.0) \
		.tag(m, "top", 0.0, 1.0, "dirichlet_T", 0.0) \
		.tag(m, "top", 1.0, 1.0, "dirichlet_P", 0.0)
	p = Problem(m, MaterialSet(beta=1.0), bcs)
	filt = DensityFilter(m, 0.0, m.centroids[:, 0] < 0.5, passive=1.0)
	design = filt.field(numpy.full(filt.n_design, 0.2))
	state, _ = solve_state(p, design.gamma_tilde)
	snap = take_snapshot(p, state, filt, design, 5, 0.7, 0.0)
	snap.check(m)
	assert (snap.gamma[filt.design] == 0.2).all() and (snap.gamma[~filt.design] == 1.0).all()
	assert snap.dT_max == state.t.max() > 0
	assert snap.speed.shape == (16,)

def testset_threshold() -> None:
	g = numpy.full(10, 0.3)
	solid, frac = threshold_design(g, 0.1)
	assert solid.all() and frac == 1.0
	solid, frac = threshold_design(g, 0.5)
	assert not solid.any() and frac == 0.0
	assert threshold_design(numpy.array([0.1, 0.5, 0.9, 0.49]), 0.5)[1] == 0.5
	with pytest.raises(SetupError): threshold_design(g, 1.0)

def testset_cost() -> None:
	n_nodes = 141 * 161
	reports = [SolveReport(2 * n_nodes, iterations=4, converged=True, wall_time=1.5), SolveReport(2 * n_nodes, iterations=2, converged=True)]
	cost = report_cost(reports, n_nodes)
	assert cost["n_dofs"] == 45402 and cost["full_order_dofs"] == 90804
	assert cost["newton_iterations"] == 6 and cost["max_newton_iterations"] == 4
	assert cost["phases"] == {} and cost["solve_time"] == 1.5
	text = format_cost(cost)
	assert "45,402" in text and "12.5%" in text
	assert "forward: 0.000 s" in format_cost(report_cost(reports[1:], n_nodes, {"forward": 0.0}))
	with pytest.raises(SetupError): report_cost([], n_nodes)

@pytest.mark.parametrize("name", ["history.jsonl", "history.jsonl.zst"])
def testset_history(tmp_path, name: str) -> None:
	recs = [{"iter": i, "psi": 1 / (i + 1), "g": -0.0, "change": 0.2, "stage": 0} for i in range(4)]
	write_history(tmp_path / name, recs)
	assert read_history(tmp_path / name) == recs
	write_history(tmp_path / "again" / name, recs)
	assert (tmp_path / "again" / name).read_bytes() == (tmp_path / name).read_bytes()

def testset_reports(tmp_path) -> None:
	reps = [SolveReport(8, 1.0, 2, [0.5, 1e-6], [1.0, 1.0], [("beta", 0.5, 1)], True, 0.25)]
	write_reports(tmp_path / "reports.json", reps)
	[back] = read_reports(tmp_path / "reports.json")
	assert back.to_dict() == reps[0].to_dict() and back.stages == [("beta", 0.5, 1)]

def testset_figure(tmp_path) -> None:
	m, snap = _snapshot(3, 2)
	fig = field_figure(m, snap)
	assert len(fig.data) == 3 and numpy.shape(fig.data[1].z) == (3, 4)
	write_figure(tmp_path / "fig.html", fig)
	assert (tmp_path / "fig.html").stat().st_size > 0

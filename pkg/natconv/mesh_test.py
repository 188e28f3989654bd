import numpy
import pytest

from .base import SetupError
from .mesh import Boundaries, build_structured_mesh, edge_load, edge_measure, quad_rule, shape_eval, tag_boundary


def testset_mesh_counts() -> None:
	m = build_structured_mesh(2, 2, 1.0, 1.0)
	assert (m.n_nodes, m.n_elems) == (9, 4)
	assert m.elem_size == (0.5, 0.5)
	assert m.node_coords.shape == (9, 2) and m.elem_nodes.shape == (4, 4)
	assert m.elem_nodes[0].tolist() == [0, 1, 4, 3]
	assert m.node_coords[m.node_id(2, 1)].tolist() == [1.0, 0.5]

def testset_mesh_benchmark_grids() -> None:
	m = build_structured_mesh(280, 160, 7.0, 4.0)
	assert m.elem_size == pytest.approx((0.025, 0.025))
	m = build_structured_mesh(120, 240, 4.0, 8.0)
	assert m.elem_size == pytest.approx((1 / 30, 1 / 30))
	assert m.h == pytest.approx(1 / 30)

def testset_mesh_errors() -> None:
	with pytest.raises(SetupError): build_structured_mesh(0, 2, 1.0, 1.0)
	with pytest.raises(SetupError): build_structured_mesh(2, 2, 1.0, -1.0)

def testset_shape() -> None:
	N, _ = shape_eval(0, 0)
	assert N.tolist() == [0.25] * 4
	N, _ = shape_eval(-1, -1)
	assert N.tolist() == [1, 0, 0, 0]
	for ξ, η in numpy.random.default_rng(1).uniform(-1, 1, (20, 2)):
		N, dN = shape_eval(ξ, η)
		assert abs(N.sum() - 1) < 1e-15
		assert numpy.abs(dN.sum(axis=0)).max() < 1e-15

def testset_quadrature() -> None:
	assert sum(quad_rule(2).weights) == pytest.approx(4)
	m = build_structured_mesh(7, 3, 2.1, 0.9)
	k = m.kernel
	assert abs(k.w.sum() * m.n_elems - 2.1 * 0.9) <= 1e-12 * 2.1 * 0.9
	assert k.detJ == pytest.approx(m.elem_size[0] * m.elem_size[1] / 4)
	assert numpy.abs(k.N.sum(axis=1) - 1).max() < 1e-15
	assert numpy.abs(k.B.sum(axis=2)).max() < 1e-12

def testset_tag_boundary() -> None:
	m = build_structured_mesh(280, 160, 7.0, 4.0)
	wall = tag_boundary(m, "bottom", 0.0, 7.0, "flux_T", 0.0)
	assert len(wall.edges) == 280 and len(wall.nodes) == 281
	heat = tag_boundary(m, "bottom", 3.0, 4.0, "flux_T", 110.0)
	assert len(heat.edges) == 40
	assert edge_measure(m, [heat]) == pytest.approx(1.0)
	assert edge_load(m, [heat]).sum() == pytest.approx(110.0)
	gauge = tag_boundary(m, "top", 7.0, 7.0, "dirichlet_P", 0.0)
	assert gauge.nodes.tolist() == [m.n_nodes - 1] and len(gauge.edges) == 0
	again = tag_boundary(m, "bottom", 3.0, 4.0, "flux_T", 110.0)
	assert numpy.array_equal(again.edges, heat.edges)

def testset_tag_boundary_errors() -> None:
	m = build_structured_mesh(4, 4, 1.0, 1.0)
	with pytest.raises(SetupError): tag_boundary(m, "left", 0.30, 0.32, "flux_T", 1.0)
	with pytest.raises(SetupError): tag_boundary(m, "left", 0.0, 2.0, "flux_T", 1.0)
	with pytest.raises(SetupError): tag_boundary(m, "top", 0.5, 0.5, "flux_T", 1.0)
	bcs = Boundaries().tag(m, "top", 0.0, 1.0, "dirichlet_T", 0.0)
	with pytest.raises(SetupError): bcs.tag(m, "left", 0.0, 1.0, "dirichlet_T", 1.0)
	bcs = bcs.tag(m, "left", 0.0, 1.0, "dirichlet_T", 0.0) # equal values may overlap
	nodes, vals = bcs.dirichlet("T")
	assert len(nodes) == 5 + 4 and not vals.any()
	bcs = bcs.tag(m, "top", 1.0, 1.0, "dirichlet_P", 0.0) # other field, no conflict
	assert bcs.dirichlet("P")[0].tolist() == [24]

import numpy
import pytest

from .base import SetupError
from .filter import DensityFilter, density_filter, filter_matrix
from .mesh import build_structured_mesh

def testset_uniform() -> None:
	m = build_structured_mesh(12, 7, 3.0, 1.75)
	for r in (0.0, 0.2, 0.6, 1.3):
		assert numpy.allclose(density_filter(numpy.full(m.n_elems, 0.37), m, r), 0.37, rtol=1e-14, atol=0)
		H = filter_matrix(m, r)
		assert numpy.allclose(numpy.asarray(H.sum(axis=1)).ravel(), 1, rtol=1e-14, atol=0)

def testset_identity() -> None:
	m = build_structured_mesh(5, 5, 1.0, 1.0)
	x = numpy.random.default_rng(0).uniform(0, 1, m.n_elems)
	assert numpy.array_equal(density_filter(x, m, 0.19), x)
	assert numpy.array_equal(density_filter(x, m, 0.0), x)
	with pytest.raises(SetupError): filter_matrix(m, -1.0)

def testset_spike() -> None:
	m = build_structured_mesh(9, 9, 9.0, 9.0)
	r = 2.4
	x = numpy.zeros(m.n_elems)
	x[m.elem_id(4, 4)] = 1
	total = sum(max(0.0, r - numpy.hypot(i, j)) for i in range(-3, 4) for j in range(-3, 4))
	assert density_filter(x, m, r)[m.elem_id(4, 4)] == pytest.approx(r / total, rel=1e-14)

def testset_linearity() -> None:
	m = build_structured_mesh(8, 6, 2.0, 1.5)
	rng = numpy.random.default_rng(1)
	a, b = rng.uniform(0, 1, (2, m.n_elems))
	lhs = density_filter(0.3 * a + 1.7 * b, m, 0.7)
	rhs = 0.3 * density_filter(a, m, 0.7) + 1.7 * density_filter(b, m, 0.7)
	assert numpy.allclose(lhs, rhs, rtol=1e-13, atol=1e-15)

def testset_subdomain() -> None:
	m = build_structured_mesh(6, 6, 1.0, 1.0)
	design = m.centroids[:, 0] < 0.5
	filt = DensityFilter(m, 0.4, design, passive=1.0)
	assert filt.n_design == 18
	rho = filt(numpy.full(18, 0.25))
	assert numpy.allclose(rho[design], 0.25, rtol=1e-14) and (rho[~design] == 1).all()
	field = filt.field(numpy.zeros(18))
	assert field.r_min == 0.4 and not field.gamma_tilde[design].any()
	g = numpy.random.default_rng(2).normal(size=m.n_elems)
	x = numpy.random.default_rng(3).normal(size=18)
	# backward is the transpose of the design-to-design forward map
	assert filt.backward(g) @ x == pytest.approx(g[design] @ (filt(x) - filt(numpy.zeros(18)))[design])
	with pytest.raises(SetupError): filt(numpy.zeros(17))
	with pytest.raises(SetupError): DensityFilter(m, 0.4, numpy.zeros(m.n_elems, dtype=bool))
	assert filt.with_radius(0.1).H.nnz == 18

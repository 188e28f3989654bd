import numpy
import pytest

from .base import MmaError
from .mma import MmaState, mma_update

def testset_stationary() -> None:
	x = numpy.full(10, 0.3)
	new = mma_update(x, numpy.zeros(10), -0.1, numpy.full(10, 0.1), MmaState(10))
	assert numpy.abs(new - x).max() < 1e-12

def testset_slack() -> None:
	x = numpy.linspace(0.1, 0.9, 9)
	st = MmaState(9)
	new = mma_update(x, -numpy.ones(9), -0.5, numpy.full(9, 1 / 9), st, move=0.2)
	assert (new > x).all()
	assert (new <= numpy.minimum(x + 0.2, 1.0) + 1e-15).all()
	assert new[-1] == 1.0 and st.lam == 0

def testset_infeasible() -> None:
	rng = numpy.random.default_rng(0)
	x = numpy.full(20, 0.8)
	st = MmaState(20)
	new = mma_update(x, rng.normal(size=20), x.mean() - 0.5, numpy.full(20, 1 / 20), st, move=0.2)
	assert new.mean() - 0.5 < x.mean() - 0.5
	assert st.lam > 0

def testset_bounds() -> None:
	rng = numpy.random.default_rng(1)
	st = MmaState(50)
	x = rng.uniform(0, 1, 50)
	for _ in range(8):
		new = mma_update(x, rng.normal(size=50), x.mean() - 0.4, numpy.full(50, 1 / 50), st, move=0.1)
		assert (st.L < x).all() and (x < st.U).all()
		assert (new >= 0).all() and (new <= 1).all()
		assert numpy.abs(new - x).max() <= 0.1 + 1e-12
		x = new
	assert st.iteration == 8 and st.x1 is not None and st.x2 is not None

def testset_converges() -> None:
	c = numpy.linspace(0.5, 1.0, 16)
	x = numpy.full(16, 0.2)
	st = MmaState(16)
	for _ in range(80):
		x = mma_update(x, 2 * (x - c), x.mean() - 0.4, numpy.full(16, 1 / 16), st)
	assert x.mean() <= 0.4 + 1e-6
	# KKT: x = c - λ/32 for a uniform shift
	shift = c - x
	assert numpy.abs(shift - shift.mean()).max() < 1e-2

def testset_errors() -> None:
	with pytest.raises(MmaError): mma_update(numpy.zeros(3), numpy.array([0, numpy.nan, 0]), 0.0, numpy.ones(3), MmaState(3))
	with pytest.raises(MmaError): mma_update(numpy.zeros(3), numpy.zeros(3), 0.0, numpy.ones(3), MmaState(4))
	with pytest.raises(MmaError): mma_update(numpy.zeros(3), numpy.zeros(3), 0.0, numpy.ones(3), MmaState(3), move=0.0)

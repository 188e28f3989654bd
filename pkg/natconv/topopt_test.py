import numpy
import pytest

from .base import SetupError
from .filter import DensityFilter
from .mesh import Boundaries, build_structured_mesh
from .physics import MaterialSet, Problem, heat_balance
from .topopt import CrossCheck, OptimizationSchedule, cross_check, evaluate, run_optimization, staged

def _box(n: int = 10, beta: float = 1.0) -> Problem:
	m = build_structured_mesh(n, n, 4.0, 4.0)
	bcs = Boundaries() \
		.tag(m, "bottom", 1.6, 2.4, "flux_T", 1.0) \
		.tag(m, "top", 0.0, 4.0, "dirichlet_T", 0.0) \
		.tag(m, "top", 4.0, 4.0, "dirichlet_P", 0.0)
	return Problem(m, MaterialSet(beta=beta), bcs)

SHORT = OptimizationSchedule(switch_every=5, V_star=0.3, max_outer_iter=14)

def testset_schedule() -> None:
	assert OptimizationSchedule().n_stages == 4
	assert SHORT.first_stages(1).p_k_seq == (2.0,)
	with pytest.raises(SetupError): OptimizationSchedule(p_k_seq=(2.0,))
	with pytest.raises(SetupError): OptimizationSchedule(move_limit=0.0)
	with pytest.raises(SetupError): OptimizationSchedule(V_star=1.0)

def testset_zero_iterations() -> None:
	p = _box()
	filt = DensityFilter(p.mesh, 0.6)
	sched = OptimizationSchedule(V_star=0.3, max_outer_iter=0)
	res = run_optimization(p, filt, sched)
	assert numpy.array_equal(res.design.gamma, numpy.full(filt.n_design, 0.3))
	assert res.history == [] and res.stage == 0
	_, psi, _ = evaluate(staged(p, sched, 0), filt(res.design.gamma))
	assert res.objective == psi

def testset_run() -> None:
	p = _box()
	design = p.mesh.centroids[:, 1] < 3.0
	filt = DensityFilter(p.mesh, 0.6, design)
	res = run_optimization(p, filt, SHORT)
	hist = res.history
	assert 0 < len(hist) <= SHORT.max_outer_iter
	stages = [h["stage"] for h in hist]
	assert stages == sorted(stages) and stages[0] == 0
	assert all(h["change"] <= SHORT.move_limit + 1e-12 for h in hist)
	assert res.design.gamma.min() >= 0 and res.design.gamma.max() <= 1
	assert not res.design.gamma_tilde[~design].any()
	assert res.volume_fraction <= SHORT.V_star + 1e-6
	assert res.objective < hist[0]["psi"]
	assert len(res.reports) == len(hist) + 1
	heat_in, heat_out = heat_balance(staged(p, SHORT, res.stage), res.state, res.design.gamma_tilde)
	assert abs(heat_in - heat_out) <= 1e-3 * heat_in
	again = run_optimization(p, filt, SHORT)
	assert again.history == hist
	assert numpy.array_equal(again.design.gamma, res.design.gamma)

def testset_callback() -> None:
	p = _box(8)
	seen = []
	sched = OptimizationSchedule(switch_every=2, V_star=0.4, max_outer_iter=3)
	run_optimization(p, DensityFilter(p.mesh, 0.8), sched, callback=lambda rec, g: seen.append((rec["iter"], g.shape)))
	assert [s[0] for s in seen] == [0, 1, 2]

def testset_cross_check() -> None:
	p = _box(8, beta=2.0)
	rho = numpy.full(p.mesh.n_elems, 0.4)
	cc = cross_check([rho], [p])
	assert cc.psi.shape == (1, 1) and cc.dominance()
	_, psi, _ = evaluate(p.with_mats(p_k=16.0, p_mubar=20.0), rho)
	assert cc.psi[0, 0] == psi
	assert cc.dT_max[0, 0] > 0
	assert cc.depth_scaled()[0, 0] == pytest.approx(0.02 * psi)

def testset_dominance() -> None:
	good = CrossCheck(numpy.array([[1.0, 3.0], [2.0, 2.5]]), numpy.zeros((2, 2)))
	assert good.dominance()
	bad = CrossCheck(numpy.array([[1.0, 2.0], [2.0, 2.5]]), numpy.zeros((2, 2)))
	assert not bad.dominance()

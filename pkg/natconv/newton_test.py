import numpy
import pytest

from .base import NonConvergenceError, SetupError, SolverError
from .mesh import Boundaries, build_structured_mesh
from .physics import MaterialSet, Problem, assemble_residual, heat_balance
from .newton import NewtonConfig, RampConfig, ramp_solve, solve_state, solve_with_retry, update_damping

def _box(n: int, mats: MaterialSet) -> Problem:
	m = build_structured_mesh(n, n, 1.0, 1.0)
	bcs = Boundaries() \
		.tag(m, "bottom", 0.25, 0.75, "flux_T", 1.0) \
		.tag(m, "top", 0.0, 1.0, "dirichlet_T", 0.0) \
		.tag(m, "top", 1.0, 1.0, "dirichlet_P", 0.0)
	return Problem(m, mats, bcs)

def testset_damping() -> None:
	lams = (0.1, 0.55, 1.0)
	assert update_damping(lams, [(x - 0.4) ** 2 + 1 for x in lams]) == pytest.approx(0.4, abs=1e-12)
	assert update_damping(lams, [(x - 2.0) ** 2 for x in lams]) == 1.0
	assert update_damping(lams, [(x - 0.01) ** 2 for x in lams]) == 0.05
	assert update_damping(lams, [3.0, 2.0, 1.0]) == 1.0
	assert update_damping(lams, [1 - (x - 0.5) ** 2 for x in lams]) == 1.0
	assert update_damping(lams, [numpy.nan, 0.5, numpy.inf]) == 0.55
	with pytest.raises(SolverError): update_damping(lams, [numpy.nan, numpy.inf, numpy.nan])
	with pytest.raises(SolverError): update_damping(lams[:2], [1.0, 2.0])

def testset_config() -> None:
	with pytest.raises(SetupError): NewtonConfig(rel_tol=0.0)
	with pytest.raises(SetupError): NewtonConfig(damping="fixed", lam=1.5)
	with pytest.raises(SetupError): RampConfig(stages=(0.5,))
	with pytest.raises(SetupError): RampConfig(target="k") # type: ignore

def testset_linear() -> None:
	p = _box(8, MaterialSet(beta=0.0))
	rho = numpy.zeros(p.mesh.n_elems)
	state, rep = solve_state(p, rho)
	assert rep.converged and rep.iterations == 1 and rep.lambdas == [1.0]
	assert rep.n_dofs == 2 * p.mesh.n_nodes
	heat_in, heat_out = heat_balance(p, state, rho)
	assert heat_in == pytest.approx(0.5)
	assert abs(heat_in - heat_out) <= 1e-3 * heat_in
	again, rep = solve_state(p, rho, state)
	assert rep.iterations == 0 and numpy.array_equal(again.t, state.t)

def testset_zero_load() -> None:
	m = build_structured_mesh(3, 3, 1.0, 1.0)
	p = Problem(m, MaterialSet(), Boundaries().tag(m, "top", 0.0, 1.0, "dirichlet_T", 0.0).tag(m, "top", 1.0, 1.0, "dirichlet_P", 0.0))
	state, rep = solve_state(p, numpy.zeros(m.n_elems))
	assert rep.converged and rep.iterations == 0 and not state.s.any()

def testset_convection() -> None:
	p = _box(8, MaterialSet(beta=100.0))
	rng = numpy.random.default_rng(0)
	rho = rng.uniform(0.0, 1.0, p.mesh.n_elems)
	state, rep = solve_state(p, rho)
	assert rep.converged and rep.rel_residual <= 1e-4
	assert numpy.isfinite(rep.residuals).all()
	assert numpy.linalg.norm(assemble_residual(p, state, rho)) <= 1e-4 * rep.reference_norm
	dofs, vals = p.dirichlet
	assert numpy.array_equal(state.s[dofs], vals)
	heat_in, heat_out = heat_balance(p, state, rho)
	assert abs(heat_in - heat_out) <= 1e-3 * heat_in
	_, rep2 = solve_state(p, rho)
	assert rep2.residuals == rep.residuals and rep2.lambdas == rep.lambdas

def testset_fixed_damping() -> None:
	p = _box(6, MaterialSet(beta=50.0))
	rho = numpy.full(p.mesh.n_elems, 0.3)
	_, rep = solve_state(p, rho, cfg=NewtonConfig(damping="fixed", lam=1.0))
	assert rep.converged and set(rep.lambdas) == {1.0}

def testset_nonconvergence() -> None:
	p = _box(4, MaterialSet(beta=50.0))
	rho = numpy.zeros(p.mesh.n_elems)
	with pytest.raises(NonConvergenceError) as e:
		solve_state(p, rho, cfg=NewtonConfig(max_iter=0))
	assert e.value.state is not None and e.value.report.residuals == [1.0]

def testset_singular() -> None:
	p = _box(4, MaterialSet(inv_mubar_f=0.0, inv_mubar_s=0.0))
	with pytest.raises(SolverError): solve_state(p, numpy.zeros(p.mesh.n_elems))

def testset_ramp() -> None:
	p = _box(6, MaterialSet(beta=0.0))
	rho = numpy.zeros(p.mesh.n_elems)
	full, rep = solve_state(p, rho)
	same, rep1 = ramp_solve(p, rho, ramp=RampConfig("q_h", (1.0,)))
	assert numpy.array_equal(same.s, full.s) and rep1.residuals == rep.residuals
	half, _ = solve_state(p.scaled("q_h", 0.5), rho)
	assert numpy.abs(half.t - 0.5 * full.t).max() <= 1e-10 * numpy.abs(full.t).max()
	ramped, rep = ramp_solve(p, rho, ramp=RampConfig("q_h", (0.5, 1.0)))
	assert [x[1] for x in rep.stages] == [0.5, 1.0]
	assert numpy.abs(ramped.t - full.t).max() <= 1e-3 * numpy.abs(full.t).max()

def testset_ramp_beta() -> None:
	p = _box(8, MaterialSet(beta=400.0))
	rho = numpy.full(p.mesh.n_elems, 0.2)
	ramped, rep = ramp_solve(p, rho, ramp=RampConfig("beta", (0.25, 0.5, 1.0)))
	assert rep.converged and len(rep.stages) == 3
	heat_in, heat_out = heat_balance(p, ramped, rho)
	assert abs(heat_in - heat_out) <= 1e-3 * heat_in
	assert numpy.linalg.norm(assemble_residual(p, ramped, rho)) <= 1e-4 * rep.reference_norm
	retried, _ = solve_with_retry(p, rho, None, NewtonConfig())
	assert numpy.linalg.norm(assemble_residual(p, retried, rho)) <= 1e-4 * rep.reference_norm

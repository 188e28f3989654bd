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
Density-based optimization of the thermal compliance under a volume bound, with
penalization continuation, and the cross-check of designs across operating conditions.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy
from numpy import ndarray

from .adjoint import design_sensitivities, objective_thermal_compliance, solve_adjoint
from .base import SetupError
from .filter import DensityFilter, DesignField
from .mma import MmaState, mma_update
from .newton import NewtonConfig, RampConfig, SolveReport, solve_with_retry
from .physics import Problem, State, max_temperature_rise

log = logging.getLogger(__name__)

P_K_SEQ = (2.0, 8.0, 16.0, 16.0)
P_MUBAR_SEQ = (8.0, 8.0, 8.0, 20.0)
FINAL_P_K, FINAL_P_MUBAR = 16.0, 20.0

# heat-sink half-model compliance is doubled and reported per 100 units of out-of-plane depth
HALF_MODEL_FACTOR = 2.0
DEPTH_FACTOR = 0.01

@dataclass(frozen=True)
class OptimizationSchedule:
	p_k_seq: tuple[float, ...] = P_K_SEQ
	p_mubar_seq: tuple[float, ...] = P_MUBAR_SEQ
	switch_every: int = 50
	switch_on_change: float = 0.01
	move_limit: float = 0.2
	V_star: float = 0.5
	max_outer_iter: int = 400

	def __post_init__(self) -> None:
		if len(self.p_k_seq) != len(self.p_mubar_seq) or not self.p_k_seq:
			raise SetupError(f"penalization sequences differ in length: {self.p_k_seq} vs {self.p_mubar_seq}")
		if not (0 < self.move_limit <= 1):
			raise SetupError(f"move limit must lie in (0, 1], got {self.move_limit}")
		if not (0 < self.V_star < 1):
			raise SetupError(f"volume fraction must lie in (0, 1), got {self.V_star}")
		if self.switch_every < 1 or self.max_outer_iter < 0:
			raise SetupError(f"bad iteration counts {(self.switch_every, self.max_outer_iter)}")

	@property
	def n_stages(self) -> int:
		return len(self.p_k_seq)

	def first_stages(self, n: int) -> "OptimizationSchedule":
		return OptimizationSchedule(self.p_k_seq[:n], self.p_mubar_seq[:n], self.switch_every,
			self.switch_on_change, self.move_limit, self.V_star, self.max_outer_iter)

@dataclass
class OptimizationResult:
	design: DesignField
	state: State
	objective: float
	stage: int
	history: list[dict] = field(default_factory=list)
	reports: list[SolveReport] = field(default_factory=list)

	@property
	def volume_fraction(self) -> float:
		return float(self.design.gamma.mean())

def staged(problem: Problem, sched: OptimizationSchedule, stage: int) -> Problem:
	return problem.with_mats(p_k=sched.p_k_seq[stage], p_mubar=sched.p_mubar_seq[stage])

def evaluate(problem: Problem, rho: ndarray, initial: State | None = None, newton: NewtonConfig = NewtonConfig(),
	retry: RampConfig = RampConfig()) -> tuple[State, float, SolveReport]:
	state, report = solve_with_retry(problem, rho, initial, newton, retry)
	return state, objective_thermal_compliance(problem, state), report

def run_optimization(problem: Problem, filt: DensityFilter, sched: OptimizationSchedule = OptimizationSchedule(),
	gamma0: ndarray | None = None, newton: NewtonConfig = NewtonConfig(), retry: RampConfig = RampConfig(),
	callback: Callable[[dict, ndarray], None] | None = None) -> OptimizationResult:
	"""
	Loop filter, forward solve, objective, adjoint, sensitivities and MMA until the last
	continuation stage stops changing the design or the iteration cap is hit.

	A stage ends after `switch_every` iterations or once the largest raw design change drops
	below `switch_on_change`; the objective handed to MMA is scaled by its first value.
	"""
	n = filt.n_design
	gamma = numpy.full(n, sched.V_star) if gamma0 is None else numpy.array(gamma0, dtype=float)
	if gamma.shape != (n,) or gamma.min() < 0 or gamma.max() > 1:
		raise SetupError(f"initial design must hold {n} values in [0, 1]")
	v = numpy.full(n, problem.mesh.elem_volume)
	dg = v / v.sum()
	mma = MmaState(n)
	stage, since = 0, 0
	state: State | None = None
	history: list[dict] = []
	reports: list[SolveReport] = []
	psi0: float | None = None
	for it in range(sched.max_outer_iter):
		prob = staged(problem, sched, stage)
		rho = filt(gamma)
		state, psi, rep = evaluate(prob, rho, state, newton, retry)
		reports.append(rep)
		sens = design_sensitivities(prob, state, solve_adjoint(prob, state, rho), rho, filt)
		psi0 = psi0 or abs(psi) or 1.0
		g = float(gamma @ dg) - sched.V_star
		new = mma_update(gamma, sens.dpsi / psi0, g, dg, mma, sched.move_limit)
		change = float(numpy.abs(new - gamma).max())
		record = {
			"iter": it, "psi": psi, "g": g, "change": change, "stage": stage,
			"p_k": prob.mats.p_k, "p_mubar": prob.mats.p_mubar, "newton": rep.iterations,
		}
		history.append(record)
		log.info(f"it {it:4d} stage {stage} psi {psi:.6e} g {g:+.3e} change {change:.3e} newton {rep.iterations}")
		if callback: callback(record, new)
		gamma = new
		since += 1
		if change < sched.switch_on_change or since >= sched.switch_every:
			if stage == sched.n_stages - 1:
				if change < sched.switch_on_change: break
			else:
				stage, since = stage + 1, 0
				mma = MmaState(n)
				log.info(f"continuation stage {stage}: p_k = {sched.p_k_seq[stage]:g}, p_mubar = {sched.p_mubar_seq[stage]:g}")
	prob = staged(problem, sched, stage)
	rho = filt(gamma)
	state, psi, rep = evaluate(prob, rho, state, newton, retry)
	reports.append(rep)
	return OptimizationResult(filt.field(gamma), state, psi, stage, history, reports)

@dataclass(frozen=True)
class CrossCheck:
	psi: ndarray # design by condition
	dT_max: ndarray

	def dominance(self) -> bool:
		"""
		Whether every design is the best one under its own condition.
		"""
		return bool(numpy.all(numpy.argmin(self.psi, axis=0) == numpy.arange(self.psi.shape[1])))

	def depth_scaled(self) -> ndarray:
		return self.psi * HALF_MODEL_FACTOR * DEPTH_FACTOR

def cross_check(designs: Sequence[ndarray], conditions: Sequence[Problem], newton: NewtonConfig = NewtonConfig(),
	retry: RampConfig = RampConfig()) -> CrossCheck:
	"""
	Evaluate every physical design under every condition at the final penalization.
	"""
	psi = numpy.zeros((len(designs), len(conditions)))
	dT = numpy.zeros_like(psi)
	for j, cond in enumerate(conditions):
		prob = cond.with_mats(p_k=FINAL_P_K, p_mubar=FINAL_P_MUBAR)
		for i, rho in enumerate(designs):
			state, psi[i, j], _ = evaluate(prob, rho, None, newton, retry)
			dT[i, j] = max_temperature_rise(prob, state)
			log.info(f"cross-check design {i} condition {j}: psi {psi[i, j]:.6e} dT_max {dT[i, j]:.6e}")
	return CrossCheck(psi, dT)

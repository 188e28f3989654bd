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
Damped Newton iteration for the coupled pressure/temperature system.
"""

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy
from numpy import ndarray
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .base import NonConvergenceError, SetupError, SolverError
from .physics import Problem, State, assemble_jacobian, assemble_residual

log = logging.getLogger(__name__)

TRIAL_LAMBDAS = (0.1, 0.55, 1.0)
LAMBDA_MIN = 0.05

@dataclass(frozen=True)
class RampConfig:
	target: Literal["q_h", "beta"] = "beta"
	stages: tuple[float, ...] = (0.25, 0.5, 1.0)

	def __post_init__(self) -> None:
		if self.target not in ("q_h", "beta"):
			raise SetupError(f"ramp target must be 'q_h' or 'beta', got {self.target!r}")
		if not self.stages or self.stages[-1] != 1.0:
			raise SetupError(f"ramp stages must end at 1.0, got {self.stages}")
		if any(not (0 < x <= 1) for x in self.stages):
			raise SetupError(f"ramp stages must lie in (0, 1], got {self.stages}")

@dataclass(frozen=True)
class NewtonConfig:
	rel_tol: float = 1e-4
	max_iter: int = 50
	damping: Literal["fixed", "adaptive"] = "adaptive"
	lam: float = 1.0
	ramp: RampConfig | None = None

	def __post_init__(self) -> None:
		if not (0 < self.rel_tol < 1):
			raise SetupError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
		if not (0 < self.lam <= 1):
			raise SetupError(f"fixed damping must lie in (0, 1], got {self.lam}")
		if self.max_iter < 0:
			raise SetupError(f"max_iter must be non-negative, got {self.max_iter}")
		if self.damping not in ("fixed", "adaptive"):
			raise SetupError(f"unknown damping {self.damping!r}")

@dataclass
class SolveReport:
	n_dofs: int
	reference_norm: float = 0.0
	iterations: int = 0
	residuals: list[float] = field(default_factory=list)
	lambdas: list[float] = field(default_factory=list)
	stages: list[tuple[str, float, int]] = field(default_factory=list)
	converged: bool = False
	wall_time: float = 0.0

	@property
	def rel_residual(self) -> float:
		return self.residuals[-1] if self.residuals else 0.0

	def to_dict(self) -> dict:
		return {
			"n_dofs": self.n_dofs, "reference_norm": self.reference_norm, "iterations": self.iterations,
			"residuals": self.residuals, "lambdas": self.lambdas, "stages": [list(x) for x in self.stages],
			"converged": self.converged, "wall_time": self.wall_time,
		}

def update_damping(lams: Sequence[float], norms: Sequence[float], lam_min: float = LAMBDA_MIN) -> float:
	"""
	Three-point quadratic fit of ‖R(s + λ Δs)‖ over trial λ; the vertex clamped to [lam_min, 1],
	or the best finite sample when the fit is not convex.
	"""
	lams, norms = numpy.asarray(lams, dtype=float), numpy.asarray(norms, dtype=float)
	if len(lams) < 3 or len(lams) != len(norms):
		raise SolverError(f"damping fit needs at least 3 samples, got {len(lams)} λ and {len(norms)} norms")
	ok = numpy.isfinite(norms)
	if not ok.any():
		raise SolverError(f"all damping trials non-finite at λ = {lams.tolist()}")
	best = float(lams[ok][numpy.argmin(norms[ok])])
	if not ok.all():
		return best
	a, b, _ = numpy.polyfit(lams, norms, 2)
	if not a > 0:
		return best
	return float(numpy.clip(-b / (2 * a), lam_min, 1.0))

def _factor(J: csc_matrix, it: int):
	try:
		return splu(J, permc_spec="COLAMD")
	except RuntimeError as e:
		raise SolverError(f"singular tangent at Newton iteration {it}: {e}") from e

def reference_norm(problem: Problem, rho: ndarray, tau: ndarray | None = None) -> float:
	return float(numpy.linalg.norm(assemble_residual(problem, problem.zero_state(), rho, tau)))

def solve_state(problem: Problem, rho: ndarray, initial: State | None = None,
	cfg: NewtonConfig = NewtonConfig(), tau: ndarray | None = None) -> tuple[State, SolveReport]:
	"""
	Newton on R(s) = 0 with Dirichlet values imposed on the initial guess.

	Convergence is measured against the residual of the zero state, so a warm start that is
	already converged returns without iterating. A given `tau` freezes the stabilization per element.
	"""
	t0 = time.perf_counter()
	report = SolveReport(problem.n_dofs)
	dofs, vals = problem.dirichlet
	s = problem.zero_state().s if initial is None else initial.s.copy()
	if len(s) != problem.n_dofs:
		raise SetupError(f"initial state has {len(s)} entries, expected {problem.n_dofs}")
	s[dofs] = vals
	R0 = reference_norm(problem, rho, tau)
	report.reference_norm = R0
	if R0 == 0:
		report.converged = True
		report.wall_time = time.perf_counter() - t0
		return problem.zero_state(), report

	def norm_at(x: ndarray) -> float:
		return float(numpy.linalg.norm(assemble_residual(problem, State.unpack(x), rho, tau)))

	best_s, best_r = s.copy(), numpy.inf
	R = assemble_residual(problem, State.unpack(s), rho, tau)
	for it in range(cfg.max_iter + 1):
		r = float(numpy.linalg.norm(R)) / R0
		if not numpy.isfinite(r):
			raise SolverError(f"non-finite residual at Newton iteration {it}")
		report.residuals.append(r)
		log.debug(f"newton {it:3d} |R|/|R0| = {r:.3e}")
		if r < best_r:
			best_s, best_r = s.copy(), r
		if r <= cfg.rel_tol:
			report.converged = True
			break
		if it == cfg.max_iter:
			break
		ds = -_factor(assemble_jacobian(problem, State.unpack(s), rho, tau), it).solve(R)
		if cfg.damping == "fixed":
			lam = cfg.lam
		else:
			lam = update_damping(TRIAL_LAMBDAS, [norm_at(s + x * ds) for x in TRIAL_LAMBDAS])
		report.lambdas.append(lam)
		s = s + lam * ds
		s[dofs] = vals
		R = assemble_residual(problem, State.unpack(s), rho, tau)
		report.iterations = it + 1
	report.wall_time = time.perf_counter() - t0
	if not report.converged:
		raise NonConvergenceError(
			f"Newton did not reach {cfg.rel_tol:g} in {cfg.max_iter} iterations (best {best_r:.3e})",
			state=State.unpack(best_s), report=report)
	log.info(f"newton converged in {report.iterations} iterations, |R|/|R0| = {report.rel_residual:.3e}")
	return State.unpack(s), report

def ramp_solve(problem: Problem, rho: ndarray, cfg: NewtonConfig = NewtonConfig(), initial: State | None = None,
	ramp: RampConfig | None = None) -> tuple[State, SolveReport]:
	"""
	Solve a sequence of problems with q_h or β scaled by each stage factor, warm-starting each
	stage from the previous one.
	"""
	ramp = ramp or cfg.ramp or RampConfig(stages=(1.0,))
	state, total = initial, SolveReport(problem.n_dofs)
	for k, factor in enumerate(ramp.stages):
		staged = problem if factor == 1.0 else problem.scaled(ramp.target, factor)
		try:
			state, rep = solve_state(staged, rho, state, cfg)
		except SolverError as e:
			msg = f"ramp stage {k} ({ramp.target} x {factor:g}) failed: {e}"
			if isinstance(e, NonConvergenceError):
				raise NonConvergenceError(msg, e.state, e.report) from e
			raise SolverError(msg) from e
		log.info(f"ramp stage {k}: {ramp.target} x {factor:g}, {rep.iterations} iterations")
		total.reference_norm = rep.reference_norm
		total.iterations += rep.iterations
		total.residuals += rep.residuals
		total.lambdas += rep.lambdas
		total.stages.append((ramp.target, factor, rep.iterations))
		total.wall_time += rep.wall_time
		total.converged = rep.converged
	assert state is not None
	return state, total

def solve_with_retry(problem: Problem, rho: ndarray, initial: State | None, cfg: NewtonConfig,
	retry: RampConfig = RampConfig()) -> tuple[State, SolveReport]:
	"""
	Warm-started solve, falling back to a ramped solve from the zero state if it fails.
	"""
	try:
		return solve_state(problem, rho, initial, cfg)
	except SolverError as e:
		log.warning(f"direct solve failed ({e}); retrying with {retry.target} ramp {retry.stages}")
		return ramp_solve(problem, rho, cfg, None, retry)

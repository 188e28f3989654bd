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
Thermal compliance and its adjoint design sensitivities.
"""

import logging
from dataclasses import dataclass

import numpy
from numpy import ndarray
from scipy.sparse.linalg import splu

from .base import AssemblyError, SetupError, SolverError
from .filter import DensityFilter
from .physics import Problem, State, assemble_jacobian, design_partials

log = logging.getLogger(__name__)

@dataclass(frozen=True, eq=False)
class AdjointState:
	lam: ndarray

	@property
	def p(self) -> ndarray:
		return self.lam[:len(self.lam) // 2]
	@property
	def t(self) -> ndarray:
		return self.lam[len(self.lam) // 2:]

@dataclass(frozen=True, eq=False)
class SensitivityField:
	dpsi: ndarray # raw design, filter chain applied
	dvol: ndarray # raw design, element volumes
	dpsi_phys: ndarray # whole mesh, with respect to γ̃

def flux_load(problem: Problem) -> ndarray:
	if not problem.bcs.of_kind("flux_T"):
		raise SetupError("thermal compliance needs a flux_T boundary")
	return problem.heat_load

def objective_thermal_compliance(problem: Problem, state: State) -> float:
	"""
	ψ = ∫ q_h T dS over the heated boundary, i.e. f_tᵀ t.
	"""
	return float(flux_load(problem) @ state.t)

def solve_adjoint(problem: Problem, state: State, rho: ndarray, tau: ndarray | None = None) -> AdjointState:
	"""
	Solve (∂R/∂s)ᵀ λ = ∂ψ/∂s = {0; f_t} with the Dirichlet-eliminated tangent.
	"""
	rhs = numpy.concatenate([numpy.zeros(problem.mesh.n_nodes), flux_load(problem)]) * problem.free
	if not rhs.any():
		return AdjointState(numpy.zeros(problem.n_dofs))
	try:
		lu = splu(assemble_jacobian(problem, state, rho, tau), permc_spec="COLAMD")
	except RuntimeError as e:
		raise SolverError(f"singular adjoint tangent: {e}") from e
	return AdjointState(lu.solve(rhs, trans="T"))

def physical_sensitivities(problem: Problem, state: State, adj: AdjointState, rho: ndarray, tau: ndarray | None = None) -> ndarray:
	if adj.lam.shape != (problem.n_dofs,):
		raise AssemblyError(f"adjoint sized {adj.lam.shape}, problem has {problem.n_dofs} DOFs")
	dR = design_partials(problem, state, rho, tau)
	return -numpy.einsum("ea,ea->e", adj.lam[problem.edofs], dR)

def design_sensitivities(problem: Problem, state: State, adj: AdjointState, rho: ndarray,
	filt: DensityFilter, tau: ndarray | None = None) -> SensitivityField:
	dphys = physical_sensitivities(problem, state, adj, rho, tau)
	dpsi = filt.backward(dphys)
	if not numpy.all(numpy.isfinite(dpsi)):
		raise SolverError("non-finite design sensitivities")
	return SensitivityField(dpsi, numpy.full(filt.n_design, problem.mesh.elem_volume), dphys)

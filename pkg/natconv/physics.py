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
Reduced-order natural convection: potential (Darcy-type) flow driven by Boussinesq
buoyancy, coupled to SUPG-stabilized convection-diffusion of temperature.

The coupled unknown is `s = {p; t}` with nodal pressures first. The velocity is never
a DOF; it is recovered per element at the centroid,

	u = -(1/μ̄(γ̃)) (∇P + ρ0 β (T - T0) g),

and enters the streamline weight and τ. The convective term transports T with the
same expression evaluated at the quadrature points, which is the flux the pressure
rows conserve, so the discrete heat balance closes to the Newton tolerance. Velocity
dependence on (P, T) is differentiated in the tangent; the stabilization parameter τ
is not.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Literal

import numpy
from numpy import ndarray
from scipy.sparse import coo_matrix, csc_matrix, diags

from .base import AssemblyError, SetupError
from .mesh import Boundaries, Mesh, edge_load

log = logging.getLogger(__name__)

ElementVelocity = ndarray # (n_elems, 2) centroid velocities, or (2,) for one element

@dataclass(frozen=True)
class MaterialSet:
	rho0: float = 1.0
	cp: float = 1.0
	beta: float = 100.0
	k_f: float = 1.0
	k_s: float = 100.0
	inv_mubar_f: float = 0.09
	inv_mubar_s: float = 1e-7
	T0: float = 0.0
	g: tuple[float, float] = (0.0, -1.0)
	Q0: float = 0.0
	p_k: float = 2.0
	p_mubar: float = 8.0
	mu: float = 1.0 # full-order viscosity; Grashof bookkeeping and the kinematic ν option only
	tau_diffusivity: Literal["thermal", "kinematic"] = "thermal"

	def __post_init__(self) -> None:
		if not (self.k_f > 0 and self.k_s > 0):
			raise SetupError(f"conductivities must be positive, got {(self.k_f, self.k_s)}")
		# equality is allowed to emulate the velocity-free (pure conduction) limit
		if not (self.inv_mubar_f >= self.inv_mubar_s >= 0):
			raise SetupError(f"need inv_mubar_f >= inv_mubar_s >= 0, got {(self.inv_mubar_f, self.inv_mubar_s)}")
		if not (self.p_k >= 1 and self.p_mubar >= 1):
			raise SetupError(f"penalization exponents must be >= 1, got {(self.p_k, self.p_mubar)}")
		if not (self.rho0 > 0 and self.cp > 0):
			raise SetupError(f"rho0 and cp must be positive, got {(self.rho0, self.cp)}")

	def replace(self, **kw) -> "MaterialSet":
		return replace(self, **kw)

@dataclass(frozen=True, eq=False)
class State:
	p: ndarray
	t: ndarray

	@property
	def s(self) -> ndarray:
		return numpy.concatenate([self.p, self.t])

	@classmethod
	def unpack(cls, s: ndarray) -> "State":
		n = len(s) // 2
		return cls(numpy.array(s[:n]), numpy.array(s[n:]))

@dataclass(frozen=True)
class DimensionlessGroups:
	Gr: float
	Ra: float
	Pr: float
	deltaT_ref: float
	H: float

def _checked(rho: ndarray | float) -> ndarray:
	rho = numpy.asarray(rho, dtype=float)
	if not numpy.all(numpy.isfinite(rho)) or rho.min(initial=0) < -1e-12 or rho.max(initial=0) > 1 + 1e-12:
		raise AssemblyError(f"physical density outside [0, 1]: range {(rho.min(initial=0), rho.max(initial=0))}")
	return numpy.clip(rho, 0, 1)

def interp_inv_mubar(rho: ndarray | float, mats: MaterialSet) -> ndarray:
	rho = _checked(rho)
	return mats.inv_mubar_s + (1 - rho) ** mats.p_mubar * (mats.inv_mubar_f - mats.inv_mubar_s)

def d_interp_inv_mubar(rho: ndarray | float, mats: MaterialSet) -> ndarray:
	rho = _checked(rho)
	return -mats.p_mubar * (1 - rho) ** (mats.p_mubar - 1) * (mats.inv_mubar_f - mats.inv_mubar_s)

def interp_k(rho: ndarray | float, mats: MaterialSet) -> ndarray:
	rho = _checked(rho)
	return mats.k_f + rho ** mats.p_k * (mats.k_s - mats.k_f)

def d_interp_k(rho: ndarray | float, mats: MaterialSet) -> ndarray:
	rho = _checked(rho)
	return mats.p_k * rho ** (mats.p_k - 1) * (mats.k_s - mats.k_f)

def diffusivity(k: ndarray, mats: MaterialSet) -> ndarray:
	"""
	The ν entering τ: local thermal diffusivity, or the kinematic viscosity μ/ρ0.
	"""
	match mats.tau_diffusivity:
		case "thermal":
			return numpy.asarray(k) / (mats.rho0 * mats.cp)
		case "kinematic":
			return numpy.full_like(numpy.asarray(k, dtype=float), mats.mu / mats.rho0)
	raise SetupError(f"unknown tau_diffusivity {mats.tau_diffusivity!r}") # pragma: no cover

def compute_tau(u: ElementVelocity, nu: ndarray | float, h: float) -> ndarray:
	speed = numpy.linalg.norm(numpy.atleast_2d(u), axis=-1)
	return ((2 * speed / h) ** 2 + 9 * (4 * numpy.asarray(nu) / h ** 2) ** 2) ** -0.5

def buoyancy(mats: MaterialSet) -> ndarray:
	return mats.rho0 * mats.beta * numpy.asarray(mats.g, dtype=float)

def recover_velocity(mesh: Mesh, elem: int, p: ndarray, t: ndarray, rho_e: float, mats: MaterialSet) -> ElementVelocity:
	k = mesh.kernel
	nodes = mesh.elem_nodes[elem]
	grad = k.B0 @ p[nodes]
	return -interp_inv_mubar(rho_e, mats) * (grad + (k.N0 @ t[nodes] - mats.T0) * buoyancy(mats))

def grashof(mats: MaterialSet, H: float, deltaT: float = 1.0) -> DimensionlessGroups:
	g = float(numpy.linalg.norm(mats.g))
	Gr = g * mats.beta * deltaT * H ** 3 * mats.rho0 ** 2 / mats.mu ** 2
	Pr = mats.cp * mats.mu / mats.k_f
	return DimensionlessGroups(Gr=Gr, Ra=Gr * Pr, Pr=Pr, deltaT_ref=deltaT, H=H)

def beta_for_grashof(Gr: float, H: float, mats: MaterialSet, deltaT: float = 1.0) -> float:
	g = float(numpy.linalg.norm(mats.g))
	return Gr * mats.mu ** 2 / (g * deltaT * H ** 3 * mats.rho0 ** 2)

@dataclass(frozen=True, eq=False)
class Problem:
	"""
	Mesh, materials and boundary conditions of one forward model; `source` masks the
	elements carrying the volumetric heat source Q0.
	"""
	mesh: Mesh
	mats: MaterialSet
	bcs: Boundaries
	source: ndarray | None = None

	@property
	def n_dofs(self) -> int:
		return 2 * self.mesh.n_nodes

	@cached_property
	def edofs(self) -> ndarray:
		conn = self.mesh.elem_nodes
		return numpy.hstack([conn, conn + self.mesh.n_nodes])

	@cached_property
	def dirichlet(self) -> tuple[ndarray, ndarray]:
		n = self.mesh.n_nodes
		pn, pv = self.bcs.dirichlet("P")
		tn, tv = self.bcs.dirichlet("T")
		return numpy.concatenate([pn, tn + n]), numpy.concatenate([pv, tv])

	@cached_property
	def free(self) -> ndarray:
		mask = numpy.ones(self.n_dofs)
		mask[self.dirichlet[0]] = 0
		return mask

	@cached_property
	def heat_load(self) -> ndarray:
		"""
		Assembled heater flux load f_t (temperature rows only).
		"""
		return edge_load(self.mesh, self.bcs.of_kind("flux_T"))

	@cached_property
	def flow_load(self) -> ndarray:
		return edge_load(self.mesh, self.bcs.of_kind("flux_u"))

	@cached_property
	def q_elems(self) -> ndarray:
		if self.source is None:
			return numpy.zeros(self.mesh.n_elems)
		return numpy.where(self.source, self.mats.Q0, 0.0)

	def zero_state(self) -> State:
		s = numpy.zeros(self.n_dofs)
		dofs, vals = self.dirichlet
		s[dofs] = vals
		return State.unpack(s)

	def scaled(self, target: Literal["q_h", "beta"], factor: float) -> "Problem":
		match target:
			case "q_h":
				return Problem(self.mesh, self.mats.replace(Q0=self.mats.Q0 * factor), self.bcs.scaled("flux_T", factor), self.source)
			case "beta":
				return Problem(self.mesh, self.mats.replace(beta=self.mats.beta * factor), self.bcs, self.source)
		raise SetupError(f"unknown ramp target {target!r}")

	def with_mats(self, **kw) -> "Problem":
		return Problem(self.mesh, self.mats.replace(**kw), self.bcs, self.source)

@dataclass(frozen=True, eq=False)
class _Fields:
	"""
	Element-level quantities frozen for one assembly pass.
	"""
	pe: ndarray
	te: ndarray
	a: ndarray
	kc: ndarray
	u0: ndarray
	u: ndarray
	tau: ndarray
	uq0: ndarray
	uq: ndarray
	G: ndarray
	uG: ndarray
	W: ndarray
	q: ndarray

def _fields(problem: Problem, state: State, rho: ndarray, tau: ndarray | None) -> _Fields:
	m, mats = problem.mesh, problem.mats
	k = m.kernel
	rho = numpy.asarray(rho, dtype=float)
	if state.p.shape != (m.n_nodes,) or state.t.shape != (m.n_nodes,):
		raise AssemblyError(f"state sized {(state.p.shape, state.t.shape)}, mesh has {m.n_nodes} nodes")
	if rho.shape != (m.n_elems,):
		raise AssemblyError(f"density sized {rho.shape}, mesh has {m.n_elems} elements")
	pe = state.p[m.elem_nodes]
	te = state.t[m.elem_nodes]
	a = interp_inv_mubar(rho, mats)
	kc = interp_k(rho, mats)
	u0 = -(pe @ k.B0.T + numpy.outer(te @ k.N0 - mats.T0, buoyancy(mats)))
	u = a[:, None] * u0
	if tau is None:
		tau = compute_tau(u, diffusivity(kc, mats), m.h)
	elif numpy.shape(tau) != (m.n_elems,):
		raise AssemblyError(f"frozen tau sized {numpy.shape(tau)}, mesh has {m.n_elems} elements")
	# Darcy flux at the quadrature points, the one the pressure rows conserve
	uq0 = -(numpy.einsum("qia,ea->eqi", k.B, pe) + numpy.einsum("eq,i->eqi", te @ k.N.T - mats.T0, buoyancy(mats)))
	uq = a[:, None, None] * uq0
	G = numpy.einsum("qia,ea->eqi", k.B, te)
	uG = numpy.einsum("eqi,eqi->eq", uq, G)
	W = k.N[None] + tau[:, None, None] * numpy.einsum("ei,qia->eqa", u, k.B)
	return _Fields(pe, te, a, kc, u0, u, numpy.asarray(tau, dtype=float), uq0, uq, G, uG, W, problem.q_elems)

def element_velocities(problem: Problem, state: State, rho: ndarray) -> ElementVelocity:
	return _fields(problem, state, rho, None).u

def element_tau(problem: Problem, state: State, rho: ndarray) -> ndarray:
	return _fields(problem, state, rho, None).tau

def _scatter(problem: Problem, Re: ndarray) -> ndarray:
	return numpy.bincount(problem.edofs.ravel(), weights=Re.ravel(), minlength=problem.n_dofs)

def _element_residual(problem: Problem, f: _Fields) -> ndarray:
	k, mats = problem.mesh.kernel, problem.mats
	rp = -numpy.einsum("q,qia,eqi->ea", k.w, k.B, f.uq)
	conv = mats.rho0 * mats.cp * numpy.einsum("q,eqa,eq->ea", k.w, f.W, f.uG)
	diff = f.kc[:, None] * numpy.einsum("q,qia,eqi->ea", k.w, k.B, f.G)
	src = f.q[:, None] * numpy.einsum("q,eqa->ea", k.w, f.W)
	return numpy.hstack([rp, conv + diff - src])

def residual_raw(problem: Problem, state: State, rho: ndarray, tau: ndarray | None = None) -> ndarray:
	"""
	R(s) before Dirichlet elimination; Dirichlet rows hold the boundary reactions.
	"""
	R = _scatter(problem, _element_residual(problem, _fields(problem, state, rho, tau)))
	n = problem.mesh.n_nodes
	R[:n] -= problem.flow_load
	R[n:] -= problem.heat_load
	return R

def assemble_residual(problem: Problem, state: State, rho: ndarray, tau: ndarray | None = None) -> ndarray:
	return residual_raw(problem, state, rho, tau) * problem.free

def _element_dRdu(problem: Problem, f: _Fields) -> ndarray:
	"""
	∂R_t/∂u per element through the streamline weight only, local node by velocity
	component, τ held fixed.
	"""
	k, mats = problem.mesh.kernel, problem.mats
	c = mats.rho0 * mats.cp
	D = c * f.tau[:, None, None] * numpy.einsum("q,qma,eq->eam", k.w, k.B, f.uG)
	D -= (f.tau * f.q)[:, None, None] * numpy.einsum("q,qma->am", k.w, k.B)[None]
	return D

def _element_jacobian(problem: Problem, f: _Fields) -> ndarray:
	k, mats = problem.mesh.kernel, problem.mats
	c = mats.rho0 * mats.cp
	b = buoyancy(mats)
	Kp = numpy.einsum("q,qia,qib->ab", k.w, k.B, k.B)
	C = numpy.einsum("q,qia,i,qb->ab", k.w, k.B, b, k.N)
	D = _element_dRdu(problem, f)
	dudp = -f.a[:, None, None] * k.B0[None]
	dudt = -f.a[:, None, None] * numpy.outer(b, k.N0)[None]
	WG = c * numpy.einsum("q,eqa,eqi->eqai", k.w, f.W, f.G)
	Ke = numpy.empty((len(f.a), 8, 8))
	Ke[:, :4, :4] = f.a[:, None, None] * Kp
	Ke[:, :4, 4:] = f.a[:, None, None] * C
	Ke[:, 4:, :4] = numpy.einsum("eam,emb->eab", D, dudp) \
		- f.a[:, None, None] * numpy.einsum("eqai,qib->eab", WG, k.B)
	Ke[:, 4:, 4:] = c * numpy.einsum("q,eqa,eqi,qib->eab", k.w, f.W, f.uq, k.B) + f.kc[:, None, None] * Kp \
		+ numpy.einsum("eam,emb->eab", D, dudt) \
		- f.a[:, None, None] * numpy.einsum("eqai,i,qb->eab", WG, b, k.N)
	return Ke

def _sparse(problem: Problem, Ke: ndarray) -> csc_matrix:
	ed = problem.edofs
	rows = numpy.repeat(ed, 8, axis=1).ravel()
	cols = numpy.tile(ed, (1, 8)).ravel()
	n = problem.n_dofs
	return coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsc()

def jacobian_raw(problem: Problem, state: State, rho: ndarray, tau: ndarray | None = None) -> csc_matrix:
	return _sparse(problem, _element_jacobian(problem, _fields(problem, state, rho, tau)))

def assemble_jacobian(problem: Problem, state: State, rho: ndarray, tau: ndarray | None = None) -> csc_matrix:
	"""
	Tangent ∂R/∂s with Dirichlet rows and columns replaced by the identity.
	"""
	free = problem.free
	J = jacobian_raw(problem, state, rho, tau)
	return (diags(free) @ J @ diags(free) + diags(1 - free)).tocsc()

def design_partials(problem: Problem, state: State, rho: ndarray, tau: ndarray | None = None) -> ndarray:
	"""
	Local ∂R_e/∂γ̃_e per element, shape (n_elems, 8) over `problem.edofs`, τ held fixed.
	"""
	mats, k = problem.mats, problem.mesh.kernel
	f = _fields(problem, state, rho, tau)
	da = d_interp_inv_mubar(rho, mats)
	dk = d_interp_k(rho, mats)
	drp = -da[:, None] * numpy.einsum("q,qia,eqi->ea", k.w, k.B, f.uq0)
	drt = da[:, None] * numpy.einsum("eam,em->ea", _element_dRdu(problem, f), f.u0)
	drt += da[:, None] * mats.rho0 * mats.cp * numpy.einsum("q,eqa,eqi,eqi->ea", k.w, f.W, f.G, f.uq0)
	drt += dk[:, None] * numpy.einsum("q,qia,eqi->ea", k.w, k.B, f.G)
	return numpy.hstack([drp, drt])

def heat_balance(problem: Problem, state: State, rho: ndarray) -> tuple[float, float]:
	"""
	Heat entering through heaters and sources, and heat leaving through Dirichlet-T boundaries.
	"""
	n = problem.mesh.n_nodes
	R = residual_raw(problem, state, rho)
	tn, _ = problem.bcs.dirichlet("T")
	heat_in = float(problem.heat_load.sum() + problem.q_elems.sum() * problem.mesh.elem_volume)
	heat_out = float(-R[n + tn].sum())
	return heat_in, heat_out

def max_temperature_rise(problem: Problem, state: State) -> float:
	return float(state.t.max() - problem.mats.T0)

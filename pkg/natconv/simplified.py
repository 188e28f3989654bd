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
Conduction-only comparison model: heat leaves the solid through a Newton cooling term
placed on the design interface, located by the gradient of a nodal projection of γ̃,

	-∇·(k(γ̃) ∇T) + ‖∇γ̃‖ h (T - T0) = Q,

with k(γ̃) = k_min + γ̃^p (k_s - k_min). The model is linear in T.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy
from numpy import ndarray
from scipy.sparse import coo_matrix, csc_matrix, csr_matrix, diags
from scipy.sparse.linalg import splu

from .base import AssemblyError, SetupError, SolverError
from .filter import DensityFilter, DesignField
from .mesh import EDGE_NORMALS, Boundaries, Mesh, edge_load, edge_point, gauss_rule, shape_eval
from .mma import MmaState, mma_update

log = logging.getLogger(__name__)

FILTER_RADII = (0.48, 0.36, 0.24, 0.12)
# average convection coefficients for Gr = 640, 3200, 6400
H_BAR = {640: 0.17883, 3200: 0.27820, 6400: 0.76345}

@dataclass(frozen=True)
class SimplifiedMaterial:
	k_s: float = 100.0
	k_min: float = 1e-6
	p: float = 6.0
	h: float = 0.0
	T0: float = 0.0
	Q0: float = 0.0

	def __post_init__(self) -> None:
		if not self.k_min > 0:
			raise SetupError(f"k_min must be positive, got {self.k_min}")
		if not self.k_s > self.k_min:
			raise SetupError(f"k_s must exceed k_min, got {(self.k_s, self.k_min)}")
		if not self.p >= 1:
			raise SetupError(f"SIMP exponent must be >= 1, got {self.p}")
		if not self.h >= 0:
			raise SetupError(f"convection coefficient must be non-negative, got {self.h}")

	def replace(self, **kw) -> "SimplifiedMaterial":
		return replace(self, **kw)

@dataclass(frozen=True)
class FilterContinuation:
	radii: tuple[float, ...] = FILTER_RADII
	switch_every: int = 50
	obj_tol: float = 1e-3
	patience: int = 10
	move_limit: float = 0.2
	V_star: float = 0.5
	max_outer_iter: int = 400

	def __post_init__(self) -> None:
		if not self.radii or any(a <= b for a, b in zip(self.radii, self.radii[1:])):
			raise SetupError(f"filter radii must be strictly decreasing, got {self.radii}")
		if not (0 < self.move_limit <= 1) or not (0 < self.V_star < 1):
			raise SetupError(f"bad move limit or volume fraction {(self.move_limit, self.V_star)}")

@dataclass(frozen=True, eq=False)
class SimplifiedProblem:
	mesh: Mesh
	mats: SimplifiedMaterial
	bcs: Boundaries
	source: ndarray | None = None

	@cached_property
	def heat_load(self) -> ndarray:
		return edge_load(self.mesh, self.bcs.of_kind("flux_T"))

	@cached_property
	def dirichlet(self) -> tuple[ndarray, ndarray]:
		return self.bcs.dirichlet("T")

	@cached_property
	def free(self) -> ndarray:
		mask = numpy.ones(self.mesh.n_nodes)
		mask[self.dirichlet[0]] = 0
		return mask

	@cached_property
	def projection(self) -> csr_matrix:
		"""
		Volume-weighted element-to-node averaging, shape (n_nodes, n_elems).
		"""
		m = self.mesh
		rows = m.elem_nodes.ravel()
		cols = numpy.repeat(numpy.arange(m.n_elems), 4)
		P = coo_matrix((numpy.full(len(rows), m.elem_volume), (rows, cols)), shape=(m.n_nodes, m.n_elems)).tocsr()
		return (diags(1 / numpy.asarray(P.sum(axis=1)).ravel()) @ P).tocsr()

	@cached_property
	def unit_stiffness(self) -> ndarray:
		k = self.mesh.kernel
		return numpy.einsum("q,qia,qib->ab", k.w, k.B, k.B)

	def scaled(self, factor: float) -> "SimplifiedProblem":
		return SimplifiedProblem(self.mesh, self.mats.replace(Q0=self.mats.Q0 * factor), self.bcs.scaled("flux_T", factor), self.source)

	def with_mats(self, **kw) -> "SimplifiedProblem":
		return SimplifiedProblem(self.mesh, self.mats.replace(**kw), self.bcs, self.source)

	def load(self) -> ndarray:
		m, k = self.mesh, self.mesh.kernel
		f = self.heat_load.copy()
		if self.source is not None and self.mats.Q0:
			q = numpy.where(self.source, self.mats.Q0, 0.0)
			f += numpy.bincount(m.elem_nodes.ravel(), weights=numpy.outer(q, k.N.T @ k.w).ravel(), minlength=m.n_nodes)
		return f

def interp_k_simp(rho: ndarray, mats: SimplifiedMaterial) -> ndarray:
	return mats.k_min + numpy.asarray(rho) ** mats.p * (mats.k_s - mats.k_min)

def d_interp_k_simp(rho: ndarray, mats: SimplifiedMaterial) -> ndarray:
	return mats.p * numpy.asarray(rho) ** (mats.p - 1) * (mats.k_s - mats.k_min)

def _check(problem: SimplifiedProblem, rho: ndarray) -> ndarray:
	rho = numpy.asarray(rho, dtype=float)
	if rho.shape != (problem.mesh.n_elems,):
		raise AssemblyError(f"density sized {rho.shape}, mesh has {problem.mesh.n_elems} elements")
	if rho.min() < -1e-12 or rho.max() > 1 + 1e-12:
		raise AssemblyError("physical density outside [0, 1]")
	return numpy.clip(rho, 0, 1)

def density_gradient(problem: SimplifiedProblem, rho: ndarray) -> tuple[ndarray, ndarray]:
	"""
	Gradient of the projected nodal density at the Gauss points, (n_elems, 4, 2), and its norm.
	"""
	rn = problem.projection @ _check(problem, rho)
	grad = numpy.einsum("qia,ea->eqi", problem.mesh.kernel.B, rn[problem.mesh.elem_nodes])
	return grad, numpy.linalg.norm(grad, axis=2)

def _sink_elements(problem: SimplifiedProblem, s: ndarray) -> ndarray:
	k = problem.mesh.kernel
	return problem.mats.h * numpy.einsum("q,eq,qa,qb->eab", k.w, s, k.N, k.N)

def assemble_simplified(problem: SimplifiedProblem, t: ndarray, rho: ndarray) -> tuple[ndarray, csc_matrix]:
	"""
	Residual and tangent, Dirichlet rows eliminated. The tangent does not depend on `t`.
	"""
	m, mats = problem.mesh, problem.mats
	if numpy.shape(t) != (m.n_nodes,):
		raise AssemblyError(f"temperature sized {numpy.shape(t)}, mesh has {m.n_nodes} nodes")
	rho = _check(problem, rho)
	_, s = density_gradient(problem, rho)
	Ke = interp_k_simp(rho, mats)[:, None, None] * problem.unit_stiffness + _sink_elements(problem, s)
	conn = m.elem_nodes
	K = coo_matrix((Ke.ravel(), (numpy.repeat(conn, 4, axis=1).ravel(), numpy.tile(conn, (1, 4)).ravel())),
		shape=(m.n_nodes, m.n_nodes)).tocsc()
	R = K @ t - problem.load()
	if mats.T0 and mats.h:
		k = m.kernel
		ambient = mats.h * mats.T0 * numpy.einsum("q,eq,qa->ea", k.w, s, k.N)
		R -= numpy.bincount(conn.ravel(), weights=ambient.ravel(), minlength=m.n_nodes)
	free = problem.free
	R *= free
	return R, (diags(free) @ K @ diags(free) + diags(1 - free)).tocsc()

def solve_simplified(problem: SimplifiedProblem, rho: ndarray) -> ndarray:
	t = numpy.zeros(problem.mesh.n_nodes)
	dofs, vals = problem.dirichlet
	t[dofs] = vals
	R, K = assemble_simplified(problem, t, rho)
	try:
		return t - splu(K, permc_spec="COLAMD").solve(R)
	except RuntimeError as e:
		raise SolverError(f"singular simplified tangent: {e}") from e

def simplified_objective(problem: SimplifiedProblem, t: ndarray) -> float:
	return float(problem.heat_load @ t)

def simplified_sensitivities(problem: SimplifiedProblem, t: ndarray, rho: ndarray) -> ndarray:
	"""
	dψ/dγ̃ per element for ψ = f_tᵀ t, through both k(γ̃) and ‖∇γ̃‖.
	"""
	m, mats, k = problem.mesh, problem.mats, problem.mesh.kernel
	rho = _check(problem, rho)
	_, K = assemble_simplified(problem, t, rho)
	try:
		lam = splu(K, permc_spec="COLAMD").solve(problem.heat_load * problem.free, trans="T")
	except RuntimeError as e:
		raise SolverError(f"singular simplified adjoint: {e}") from e
	conn = m.elem_nodes
	te, le = t[conn], lam[conn]
	dk = d_interp_k_simp(rho, mats)
	dpsi = -dk * numpy.einsum("ea,ab,eb->e", le, problem.unit_stiffness, te)
	grad, s = density_gradient(problem, rho)
	Tq, Lq = te @ k.N.T, le @ k.N.T
	safe = numpy.where(s > 1e-14, s, 1.0)
	coef = numpy.where(s > 1e-14, mats.h * k.w * Lq * (Tq - mats.T0) / safe, 0.0)
	dnodal = numpy.bincount(conn.ravel(), weights=numpy.einsum("eq,eqi,qia->ea", coef, grad, k.B).ravel(), minlength=m.n_nodes)
	return dpsi - problem.projection.T @ dnodal

def convective_sink(problem: SimplifiedProblem, t: ndarray, rho: ndarray) -> float:
	"""
	Total surface heat loss ∫ ‖∇γ̃‖ h (T - T0) dΩ.
	"""
	k = problem.mesh.kernel
	_, s = density_gradient(problem, rho)
	Tq = t[problem.mesh.elem_nodes] @ k.N.T
	return float(problem.mats.h * numpy.einsum("q,eq,eq->", k.w, s, Tq - problem.mats.T0))

def interface_measure(problem: SimplifiedProblem, rho: ndarray) -> float:
	_, s = density_gradient(problem, rho)
	return float(numpy.einsum("q,eq->", problem.mesh.kernel.w, s))

def interface_edges(mesh: Mesh, solid: ndarray) -> ndarray:
	"""
	Edges of solid elements that face a fluid element, as `(elem, local_edge)` rows.
	"""
	solid = numpy.asarray(solid, dtype=bool).reshape(mesh.ny, mesh.nx)
	rows = []
	for edge, (di, dj) in enumerate([(0, -1), (1, 0), (0, 1), (-1, 0)]):
		j, i = numpy.nonzero(solid)
		ni, nj = i + di, j + dj
		inside = (ni >= 0) & (ni < mesh.nx) & (nj >= 0) & (nj < mesh.ny)
		face = numpy.zeros_like(inside)
		face[inside] = ~solid[nj[inside], ni[inside]]
		e = j[face] * mesh.nx + i[face]
		rows.append(numpy.column_stack([e, numpy.full_like(e, edge)]))
	out = numpy.concatenate(rows)
	return out[numpy.lexsort((out[:, 1], out[:, 0]))]

def interface_flux(mesh: Mesh, t: ndarray, k_elems: ndarray, edges: ndarray, n_gauss: int = 2) -> tuple[ndarray, ndarray, ndarray]:
	"""
	Temperature and outward normal conductive flux -k ∇T·n on the solid side at Gauss points
	of each edge, with the Gauss weights folded into the returned edge lengths' quadrature.

	Returns `(T, q_n, ds)`, each (n_edges, n_gauss), `ds` the quadrature weight in length units.
	"""
	hx, hy = mesh.elem_size
	jinv = numpy.array([2 / hx, 2 / hy])
	rule = gauss_rule(n_gauss)
	T = numpy.zeros((len(edges), n_gauss))
	q = numpy.zeros_like(T)
	ds = numpy.zeros_like(T)
	for r, (e, edge) in enumerate(numpy.asarray(edges, dtype=int)):
		te = t[mesh.elem_nodes[e]]
		for g, ((s,), w) in enumerate(zip(rule.points, rule.weights)):
			N, dN = shape_eval(*edge_point(int(edge), s))
			T[r, g] = N @ te
			q[r, g] = -k_elems[e] * ((dN * jinv).T @ te) @ EDGE_NORMALS[edge]
			ds[r, g] = w * mesh.edge_length(int(edge)) / 2
	return T, q, ds

def avg_convection_coefficient(T: ndarray, q_n: ndarray, ds: ndarray, T0: float = 0.0) -> float:
	"""
	h̄ = (1/A) ∫ q_n / (T - T0) ds over interface edges; edges touching T = T0 are excluded.
	"""
	T, q_n, ds = (numpy.atleast_2d(numpy.asarray(a, dtype=float)) for a in (T, q_n, ds))
	if T.shape != q_n.shape or T.shape != ds.shape:
		raise SetupError(f"mismatched interface samples {(T.shape, q_n.shape, ds.shape)}")
	dT = T - T0
	keep = numpy.all(dT != 0, axis=1)
	if not keep.all():
		log.warning(f"{int((~keep).sum())} interface edges with T = T0 excluded from the average")
	area = float(ds[keep].sum())
	if area <= 0:
		raise SetupError("interface has zero area")
	return float((q_n[keep] / dT[keep] * ds[keep]).sum() / area)

@dataclass
class SimplifiedResult:
	design: DesignField
	t: ndarray
	objective: float
	stage: int
	history: list[dict] = field(default_factory=list)

def run_simplified_optimization(problem: SimplifiedProblem, filt: DensityFilter, sched: FilterContinuation = FilterContinuation(),
	gamma0: ndarray | None = None) -> SimplifiedResult:
	"""
	Same loop as the reduced-order optimizer, with constant SIMP exponent and the filter
	radius decreasing stage by stage.
	"""
	n = filt.n_design
	gamma = numpy.full(n, sched.V_star) if gamma0 is None else numpy.array(gamma0, dtype=float)
	dg = numpy.full(n, 1 / n)
	stage, since, calm = 0, 0, 0
	filt = filt.with_radius(sched.radii[0])
	mma = MmaState(n)
	history: list[dict] = []
	psi0: float | None = None
	last: float | None = None
	for it in range(sched.max_outer_iter):
		rho = filt(gamma)
		t = solve_simplified(problem, rho)
		psi = simplified_objective(problem, t)
		dpsi = filt.backward(simplified_sensitivities(problem, t, rho))
		psi0 = psi0 or abs(psi) or 1.0
		g = float(gamma @ dg) - sched.V_star
		new = mma_update(gamma, dpsi / psi0, g, dg, mma, sched.move_limit)
		change = float(numpy.abs(new - gamma).max())
		history.append({"iter": it, "psi": psi, "g": g, "change": change, "stage": stage, "r_min": filt.r_min})
		log.info(f"it {it:4d} r_min {filt.r_min:g} psi {psi:.6e} g {g:+.3e} change {change:.3e}")
		calm = calm + 1 if last is not None and abs(psi - last) < sched.obj_tol * abs(last) else 0
		last = psi
		gamma = new
		since += 1
		if calm >= sched.patience or since >= sched.switch_every:
			if stage == len(sched.radii) - 1:
				if calm >= sched.patience: break
			else:
				stage, since, calm = stage + 1, 0, 0
				filt = filt.with_radius(sched.radii[stage])
				mma = MmaState(n)
	rho = filt(gamma)
	t = solve_simplified(problem, rho)
	return SimplifiedResult(filt.field(gamma), t, simplified_objective(problem, t), stage, history)

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
Linear-hat density filter restricted to the design subdomain.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy
from numpy import ndarray
from scipy.sparse import coo_matrix, csr_matrix, diags, identity

from .base import SetupError
from .mesh import Mesh

log = logging.getLogger(__name__)

@dataclass(frozen=True, eq=False)
class DesignField:
	gamma: ndarray
	gamma_tilde: ndarray
	r_min: float

def filter_matrix(mesh: Mesh, r_min: float, design: ndarray | None = None) -> csr_matrix:
	"""
	Row-normalized weights γ̃_i = Σ_j w_ij v_j γ_j / Σ_j w_ij v_j, w_ij = max(0, r_min - |x_i - x_j|),
	over the elements selected by `design` (all elements by default), in design-index order.
	"""
	if r_min < 0:
		raise SetupError(f"filter radius must be non-negative, got {r_min}")
	design = numpy.ones(mesh.n_elems, dtype=bool) if design is None else numpy.asarray(design, dtype=bool)
	n = int(design.sum())
	# below one element spacing only the self-weight survives
	if r_min <= min(mesh.elem_size):
		return identity(n, format="csr")
	index = numpy.full(mesh.n_elems, -1)
	index[design] = numpy.arange(n)
	hx, hy = mesh.elem_size
	ei, ej = numpy.meshgrid(numpy.arange(mesh.nx), numpy.arange(mesh.ny))
	ei, ej = ei.ravel(), ej.ravel()
	rows, cols, vals = [], [], []
	for di in range(-int(numpy.ceil(r_min / hx)), int(numpy.ceil(r_min / hx)) + 1):
		for dj in range(-int(numpy.ceil(r_min / hy)), int(numpy.ceil(r_min / hy)) + 1):
			if (w := r_min - numpy.hypot(di * hx, dj * hy)) <= 0: continue
			ni, nj = ei + di, ej + dj
			ok = (ni >= 0) & (ni < mesh.nx) & (nj >= 0) & (nj < mesh.ny)
			a = index[ej[ok] * mesh.nx + ei[ok]]
			b = index[nj[ok] * mesh.nx + ni[ok]]
			keep = (a >= 0) & (b >= 0)
			rows.append(a[keep])
			cols.append(b[keep])
			vals.append(numpy.full(keep.sum(), w * mesh.elem_volume))
	W = coo_matrix((numpy.concatenate(vals), (numpy.concatenate(rows), numpy.concatenate(cols))), shape=(n, n)).tocsr()
	return (diags(1 / numpy.asarray(W.sum(axis=1)).ravel()) @ W).tocsr()

def density_filter(gamma: ndarray, mesh: Mesh, r_min: float) -> ndarray:
	return filter_matrix(mesh, r_min) @ numpy.asarray(gamma, dtype=float)

class DensityFilter:
	"""
	Maps the raw design on the design subdomain to the physical field on the whole mesh.
	Elements outside the design subdomain keep their `passive` value.
	"""
	def __init__(self, mesh: Mesh, r_min: float, design: ndarray | None = None, passive: ndarray | float = 0.0) -> None:
		self.mesh = mesh
		self.r_min = float(r_min)
		self.design = numpy.ones(mesh.n_elems, dtype=bool) if design is None else numpy.asarray(design, dtype=bool)
		if not self.design.any():
			raise SetupError("design subdomain is empty")
		self.passive = numpy.broadcast_to(numpy.asarray(passive, dtype=float), (mesh.n_elems,)).copy()
		self.passive[self.design] = 0

	@property
	def n_design(self) -> int:
		return int(self.design.sum())

	@cached_property
	def H(self) -> csr_matrix:
		return filter_matrix(self.mesh, self.r_min, self.design)

	def with_radius(self, r_min: float) -> "DensityFilter":
		return DensityFilter(self.mesh, r_min, self.design, self.passive)

	def __call__(self, gamma: ndarray) -> ndarray:
		gamma = numpy.asarray(gamma, dtype=float)
		if gamma.shape != (self.n_design,):
			raise SetupError(f"design vector sized {gamma.shape}, design subdomain has {self.n_design} elements")
		rho = self.passive.copy()
		rho[self.design] = self.H @ gamma
		return rho

	def field(self, gamma: ndarray) -> DesignField:
		return DesignField(numpy.asarray(gamma, dtype=float), self(gamma), self.r_min)

	def backward(self, d_rho: ndarray) -> ndarray:
		"""
		Chain rule from physical-field sensitivities on the whole mesh to the raw design.
		"""
		return self.H.T @ numpy.asarray(d_rho)[self.design]

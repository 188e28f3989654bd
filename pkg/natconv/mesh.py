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
Structured quadrilateral meshes with bilinear elements.

Nodes are numbered row-major from the bottom-left corner, `node = j * (nx + 1) + i`;
elements likewise, `elem = j * nx + i`, with counter-clockwise connectivity
(bottom-left, bottom-right, top-right, top-left). The y axis points upward.
"""

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy
from numpy import ndarray

from .base import SetupError

log = logging.getLogger(__name__)

Side = Literal["bottom", "right", "top", "left"]
Kind = Literal["dirichlet_T", "flux_T", "dirichlet_P", "flux_u"]

SIDES: tuple[Side, ...] = ("bottom", "right", "top", "left")
KINDS: tuple[Kind, ...] = ("dirichlet_T", "flux_T", "dirichlet_P", "flux_u")

# local edge a joins local nodes EDGE_NODES[a]; EDGE_NORMALS[a] is the outward unit normal
EDGE_NODES = numpy.array([[0, 1], [1, 2], [2, 3], [3, 0]])
EDGE_NORMALS = numpy.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

@dataclass(frozen=True)
class QuadRule:
	points: tuple[tuple[float, ...], ...]
	weights: tuple[float, ...]

def gauss_rule(n: int = 2) -> QuadRule:
	"""
	Gauss-Legendre rule with `n` points on [-1, 1].
	"""
	x, w = numpy.polynomial.legendre.leggauss(n)
	return QuadRule(tuple((float(p),) for p in x), tuple(map(float, w)))

def quad_rule(n: int = 2) -> QuadRule:
	"""
	Tensor-product Gauss rule on the reference square [-1, 1]², weights summing to 4.
	"""
	g = gauss_rule(n)
	pts = tuple((ξ[0], η[0]) for η in g.points for ξ in g.points)
	wts = tuple(a * b for b in g.weights for a in g.weights)
	return QuadRule(pts, wts)

def shape_eval(ξ: float, η: float) -> tuple[ndarray, ndarray]:
	"""
	Bilinear shape functions and their reference gradients, shapes (4,) and (4, 2).
	"""
	N = 0.25 * numpy.array([(1 - ξ) * (1 - η), (1 + ξ) * (1 - η), (1 + ξ) * (1 + η), (1 - ξ) * (1 + η)])
	dN = 0.25 * numpy.array([
		[-(1 - η), -(1 - ξ)],
		[+(1 - η), -(1 + ξ)],
		[+(1 + η), +(1 + ξ)],
		[-(1 + η), +(1 - ξ)],
	])
	return N, dN

def edge_point(edge: int, s: float) -> tuple[float, float]:
	"""
	Reference coordinates of the point at parameter `s` ∈ [-1, 1] along local edge `edge`.
	"""
	match edge:
		case 0: return (+s, -1.0)
		case 1: return (1.0, +s)
		case 2: return (-s, 1.0)
		case 3: return (-1.0, -s)
	raise SetupError(f"no local edge {edge}") # pragma: no cover

@dataclass(frozen=True, eq=False)
class ElementKernel:
	"""
	Per-element integration data shared by every element of a uniform mesh.

	`N[q, a]` shape values, `B[q, :, a]` physical gradients and `w[q]` weights times the
	Jacobian determinant at the 2×2 Gauss points; `N0`, `B0` the same at the centroid.
	"""
	N: ndarray
	B: ndarray
	w: ndarray
	N0: ndarray
	B0: ndarray
	detJ: float

@dataclass(frozen=True, eq=False)
class Mesh:
	nx: int
	ny: int
	width: float
	height: float
	node_coords: ndarray = field(repr=False)
	elem_nodes: ndarray = field(repr=False)
	elem_size: tuple[float, float]

	@property
	def n_nodes(self) -> int:
		return (self.nx + 1) * (self.ny + 1)
	@property
	def n_elems(self) -> int:
		return self.nx * self.ny
	@property
	def elem_volume(self) -> float:
		hx, hy = self.elem_size
		return hx * hy
	@property
	def h(self) -> float:
		"""
		Element length used by stabilization; equals hx for square elements.
		"""
		hx, hy = self.elem_size
		return float(numpy.sqrt(hx * hy))

	@cached_property
	def centroids(self) -> ndarray:
		return self.node_coords[self.elem_nodes].mean(axis=1)

	@cached_property
	def kernel(self) -> ElementKernel:
		hx, hy = self.elem_size
		jinv = numpy.array([2 / hx, 2 / hy])
		detJ = hx * hy / 4
		rule = quad_rule(2)
		Ns, Bs = [], []
		for (ξ, η) in rule.points:
			N, dN = shape_eval(ξ, η)
			Ns.append(N)
			Bs.append((dN * jinv).T)
		N0, dN0 = shape_eval(0.0, 0.0)
		return ElementKernel(
			N=numpy.array(Ns), B=numpy.array(Bs), w=numpy.array(rule.weights) * detJ,
			N0=N0, B0=(dN0 * jinv).T, detJ=detJ,
		)

	def node_id(self, i: int, j: int) -> int:
		return j * (self.nx + 1) + i

	def elem_id(self, i: int, j: int) -> int:
		return j * self.nx + i

	def edge_length(self, edge: int) -> float:
		hx, hy = self.elem_size
		return hx if edge in (0, 2) else hy

	def side_edges(self, side: Side) -> tuple[ndarray, ndarray]:
		"""
		Boundary edges of one side as `(elem, local_edge)` rows, and their midpoint coordinate along the side.
		"""
		hx, hy = self.elem_size
		match side:
			case "bottom":
				k = numpy.arange(self.nx)
				elems, edge, mid = k, 0, (k + 0.5) * hx
			case "top":
				k = numpy.arange(self.nx)
				elems, edge, mid = (self.ny - 1) * self.nx + k, 2, (k + 0.5) * hx
			case "left":
				k = numpy.arange(self.ny)
				elems, edge, mid = k * self.nx, 3, (k + 0.5) * hy
			case "right":
				k = numpy.arange(self.ny)
				elems, edge, mid = k * self.nx + self.nx - 1, 1, (k + 0.5) * hy
			case _:
				raise SetupError(f"unknown side {side!r}, expected one of {SIDES}")
		return numpy.column_stack([elems, numpy.full_like(elems, edge)]), mid

	def side_nodes(self, side: Side) -> tuple[ndarray, ndarray]:
		"""
		Nodes on one side and their coordinate along the side.
		"""
		hx, hy = self.elem_size
		match side:
			case "bottom":
				k = numpy.arange(self.nx + 1)
				return k, k * hx
			case "top":
				k = numpy.arange(self.nx + 1)
				return self.ny * (self.nx + 1) + k, k * hx
			case "left":
				k = numpy.arange(self.ny + 1)
				return k * (self.nx + 1), k * hy
			case "right":
				k = numpy.arange(self.ny + 1)
				return k * (self.nx + 1) + self.nx, k * hy
			case _:
				raise SetupError(f"unknown side {side!r}, expected one of {SIDES}")

	def side_extent(self, side: Side) -> float:
		return self.width if side in ("bottom", "top") else self.height

def build_structured_mesh(nx: int, ny: int, width: float, height: float) -> Mesh:
	if nx < 1 or ny < 1:
		raise SetupError(f"element counts must be positive, got {(nx, ny)}")
	if not (width > 0 and height > 0):
		raise SetupError(f"domain extents must be positive, got {(width, height)}")
	hx, hy = width / nx, height / ny
	i, j = numpy.meshgrid(numpy.arange(nx + 1), numpy.arange(ny + 1))
	coords = numpy.column_stack([i.ravel() * hx, j.ravel() * hy])
	ei, ej = numpy.meshgrid(numpy.arange(nx), numpy.arange(ny))
	n0 = (ej * (nx + 1) + ei).ravel()
	conn = numpy.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
	return Mesh(nx, ny, float(width), float(height), coords, conn, (hx, hy))

@dataclass(frozen=True, eq=False)
class BoundarySet:
	name: str
	kind: Kind
	value: float
	edges: ndarray = field(repr=False)
	nodes: ndarray = field(repr=False)

	@property
	def field(self) -> Literal["P", "T"]:
		return "T" if self.kind.endswith("_T") else "P"
	@property
	def is_dirichlet(self) -> bool:
		return self.kind.startswith("dirichlet")

	def scaled(self, factor: float) -> "BoundarySet":
		return BoundarySet(self.name, self.kind, self.value * factor, self.edges, self.nodes)

def tag_boundary(mesh: Mesh, side: Side, lo: float, hi: float, kind: Kind, value: float,
	name: str = "", existing: Iterable[BoundarySet] = ()) -> BoundarySet:
	"""
	Tag the boundary edges of `side` whose midpoints lie in [lo, hi].

	A zero-length region (lo == hi) selects the single boundary node at that coordinate,
	which is only meaningful for Dirichlet kinds (e.g. a pressure gauge point).
	"""
	if kind not in KINDS:
		raise SetupError(f"unknown boundary kind {kind!r}, expected one of {KINDS}")
	ext = mesh.side_extent(side)
	tol = 1e-9 * ext
	if not (-tol <= lo <= hi <= ext + tol):
		raise SetupError(f"region {(lo, hi)} is not within side {side!r} of extent {ext}")
	name = name or f"{side}[{lo:g},{hi:g}]:{kind}"
	if lo == hi:
		if not kind.startswith("dirichlet"):
			raise SetupError(f"point region on {side!r} needs a Dirichlet kind, got {kind!r}")
		nodes, at = mesh.side_nodes(side)
		nodes = nodes[numpy.abs(at - lo) <= max(tol, 1e-6 * min(mesh.elem_size))]
		edges = numpy.zeros((0, 2), dtype=int)
	else:
		rows, mid = mesh.side_edges(side)
		edges = rows[(mid >= lo - tol) & (mid <= hi + tol)]
		nodes = numpy.unique(mesh.elem_nodes[edges[:, 0:1], EDGE_NODES[edges[:, 1]]])
	if not len(nodes):
		raise SetupError(f"empty boundary selection {name!r}")
	bset = BoundarySet(name, kind, float(value), edges, nodes)
	if bset.is_dirichlet:
		for other in existing:
			if other.is_dirichlet and other.field == bset.field and other.value != bset.value:
				if len(shared := numpy.intersect1d(other.nodes, bset.nodes)):
					raise SetupError(
						f"Dirichlet conflict on field {bset.field} between {other.name!r} and {name!r} at nodes {shared[:8].tolist()}")
	return bset

@dataclass(frozen=True, eq=False)
class Boundaries:
	"""
	An immutable collection of tagged boundary sets.
	"""
	sets: tuple[BoundarySet, ...] = ()

	def tag(self, mesh: Mesh, side: Side, lo: float, hi: float, kind: Kind, value: float, name: str = "") -> "Boundaries":
		return Boundaries(self.sets + (tag_boundary(mesh, side, lo, hi, kind, value, name, self.sets),))

	def of_kind(self, *kinds: Kind) -> list[BoundarySet]:
		return [b for b in self.sets if b.kind in kinds]

	def scaled(self, kind: Kind, factor: float) -> "Boundaries":
		return Boundaries(tuple(b.scaled(factor) if b.kind == kind else b for b in self.sets))

	def dirichlet(self, field: Literal["P", "T"]) -> tuple[ndarray, ndarray]:
		"""
		Constrained nodes of one field and their values (later sets win on equal-valued overlaps).
		"""
		vals: dict[int, float] = {}
		for b in self.sets:
			if b.is_dirichlet and b.field == field:
				for n in b.nodes.tolist(): vals[n] = b.value
		nodes = numpy.array(sorted(vals), dtype=int)
		return nodes, numpy.array([vals[n] for n in nodes.tolist()], dtype=float)

def edge_load(mesh: Mesh, sets: Iterable[BoundarySet]) -> ndarray:
	"""
	Consistent nodal load ∫ N_a q dS over the edges of the given sets, 2-point Gauss per edge.
	"""
	f = numpy.zeros(mesh.n_nodes)
	rule = gauss_rule(2)
	for b in sets:
		if not len(b.edges): continue
		for edge in range(4):
			sel = b.edges[b.edges[:, 1] == edge, 0]
			if not len(sel): continue
			fe = numpy.zeros(4)
			for (s,), w in zip(rule.points, rule.weights):
				N, _ = shape_eval(*edge_point(edge, s))
				fe += w * N * mesh.edge_length(edge) / 2
			numpy.add.at(f, mesh.elem_nodes[sel], b.value * fe)
	return f

def edge_measure(mesh: Mesh, sets: Iterable[BoundarySet]) -> float:
	return float(sum(sum(mesh.edge_length(int(e)) for e in b.edges[:, 1]) for b in sets))

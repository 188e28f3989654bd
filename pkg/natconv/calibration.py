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
Calibration of the fluid resistance 1/μ̄_f against a node-matched reference temperature field.
"""

import csv
import io
import logging
import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TypeVar

import numpy
from astropy.io import fits
from numpy import ndarray

from .base import NonConvergenceError, Path, SetupError, read, write
from .mesh import Mesh
from .newton import NewtonConfig, RampConfig, solve_with_retry
from .physics import Problem

log = logging.getLogger(__name__)

A = TypeVar("A")
B = TypeVar("B")

FLAT_TOL = 1e-12
# calibrated fluid resistances of the two geometry presets
INV_MUBAR_HEATSINK = 0.09
INV_MUBAR_CAVITY = 0.15

@dataclass(frozen=True, eq=False)
class ReferenceField:
	nx: int
	ny: int
	width: float
	height: float
	t: ndarray
	source: str = ""
	gr: float = 0.0
	geometry: str = ""

	def __post_init__(self) -> None:
		if self.t.shape != ((self.nx + 1) * (self.ny + 1),):
			raise SetupError(f"reference holds {self.t.shape} values for a {self.nx}x{self.ny} mesh")
		if not numpy.isfinite(self.t).all():
			raise SetupError("reference temperature field has non-finite values")

	@classmethod
	def from_mesh(cls, mesh: Mesh, t: ndarray, **meta) -> "ReferenceField":
		w, h = mesh.node_coords.max(axis=0) - mesh.node_coords.min(axis=0)
		return cls(mesh.nx, mesh.ny, float(w), float(h), numpy.asarray(t, dtype=float), **meta)

	def check(self, mesh: Mesh) -> None:
		w, h = mesh.node_coords.max(axis=0) - mesh.node_coords.min(axis=0)
		if (self.nx, self.ny) != (mesh.nx, mesh.ny) or not numpy.allclose((w, h), (self.width, self.height)):
			raise SetupError(
				f"reference grid {self.nx}x{self.ny} on {self.width}x{self.height} does not match "
				f"the {mesh.nx}x{mesh.ny} mesh on {w}x{h}"
			)

def write_reference(f: Path | str, ref: ReferenceField) -> None:
	"""
	Write a reference field as FITS (`.fits`, `.fits.zst`) or CSV (`.csv`, `.csv.zst`).
	"""
	name = str(f).removesuffix(".zst")
	if name.endswith(".fits"):
		hdu = fits.PrimaryHDU(ref.t.reshape(ref.ny + 1, ref.nx + 1))
		for k, v in (("NX", ref.nx), ("NY", ref.ny), ("WIDTH", ref.width), ("HEIGHT", ref.height),
			("SOURCE", ref.source), ("GR", ref.gr), ("GEOMETRY", ref.geometry)):
			hdu.header[k] = v
		buf = io.BytesIO()
		hdu.writeto(buf)
		write(f, buf.getvalue())
	elif name.endswith(".csv"):
		buf = io.StringIO()
		for k, v in (("nx", ref.nx), ("ny", ref.ny), ("width", repr(ref.width)), ("height", repr(ref.height)),
			("gr", repr(ref.gr)), ("source", ref.source), ("geometry", ref.geometry)):
			buf.write(f"# {k}={v}\n")
		out = csv.writer(buf, lineterminator="\n")
		out.writerow(["node", "t"])
		out.writerows((i, repr(float(v))) for i, v in enumerate(ref.t))
		write(f, buf.getvalue())
	else:
		raise SetupError(f"unknown reference format: {f}")

def read_reference(f: Path | str) -> ReferenceField:
	name = str(f).removesuffix(".zst")
	if name.endswith(".fits"):
		with fits.open(io.BytesIO(read(f))) as hdul:
			h = hdul[0].header
			data = numpy.asarray(hdul[0].data, dtype=float).ravel()
			return ReferenceField(int(h["NX"]), int(h["NY"]), float(h["WIDTH"]), float(h["HEIGHT"]), data,
				str(h.get("SOURCE", "")), float(h.get("GR", 0.0)), str(h.get("GEOMETRY", "")))
	if name.endswith(".csv"):
		lines = read(f).decode().splitlines()
		meta: dict[str, str] = {}
		while lines and lines[0].startswith("#"):
			k, _, v = lines.pop(0)[1:].strip().partition("=")
			meta[k] = v
		rows = list(csv.reader(lines))
		if not rows or rows[0] != ["node", "t"]:
			raise SetupError(f"{f}: expected a `node,t` header")
		t = numpy.array([float(r[1]) for r in rows[1:]])
		try:
			return ReferenceField(int(meta["nx"]), int(meta["ny"]), float(meta["width"]), float(meta["height"]), t,
				meta.get("source", ""), float(meta.get("gr", 0.0)), meta.get("geometry", ""))
		except KeyError as e:
			raise SetupError(f"{f}: missing metadata {e}") from e
	raise SetupError(f"unknown reference format: {f}")

def lsq_error(t_a: ndarray, t_b: ndarray) -> float:
	"""
	Mean squared difference of two nodal fields.
	"""
	t_a, t_b = numpy.asarray(t_a, dtype=float), numpy.asarray(t_b, dtype=float)
	if t_a.shape != t_b.shape:
		raise SetupError(f"fields differ in length: {t_a.shape} vs {t_b.shape}")
	return float(numpy.mean((t_a - t_b) ** 2))

def mubar_grid(lo: float, hi: float, step: float) -> list[float]:
	if not lo < hi or not step > 0:
		raise SetupError(f"bad sweep range [{lo}, {hi}] with step {step}")
	n = int(numpy.floor((hi - lo) / step + 1e-9)) + 1
	return [round(lo + k * step, 12) for k in range(n)]

def pool_map(func: Callable[[A], B], items: Iterable[A], nt: int | None = None) -> list[B]:
	"""
	Map over a thread pool, results in input order.
	"""
	items = list(items)
	nt = int(max(nt or min((os.cpu_count() or 8) // 2, 10), 1))
	log.debug(f"processing {len(items)} entries in {nt} threads")
	if nt == 1:
		return [func(x) for x in items]
	with ThreadPoolExecutor(max_workers=nt) as pool:
		return list(pool.map(func, items))

@dataclass(frozen=True)
class SweepPoint:
	inv_mubar: float
	error: float
	converged: bool

@dataclass
class SweepResult:
	points: list[SweepPoint] = field(default_factory=list)
	argmin: float = float("nan")
	boundary: bool = False
	non_unique: bool = False

	@property
	def values(self) -> ndarray:
		return numpy.array([p.inv_mubar for p in self.points])

	@property
	def errors(self) -> ndarray:
		return numpy.array([p.error for p in self.points])

	def to_csv(self) -> str:
		buf = io.StringIO()
		out = csv.writer(buf, lineterminator="\n")
		out.writerow(["inv_mubar_f", "lsq_error", "converged"])
		out.writerows((repr(p.inv_mubar), repr(p.error), int(p.converged)) for p in self.points)
		return buf.getvalue()

def summarize(points: list[SweepPoint]) -> SweepResult:
	res = SweepResult(points)
	ok = [i for i, p in enumerate(points) if p.converged]
	if not ok:
		log.warning("no converged point in the calibration sweep")
		return res
	errs = numpy.array([points[i].error for i in ok])
	best = ok[int(numpy.argmin(errs))]
	res.argmin = points[best].inv_mubar
	res.boundary = best in (0, len(points) - 1)
	res.non_unique = int((errs <= errs.min() + FLAT_TOL).sum()) > 1
	if res.boundary:
		log.warning(f"calibration minimum {res.argmin:g} lies on the sweep boundary")
	if res.non_unique:
		log.warning(f"calibration curve is flat within {FLAT_TOL:g} at its minimum; argmin {res.argmin:g} is not unique")
	return res

def sweep_mubar(problem: Problem, reference: ReferenceField, lo: float, hi: float, step: float, rho: ndarray | None = None,
	newton: NewtonConfig = NewtonConfig(), retry: RampConfig = RampConfig(), threads: int | None = 1) -> SweepResult:
	"""
	Forward-solve at each 1/μ̄_f of the grid and compare with the reference temperatures.
	Non-converged points are kept, flagged, and excluded from the argmin.
	"""
	reference.check(problem.mesh)
	rho = numpy.zeros(problem.mesh.n_elems) if rho is None else numpy.asarray(rho, dtype=float)
	grid = mubar_grid(lo, hi, step)

	def point(v: float) -> SweepPoint:
		try:
			state, _ = solve_with_retry(problem.with_mats(inv_mubar_f=v), rho, None, newton, retry)
		except NonConvergenceError as e:
			log.warning(f"1/mubar_f = {v:g}: forward solve did not converge, point flagged")
			return SweepPoint(v, lsq_error(e.state.t, reference.t) if e.state is not None else float("nan"), False)
		err = lsq_error(state.t, reference.t)
		log.info(f"1/mubar_f = {v:g}: lsq error {err:.6e}")
		return SweepPoint(v, err, True)

	return summarize(pool_map(point, grid, threads))

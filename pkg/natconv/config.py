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
Run configuration: TOML files validated by pydantic models, the geometry presets,
`section.key=value` overrides and the provenance echo.
"""

import logging
import tomllib
from collections.abc import Iterable
from copy import deepcopy
from importlib.metadata import PackageNotFoundError, version
from typing import Any, Literal

import numpy
from numpy import ndarray
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from .base import ConfigError, Path, SetupError, isa, read
from .filter import DensityFilter
from .mesh import Boundaries, Kind, Mesh, Side, build_structured_mesh
from .newton import NewtonConfig, RampConfig
from .physics import MaterialSet, Problem, beta_for_grashof
from .simplified import FILTER_RADII, H_BAR, FilterContinuation, SimplifiedMaterial, SimplifiedProblem
from .topopt import P_K_SEQ, P_MUBAR_SEQ, OptimizationSchedule

log = logging.getLogger(__name__)

Mode = Literal["optimize", "forward", "cross-check", "calibrate", "simplified"]
Box = tuple[float, float, float, float] # x0, x1, y0, y1

class Section(BaseModel):
	model_config = ConfigDict(extra="forbid", frozen=True)

class BoundarySpec(Section):
	side: Side
	lo: float
	hi: float
	kind: Kind
	value: float = 0.0
	name: str = ""

class RunSection(Section):
	mode: Mode
	preset: Literal["heatsink", "cavity", "calibration"] | None = None
	gr: float | None = None
	grs: list[float] = Field(default_factory=list)
	designs: list[str] = Field(default_factory=list)
	output: str = "out"
	threads: int = Field(1, ge=1)
	initial: float | None = Field(None, ge=0, le=1)
	cutoff: float = Field(0.5, gt=0, lt=1)
	zstd: bool = False

class GeometrySection(Section):
	nx: int = Field(gt=0)
	ny: int = Field(gt=0)
	width: float = Field(gt=0)
	height: float = Field(gt=0)
	length_scale: float | None = Field(None, gt=0)
	design_box: Box | None = None
	source_box: Box | None = None
	boundaries: list[BoundarySpec] = Field(default_factory=list)

	@model_validator(mode="after")
	def _boxes(self) -> "GeometrySection":
		for name in ("design_box", "source_box"):
			if (b := getattr(self, name)) is None: continue
			x0, x1, y0, y1 = b
			if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
				raise ValueError(f"{name} {b} outside the {self.width}x{self.height} domain")
		return self

class MaterialsSection(Section):
	rho0: float = 1.0
	cp: float = 1.0
	beta: float | None = None
	k_f: float = 1.0
	k_s: float = 100.0
	inv_mubar_f: float = 0.09
	inv_mubar_s: float = 1e-7
	T0: float = 0.0
	g: tuple[float, float] = (0.0, -1.0)
	Q0: float = 0.0
	mu: float = 1.0
	tau_diffusivity: Literal["thermal", "kinematic"] = "thermal"

class ScheduleSection(Section):
	p_k_seq: tuple[float, ...] = P_K_SEQ
	p_mubar_seq: tuple[float, ...] = P_MUBAR_SEQ
	stages: int | None = Field(None, ge=1)
	switch_every: int = 50
	switch_on_change: float = 0.01
	move_limit: float = 0.2
	V_star: float = 0.5
	max_outer_iter: int = 400
	r_min: float = Field(0.0, ge=0)

class NewtonSection(Section):
	rel_tol: float = 1e-4
	max_iter: int = 50
	damping: Literal["adaptive", "fixed"] = "adaptive"
	lam: float = 1.0
	ramp_target: Literal["q_h", "beta"] = "beta"
	ramp_stages: tuple[float, ...] = (0.25, 0.5, 1.0)

class SimplifiedSection(Section):
	k_s: float = 100.0
	k_min: float = 1e-6
	p: float = 6.0
	h: float | None = Field(None, ge=0)
	radii: tuple[float, ...] = FILTER_RADII
	switch_every: int = 50
	obj_tol: float = 1e-3
	patience: int = 10

class CalibrationSection(Section):
	reference: str | None = None
	lo: float = 0.01
	hi: float = 0.2
	step: float = 0.01
	all_solid: bool = False

SECTIONS = ("run", "geometry", "materials", "schedule", "newton", "simplified", "calibration")

class RunConfig(BaseModel):
	model_config = ConfigDict(extra="forbid")

	run: RunSection
	geometry: GeometrySection
	materials: MaterialsSection = MaterialsSection()
	schedule: ScheduleSection = ScheduleSection()
	newton: NewtonSection = NewtonSection()
	simplified: SimplifiedSection = SimplifiedSection()
	calibration: CalibrationSection = CalibrationSection()
	_defaults: list[str] = PrivateAttr(default_factory=list)
	_assumed: list[str] = PrivateAttr(default_factory=list)

	@property
	def defaults(self) -> list[str]:
		return self._defaults

	@property
	def assumed(self) -> list[str]:
		return self._assumed

	@property
	def output(self) -> Path:
		return Path(self.run.output)

	def mesh(self) -> Mesh:
		g = self.geometry
		return build_structured_mesh(g.nx, g.ny, g.width, g.height)

	def boundaries(self, mesh: Mesh) -> Boundaries:
		bcs = Boundaries()
		for b in self.geometry.boundaries:
			bcs = bcs.tag(mesh, b.side, b.lo, b.hi, b.kind, b.value, b.name)
		return bcs

	def _mask(self, mesh: Mesh, box: Box | None) -> ndarray | None:
		if box is None: return None
		x0, x1, y0, y1 = box
		c = mesh.centroids
		return (c[:, 0] >= x0) & (c[:, 0] <= x1) & (c[:, 1] >= y0) & (c[:, 1] <= y1)

	def design_mask(self, mesh: Mesh) -> ndarray:
		mask = self._mask(mesh, self.geometry.design_box)
		return numpy.ones(mesh.n_elems, dtype=bool) if mask is None else mask

	def material_set(self, gr: float | None = None) -> MaterialSet:
		"""
		Materials with β taken from the Grashof number when it is not given explicitly.
		"""
		m = self.materials.model_dump()
		beta = m.pop("beta")
		base = MaterialSet(**m)
		if gr is None and beta is not None:
			return base.replace(beta=beta)
		if (gr := self.run.gr if gr is None else gr) is None:
			return base
		return base.replace(beta=beta_for_grashof(gr, self.geometry.length_scale or self.geometry.height, base))

	def problem(self, gr: float | None = None) -> Problem:
		mesh = self.mesh()
		return Problem(mesh, self.material_set(gr), self.boundaries(mesh), self._mask(mesh, self.geometry.source_box))

	def density_filter(self, mesh: Mesh) -> DensityFilter:
		return DensityFilter(mesh, self.schedule.r_min, self.design_mask(mesh))

	def optimization_schedule(self) -> OptimizationSchedule:
		s = self.schedule
		sched = OptimizationSchedule(s.p_k_seq, s.p_mubar_seq, s.switch_every, s.switch_on_change, s.move_limit, s.V_star, s.max_outer_iter)
		return sched.first_stages(s.stages) if s.stages else sched

	def newton_config(self) -> NewtonConfig:
		n = self.newton
		return NewtonConfig(n.rel_tol, n.max_iter, n.damping, n.lam)

	def ramp_config(self) -> RampConfig:
		return RampConfig(self.newton.ramp_target, self.newton.ramp_stages)

	def gamma0(self, n: int) -> ndarray | None:
		return None if self.run.initial is None else numpy.full(n, self.run.initial)

	def simplified_problem(self, gr: float | None = None) -> SimplifiedProblem:
		s = self.simplified
		h = s.h
		if h is None:
			gr = self.run.gr if gr is None else gr
			if gr is None or int(gr) not in H_BAR:
				raise ConfigError(f"no convection coefficient for Gr = {gr}; set simplified.h")
			h = H_BAR[int(gr)]
		mesh = self.mesh()
		mats = SimplifiedMaterial(s.k_s, s.k_min, s.p, h, self.materials.T0, self.materials.Q0)
		return SimplifiedProblem(mesh, mats, self.boundaries(mesh), self._mask(mesh, self.geometry.source_box))

	def filter_continuation(self) -> FilterContinuation:
		s, o = self.simplified, self.schedule
		return FilterContinuation(s.radii, s.switch_every, s.obj_tol, s.patience, o.move_limit, o.V_star, o.max_outer_iter)

	def echo(self) -> dict[str, Any]:
		return self.model_dump(mode="json")

def _heatsink() -> dict[str, Any]:
	return {
		"run": {"gr": 6400.0, "grs": [640.0, 3200.0, 6400.0]},
		"geometry": {
			"nx": 140, "ny": 160, "width": 3.5, "height": 4.0, "length_scale": 4.0,
			"design_box": [0.0, 1.0, 0.0, 2.0],
			"boundaries": [
				{"side": "bottom", "lo": 0.0, "hi": 0.5, "kind": "flux_T", "value": 110.0, "name": "heater"},
				{"side": "right", "lo": 0.0, "hi": 4.0, "kind": "dirichlet_T", "value": 0.0, "name": "cold_right"},
				{"side": "top", "lo": 0.0, "hi": 3.5, "kind": "dirichlet_T", "value": 0.0, "name": "cold_top"},
				{"side": "top", "lo": 3.5, "hi": 3.5, "kind": "dirichlet_P", "value": 0.0, "name": "gauge"},
			],
		},
		"materials": {"inv_mubar_f": 0.09},
		"schedule": {"V_star": 0.5, "r_min": 0.06},
	}

def _cavity() -> dict[str, Any]:
	return {
		"run": {"gr": 51200.0, "grs": [5120.0, 10240.0, 51200.0], "initial": 0.1},
		"geometry": {
			"nx": 120, "ny": 240, "width": 4.0, "height": 8.0, "length_scale": 8.0,
			"design_box": [0.0, 2.0, 0.0, 8.0],
			"boundaries": [
				{"side": "left", "lo": 3.0, "hi": 5.0, "kind": "flux_T", "value": 3.0, "name": "heater"},
				{"side": "top", "lo": 0.0, "hi": 4.0, "kind": "dirichlet_T", "value": 0.0, "name": "cold_top"},
				{"side": "bottom", "lo": 0.0, "hi": 4.0, "kind": "dirichlet_T", "value": 0.0, "name": "cold_bottom"},
				{"side": "top", "lo": 4.0, "hi": 4.0, "kind": "dirichlet_P", "value": 0.0, "name": "gauge"},
			],
		},
		"materials": {"inv_mubar_f": 0.15},
		"schedule": {"V_star": 0.3, "r_min": 0.08, "stages": 1},
		"calibration": {"lo": 0.01, "hi": 0.29, "step": 0.02, "all_solid": True},
	}

def _calibration() -> dict[str, Any]:
	return {
		"run": {"gr": 6400.0},
		"geometry": {
			"nx": 280, "ny": 160, "width": 7.0, "height": 4.0, "length_scale": 4.0,
			"design_box": [2.5, 4.5, 0.0, 2.0],
			"boundaries": [
				{"side": "bottom", "lo": 3.0, "hi": 4.0, "kind": "flux_T", "value": 110.0, "name": "heater"},
				{"side": "left", "lo": 0.0, "hi": 4.0, "kind": "dirichlet_T", "value": 0.0, "name": "cold_left"},
				{"side": "right", "lo": 0.0, "hi": 4.0, "kind": "dirichlet_T", "value": 0.0, "name": "cold_right"},
				{"side": "top", "lo": 0.0, "hi": 7.0, "kind": "dirichlet_T", "value": 0.0, "name": "cold_top"},
				{"side": "top", "lo": 7.0, "hi": 7.0, "kind": "dirichlet_P", "value": 0.0, "name": "gauge"},
			],
		},
		"materials": {"inv_mubar_f": 0.09},
		"calibration": {"lo": 0.01, "hi": 0.2, "step": 0.01, "all_solid": True},
	}

PRESETS = {"heatsink": _heatsink, "cavity": _cavity, "calibration": _calibration}
# preset keys without a published value
ASSUMED = {
	"heatsink": ["geometry.design_box", "geometry.boundaries"],
	"cavity": ["geometry.design_box", "geometry.boundaries", "run.grs"],
	"calibration": ["geometry.design_box", "geometry.boundaries"],
}

def merge(base: dict[str, Any], over: dict[str, Any]) -> dict[str, Any]:
	"""
	Key-by-key recursive merge; `over` wins, lists are replaced whole.
	"""
	out = deepcopy(base)
	for k, v in over.items():
		out[k] = merge(out[k], v) if isa(v, dict) and isa(out.get(k), dict) else deepcopy(v)
	return out

def _literal(text: str) -> Any:
	try:
		return tomllib.loads(f"v = {text}")["v"]
	except tomllib.TOMLDecodeError:
		return text

def apply_overrides(raw: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
	"""
	Apply `section.key=value` overrides; values are read as TOML literals, else as bare strings.
	"""
	out = deepcopy(raw)
	for item in overrides:
		key, eq, text = item.partition("=")
		path = key.strip().split(".")
		if not eq or len(path) != 2 or path[0] not in SECTIONS:
			raise ConfigError(f"bad override {item!r}, expected section.key=value")
		out.setdefault(path[0], {})[path[1]] = _literal(text.strip())
	return out

def _flatten(d: dict[str, Any], prefix: str = "") -> set[str]:
	keys = set()
	for k, v in d.items():
		keys |= _flatten(v, f"{prefix}{k}.") if isa(v, dict) else {f"{prefix}{k}"}
	return keys

def resolve(raw: dict[str, Any]) -> RunConfig:
	"""
	Merge a raw mapping onto its preset and validate it.
	"""
	run = raw.get("run", {})
	missing = [k for k, ok in (("run.mode", "mode" in run), ("run.preset or [geometry]", "preset" in run or "geometry" in raw)) if not ok]
	if missing:
		raise ConfigError(f"missing required keys: {', '.join(missing)}")
	preset = run.get("preset")
	if preset is not None and preset not in PRESETS:
		raise ConfigError(f"unknown preset {preset!r}, expected one of {sorted(PRESETS)}")
	merged = merge(PRESETS[preset]() if preset else {}, raw)
	try:
		cfg = RunConfig.model_validate(merged)
	except ValidationError as e:
		raise ConfigError("invalid configuration:\n" + "\n".join(
			f"  {'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()
		)) from e
	given = _flatten(raw)
	cfg._defaults = sorted(k for k in _flatten(cfg.echo()) if k not in given)
	cfg._assumed = [k for k in ASSUMED.get(preset or "", []) if k not in given]
	try:
		mesh = cfg.mesh()
		cfg.boundaries(mesh)
		cfg.material_set()
		cfg.optimization_schedule()
		cfg.newton_config()
		cfg.ramp_config()
		if not cfg.design_mask(mesh).any():
			raise SetupError("design box contains no element centroid")
	except SetupError as e:
		raise ConfigError(f"invalid configuration: {e}") from e
	return cfg

def parse_config(path: Path | str | None, overrides: Iterable[str] = ()) -> RunConfig:
	"""
	Read a TOML run file (or start empty), apply overrides, merge the preset and validate.
	"""
	raw: dict[str, Any] = {}
	if path is not None:
		try:
			raw = tomllib.loads(read(path).decode())
		except OSError as e:
			raise ConfigError(f"cannot read {path}: {e}") from e
		except tomllib.TOMLDecodeError as e:
			raise ConfigError(f"{path}: {e}") from e
	cfg = resolve(apply_overrides(raw, overrides))
	log.info(f"configuration: mode {cfg.run.mode}, preset {cfg.run.preset}, mesh {cfg.geometry.nx}x{cfg.geometry.ny}")
	for k in cfg.assumed:
		log.info(f"{k} uses an assumed preset value")
	return cfg

def package_version() -> str:
	try:
		return version("natconv")
	except PackageNotFoundError: # pragma: no cover
		return "unknown"

def provenance(cfg: RunConfig) -> dict[str, Any]:
	return {
		"version": package_version(),
		"config": cfg.echo(),
		"defaults": cfg.defaults,
		"assumed": cfg.assumed,
	}

import pytest

from .base import ConfigError
from .config import apply_overrides, merge, parse_config, provenance, resolve

SMALL = """
[run]
mode = "forward"
gr = 640

[geometry]
nx = 4
ny = 4
width = 1.0
height = 1.0
design_box = [0.0, 0.5, 0.0, 0.5]
boundaries = [
	{ side = "bottom", lo = 0.25, hi = 0.75, kind = "flux_T", value = 1.0, name = "heater" },
	{ side = "top", lo = 0.0, hi = 1.0, kind = "dirichlet_T" },
	{ side = "top", lo = 1.0, hi = 1.0, kind = "dirichlet_P" },
]
"""

def testset_heatsink(tmp_path) -> None:
	f = tmp_path / "run.toml"
	f.write_text('[run]\nmode = "optimize"\npreset = "heatsink"\ngr = 6400\n')
	cfg = parse_config(f)
	g = cfg.geometry
	assert (g.nx, g.ny, g.width, g.height) == (140, 160, 3.5, 4.0)
	assert g.boundaries[0].kind == "flux_T" and g.boundaries[0].value == 110.0
	assert cfg.schedule.V_star == 0.5 and cfg.schedule.r_min == 0.06
	assert cfg.material_set().inv_mubar_f == 0.09
	assert cfg.material_set().beta == pytest.approx(100.0)
	assert cfg.material_set(640.0).beta == pytest.approx(10.0)
	assert cfg.optimization_schedule().n_stages == 4
	assert cfg.simplified_problem().mats.h == 0.76345
	assert "geometry.design_box" in cfg.assumed

def testset_cavity() -> None:
	cfg = resolve({"run": {"mode": "optimize", "preset": "cavity", "gr": 51200}})
	g = cfg.geometry
	assert (g.nx, g.ny) == (120, 240)
	assert g.boundaries[0].side == "left" and g.boundaries[0].value == 3.0
	assert cfg.schedule.V_star == 0.3 and cfg.schedule.r_min == 0.08
	assert cfg.material_set().inv_mubar_f == 0.15
	assert cfg.material_set().beta == pytest.approx(100.0)
	assert cfg.material_set(10240.0).beta == pytest.approx(20.0)
	assert cfg.optimization_schedule().n_stages == 1
	gamma0 = cfg.gamma0(5)
	assert gamma0 is not None and (gamma0 == 0.1).all()
	with pytest.raises(ConfigError): cfg.simplified_problem()
	assert cfg.assumed == ["geometry.design_box", "geometry.boundaries", "run.grs"]

def testset_calibration_preset() -> None:
	cfg = resolve({"run": {"mode": "calibrate", "preset": "calibration"}})
	g = cfg.geometry
	assert (g.nx, g.ny, g.width, g.height) == (280, 160, 7.0, 4.0)
	assert cfg.material_set().beta == pytest.approx(100.0) and cfg.material_set().inv_mubar_f == 0.09
	c = cfg.calibration
	assert (c.lo, c.hi, c.step, c.all_solid) == (0.01, 0.2, 0.01, True)
	assert cfg.assumed == ["geometry.design_box", "geometry.boundaries"]
	scaled = resolve({"run": {"mode": "calibrate", "preset": "calibration"}, "geometry": {"nx": 70, "ny": 40}})
	p = scaled.problem()
	assert p.mesh.elem_size == pytest.approx((0.1, 0.1))
	assert scaled.design_mask(p.mesh).sum() == 400
	assert p.heat_load.sum() == pytest.approx(110.0)
	assert scaled.assumed == ["geometry.design_box", "geometry.boundaries"]

def testset_missing(tmp_path) -> None:
	f = tmp_path / "empty.toml"
	f.write_text("")
	with pytest.raises(ConfigError, match="run.mode"): parse_config(f)
	with pytest.raises(ConfigError, match="geometry"): resolve({"run": {"mode": "forward"}})
	with pytest.raises(ConfigError, match="cannot read"): parse_config(tmp_path / "absent.toml")
	f.write_text("[run\n")
	with pytest.raises(ConfigError): parse_config(f)

def testset_strict(tmp_path) -> None:
	f = tmp_path / "run.toml"
	f.write_text(SMALL + "\n[newton]\nrel_tol = 1e-6\ntolerance = 1\n")
	with pytest.raises(ConfigError, match="tolerance"): parse_config(f)
	with pytest.raises(ConfigError): resolve({"run": {"mode": "forward", "preset": "chimney"}})
	with pytest.raises(ConfigError): resolve({"run": {"mode": "plot", "preset": "heatsink"}})
	with pytest.raises(ConfigError): resolve({"run": {"mode": "forward"}, "geometry": {"nx": 4, "ny": 4, "width": 1.0}})

def testset_small(tmp_path) -> None:
	f = tmp_path / "run.toml"
	f.write_text(SMALL)
	cfg = parse_config(f, ["schedule.V_star=0.4", "run.output=results", "materials.beta=2.5"])
	assert cfg.schedule.V_star == 0.4 and cfg.run.output == "results"
	p = cfg.problem()
	assert p.mats.beta == 2.5 and p.mesh.n_elems == 16
	assert cfg.design_mask(p.mesh).sum() == 4
	assert "newton.rel_tol" in cfg.defaults and "geometry.nx" not in cfg.defaults
	assert cfg.assumed == []
	prov = provenance(cfg)
	assert prov["config"]["schedule"]["V_star"] == 0.4 and "version" in prov

def testset_bad_regions() -> None:
	raw = {"run": {"mode": "forward", "preset": "heatsink"}}
	with pytest.raises(ConfigError):
		resolve(merge(raw, {"geometry": {"boundaries": [{"side": "bottom", "lo": 0.0, "hi": 9.0, "kind": "flux_T"}]}}))
	with pytest.raises(ConfigError):
		resolve(merge(raw, {"geometry": {"design_box": [0.0, 9.0, 0.0, 1.0]}}))
	with pytest.raises(ConfigError):
		resolve(merge(raw, {"materials": {"inv_mubar_f": 0.0}}))

def testset_overrides() -> None:
	raw = apply_overrides({"run": {"mode": "forward"}}, ["run.gr=3200", "schedule.p_k_seq=[2.0, 16.0]", "run.preset=heatsink"])
	assert raw == {"run": {"mode": "forward", "gr": 3200, "preset": "heatsink"}, "schedule": {"p_k_seq": [2.0, 16.0]}}
	for bad in ("gr=1", "run.gr", "nosuch.key=1", "run.a.b=1"):
		with pytest.raises(ConfigError): apply_overrides({}, [bad])
	assert merge({"a": {"b": 1, "c": [1]}}, {"a": {"c": [2]}}) == {"a": {"b": 1, "c": [2]}}

### natconv command line for Python v3.11+

"""
Reduced-order natural-convection topology optimization.

	python natconv_app.py optimize run.toml --set run.gr=3200
	python natconv_app.py cross-check --set run.preset=cavity
	python natconv_app.py report -o out
"""

import logging
import sys
import time
from argparse import ArgumentParser, Namespace
from collections.abc import Iterator
from contextlib import contextmanager

import numpy
from numpy import ndarray

from natconv import (
	DesignField, NatConvError, Path, Problem, RunConfig, SetupError, cross_check, dump_json, evaluate, export_snapshot, field_figure,
	format_cost, heat_balance, import_csv, parse_config, parse_json, provenance, read_reference, read_reports,
	report_cost, run_optimization, run_simplified_optimization, staged, sweep_mubar,
	take_snapshot, threshold_design, write, write_figure, write_history, write_reports,
)
from natconv.io import FieldSnapshot
from natconv.newton import SolveReport
from natconv.physics import State
from natconv.topopt import FINAL_P_K, FINAL_P_MUBAR

log = logging.getLogger("natconv")

VERBS = ("optimize", "forward", "cross-check", "calibrate", "simplified", "report")

class Timer:
	def __init__(self) -> None:
		self.phases: dict[str, float] = {}

	@contextmanager
	def __call__(self, phase: str) -> Iterator[None]:
		t0 = time.perf_counter()
		try: yield
		finally: self.phases[phase] = self.phases.get(phase, 0.0) + time.perf_counter() - t0

def history_name(cfg: RunConfig, tag: str) -> Path:
	return cfg.output / f"history_{tag}.jsonl{'.zst' if cfg.run.zstd else ''}"

def gr_tag(gr: float | None) -> str:
	return "gr" if gr is None else f"gr{gr:g}"

def save_outputs(cfg: RunConfig, tag: str, snap: FieldSnapshot, problem: Problem, reports: list[SolveReport], timer: Timer) -> None:
	mesh = problem.mesh
	export_snapshot(cfg.output / f"design_{tag}", mesh, snap, "vtk")
	export_snapshot(cfg.output / f"design_{tag}", mesh, snap, "csv")
	write_figure(cfg.output / f"design_{tag}.html", field_figure(mesh, snap))
	write_reports(cfg.output / f"reports_{tag}.json", reports)
	solid, frac = threshold_design(snap.gamma_tilde, cfg.run.cutoff)
	log.info(f"{tag}: thresholded at {cfg.run.cutoff:g}, solid volume fraction {frac:.4f} ({int(solid.sum())} elements)")
	print(format_cost(report_cost(reports, mesh.n_nodes, timer.phases)))

def log_heat_balance(problem: Problem, state: State, rho: ndarray) -> None:
	heat_in, heat_out = heat_balance(problem, state, rho)
	rel = abs(heat_in - heat_out) / heat_in if heat_in else 0.0
	log.info(f"heat balance: in {heat_in:.6e}, out {heat_out:.6e}, relative mismatch {rel:.2e}")

def optimize_one(cfg: RunConfig, gr: float | None, timer: Timer) -> ndarray:
	problem = cfg.problem(gr)
	filt = cfg.density_filter(problem.mesh)
	sched = cfg.optimization_schedule()
	with timer("optimize"):
		res = run_optimization(problem, filt, sched, cfg.gamma0(filt.n_design), cfg.newton_config(), cfg.ramp_config())
	tag = gr_tag(gr)
	write_history(history_name(cfg, tag), res.history)
	final = staged(problem, sched, res.stage)
	log_heat_balance(final, res.state, res.design.gamma_tilde)
	snap = take_snapshot(final, res.state, filt, res.design, len(res.history), res.objective,
		res.volume_fraction - sched.V_star)
	print(f"{tag}: psi = {res.objective:.6e}, dT_max = {snap.dT_max:.6e}, stage {res.stage}, {len(res.history)} iterations")
	save_outputs(cfg, tag, snap, final, res.reports, timer)
	return res.design.gamma_tilde

def run_optimize(cfg: RunConfig, timer: Timer) -> None:
	optimize_one(cfg, cfg.run.gr, timer)

def run_forward(cfg: RunConfig, timer: Timer) -> None:
	problem = cfg.problem().with_mats(p_k=FINAL_P_K, p_mubar=FINAL_P_MUBAR)
	filt = cfg.density_filter(problem.mesh)
	if cfg.run.designs:
		rho = import_csv(cfg.run.designs[0]).gamma_tilde
		gamma = rho[filt.design]
	else:
		gamma = numpy.full(filt.n_design, cfg.run.initial if cfg.run.initial is not None else cfg.schedule.V_star)
		rho = filt(gamma)
	with timer("forward"):
		state, psi, rep = evaluate(problem, rho, None, cfg.newton_config(), cfg.ramp_config())
	log_heat_balance(problem, state, rho)
	snap = take_snapshot(problem, state, filt, DesignField(gamma, rho, filt.r_min), 0, psi, float("nan"))
	print(f"forward: psi = {psi:.6e}, dT_max = {snap.dT_max:.6e}, {rep.iterations} Newton iterations")
	save_outputs(cfg, "forward", snap, problem, [rep], timer)

def run_cross_check(cfg: RunConfig, timer: Timer) -> None:
	grs = cfg.run.grs or ([cfg.run.gr] if cfg.run.gr is not None else [])
	if not grs:
		raise SetupError("cross-check needs run.grs")
	if cfg.run.designs:
		if len(cfg.run.designs) != len(grs):
			raise SetupError(f"{len(cfg.run.designs)} designs for {len(grs)} conditions")
		designs = [import_csv(f).gamma_tilde for f in cfg.run.designs]
	else:
		designs = [optimize_one(cfg, gr, timer) for gr in grs]
	with timer("cross-check"):
		cc = cross_check(designs, [cfg.problem(gr) for gr in grs], cfg.newton_config(), cfg.ramp_config())
	table = cc.depth_scaled() if cfg.run.preset == "heatsink" else cc.psi
	print("design \\ Gr " + " ".join(f"{gr:>12g}" for gr in grs))
	for gr, row in zip(grs, table):
		print(f"{gr:>11g} " + " ".join(f"{x:>12.4e}" for x in row))
	if not (ok := cc.dominance()):
		log.warning("cross-check dominance does not hold: some design is beaten under its own condition")
	write(cfg.output / "cross_check.json", dump_json({
		"grs": grs, "psi": cc.psi.tolist(), "dT_max": cc.dT_max.tolist(), "table": table.tolist(), "dominance": ok,
	}))

def run_calibrate(cfg: RunConfig, timer: Timer) -> None:
	c = cfg.calibration
	if c.reference is None:
		raise SetupError("calibration.reference is required for calibrate")
	problem = cfg.problem()
	rho = cfg.design_mask(problem.mesh).astype(float) if c.all_solid else numpy.zeros(problem.mesh.n_elems)
	ref = read_reference(c.reference)
	with timer("calibrate"):
		res = sweep_mubar(problem.with_mats(p_k=FINAL_P_K, p_mubar=FINAL_P_MUBAR), ref, c.lo, c.hi, c.step, rho,
			cfg.newton_config(), cfg.ramp_config(), cfg.run.threads)
	write(cfg.output / "sweep.csv", res.to_csv())
	flags = [k for k, v in (("boundary", res.boundary), ("non-unique", res.non_unique)) if v]
	print(f"calibrated 1/mubar_f = {res.argmin:g}" + (f" ({', '.join(flags)})" if flags else ""))

def run_simplified(cfg: RunConfig, timer: Timer) -> None:
	sp = cfg.simplified_problem()
	cont = cfg.filter_continuation()
	filt = cfg.density_filter(sp.mesh)
	with timer("simplified"):
		res = run_simplified_optimization(sp, filt, cont, cfg.gamma0(filt.n_design))
	write_history(history_name(cfg, "simplified"), res.history)
	print(f"simplified: psi = {res.objective:.6e}, {len(res.history)} iterations, final r_min {res.design.r_min:g}")
	# reevaluate the design with the reduced-order flow model
	problem = cfg.problem().with_mats(p_k=FINAL_P_K, p_mubar=FINAL_P_MUBAR)
	with timer("reevaluate"):
		state, psi, rep = evaluate(problem, res.design.gamma_tilde, None, cfg.newton_config(), cfg.ramp_config())
	print(f"simplified design under the flow model: psi = {psi:.6e}")
	snap = take_snapshot(problem, state, filt, res.design, len(res.history), psi, res.design.gamma.mean() - cont.V_star)
	save_outputs(cfg, "simplified", snap, problem, [rep], timer)

def run_report(output: Path) -> None:
	prov = parse_json(output / "provenance.json")
	g = prov["config"]["geometry"]
	n_nodes = (g["nx"] + 1) * (g["ny"] + 1)
	timings = parse_json(output / "timings.json") if (output / "timings.json").is_file() else {}
	for f in sorted(output.glob("reports_*.json")):
		print(f"== {f.stem.removeprefix('reports_')}")
		print(format_cost(report_cost(read_reports(f), n_nodes, timings)))

RUNNERS = {
	"optimize": run_optimize, "forward": run_forward, "cross-check": run_cross_check,
	"calibrate": run_calibrate, "simplified": run_simplified,
}

def parse_args(argv: list[str] | None = None) -> Namespace:
	ap = ArgumentParser(prog="natconv", description=__doc__.splitlines()[1])
	ap.add_argument("verb", choices=VERBS)
	ap.add_argument("config", nargs="?", help="TOML run file")
	ap.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config key")
	ap.add_argument("-o", "--output", help="output directory (run.output)")
	ap.add_argument("-v", "--verbose", action="count", default=0)
	return ap.parse_args(argv)

def main(argv: list[str] | None = None) -> int:
	args = parse_args(argv)
	logging.basicConfig(format="%(levelname)s %(name)s: %(message)s",
		level=logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG)
	try:
		if args.verb == "report":
			run_report(Path(args.output or "out"))
			return 0
		overrides = [*args.set, f"run.mode={args.verb}"] + ([f"run.output={args.output!r}"] if args.output else [])
		cfg = parse_config(args.config, overrides)
		cfg.output.mkdir(parents=True, exist_ok=True)
		write(cfg.output / "provenance.json", dump_json(provenance(cfg)))
		timer = Timer()
		RUNNERS[cfg.run.mode](cfg, timer)
		write(cfg.output / "timings.json", dump_json(timer.phases))
	except NatConvError as e:
		log.error(f"{type(e).__name__}: {e}")
		return 1
	except OSError as e:
		log.error(f"{e}")
		return 1
	return 0

if __name__ == "__main__":
	sys.exit(main())

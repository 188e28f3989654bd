"""
Generate a reference temperature field with this solver, for round-trip calibration.

	python make_reference.py ref.fits.zst --set run.preset=cavity --inv-mubar 0.15
"""

import logging
import sys
from argparse import ArgumentParser

import numpy

from natconv import NatConvError, ReferenceField, parse_config, solve_with_retry, write_reference
from natconv.topopt import FINAL_P_K, FINAL_P_MUBAR

log = logging.getLogger("natconv")

def main(argv: list[str] | None = None) -> int:
	ap = ArgumentParser(description=__doc__.splitlines()[1])
	ap.add_argument("output", help="reference file (.fits, .csv, optionally .zst)")
	ap.add_argument("config", nargs="?", help="TOML run file")
	ap.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
	ap.add_argument("--inv-mubar", type=float, default=None, help="fluid resistance 1/mubar_f (default: config value)")
	ap.add_argument("-v", "--verbose", action="count", default=0)
	args = ap.parse_args(argv)
	logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", level=logging.INFO if args.verbose else logging.WARNING)
	try:
		cfg = parse_config(args.config, [*args.set, "run.mode=calibrate"])
		problem = cfg.problem().with_mats(p_k=FINAL_P_K, p_mubar=FINAL_P_MUBAR)
		if args.inv_mubar is not None:
			problem = problem.with_mats(inv_mubar_f=args.inv_mubar)
		mesh = problem.mesh
		rho = cfg.design_mask(mesh).astype(float) if cfg.calibration.all_solid else numpy.zeros(mesh.n_elems)
		state, rep = solve_with_retry(problem, rho, None, cfg.newton_config(), cfg.ramp_config())
		ref = ReferenceField.from_mesh(mesh, state.t, source=f"natconv 1/mubar_f={problem.mats.inv_mubar_f:g}",
			gr=float(cfg.run.gr or 0.0), geometry=cfg.run.preset or "custom")
		write_reference(args.output, ref)
		print(f"{args.output}: {mesh.n_nodes} nodes, {rep.iterations} Newton iterations, T_max = {state.t.max():.6e}")
	except NatConvError as e:
		log.error(f"{type(e).__name__}: {e}")
		return 1
	return 0

if __name__ == "__main__":
	sys.exit(main())

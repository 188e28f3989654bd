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
Method of Moving Asymptotes for one linear volume constraint, with the dual
solved by bisection on the single multiplier.
"""

import logging
from dataclasses import dataclass, field

import numpy
from numpy import ndarray

from .base import MmaError

log = logging.getLogger(__name__)

ASYMPTOTE_INIT = 0.5
ASYMPTOTE_SHRINK = 0.7
ASYMPTOTE_GROW = 1.2
ASYMPTOTE_MIN = 0.01
ASYMPTOTE_MAX = 10.0
DUAL_TOL = 1e-10

@dataclass
class MmaState:
	"""
	Moving asymptotes and the two previous iterates; `lam` is the last volume multiplier.
	"""
	n: int
	L: ndarray = field(default_factory=lambda: numpy.zeros(0))
	U: ndarray = field(default_factory=lambda: numpy.zeros(0))
	x1: ndarray | None = None
	x2: ndarray | None = None
	iteration: int = 0
	lam: float = 0.0

def _asymptotes(x: ndarray, st: MmaState, lo: float, hi: float) -> None:
	span = hi - lo
	if st.iteration < 2 or st.x1 is None or st.x2 is None:
		st.L = x - ASYMPTOTE_INIT * span
		st.U = x + ASYMPTOTE_INIT * span
		return
	sign = (x - st.x1) * (st.x1 - st.x2)
	s = numpy.where(sign < 0, ASYMPTOTE_SHRINK, numpy.where(sign > 0, ASYMPTOTE_GROW, 1.0))
	L = x - s * (st.x1 - st.L)
	U = x + s * (st.U - st.x1)
	st.L = numpy.clip(L, x - ASYMPTOTE_MAX * span, x - ASYMPTOTE_MIN * span)
	st.U = numpy.clip(U, x + ASYMPTOTE_MIN * span, x + ASYMPTOTE_MAX * span)

def mma_update(x: ndarray, df: ndarray, g: float, dg: ndarray, st: MmaState, move: float = 0.2,
	lo: float = 0.0, hi: float = 1.0) -> ndarray:
	"""
	One MMA step for min f(x) s.t. g(x) ≤ 0 with g linear, returning the new design.
	`st` is advanced in place.
	"""
	x, df, dg = (numpy.asarray(a, dtype=float) for a in (x, df, dg))
	if not (numpy.isfinite(df).all() and numpy.isfinite(dg).all() and numpy.isfinite(g)):
		raise MmaError(f"non-finite sensitivities at MMA iteration {st.iteration}")
	if x.shape != (st.n,) or df.shape != x.shape or dg.shape != x.shape:
		raise MmaError(f"MMA state holds {st.n} variables, got shapes {(x.shape, df.shape, dg.shape)}")
	if not (0 < move <= 1):
		raise MmaError(f"move limit must lie in (0, 1], got {move}")
	_asymptotes(x, st, lo, hi)
	L, U = st.L, st.U
	alpha = numpy.maximum.reduce([numpy.full_like(x, lo), 0.9 * L + 0.1 * x, x - move])
	beta = numpy.minimum.reduce([numpy.full_like(x, hi), 0.9 * U + 0.1 * x, x + move])
	ux, xl = U - x, x - L
	p0 = ux ** 2 * (1.001 * numpy.maximum(df, 0) + 0.001 * numpy.maximum(-df, 0) + 1e-5 / (hi - lo))
	q0 = xl ** 2 * (0.001 * numpy.maximum(df, 0) + 1.001 * numpy.maximum(-df, 0) + 1e-5 / (hi - lo))
	p1 = ux ** 2 * numpy.maximum(dg, 0)
	q1 = xl ** 2 * numpy.maximum(-dg, 0)
	r1 = g - (p1 / ux + q1 / xl).sum()

	def primal(lam: float) -> ndarray:
		a, b = numpy.sqrt(p0 + lam * p1), numpy.sqrt(q0 + lam * q1)
		return numpy.clip((a * L + b * U) / (a + b), alpha, beta)

	def gtilde(lam: float) -> float:
		y = primal(lam)
		return float(r1 + (p1 / (U - y) + q1 / (y - L)).sum())

	lam = 0.0
	if gtilde(0.0) > 0:
		lam_lo, lam_hi = 0.0, 1.0
		while gtilde(lam_hi) > 0:
			lam_lo, lam_hi = lam_hi, 2 * lam_hi
			if lam_hi > 1e20:
				log.warning(f"MMA iteration {st.iteration}: volume constraint not reachable within the move limit, g̃ = {gtilde(lam_hi):.3e}")
				break
		else:
			while lam_hi - lam_lo > DUAL_TOL * (1 + lam_hi):
				mid = 0.5 * (lam_lo + lam_hi)
				if not numpy.isfinite(v := gtilde(mid)):
					raise MmaError(f"dual subproblem diverged at MMA iteration {st.iteration}, λ = {mid:g}")
				if v > 0: lam_lo = mid
				else: lam_hi = mid
		lam = lam_hi
	xnew = primal(lam)
	if not numpy.isfinite(xnew).all():
		raise MmaError(f"non-finite design from the dual at MMA iteration {st.iteration}, λ = {lam:g}")
	st.x2, st.x1 = st.x1, x.copy()
	st.iteration += 1
	st.lam = lam
	return xnew

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

import json as JSON
from builtins import isinstance as isa
from pathlib import Path
from typing import Any, TypeVar

from pyzstd import open as ZSTD

T = TypeVar("T")

class NatConvError(Exception):
	pass

class SetupError(NatConvError, ValueError):
	pass

class ConfigError(SetupError):
	pass

class AssemblyError(NatConvError, ValueError):
	pass

class SolverError(NatConvError, RuntimeError):
	pass

class NonConvergenceError(SolverError):
	"""
	Raised when Newton exhausts its iteration budget; `state` is the lowest-residual iterate seen.
	"""
	def __init__(self, message: str, state: Any = None, report: Any = None) -> None:
		super().__init__(message)
		self.state = state
		self.report = report

class MmaError(NatConvError, RuntimeError):
	pass

def identity(x: T) -> T:
	return x

def isfile(f: Path | str) -> bool:
	if isa(f, Path):
		return (f).is_file()
	return Path(f).is_file()

def read(f: Path | str) -> bytes:
	"""
	Read a file, transparently decompressing it when the name ends with `.zst`.
	"""
	if str(f).endswith(".zst"):
		with ZSTD(f) as io: return io.read()
	with open(f, "rb") as io:
		return io.read()

def parse_json(x: Path | str | bytes | bytearray):
	if not isa(x, (str, Path)):
		return JSON.loads(x)
	return JSON.loads(read(x))

def write(f: Path | str, x: bytes | str) -> int:
	Path(f).parent.mkdir(parents=True, exist_ok=True)
	if str(f).endswith(".zst"):
		with ZSTD(f, "wb") as io:
			return io.write(x.encode() if isa(x, str) else x)
	if isa(x, bytes):
		with open(f, "wb") as io:
			return io.write(x)
	else:
		with open(f, "wt", newline="") as io:
			return io.write(x)

def dump_json(x: Any) -> str:
	# sorted keys and fixed separators keep output byte-stable across runs
	return JSON.dumps(x, sort_keys=True, separators=(",", ":"), allow_nan=True)

from .base import NonConvergenceError, Path, SolverError, dump_json, identity, isa, isfile, parse_json, read, write


def testset_base() -> None:
	assert identity(1) == 1
	assert isa(1, int)
	assert isfile("natconv/__init__.py")
	assert isfile(Path("natconv/__init__.py"))
	assert parse_json(b"{}") == {}

def testset_write(tmp_path: Path) -> None:
	assert write(tmp_path / "a/.gitignore", b"\n*\n") == 3
	assert write(tmp_path / "a/.gitignore", f"\n*\n") == 3
	assert read(tmp_path / "a/.gitignore") == b"\n*\n"

def testset_zstd(tmp_path: Path) -> None:
	f = tmp_path / "x.json.zst"
	write(f, dump_json({"b": 1, "a": [1.5, 2]}))
	assert read(f) == b'{"a":[1.5,2],"b":1}'
	assert parse_json(f) == {"a": [1.5, 2], "b": 1}

def testset_errors() -> None:
	e = NonConvergenceError("x", state=1, report=2)
	assert isa(e, SolverError) and isa(e, RuntimeError)
	assert (e.state, e.report) == (1, 2)

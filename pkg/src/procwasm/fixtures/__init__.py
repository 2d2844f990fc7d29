"""Guest program fixtures: tiny wasm binaries built from assembler code.

Four programs cover the syscall surface end to end:

- cat: with a path argument, stats the file and copies it to stdout in
  one read and one write call (large transfers exercise shim chunking);
  with no argument, loops copying stdin until EOF.
- pipeline: creates a pipe, spawns /bin/cat on its read end, pushes a
  200,000-byte pattern through it (larger than the pipe ring, so writes
  park), and exits with the child's exit code.
- append_stress: N single-byte appends to one output file.
- matmul: C = A x B over f64 with A = B = identity, dimensions from
  argv, result matrix written to an output file.

Binaries are checked in under data/ with a manifest of sha256 hashes;
`load_fixture` verifies integrity, and the build_* functions reproduce
the exact bytes (asserted in tests).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .. import abi
from ..errors import BadImage
from ..guest_exec.builder import Asm, ModuleBuilder
from ..guest_exec.opcodes import T_F64, T_I32, T_I64

ARGS_BUF = 1024
ARGS_CAP = 512
PATH_BUF = 512
IO_BUF = 65536

CAT_PAGES = 64
CAT_IO_CAP = CAT_PAGES * abi.WASM_PAGE - IO_BUF

PIPELINE_BYTES = 200_000
PIPELINE_PROGRAM = "/bin/cat"

APPEND_DEFAULT_N = 10_000
APPEND_OUT = "/results/append_stress.out"

MATMUL_PAGES = 64
MATMUL_OUT = "/results/matmul.out"
MATMUL_DEFAULT_DIM = 4


def _sys(a: Asm, sc: int, no: int, pushers=()) -> None:
    """Emit a syscall: no, the given i64 pushes, zero-padded to six."""
    a.i32c(no)
    for push in pushers:
        push()
    for _ in range(6 - len(pushers)):
        a.i64c(0)
    a.call(sc)


def _emit_exit(mb: ModuleBuilder, sc: int) -> int:
    """func exit(code: i64): never returns at runtime."""
    a = Asm(params=[("code", T_I64)])
    _sys(a, sc, abi.SYS_EXIT, [lambda: a.get("code")])
    a.op("drop")
    return mb.add_func(a, results=())


def _bail_if_negative(a: Asm, local: str, exit_fn: int, code: int) -> None:
    a.get(local)
    a.i64c(0)
    a.op("i64.lt_s")
    a.if_()
    a.i64c(code)
    a.call(exit_fn)
    a.end()


def _emit_nth_arg(mb: ModuleBuilder, args_base: int) -> int:
    """func nth_arg(idx: i32) -> i64: (ptr << 32) | len of argv[idx]."""
    a = Asm(params=[("idx", T_I32)],
            locals_=[("p", T_I32), ("start", T_I32), ("c", T_I32)])
    a.i32c(args_base).set("p")
    a.block("skipped")
    a.loop("skip")
    a.get("idx").op("i32.eqz").br_if("skipped")
    a.block("adv_done")
    a.loop("adv")
    a.get("p").op("i32.load8_u", 0, 0).set("c")
    a.get("p").i32c(1).op("i32.add").set("p")
    a.get("c").op("i32.eqz").br_if("adv_done")
    a.br("adv")
    a.end()
    a.end()
    a.get("idx").i32c(1).op("i32.sub").set("idx")
    a.br("skip")
    a.end()
    a.end()
    a.get("p").set("start")
    a.block("len_done")
    a.loop("len")
    a.get("p").op("i32.load8_u", 0, 0).op("i32.eqz").br_if("len_done")
    a.get("p").i32c(1).op("i32.add").set("p")
    a.br("len")
    a.end()
    a.end()
    a.get("start").op("i64.extend_i32_u").i64c(32).op("i64.shl")
    a.get("p").get("start").op("i32.sub").op("i64.extend_i32_u")
    a.op("i64.or")
    return mb.add_func(a, results=(T_I64,))


def _emit_atoi(mb: ModuleBuilder) -> int:
    """func atoi(ptr: i32, len: i32) -> i64: unsigned decimal."""
    a = Asm(params=[("ptr", T_I32), ("len", T_I32)],
            locals_=[("i", T_I32), ("acc", T_I64)])
    a.block("done")
    a.loop("l")
    a.get("i").get("len").op("i32.ge_u").br_if("done")
    a.get("acc").i64c(10).op("i64.mul")
    a.get("ptr").get("i").op("i32.add").op("i32.load8_u", 0, 0)
    a.i32c(48).op("i32.sub").op("i64.extend_i32_u")
    a.op("i64.add").set("acc")
    a.get("i").i32c(1).op("i32.add").set("i")
    a.br("l")
    a.end()
    a.end()
    a.get("acc")
    return mb.add_func(a, results=(T_I64,))


def _fetch_args(a: Asm, sc: int) -> None:
    """Emit args_sizes into local rv, then args_get into ARGS_BUF."""
    _sys(a, sc, abi.SYS_ARGS_SIZES)
    a.set("rv")
    _sys(a, sc, abi.SYS_ARGS_GET,
         [lambda: a.i64c(ARGS_BUF), lambda: a.i64c(ARGS_CAP)])
    a.op("drop")


def _argc_gt(a: Asm, n: int) -> None:
    """Push argc > n using the args_sizes value saved in rv."""
    a.get("rv").i64c(32).op("i64.shr_u").i64c(n).op("i64.gt_u")
    a.op("i32.wrap_i64")


def _arg_ptr(a: Asm, pl: str):
    return lambda: a.get(pl).i64c(32).op("i64.shr_u")


def _arg_len(a: Asm, pl: str):
    return lambda: a.get(pl).i64c(0xFFFFFFFF).op("i64.and")


def build_cat() -> bytes:
    mb = ModuleBuilder()
    sc = mb.import_syscall()
    exit_fn = _emit_exit(mb, sc)
    nth_arg = _emit_nth_arg(mb, ARGS_BUF)

    a = Asm(locals_=[("rv", T_I64), ("fd", T_I64), ("size", T_I64),
                     ("pl", T_I64), ("n", T_I64)])
    _fetch_args(a, sc)
    _argc_gt(a, 1)
    a.if_()

    # File mode: stat for the size, then one read and one write.
    a.i32c(1).call(nth_arg).set("pl")
    _sys(a, sc, abi.SYS_STAT,
         [_arg_ptr(a, "pl"), _arg_len(a, "pl"), lambda: a.i64c(0)])
    a.set("rv")
    _bail_if_negative(a, "rv", exit_fn, 1)
    a.i32c(0).i64_load(8).set("size")
    a.get("size").i64c(CAT_IO_CAP).op("i64.gt_u")
    a.if_()
    a.i64c(1).call(exit_fn)
    a.end()
    _sys(a, sc, abi.SYS_OPEN,
         [_arg_ptr(a, "pl"), _arg_len(a, "pl"),
          lambda: a.i64c(abi.O_RDONLY)])
    a.set("fd")
    _bail_if_negative(a, "fd", exit_fn, 1)
    _sys(a, sc, abi.SYS_READ,
         [lambda: a.get("fd"), lambda: a.i64c(IO_BUF),
          lambda: a.get("size")])
    a.set("n")
    _bail_if_negative(a, "n", exit_fn, 1)
    _sys(a, sc, abi.SYS_WRITE,
         [lambda: a.i64c(1), lambda: a.i64c(IO_BUF), lambda: a.get("n")])
    a.set("rv")
    _bail_if_negative(a, "rv", exit_fn, 1)
    _sys(a, sc, abi.SYS_CLOSE, [lambda: a.get("fd")])
    a.op("drop")
    a.i64c(0).call(exit_fn)

    a.else_()

    # Stream mode: copy stdin to stdout until EOF.
    a.loop("pump")
    _sys(a, sc, abi.SYS_READ,
         [lambda: a.i64c(0), lambda: a.i64c(IO_BUF),
          lambda: a.i64c(65536)])
    a.set("n")
    _bail_if_negative(a, "n", exit_fn, 1)
    a.get("n").op("i64.eqz")
    a.if_()
    a.i64c(0).call(exit_fn)
    a.end()
    _sys(a, sc, abi.SYS_WRITE,
         [lambda: a.i64c(1), lambda: a.i64c(IO_BUF), lambda: a.get("n")])
    a.set("rv")
    _bail_if_negative(a, "rv", exit_fn, 1)
    a.br("pump")
    a.end()

    a.end()
    mb.add_func(a, results=(), export="_start")
    mb.memory(CAT_PAGES)
    return mb.build()


def build_pipeline() -> bytes:
    mb = ModuleBuilder()
    sc = mb.import_syscall()
    exit_fn = _emit_exit(mb, sc)
    path = PIPELINE_PROGRAM.encode()

    a = Asm(locals_=[("rv", T_I64), ("rfd", T_I64), ("wfd", T_I64),
                     ("cpid", T_I64), ("p", T_I32)])
    # Fill the buffer with the byte pattern i % 256.
    a.block("filled")
    a.loop("fill")
    a.get("p").i32c(PIPELINE_BYTES).op("i32.ge_u").br_if("filled")
    a.i32c(IO_BUF).get("p").op("i32.add")
    a.get("p")
    a.i32_store8()
    a.get("p").i32c(1).op("i32.add").set("p")
    a.br("fill")
    a.end()
    a.end()

    _sys(a, sc, abi.SYS_PIPE)
    a.set("rv")
    _bail_if_negative(a, "rv", exit_fn, 1)
    a.get("rv").i64c(32).op("i64.shr_u").set("rfd")
    a.get("rv").i64c(0xFFFFFFFF).op("i64.and").set("wfd")

    _sys(a, sc, abi.SYS_SPAWN,
         [lambda: a.i64c(PATH_BUF), lambda: a.i64c(len(path)),
          lambda: a.get("rfd"), lambda: a.i64c(1), lambda: a.i64c(2)])
    a.set("cpid")
    _bail_if_negative(a, "cpid", exit_fn, 1)

    _sys(a, sc, abi.SYS_CLOSE, [lambda: a.get("rfd")])
    a.op("drop")

    _sys(a, sc, abi.SYS_WRITE,
         [lambda: a.get("wfd"), lambda: a.i64c(IO_BUF),
          lambda: a.i64c(PIPELINE_BYTES)])
    a.set("rv")
    a.get("rv").i64c(PIPELINE_BYTES).op("i64.ne")
    a.if_()
    a.i64c(1).call(exit_fn)
    a.end()

    _sys(a, sc, abi.SYS_CLOSE, [lambda: a.get("wfd")])
    a.op("drop")

    _sys(a, sc, abi.SYS_WAITPID, [lambda: a.get("cpid")])
    a.set("rv")
    _bail_if_negative(a, "rv", exit_fn, 1)
    a.get("rv").call(exit_fn)

    mb.add_func(a, results=(), export="_start")
    mb.memory(8)
    mb.data(PATH_BUF, path)
    return mb.build()


def build_append_stress() -> bytes:
    mb = ModuleBuilder()
    sc = mb.import_syscall()
    exit_fn = _emit_exit(mb, sc)
    nth_arg = _emit_nth_arg(mb, ARGS_BUF)
    atoi = _emit_atoi(mb)
    path = APPEND_OUT.encode()
    flags = abi.O_WRONLY | abi.O_CREAT | abi.O_APPEND

    a = Asm(locals_=[("rv", T_I64), ("fd", T_I64), ("n", T_I64),
                     ("pl", T_I64), ("i", T_I64)])
    _fetch_args(a, sc)
    a.i64c(APPEND_DEFAULT_N).set("n")
    _argc_gt(a, 1)
    a.if_()
    a.i32c(1).call(nth_arg).set("pl")
    a.get("pl").i64c(32).op("i64.shr_u").op("i32.wrap_i64")
    a.get("pl").op("i32.wrap_i64")
    a.call(atoi).set("n")
    a.end()

    _sys(a, sc, abi.SYS_OPEN,
         [lambda: a.i64c(PATH_BUF), lambda: a.i64c(len(path)),
          lambda: a.i64c(flags)])
    a.set("fd")
    _bail_if_negative(a, "fd", exit_fn, 1)

    a.block("done")
    a.loop("l")
    a.get("i").get("n").op("i64.ge_u").br_if("done")
    a.i32c(0).get("i").op("i64.store8", 0, 0)
    _sys(a, sc, abi.SYS_WRITE,
         [lambda: a.get("fd"), lambda: a.i64c(0), lambda: a.i64c(1)])
    a.set("rv")
    _bail_if_negative(a, "rv", exit_fn, 1)
    a.get("i").i64c(1).op("i64.add").set("i")
    a.br("l")
    a.end()
    a.end()

    _sys(a, sc, abi.SYS_CLOSE, [lambda: a.get("fd")])
    a.op("drop")
    a.i64c(0).call(exit_fn)

    mb.add_func(a, results=(), export="_start")
    mb.memory(1)
    mb.data(PATH_BUF, path)
    return mb.build()


def build_matmul() -> bytes:
    mb = ModuleBuilder()
    sc = mb.import_syscall()
    exit_fn = _emit_exit(mb, sc)
    nth_arg = _emit_nth_arg(mb, ARGS_BUF)
    atoi = _emit_atoi(mb)
    path = MATMUL_OUT.encode()
    flags = abi.O_WRONLY | abi.O_CREAT | abi.O_TRUNC

    def dim_from_arg(a: Asm, idx: int, local: str) -> None:
        a.i32c(idx).call(nth_arg).set("pl")
        a.get("pl").i64c(32).op("i64.shr_u").op("i32.wrap_i64")
        a.get("pl").op("i32.wrap_i64")
        a.call(atoi).op("i32.wrap_i64").set(local)

    a = Asm(locals_=[
        ("rv", T_I64), ("fd", T_I64), ("pl", T_I64),
        ("ni", T_I32), ("nj", T_I32), ("nk", T_I32),
        ("i", T_I32), ("j", T_I32), ("k", T_I32),
        ("abase", T_I32), ("bbase", T_I32), ("cbase", T_I32),
        ("sum", T_F64),
    ])
    _fetch_args(a, sc)
    a.i32c(MATMUL_DEFAULT_DIM).set("ni")
    a.i32c(MATMUL_DEFAULT_DIM).set("nj")
    a.i32c(MATMUL_DEFAULT_DIM).set("nk")
    _argc_gt(a, 3)
    a.if_()
    dim_from_arg(a, 1, "ni")
    dim_from_arg(a, 2, "nj")
    dim_from_arg(a, 3, "nk")
    a.end()

    a.i32c(IO_BUF).set("abase")
    a.get("abase").get("ni").get("nk").op("i32.mul").i32c(3).op("i32.shl")
    a.op("i32.add").set("bbase")
    a.get("bbase").get("nk").get("nj").op("i32.mul").i32c(3).op("i32.shl")
    a.op("i32.add").set("cbase")
    # Reject dimensions that overflow linear memory.
    a.get("cbase").get("ni").get("nj").op("i32.mul").i32c(3).op("i32.shl")
    a.op("i32.add").op("i64.extend_i32_u")
    a.op("memory.size").op("i64.extend_i32_u").i64c(16).op("i64.shl")
    a.op("i64.gt_u")
    a.if_()
    a.i64c(1).call(exit_fn)
    a.end()

    def identity_fill(base: str, rows: str, cols: str) -> None:
        a.i32c(0).set("i")
        a.block("rows_done")
        a.loop("rows")
        a.get("i").get(rows).op("i32.ge_u").br_if("rows_done")
        a.i32c(0).set("j")
        a.block("cols_done")
        a.loop("cols")
        a.get("j").get(cols).op("i32.ge_u").br_if("cols_done")
        a.get(base)
        a.get("i").get(cols).op("i32.mul").get("j").op("i32.add")
        a.i32c(3).op("i32.shl").op("i32.add")
        a.f64c(1.0)
        a.f64c(0.0)
        a.get("i").get("j").op("i32.eq")
        a.op("select")
        a.f64_store()
        a.get("j").i32c(1).op("i32.add").set("j")
        a.br("cols")
        a.end()
        a.end()
        a.get("i").i32c(1).op("i32.add").set("i")
        a.br("rows")
        a.end()
        a.end()

    identity_fill("abase", "ni", "nk")
    identity_fill("bbase", "nk", "nj")

    # C[i][j] = sum over k of A[i][k] * B[k][j]
    a.i32c(0).set("i")
    a.block("i_done")
    a.loop("i_loop")
    a.get("i").get("ni").op("i32.ge_u").br_if("i_done")
    a.i32c(0).set("j")
    a.block("j_done")
    a.loop("j_loop")
    a.get("j").get("nj").op("i32.ge_u").br_if("j_done")
    a.f64c(0.0).set("sum")
    a.i32c(0).set("k")
    a.block("k_done")
    a.loop("k_loop")
    a.get("k").get("nk").op("i32.ge_u").br_if("k_done")
    a.get("sum")
    a.get("abase")
    a.get("i").get("nk").op("i32.mul").get("k").op("i32.add")
    a.i32c(3).op("i32.shl").op("i32.add")
    a.f64_load()
    a.get("bbase")
    a.get("k").get("nj").op("i32.mul").get("j").op("i32.add")
    a.i32c(3).op("i32.shl").op("i32.add")
    a.f64_load()
    a.op("f64.mul")
    a.op("f64.add")
    a.set("sum")
    a.get("k").i32c(1).op("i32.add").set("k")
    a.br("k_loop")
    a.end()
    a.end()
    a.get("cbase")
    a.get("i").get("nj").op("i32.mul").get("j").op("i32.add")
    a.i32c(3).op("i32.shl").op("i32.add")
    a.get("sum")
    a.f64_store()
    a.get("j").i32c(1).op("i32.add").set("j")
    a.br("j_loop")
    a.end()
    a.end()
    a.get("i").i32c(1).op("i32.add").set("i")
    a.br("i_loop")
    a.end()
    a.end()

    _sys(a, sc, abi.SYS_OPEN,
         [lambda: a.i64c(PATH_BUF), lambda: a.i64c(len(path)),
          lambda: a.i64c(flags)])
    a.set("fd")
    _bail_if_negative(a, "fd", exit_fn, 1)
    _sys(a, sc, abi.SYS_WRITE,
         [lambda: a.get("fd"),
          lambda: a.get("cbase").op("i64.extend_i32_u"),
          lambda: (a.get("ni").get("nj").op("i32.mul").i32c(3)
                   .op("i32.shl").op("i64.extend_i32_u"))])
    a.set("rv")
    _bail_if_negative(a, "rv", exit_fn, 1)
    _sys(a, sc, abi.SYS_CLOSE, [lambda: a.get("fd")])
    a.op("drop")
    a.i64c(0).call(exit_fn)

    mb.add_func(a, results=(), export="_start")
    mb.memory(MATMUL_PAGES)
    mb.data(PATH_BUF, path)
    return mb.build()


BUILDERS = {
    "cat": build_cat,
    "pipeline": build_pipeline,
    "append_stress": build_append_stress,
    "matmul": build_matmul,
}


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def manifest_path() -> Path:
    return data_dir() / "manifest.txt"


def manifest_entries() -> list[tuple[str, str, str]]:
    """Parsed manifest lines: (name, relative wasm path, sha256 hex)."""
    entries = []
    for line in manifest_path().read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        name, rel, digest = line.split(" ")
        entries.append((name, rel, digest))
    return entries


def fixture_names() -> list[str]:
    return [name for name, _, _ in manifest_entries()]


def load_fixture(name: str) -> bytes:
    """Read a checked-in fixture, verifying its manifest hash."""
    for entry_name, rel, digest in manifest_entries():
        if entry_name != name:
            continue
        raw = (data_dir() / rel).read_bytes()
        actual = hashlib.sha256(raw).hexdigest()
        if actual != digest:
            raise BadImage(
                f"fixture {name!r} hash mismatch: {actual} != {digest}")
        return raw
    raise BadImage(f"unknown fixture {name!r}")


def fixture_image(prefix: str = "/bin") -> dict[str, bytes]:
    """All fixtures as a vfs overlay mapping, e.g. /bin/cat -> bytes."""
    return {f"{prefix}/{name}": load_fixture(name)
            for name in fixture_names()}


def write_fixture_data() -> list[tuple[str, str, str]]:
    """Rebuild data/*.wasm and the manifest from the builders."""
    out = data_dir()
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(BUILDERS):
        raw = BUILDERS[name]()
        rel = f"{name}.wasm"
        (out / rel).write_bytes(raw)
        entries.append((name, rel, hashlib.sha256(raw).hexdigest()))
    manifest_path().write_text(
        "".join(f"{n} {r} {d}\n" for n, r, d in entries))
    return entries

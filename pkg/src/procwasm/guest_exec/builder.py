"""Programmatic module assembler.

Produces binary modules for the checked-in fixtures and for tests,
without an external toolchain. `Asm` emits one function body with
named locals and named block/loop labels; `ModuleBuilder` assembles
bodies, imports, memory, globals, exports and data segments into a
complete binary.
"""

from __future__ import annotations

import struct

from .opcodes import (
    IMM_BLOCK,
    IMM_BR_TABLE,
    IMM_DEPTH,
    IMM_F64,
    IMM_I32,
    IMM_I64,
    IMM_INDEX,
    IMM_MEMARG,
    IMM_NONE,
    IMM_ZERO,
    KIND_FUNC,
    KIND_MEMORY,
    SEC_CODE,
    SEC_DATA,
    SEC_EXPORT,
    SEC_FUNCTION,
    SEC_GLOBAL,
    SEC_IMPORT,
    SEC_MEMORY,
    SEC_TYPE,
    T_F64,
    T_I32,
    T_I64,
    VOID,
    WASM_OPS,
)

I32, I64, F64 = T_I32, T_I64, T_F64


def uleb(n: int) -> bytes:
    if n < 0:
        raise ValueError("uleb of negative value")
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def sleb(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if (n == 0 and not b & 0x40) or (n == -1 and b & 0x40):
            out.append(b)
            return bytes(out)
        out.append(b | 0x80)


class Asm:
    """One function body: named locals, named control labels.

    Block-structured methods push/pop a label stack so branches can
    name their target instead of counting depths by hand.
    """

    def __init__(self, params: list[tuple[str, int]] = (),
                 locals_: list[tuple[str, int]] = ()):
        self.params = list(params)
        self.locals = list(locals_)
        self.buf = bytearray()
        self._labels: list[str | None] = []
        names = [n for n, _ in self.params] + [n for n, _ in self.locals]
        if len(set(names)) != len(names):
            raise ValueError("duplicate local name")
        self._local_index = {n: i for i, n in enumerate(names)}

    # -- generic --------------------------------------------------------

    def op(self, name: str, *imm) -> "Asm":
        byte, kind = WASM_OPS[name]
        self.buf.append(byte)
        if kind == IMM_NONE:
            pass
        elif kind == IMM_BLOCK:
            self.buf.append(VOID)
        elif kind == IMM_DEPTH or kind == IMM_INDEX:
            self.buf += uleb(imm[0])
        elif kind == IMM_MEMARG:
            align, offset = imm if imm else (0, 0)
            self.buf += uleb(align) + uleb(offset)
        elif kind == IMM_I32:
            v = imm[0] & 0xFFFFFFFF if imm[0] >= 0 else imm[0]
            if v >= 1 << 31:
                v -= 1 << 32
            self.buf += sleb(v)
        elif kind == IMM_I64:
            v = imm[0] & 0xFFFFFFFFFFFFFFFF if imm[0] >= 0 else imm[0]
            if v >= 1 << 63:
                v -= 1 << 64
            self.buf += sleb(v)
        elif kind == IMM_F64:
            self.buf += struct.pack("<d", imm[0])
        elif kind == IMM_ZERO:
            self.buf.append(0)
        elif kind == IMM_BR_TABLE:
            targets, default = imm
            self.buf += uleb(len(targets))
            for t in targets:
                self.buf += uleb(t)
            self.buf += uleb(default)
        return self

    # -- constants and locals --------------------------------------------

    def i32c(self, v: int) -> "Asm":
        return self.op("i32.const", v)

    def i64c(self, v: int) -> "Asm":
        return self.op("i64.const", v)

    def f64c(self, v: float) -> "Asm":
        return self.op("f64.const", v)

    def _local(self, name) -> int:
        if isinstance(name, int):
            return name
        return self._local_index[name]

    def get(self, name) -> "Asm":
        return self.op("local.get", self._local(name))

    def set(self, name) -> "Asm":
        return self.op("local.set", self._local(name))

    def tee(self, name) -> "Asm":
        return self.op("local.tee", self._local(name))

    # -- control ---------------------------------------------------------

    def block(self, label: str | None = None) -> "Asm":
        self._labels.append(label)
        return self.op("block")

    def loop(self, label: str | None = None) -> "Asm":
        self._labels.append(label)
        return self.op("loop")

    def if_(self, label: str | None = None) -> "Asm":
        self._labels.append(label)
        return self.op("if")

    def else_(self) -> "Asm":
        return self.op("else")

    def end(self) -> "Asm":
        self._labels.pop()
        return self.op("end")

    def _depth(self, target) -> int:
        if isinstance(target, int):
            return target
        for d, label in enumerate(reversed(self._labels)):
            if label == target:
                return d
        raise ValueError(f"unknown label {target!r}")

    def br(self, target) -> "Asm":
        return self.op("br", self._depth(target))

    def br_if(self, target) -> "Asm":
        return self.op("br_if", self._depth(target))

    def call(self, func_index: int) -> "Asm":
        return self.op("call", func_index)

    def ret(self) -> "Asm":
        return self.op("return")

    # -- memory sugar ------------------------------------------------------

    def i32_load(self, offset: int = 0) -> "Asm":
        return self.op("i32.load", 2, offset)

    def i32_store(self, offset: int = 0) -> "Asm":
        return self.op("i32.store", 2, offset)

    def i64_load(self, offset: int = 0) -> "Asm":
        return self.op("i64.load", 3, offset)

    def i64_store(self, offset: int = 0) -> "Asm":
        return self.op("i64.store", 3, offset)

    def f64_load(self, offset: int = 0) -> "Asm":
        return self.op("f64.load", 3, offset)

    def f64_store(self, offset: int = 0) -> "Asm":
        return self.op("f64.store", 3, offset)

    def i32_load8_u(self, offset: int = 0) -> "Asm":
        return self.op("i32.load8_u", 0, offset)

    def i32_store8(self, offset: int = 0) -> "Asm":
        return self.op("i32.store8", 0, offset)

    def local_decl_bytes(self) -> bytes:
        """Locals vector: consecutive same-type runs compressed."""
        runs: list[tuple[int, int]] = []
        for _, vt in self.locals:
            if runs and runs[-1][1] == vt:
                runs[-1] = (runs[-1][0] + 1, vt)
            else:
                runs.append((1, vt))
        out = uleb(len(runs))
        for count, vt in runs:
            out += uleb(count) + bytes([vt])
        return out


class ModuleBuilder:
    """Assembles Asm bodies into a binary module."""

    def __init__(self):
        self._types: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        self._type_index: dict[tuple, int] = {}
        self._imports: list[tuple[str, str, int]] = []
        self._funcs: list[tuple[int, Asm]] = []
        self._memory: tuple[int, int | None] | None = None
        self._globals: list[tuple[int, bool, bytes]] = []
        self._exports: list[tuple[str, int, int]] = []
        self._data: list[tuple[int, bytes]] = []
        self._funcs_started = False

    def _type(self, params, results) -> int:
        key = (tuple(params), tuple(results))
        if key not in self._type_index:
            self._type_index[key] = len(self._types)
            self._types.append(key)
        return self._type_index[key]

    def import_func(self, module: str, name: str,
                    params=(), results=()) -> int:
        if self._funcs_started:
            raise ValueError("imports must precede function definitions")
        self._imports.append((module, name, self._type(params, results)))
        return len(self._imports) - 1

    def import_syscall(self, namespace: str = "kernel") -> int:
        """The standard host import: syscall(no: i32, a0..a5: i64) -> i64."""
        return self.import_func(
            namespace, "syscall", (I32, I64, I64, I64, I64, I64, I64), (I64,))

    def add_func(self, asm: Asm, results=(), export: str | None = None) -> int:
        self._funcs_started = True
        params = tuple(vt for _, vt in asm.params)
        index = len(self._imports) + len(self._funcs)
        self._funcs.append((self._type(params, results), asm))
        if export is not None:
            self._exports.append((export, KIND_FUNC, index))
        return index

    def memory(self, min_pages: int, max_pages: int | None = None,
               export: str | None = "memory") -> None:
        self._memory = (min_pages, max_pages)
        if export is not None:
            self._exports.append((export, KIND_MEMORY, 0))

    def global_(self, valtype: int, mutable: bool, init) -> int:
        if valtype == T_F64:
            expr = bytes([0x44]) + struct.pack("<d", init) + b"\x0b"
        elif valtype == T_I64:
            expr = bytes([0x42]) + sleb(init) + b"\x0b"
        else:
            expr = bytes([0x41]) + sleb(init) + b"\x0b"
        self._globals.append((valtype, mutable, expr))
        return len(self._globals) - 1

    def data(self, offset: int, payload: bytes) -> None:
        self._data.append((offset, payload))

    def export_func(self, name: str, index: int) -> None:
        self._exports.append((name, KIND_FUNC, index))

    def build(self) -> bytes:
        out = bytearray(b"\x00asm\x01\x00\x00\x00")

        def section(sec_id: int, content: bytes) -> None:
            out.append(sec_id)
            out.extend(uleb(len(content)))
            out.extend(content)

        if self._types:
            body = uleb(len(self._types))
            for params, results in self._types:
                body += b"\x60" + uleb(len(params)) + bytes(params)
                body += uleb(len(results)) + bytes(results)
            section(SEC_TYPE, bytes(body))

        if self._imports:
            body = uleb(len(self._imports))
            for module, name, ti in self._imports:
                menc = module.encode()
                nenc = name.encode()
                body += uleb(len(menc)) + menc + uleb(len(nenc)) + nenc
                body += bytes([KIND_FUNC]) + uleb(ti)
            section(SEC_IMPORT, bytes(body))

        if self._funcs:
            body = uleb(len(self._funcs))
            for ti, _ in self._funcs:
                body += uleb(ti)
            section(SEC_FUNCTION, bytes(body))

        if self._memory is not None:
            lo, hi = self._memory
            if hi is None:
                body = uleb(1) + b"\x00" + uleb(lo)
            else:
                body = uleb(1) + b"\x01" + uleb(lo) + uleb(hi)
            section(SEC_MEMORY, bytes(body))

        if self._globals:
            body = uleb(len(self._globals))
            for vt, mut, expr in self._globals:
                body += bytes([vt, 1 if mut else 0]) + expr
            section(SEC_GLOBAL, bytes(body))

        if self._exports:
            body = uleb(len(self._exports))
            for name, kind, index in self._exports:
                nenc = name.encode()
                body += uleb(len(nenc)) + nenc + bytes([kind]) + uleb(index)
            section(SEC_EXPORT, bytes(body))

        if self._funcs:
            body = uleb(len(self._funcs))
            for _, asm in self._funcs:
                entry = asm.local_decl_bytes() + bytes(asm.buf) + b"\x0b"
                body += uleb(len(entry)) + entry
            section(SEC_CODE, bytes(body))

        if self._data:
            body = uleb(len(self._data))
            for offset, payload in self._data:
                body += b"\x00" + bytes([0x41]) + sleb(offset) + b"\x0b"
                body += uleb(len(payload)) + payload
            section(SEC_DATA, bytes(body))

        return bytes(out)

"""Binary module decoder.

Parses the container format into a ParsedModule: types, imports,
functions, memory, globals, exports, code bodies, and data segments.
Function bodies stay as raw bytes here; the interpreter flattens them
lazily. Every structural violation raises InvalidModule at decode time
so nothing unsupported survives to run time.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from ..errors import InvalidModule
from .opcodes import (
    KIND_FUNC,
    KIND_GLOBAL,
    KIND_MEMORY,
    KIND_TABLE,
    SEC_CODE,
    SEC_CUSTOM,
    SEC_DATA,
    SEC_DATACOUNT,
    SEC_ELEM,
    SEC_EXPORT,
    SEC_FUNCTION,
    SEC_GLOBAL,
    SEC_IMPORT,
    SEC_MEMORY,
    SEC_START,
    SEC_TABLE,
    SEC_TYPE,
    T_F64,
    T_I32,
    T_I64,
    VALTYPE_NAMES,
)

MAGIC = b"\x00asm"
VERSION = b"\x01\x00\x00\x00"

SUPPORTED_VALTYPES = (T_I32, T_I64, T_F64)


class Reader:
    """Cursor over module bytes with LEB128 helpers."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def eof(self) -> bool:
        return self.pos >= len(self.data)

    def byte(self) -> int:
        if self.pos >= len(self.data):
            raise InvalidModule("unexpected end of module")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def bytes(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InvalidModule("unexpected end of module")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                break
            shift += 7
            if shift > 35:
                raise InvalidModule("u32 LEB128 too long")
        if result >= 1 << 32:
            raise InvalidModule("u32 LEB128 out of range")
        return result

    def _sleb(self, bits: int) -> int:
        result = shift = 0
        while True:
            b = self.byte()
            result |= (b & 0x7F) << shift
            shift += 7
            if not b & 0x80:
                if b & 0x40 and shift < bits + 7:
                    result |= -(1 << shift)
                break
            if shift > bits + 7:
                raise InvalidModule("sLEB128 too long")
        lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
        if not lo <= result <= hi:
            raise InvalidModule(f"s{bits} LEB128 out of range")
        return result

    def s32(self) -> int:
        return self._sleb(32)

    def s64(self) -> int:
        return self._sleb(64)

    def f64(self) -> float:
        return struct.unpack("<d", self.bytes(8))[0]

    def name(self) -> str:
        n = self.u32()
        try:
            return self.bytes(n).decode("utf-8")
        except UnicodeDecodeError as e:
            raise InvalidModule(f"bad UTF-8 name: {e}") from None


@dataclass
class FuncType:
    params: tuple[int, ...]
    results: tuple[int, ...]


@dataclass
class Import:
    module: str
    name: str
    kind: int
    type_index: int  # meaningful for functions only


@dataclass
class Export:
    name: str
    kind: int
    index: int


@dataclass
class CodeEntry:
    locals: list[tuple[int, int]]  # (count, valtype) runs
    body: bytes


@dataclass
class ParsedModule:
    types: list[FuncType] = field(default_factory=list)
    imports: list[Import] = field(default_factory=list)
    func_type_indices: list[int] = field(default_factory=list)
    memory: tuple[int, int | None] | None = None  # (min pages, max pages)
    globals: list[tuple[int, bool, int | float]] = field(default_factory=list)
    exports: dict[str, Export] = field(default_factory=dict)
    code: list[CodeEntry] = field(default_factory=list)
    data: list[tuple[int, bytes]] = field(default_factory=list)

    @property
    def import_count(self) -> int:
        return len(self.imports)

    def func_type(self, func_index: int) -> FuncType:
        """Type of a function in the combined (imports first) index space."""
        if func_index < self.import_count:
            return self.types[self.imports[func_index].type_index]
        return self.types[self.func_type_indices[func_index - self.import_count]]


def _read_valtype(r: Reader) -> int:
    t = r.byte()
    if t not in SUPPORTED_VALTYPES:
        raise InvalidModule(
            f"unsupported value type 0x{t:02x} "
            f"({VALTYPE_NAMES.get(t, '?')})")
    return t


def _read_limits(r: Reader) -> tuple[int, int | None]:
    flag = r.byte()
    if flag == 0x00:
        return r.u32(), None
    if flag == 0x01:
        lo = r.u32()
        hi = r.u32()
        return lo, hi
    raise InvalidModule(f"bad limits flag 0x{flag:02x}")


def _read_const_expr(r: Reader) -> int | float:
    """A constant initializer: one const instruction then end."""
    op = r.byte()
    if op == 0x41:
        value: int | float = r.s32() & 0xFFFFFFFF
    elif op == 0x42:
        value = r.s64() & 0xFFFFFFFFFFFFFFFF
    elif op == 0x44:
        value = r.f64()
    else:
        raise InvalidModule(f"unsupported initializer opcode 0x{op:02x}")
    if r.byte() != 0x0B:
        raise InvalidModule("initializer not terminated by end")
    return value


def decode_module(data: bytes) -> ParsedModule:
    """Parse module bytes; raises InvalidModule on anything malformed
    or outside the supported subset."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise InvalidModule("bad magic")
    if data[4:8] != VERSION:
        raise InvalidModule("unsupported binary version")
    r = Reader(data, 8)
    mod = ParsedModule()
    last_section = -1
    while not r.eof():
        sec_id = r.byte()
        size = r.u32()
        body = Reader(r.bytes(size))
        if sec_id != SEC_CUSTOM:
            if sec_id <= last_section:
                raise InvalidModule(f"section {sec_id} out of order")
            last_section = sec_id
        if sec_id == SEC_CUSTOM:
            continue
        elif sec_id == SEC_TYPE:
            for _ in range(body.u32()):
                if body.byte() != 0x60:
                    raise InvalidModule("bad functype tag")
                params = tuple(_read_valtype(body) for _ in range(body.u32()))
                results = tuple(_read_valtype(body) for _ in range(body.u32()))
                if len(results) > 1:
                    raise InvalidModule("multi-value results unsupported")
                mod.types.append(FuncType(params, results))
        elif sec_id == SEC_IMPORT:
            for _ in range(body.u32()):
                module = body.name()
                name = body.name()
                kind = body.byte()
                if kind == KIND_FUNC:
                    ti = body.u32()
                    if ti >= len(mod.types):
                        raise InvalidModule("import type index out of range")
                    mod.imports.append(Import(module, name, kind, ti))
                elif kind in (KIND_TABLE, KIND_MEMORY, KIND_GLOBAL):
                    # Recorded so ABI validation can reject them by policy.
                    if kind == KIND_TABLE:
                        body.byte()
                        _read_limits(body)
                    elif kind == KIND_MEMORY:
                        _read_limits(body)
                    else:
                        body.byte()
                        body.byte()
                    mod.imports.append(Import(module, name, kind, -1))
                else:
                    raise InvalidModule(f"bad import kind 0x{kind:02x}")
        elif sec_id == SEC_FUNCTION:
            for _ in range(body.u32()):
                ti = body.u32()
                if ti >= len(mod.types):
                    raise InvalidModule("function type index out of range")
                mod.func_type_indices.append(ti)
        elif sec_id == SEC_TABLE:
            raise InvalidModule("tables unsupported")
        elif sec_id == SEC_MEMORY:
            count = body.u32()
            if count > 1:
                raise InvalidModule("multiple memories unsupported")
            if count:
                mod.memory = _read_limits(body)
        elif sec_id == SEC_GLOBAL:
            for _ in range(body.u32()):
                vt = _read_valtype(body)
                mut = body.byte()
                if mut not in (0, 1):
                    raise InvalidModule("bad global mutability")
                mod.globals.append((vt, bool(mut), _read_const_expr(body)))
        elif sec_id == SEC_EXPORT:
            for _ in range(body.u32()):
                name = body.name()
                kind = body.byte()
                index = body.u32()
                if name in mod.exports:
                    raise InvalidModule(f"duplicate export {name!r}")
                mod.exports[name] = Export(name, kind, index)
        elif sec_id == SEC_START:
            raise InvalidModule("start sections unsupported")
        elif sec_id == SEC_ELEM:
            raise InvalidModule("element segments unsupported")
        elif sec_id == SEC_CODE:
            for _ in range(body.u32()):
                entry_size = body.u32()
                entry = Reader(body.bytes(entry_size))
                locals_: list[tuple[int, int]] = []
                for _ in range(entry.u32()):
                    count = entry.u32()
                    vt = _read_valtype(entry)
                    locals_.append((count, vt))
                mod.code.append(
                    CodeEntry(locals_, entry.data[entry.pos:]))
        elif sec_id == SEC_DATA:
            for _ in range(body.u32()):
                memidx = body.u32()
                if memidx != 0:
                    raise InvalidModule("data segment memory index must be 0")
                offset = _read_const_expr(body)
                if not isinstance(offset, int):
                    raise InvalidModule("data offset must be an integer")
                mod.data.append((offset, bytes(body.bytes(body.u32()))))
        elif sec_id == SEC_DATACOUNT:
            body.u32()
        else:
            raise InvalidModule(f"unknown section id {sec_id}")
        if not body.eof():
            raise InvalidModule(f"trailing bytes in section {sec_id}")
    if len(mod.code) != len(mod.func_type_indices):
        raise InvalidModule("function and code section counts differ")
    return mod

"""Binary opcode tables for the supported module subset.

The engine covers the integer MVP instruction set plus the handful of
f64 operations the fixtures use. Anything outside this table is
rejected at decode time, never at run time.

`WASM_OPS` maps mnemonic -> (opcode byte, immediate kind); immediate
kinds drive both the decoder and the assembler in builder.py.
"""

from __future__ import annotations

# Value types.
T_I32 = 0x7F
T_I64 = 0x7E
T_F32 = 0x7D
T_F64 = 0x7C
VOID = 0x40

VALTYPE_NAMES = {T_I32: "i32", T_I64: "i64", T_F32: "f32", T_F64: "f64"}

# Section ids.
SEC_CUSTOM = 0
SEC_TYPE = 1
SEC_IMPORT = 2
SEC_FUNCTION = 3
SEC_TABLE = 4
SEC_MEMORY = 5
SEC_GLOBAL = 6
SEC_EXPORT = 7
SEC_START = 8
SEC_ELEM = 9
SEC_CODE = 10
SEC_DATA = 11
SEC_DATACOUNT = 12

# Export kinds.
KIND_FUNC = 0
KIND_TABLE = 1
KIND_MEMORY = 2
KIND_GLOBAL = 3

# Immediate kinds.
IMM_NONE = "none"
IMM_BLOCK = "block"      # blocktype byte (void only in this subset)
IMM_DEPTH = "depth"      # u32 label depth
IMM_BR_TABLE = "brtable"  # vec(u32) + u32
IMM_INDEX = "index"      # u32 function/local/global index
IMM_MEMARG = "memarg"    # u32 align + u32 offset
IMM_I32 = "i32"          # sleb128-32
IMM_I64 = "i64"          # sleb128-64
IMM_F64 = "f64"          # 8 raw bytes
IMM_ZERO = "zero"        # single 0x00 byte (memory.size/grow)

WASM_OPS: dict[str, tuple[int, str]] = {
    "unreachable": (0x00, IMM_NONE),
    "nop": (0x01, IMM_NONE),
    "block": (0x02, IMM_BLOCK),
    "loop": (0x03, IMM_BLOCK),
    "if": (0x04, IMM_BLOCK),
    "else": (0x05, IMM_NONE),
    "end": (0x0B, IMM_NONE),
    "br": (0x0C, IMM_DEPTH),
    "br_if": (0x0D, IMM_DEPTH),
    "br_table": (0x0E, IMM_BR_TABLE),
    "return": (0x0F, IMM_NONE),
    "call": (0x10, IMM_INDEX),
    "drop": (0x1A, IMM_NONE),
    "select": (0x1B, IMM_NONE),
    "local.get": (0x20, IMM_INDEX),
    "local.set": (0x21, IMM_INDEX),
    "local.tee": (0x22, IMM_INDEX),
    "global.get": (0x23, IMM_INDEX),
    "global.set": (0x24, IMM_INDEX),
    "i32.load": (0x28, IMM_MEMARG),
    "i64.load": (0x29, IMM_MEMARG),
    "f64.load": (0x2B, IMM_MEMARG),
    "i32.load8_s": (0x2C, IMM_MEMARG),
    "i32.load8_u": (0x2D, IMM_MEMARG),
    "i32.load16_s": (0x2E, IMM_MEMARG),
    "i32.load16_u": (0x2F, IMM_MEMARG),
    "i64.load8_s": (0x30, IMM_MEMARG),
    "i64.load8_u": (0x31, IMM_MEMARG),
    "i64.load16_s": (0x32, IMM_MEMARG),
    "i64.load16_u": (0x33, IMM_MEMARG),
    "i64.load32_s": (0x34, IMM_MEMARG),
    "i64.load32_u": (0x35, IMM_MEMARG),
    "i32.store": (0x36, IMM_MEMARG),
    "i64.store": (0x37, IMM_MEMARG),
    "f64.store": (0x39, IMM_MEMARG),
    "i32.store8": (0x3A, IMM_MEMARG),
    "i32.store16": (0x3B, IMM_MEMARG),
    "i64.store8": (0x3C, IMM_MEMARG),
    "i64.store16": (0x3D, IMM_MEMARG),
    "i64.store32": (0x3E, IMM_MEMARG),
    "memory.size": (0x3F, IMM_ZERO),
    "memory.grow": (0x40, IMM_ZERO),
    "i32.const": (0x41, IMM_I32),
    "i64.const": (0x42, IMM_I64),
    "f64.const": (0x44, IMM_F64),
    "i32.eqz": (0x45, IMM_NONE),
    "i32.eq": (0x46, IMM_NONE),
    "i32.ne": (0x47, IMM_NONE),
    "i32.lt_s": (0x48, IMM_NONE),
    "i32.lt_u": (0x49, IMM_NONE),
    "i32.gt_s": (0x4A, IMM_NONE),
    "i32.gt_u": (0x4B, IMM_NONE),
    "i32.le_s": (0x4C, IMM_NONE),
    "i32.le_u": (0x4D, IMM_NONE),
    "i32.ge_s": (0x4E, IMM_NONE),
    "i32.ge_u": (0x4F, IMM_NONE),
    "i64.eqz": (0x50, IMM_NONE),
    "i64.eq": (0x51, IMM_NONE),
    "i64.ne": (0x52, IMM_NONE),
    "i64.lt_s": (0x53, IMM_NONE),
    "i64.lt_u": (0x54, IMM_NONE),
    "i64.gt_s": (0x55, IMM_NONE),
    "i64.gt_u": (0x56, IMM_NONE),
    "i64.le_s": (0x57, IMM_NONE),
    "i64.le_u": (0x58, IMM_NONE),
    "i64.ge_s": (0x59, IMM_NONE),
    "i64.ge_u": (0x5A, IMM_NONE),
    "f64.eq": (0x61, IMM_NONE),
    "f64.ne": (0x62, IMM_NONE),
    "f64.lt": (0x63, IMM_NONE),
    "f64.gt": (0x64, IMM_NONE),
    "f64.le": (0x65, IMM_NONE),
    "f64.ge": (0x66, IMM_NONE),
    "i32.clz": (0x67, IMM_NONE),
    "i32.ctz": (0x68, IMM_NONE),
    "i32.popcnt": (0x69, IMM_NONE),
    "i32.add": (0x6A, IMM_NONE),
    "i32.sub": (0x6B, IMM_NONE),
    "i32.mul": (0x6C, IMM_NONE),
    "i32.div_s": (0x6D, IMM_NONE),
    "i32.div_u": (0x6E, IMM_NONE),
    "i32.rem_s": (0x6F, IMM_NONE),
    "i32.rem_u": (0x70, IMM_NONE),
    "i32.and": (0x71, IMM_NONE),
    "i32.or": (0x72, IMM_NONE),
    "i32.xor": (0x73, IMM_NONE),
    "i32.shl": (0x74, IMM_NONE),
    "i32.shr_s": (0x75, IMM_NONE),
    "i32.shr_u": (0x76, IMM_NONE),
    "i32.rotl": (0x77, IMM_NONE),
    "i32.rotr": (0x78, IMM_NONE),
    "i64.clz": (0x79, IMM_NONE),
    "i64.ctz": (0x7A, IMM_NONE),
    "i64.popcnt": (0x7B, IMM_NONE),
    "i64.add": (0x7C, IMM_NONE),
    "i64.sub": (0x7D, IMM_NONE),
    "i64.mul": (0x7E, IMM_NONE),
    "i64.div_s": (0x7F, IMM_NONE),
    "i64.div_u": (0x80, IMM_NONE),
    "i64.rem_s": (0x81, IMM_NONE),
    "i64.rem_u": (0x82, IMM_NONE),
    "i64.and": (0x83, IMM_NONE),
    "i64.or": (0x84, IMM_NONE),
    "i64.xor": (0x85, IMM_NONE),
    "i64.shl": (0x86, IMM_NONE),
    "i64.shr_s": (0x87, IMM_NONE),
    "i64.shr_u": (0x88, IMM_NONE),
    "i64.rotl": (0x89, IMM_NONE),
    "i64.rotr": (0x8A, IMM_NONE),
    "f64.abs": (0x99, IMM_NONE),
    "f64.neg": (0x9A, IMM_NONE),
    "f64.sqrt": (0x9F, IMM_NONE),
    "f64.add": (0xA0, IMM_NONE),
    "f64.sub": (0xA1, IMM_NONE),
    "f64.mul": (0xA2, IMM_NONE),
    "f64.div": (0xA3, IMM_NONE),
    "i32.wrap_i64": (0xA7, IMM_NONE),
    "i32.trunc_f64_s": (0xAA, IMM_NONE),
    "i64.extend_i32_s": (0xAC, IMM_NONE),
    "i64.extend_i32_u": (0xAD, IMM_NONE),
    "f64.convert_i32_s": (0xB7, IMM_NONE),
    "f64.convert_i32_u": (0xB8, IMM_NONE),
    "f64.convert_i64_s": (0xB9, IMM_NONE),
    "i64.reinterpret_f64": (0xBD, IMM_NONE),
    "f64.reinterpret_i64": (0xBF, IMM_NONE),
}

OP_BYTE = {name: byte for name, (byte, _) in WASM_OPS.items()}
BY_BYTE = {byte: (name, imm) for name, (byte, imm) in WASM_OPS.items()}

"""Stack-machine interpreter over pre-flattened function bodies.

Each function body is compiled once into parallel op/arg arrays with
structured control (block/loop/if/br) resolved to absolute jump
targets, so the run loop never scans for labels. The compiler tracks
abstract stack depth and rejects modules whose branches would leave the
stack unbalanced; it does not perform full type checking.

Counting mode increments a per-op counter on every dispatched
instruction; structural opcodes (block, loop, end, else, nop) compile
away and are never counted.
"""

from __future__ import annotations

import math
import struct
from typing import Callable, Optional

from ..errors import InvalidModule, Trap
from .module import ParsedModule, Reader
from .opcodes import BY_BYTE, IMM_MEMARG, KIND_FUNC, T_F64, VOID

M32 = 0xFFFFFFFF
M64 = 0xFFFFFFFFFFFFFFFF
SIGN32 = 0x80000000
SIGN64 = 0x8000000000000000

_pack_d = struct.Struct("<d").pack_into
_unpack_d = struct.Struct("<d").unpack_from

# Internal opcode ids (dense, drive the counter array).
JUMP = 0
BR_IF_TRUE = 1
BR_IF_FALSE = 2
BR_TABLE = 3
RETURN = 4
CALL = 5
CALL_HOST = 6
UNREACHABLE = 7
DROP = 8
SELECT = 9
CONST = 10
LOCAL_GET = 11
LOCAL_SET = 12
LOCAL_TEE = 13
GLOBAL_GET = 14
GLOBAL_SET = 15
I32_LOAD = 16
I64_LOAD = 17
F64_LOAD = 18
I32_LOAD8_S = 19
I32_LOAD8_U = 20
I32_LOAD16_S = 21
I32_LOAD16_U = 22
I64_LOAD8_S = 23
I64_LOAD8_U = 24
I64_LOAD16_S = 25
I64_LOAD16_U = 26
I64_LOAD32_S = 27
I64_LOAD32_U = 28
I32_STORE = 29
I64_STORE = 30
F64_STORE = 31
I32_STORE8 = 32
I32_STORE16 = 33
I64_STORE8 = 34
I64_STORE16 = 35
I64_STORE32 = 36
MEMORY_SIZE = 37
MEMORY_GROW = 38
I32_EQZ = 39
I32_EQ = 40
I32_NE = 41
I32_LT_S = 42
I32_LT_U = 43
I32_GT_S = 44
I32_GT_U = 45
I32_LE_S = 46
I32_LE_U = 47
I32_GE_S = 48
I32_GE_U = 49
I64_EQZ = 50
I64_EQ = 51
I64_NE = 52
I64_LT_S = 53
I64_LT_U = 54
I64_GT_S = 55
I64_GT_U = 56
I64_LE_S = 57
I64_LE_U = 58
I64_GE_S = 59
I64_GE_U = 60
F64_EQ = 61
F64_NE = 62
F64_LT = 63
F64_GT = 64
F64_LE = 65
F64_GE = 66
I32_CLZ = 67
I32_CTZ = 68
I32_POPCNT = 69
I32_ADD = 70
I32_SUB = 71
I32_MUL = 72
I32_DIV_S = 73
I32_DIV_U = 74
I32_REM_S = 75
I32_REM_U = 76
I32_AND = 77
I32_OR = 78
I32_XOR = 79
I32_SHL = 80
I32_SHR_S = 81
I32_SHR_U = 82
I32_ROTL = 83
I32_ROTR = 84
I64_CLZ = 85
I64_CTZ = 86
I64_POPCNT = 87
I64_ADD = 88
I64_SUB = 89
I64_MUL = 90
I64_DIV_S = 91
I64_DIV_U = 92
I64_REM_S = 93
I64_REM_U = 94
I64_AND = 95
I64_OR = 96
I64_XOR = 97
I64_SHL = 98
I64_SHR_S = 99
I64_SHR_U = 100
I64_ROTL = 101
I64_ROTR = 102
F64_ABS = 103
F64_NEG = 104
F64_SQRT = 105
F64_ADD = 106
F64_SUB = 107
F64_MUL = 108
F64_DIV = 109
I32_WRAP_I64 = 110
I32_TRUNC_F64_S = 111
I64_EXTEND_I32_S = 112
I64_EXTEND_I32_U = 113
F64_CONVERT_I32_S = 114
F64_CONVERT_I32_U = 115
F64_CONVERT_I64_S = 116
I64_REINTERPRET_F64 = 117
F64_REINTERPRET_I64 = 118
N_OPS = 119

# Counter categories for the software counter provider.
LOAD_OPS = frozenset({
    I32_LOAD, I64_LOAD, F64_LOAD, I32_LOAD8_S, I32_LOAD8_U, I32_LOAD16_S,
    I32_LOAD16_U, I64_LOAD8_S, I64_LOAD8_U, I64_LOAD16_S, I64_LOAD16_U,
    I64_LOAD32_S, I64_LOAD32_U,
})
STORE_OPS = frozenset({
    I32_STORE, I64_STORE, F64_STORE, I32_STORE8, I32_STORE16, I64_STORE8,
    I64_STORE16, I64_STORE32,
})
BRANCH_OPS = frozenset({
    JUMP, BR_IF_TRUE, BR_IF_FALSE, BR_TABLE, RETURN, CALL, CALL_HOST,
})
COND_BRANCH_OPS = frozenset({BR_IF_TRUE, BR_IF_FALSE, BR_TABLE})

# mnemonic -> (internal op, pops, pushes) for non-control instructions.
SIMPLE_OPS: dict[str, tuple[int, int, int]] = {
    "drop": (DROP, 1, 0),
    "select": (SELECT, 3, 1),
    "local.get": (LOCAL_GET, 0, 1),
    "local.set": (LOCAL_SET, 1, 0),
    "local.tee": (LOCAL_TEE, 1, 1),
    "global.get": (GLOBAL_GET, 0, 1),
    "global.set": (GLOBAL_SET, 1, 0),
    "i32.load": (I32_LOAD, 1, 1),
    "i64.load": (I64_LOAD, 1, 1),
    "f64.load": (F64_LOAD, 1, 1),
    "i32.load8_s": (I32_LOAD8_S, 1, 1),
    "i32.load8_u": (I32_LOAD8_U, 1, 1),
    "i32.load16_s": (I32_LOAD16_S, 1, 1),
    "i32.load16_u": (I32_LOAD16_U, 1, 1),
    "i64.load8_s": (I64_LOAD8_S, 1, 1),
    "i64.load8_u": (I64_LOAD8_U, 1, 1),
    "i64.load16_s": (I64_LOAD16_S, 1, 1),
    "i64.load16_u": (I64_LOAD16_U, 1, 1),
    "i64.load32_s": (I64_LOAD32_S, 1, 1),
    "i64.load32_u": (I64_LOAD32_U, 1, 1),
    "i32.store": (I32_STORE, 2, 0),
    "i64.store": (I64_STORE, 2, 0),
    "f64.store": (F64_STORE, 2, 0),
    "i32.store8": (I32_STORE8, 2, 0),
    "i32.store16": (I32_STORE16, 2, 0),
    "i64.store8": (I64_STORE8, 2, 0),
    "i64.store16": (I64_STORE16, 2, 0),
    "i64.store32": (I64_STORE32, 2, 0),
    "memory.size": (MEMORY_SIZE, 0, 1),
    "memory.grow": (MEMORY_GROW, 1, 1),
    "i32.const": (CONST, 0, 1),
    "i64.const": (CONST, 0, 1),
    "f64.const": (CONST, 0, 1),
    "i32.eqz": (I32_EQZ, 1, 1),
    "i32.eq": (I32_EQ, 2, 1),
    "i32.ne": (I32_NE, 2, 1),
    "i32.lt_s": (I32_LT_S, 2, 1),
    "i32.lt_u": (I32_LT_U, 2, 1),
    "i32.gt_s": (I32_GT_S, 2, 1),
    "i32.gt_u": (I32_GT_U, 2, 1),
    "i32.le_s": (I32_LE_S, 2, 1),
    "i32.le_u": (I32_LE_U, 2, 1),
    "i32.ge_s": (I32_GE_S, 2, 1),
    "i32.ge_u": (I32_GE_U, 2, 1),
    "i64.eqz": (I64_EQZ, 1, 1),
    "i64.eq": (I64_EQ, 2, 1),
    "i64.ne": (I64_NE, 2, 1),
    "i64.lt_s": (I64_LT_S, 2, 1),
    "i64.lt_u": (I64_LT_U, 2, 1),
    "i64.gt_s": (I64_GT_S, 2, 1),
    "i64.gt_u": (I64_GT_U, 2, 1),
    "i64.le_s": (I64_LE_S, 2, 1),
    "i64.le_u": (I64_LE_U, 2, 1),
    "i64.ge_s": (I64_GE_S, 2, 1),
    "i64.ge_u": (I64_GE_U, 2, 1),
    "f64.eq": (F64_EQ, 2, 1),
    "f64.ne": (F64_NE, 2, 1),
    "f64.lt": (F64_LT, 2, 1),
    "f64.gt": (F64_GT, 2, 1),
    "f64.le": (F64_LE, 2, 1),
    "f64.ge": (F64_GE, 2, 1),
    "i32.clz": (I32_CLZ, 1, 1),
    "i32.ctz": (I32_CTZ, 1, 1),
    "i32.popcnt": (I32_POPCNT, 1, 1),
    "i32.add": (I32_ADD, 2, 1),
    "i32.sub": (I32_SUB, 2, 1),
    "i32.mul": (I32_MUL, 2, 1),
    "i32.div_s": (I32_DIV_S, 2, 1),
    "i32.div_u": (I32_DIV_U, 2, 1),
    "i32.rem_s": (I32_REM_S, 2, 1),
    "i32.rem_u": (I32_REM_U, 2, 1),
    "i32.and": (I32_AND, 2, 1),
    "i32.or": (I32_OR, 2, 1),
    "i32.xor": (I32_XOR, 2, 1),
    "i32.shl": (I32_SHL, 2, 1),
    "i32.shr_s": (I32_SHR_S, 2, 1),
    "i32.shr_u": (I32_SHR_U, 2, 1),
    "i32.rotl": (I32_ROTL, 2, 1),
    "i32.rotr": (I32_ROTR, 2, 1),
    "i64.clz": (I64_CLZ, 1, 1),
    "i64.ctz": (I64_CTZ, 1, 1),
    "i64.popcnt": (I64_POPCNT, 1, 1),
    "i64.add": (I64_ADD, 2, 1),
    "i64.sub": (I64_SUB, 2, 1),
    "i64.mul": (I64_MUL, 2, 1),
    "i64.div_s": (I64_DIV_S, 2, 1),
    "i64.div_u": (I64_DIV_U, 2, 1),
    "i64.rem_s": (I64_REM_S, 2, 1),
    "i64.rem_u": (I64_REM_U, 2, 1),
    "i64.and": (I64_AND, 2, 1),
    "i64.or": (I64_OR, 2, 1),
    "i64.xor": (I64_XOR, 2, 1),
    "i64.shl": (I64_SHL, 2, 1),
    "i64.shr_s": (I64_SHR_S, 2, 1),
    "i64.shr_u": (I64_SHR_U, 2, 1),
    "i64.rotl": (I64_ROTL, 2, 1),
    "i64.rotr": (I64_ROTR, 2, 1),
    "f64.abs": (F64_ABS, 1, 1),
    "f64.neg": (F64_NEG, 1, 1),
    "f64.sqrt": (F64_SQRT, 1, 1),
    "f64.add": (F64_ADD, 2, 1),
    "f64.sub": (F64_SUB, 2, 1),
    "f64.mul": (F64_MUL, 2, 1),
    "f64.div": (F64_DIV, 2, 1),
    "i32.wrap_i64": (I32_WRAP_I64, 1, 1),
    "i32.trunc_f64_s": (I32_TRUNC_F64_S, 1, 1),
    "i64.extend_i32_s": (I64_EXTEND_I32_S, 1, 1),
    "i64.extend_i32_u": (I64_EXTEND_I32_U, 1, 1),
    "f64.convert_i32_s": (F64_CONVERT_I32_S, 1, 1),
    "f64.convert_i32_u": (F64_CONVERT_I32_U, 1, 1),
    "f64.convert_i64_s": (F64_CONVERT_I64_S, 1, 1),
    "i64.reinterpret_f64": (I64_REINTERPRET_F64, 1, 1),
    "f64.reinterpret_i64": (F64_REINTERPRET_I64, 1, 1),
}


class CompiledFunc:
    __slots__ = ("ops", "args", "local_init", "n_params", "arity")

    def __init__(self, ops, args, local_init, n_params, arity):
        self.ops = ops
        self.args = args
        self.local_init = local_init
        self.n_params = n_params
        self.arity = arity


class _Frame:
    __slots__ = ("kind", "entry_depth", "start", "end_patches",
                 "false_patch", "else_seen")

    def __init__(self, kind, entry_depth, start=0):
        self.kind = kind
        self.entry_depth = entry_depth
        self.start = start
        # (container list, index) slots awaiting this frame's end pc.
        self.end_patches: list[tuple[list, int]] = []
        self.false_patch: Optional[tuple[list, int]] = None
        self.else_seen = False


def _flatten(mod: ParsedModule, func_index: int,
             host_funcs: list[Callable]) -> CompiledFunc:
    """Compile one function body into jump-resolved op/arg arrays."""
    entry = mod.code[func_index - mod.import_count]
    ftype = mod.func_type(func_index)
    n_params = len(ftype.params)
    arity = len(ftype.results)

    local_init: list[int | float] = []
    n_locals = n_params
    for count, vt in entry.locals:
        local_init.extend([0.0 if vt == T_F64 else 0] * count)
        n_locals += count

    ops: list[int] = []
    args: list = []

    def emit(op: int, arg=None) -> int:
        ops.append(op)
        args.append(arg)
        return len(ops) - 1

    frames = [_Frame("func", 0)]
    depth = 0
    dead = False
    dead_nest = 0
    r = Reader(entry.body)

    def fail(msg: str):
        raise InvalidModule(f"function {func_index}: {msg}")

    def resolve_label(rel: int) -> _Frame:
        if rel >= len(frames):
            fail(f"branch depth {rel} out of range")
        return frames[-1 - rel]

    def check_branch_depth(frame: _Frame, d: int):
        if frame.kind == "func":
            if d < arity:
                fail("return with missing result")
        elif d != frame.entry_depth:
            fail("branch with unbalanced stack")

    while True:
        if r.eof():
            fail("body not terminated by end")
        byte = r.byte()
        looked = BY_BYTE.get(byte)
        if looked is None:
            fail(f"unsupported opcode 0x{byte:02x}")
        name, imm = looked

        # Read immediates regardless of reachability.
        if imm == "block":
            bt = r.byte()
            if bt != VOID:
                fail("non-void block types unsupported")
            arg = None
        elif imm == "depth" or imm == "index":
            arg = r.u32()
        elif imm == "brtable":
            arg = ([r.u32() for _ in range(r.u32())], r.u32())
        elif imm == IMM_MEMARG:
            r.u32()  # alignment hint, ignored
            arg = r.u32()
        elif imm == "i32":
            arg = r.s32() & M32
        elif imm == "i64":
            arg = r.s64() & M64
        elif imm == "f64":
            arg = r.f64()
        elif imm == "zero":
            if r.byte() != 0:
                fail("bad memory instruction immediate")
            arg = None
        else:
            arg = None

        if dead and name not in ("end", "else", "block", "loop", "if"):
            continue

        if name == "block":
            if dead:
                dead_nest += 1
                continue
            frames.append(_Frame("block", depth))
        elif name == "loop":
            if dead:
                dead_nest += 1
                continue
            frames.append(_Frame("loop", depth, start=len(ops)))
        elif name == "if":
            if dead:
                dead_nest += 1
                continue
            depth -= 1
            if depth < frames[-1].entry_depth:
                fail("if condition missing")
            frame = _Frame("if", depth)
            site = emit(BR_IF_FALSE, None)
            frame.false_patch = (args, site)
            frames.append(frame)
        elif name == "else":
            if dead and dead_nest > 0:
                continue
            frame = frames[-1]
            if frame.kind != "if" or frame.else_seen:
                fail("else outside if")
            if not dead:
                if depth != frame.entry_depth:
                    fail("then-arm leaves unbalanced stack")
                site = emit(JUMP, None)
                frame.end_patches.append((args, site))
            container, index = frame.false_patch
            container[index] = len(ops)
            frame.false_patch = None
            frame.else_seen = True
            depth = frame.entry_depth
            dead = False
        elif name == "end":
            if dead and dead_nest > 0:
                dead_nest -= 1
                continue
            frame = frames.pop()
            if not dead and frame.kind != "func":
                if depth != frame.entry_depth:
                    fail("block leaves unbalanced stack")
            if frame.false_patch is not None:
                container, index = frame.false_patch
                container[index] = len(ops)
            for container, index in frame.end_patches:
                container[index] = len(ops)
            if frame.kind == "func":
                if not dead and depth != arity:
                    fail("body leaves unbalanced stack")
                emit(RETURN, arity)
                break
            depth = frame.entry_depth
            dead = False
        elif name == "br":
            target = resolve_label(arg)
            check_branch_depth(target, depth)
            if target.kind == "func":
                emit(RETURN, arity)
            elif target.kind == "loop":
                emit(JUMP, target.start)
            else:
                site = emit(JUMP, None)
                target.end_patches.append((args, site))
            dead = True
            dead_nest = 0
        elif name == "br_if":
            depth -= 1
            if depth < frames[-1].entry_depth:
                fail("br_if condition missing")
            target = resolve_label(arg)
            check_branch_depth(target, depth)
            if target.kind == "func":
                fail("br_if to function label unsupported")
            if target.kind == "loop":
                emit(BR_IF_TRUE, target.start)
            else:
                site = emit(BR_IF_TRUE, None)
                target.end_patches.append((args, site))
        elif name == "br_table":
            rels, default = arg
            depth -= 1
            if depth < frames[-1].entry_depth:
                fail("br_table index missing")
            table: list = []
            for rel in rels + [default]:
                target = resolve_label(rel)
                check_branch_depth(target, depth)
                if target.kind == "func":
                    fail("br_table to function label unsupported")
                if target.kind == "loop":
                    table.append(target.start)
                else:
                    table.append(None)
                    target.end_patches.append((table, len(table) - 1))
            emit(BR_TABLE, table)
            dead = True
            dead_nest = 0
        elif name == "return":
            if not dead and depth < arity:
                fail("return with missing result")
            emit(RETURN, arity)
            dead = True
            dead_nest = 0
        elif name == "unreachable":
            emit(UNREACHABLE)
            dead = True
            dead_nest = 0
        elif name == "call":
            if arg >= mod.import_count + len(mod.func_type_indices):
                fail(f"call to unknown function {arg}")
            ctype = mod.func_type(arg)
            pops, pushes = len(ctype.params), len(ctype.results)
            if depth - pops < frames[-1].entry_depth:
                fail("call with missing arguments")
            depth += pushes - pops
            if arg < mod.import_count:
                emit(CALL_HOST, (host_funcs[arg], pops, pushes))
            else:
                emit(CALL, (arg, pops, pushes))
        elif name == "nop":
            pass
        else:
            entry_op = SIMPLE_OPS.get(name)
            if entry_op is None:
                fail(f"unsupported instruction {name}")
            op, pops, pushes = entry_op
            if name.startswith("local."):
                if arg >= n_locals:
                    fail(f"local index {arg} out of range")
            elif name.startswith("global."):
                if arg >= len(mod.globals):
                    fail(f"global index {arg} out of range")
                if name == "global.set" and not mod.globals[arg][1]:
                    fail(f"global {arg} is immutable")
            if depth - pops < frames[-1].entry_depth:
                fail(f"{name} pops past block entry")
            depth += pushes - pops
            emit(op, arg)

    if not r.eof():
        fail("trailing bytes after body end")
    return CompiledFunc(ops, args, local_init, n_params, arity)


class Interpreter:
    """Executes compiled functions against one linear memory.

    host_funcs maps import index -> callable; calls receive canonical
    unsigned integer values and must return an int (masked to 64 bits)
    or None for void imports.
    """

    def __init__(self, mod: ParsedModule, memory: bytearray,
                 host_funcs: list[Callable]):
        self.mod = mod
        self.memory = memory
        self.globals = [v for _, _, v in mod.globals]
        self.op_counts = [0] * N_OPS
        self.counting = False
        n_internal = len(mod.func_type_indices)
        self.compiled = [
            _flatten(mod, mod.import_count + i, host_funcs)
            for i in range(n_internal)
        ]

    # -- counters -------------------------------------------------------

    def reset_counts(self) -> None:
        self.op_counts = [0] * N_OPS

    def snapshot_counts(self) -> list[int]:
        return list(self.op_counts)

    # -- execution ------------------------------------------------------

    def invoke(self, export_name: str, args: tuple = ()):
        exp = self.mod.exports.get(export_name)
        if exp is None or exp.kind != KIND_FUNC:
            raise InvalidModule(f"no exported function {export_name!r}")
        try:
            return self.call_function(exp.index, list(args))
        except RecursionError:
            raise Trap("call stack exhausted") from None

    def call_function(self, func_index: int, args: list):
        if func_index < self.mod.import_count:
            raise InvalidModule("cannot invoke an imported function")
        return self._run(func_index - self.mod.import_count, args)

    def _run(self, internal_index: int, fargs: list):
        fn = self.compiled[internal_index]
        if len(fargs) != fn.n_params:
            raise Trap(
                f"function expects {fn.n_params} arguments, got {len(fargs)}")
        locals_ = list(fargs)
        locals_.extend(fn.local_init)
        ops = fn.ops
        oargs = fn.args
        mem = self.memory
        memsize = len(mem)
        globals_ = self.globals
        counting = self.counting
        counts = self.op_counts
        stack: list = []
        push = stack.append
        pop = stack.pop
        pc = 0
        while True:
            op = ops[pc]
            arg = oargs[pc]
            if counting:
                counts[op] += 1
            pc += 1
            if op == LOCAL_GET:
                push(locals_[arg])
            elif op == CONST:
                push(arg)
            elif op == I32_ADD:
                b = pop()
                push((pop() + b) & M32)
            elif op == I32_SHL:
                b = pop()
                push((pop() << (b & 31)) & M32)
            elif op == F64_LOAD:
                addr = pop() + arg
                if addr + 8 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(_unpack_d(mem, addr)[0])
            elif op == F64_STORE:
                v = pop()
                addr = pop() + arg
                if addr + 8 > memsize:
                    raise Trap("out-of-bounds memory access")
                _pack_d(mem, addr, v)
            elif op == F64_MUL:
                b = pop()
                push(pop() * b)
            elif op == F64_ADD:
                b = pop()
                push(pop() + b)
            elif op == I32_MUL:
                b = pop()
                push((pop() * b) & M32)
            elif op == LOCAL_SET:
                locals_[arg] = pop()
            elif op == LOCAL_TEE:
                locals_[arg] = stack[-1]
            elif op == BR_IF_TRUE:
                if pop():
                    pc = arg
            elif op == BR_IF_FALSE:
                if not pop():
                    pc = arg
            elif op == JUMP:
                pc = arg
            elif op == I32_LT_U:
                b = pop()
                push(1 if pop() < b else 0)
            elif op == I32_LT_S:
                b = pop()
                a = pop()
                if a >= SIGN32:
                    a -= 0x100000000
                if b >= SIGN32:
                    b -= 0x100000000
                push(1 if a < b else 0)
            elif op == I32_LOAD:
                addr = pop() + arg
                if addr + 4 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(int.from_bytes(mem[addr:addr + 4], "little"))
            elif op == I32_STORE:
                v = pop()
                addr = pop() + arg
                if addr + 4 > memsize:
                    raise Trap("out-of-bounds memory access")
                mem[addr:addr + 4] = v.to_bytes(4, "little")
            elif op == I32_SUB:
                b = pop()
                push((pop() - b) & M32)
            elif op == I32_AND:
                b = pop()
                push(pop() & b)
            elif op == I32_OR:
                b = pop()
                push(pop() | b)
            elif op == I32_EQZ:
                push(1 if pop() == 0 else 0)
            elif op == I32_EQ:
                b = pop()
                push(1 if pop() == b else 0)
            elif op == I32_NE:
                b = pop()
                push(1 if pop() != b else 0)
            elif op == I32_GT_U:
                b = pop()
                push(1 if pop() > b else 0)
            elif op == I32_GE_U:
                b = pop()
                push(1 if pop() >= b else 0)
            elif op == I32_LE_U:
                b = pop()
                push(1 if pop() <= b else 0)
            elif op == I32_GT_S:
                b = pop()
                a = pop()
                if a >= SIGN32:
                    a -= 0x100000000
                if b >= SIGN32:
                    b -= 0x100000000
                push(1 if a > b else 0)
            elif op == I32_LE_S:
                b = pop()
                a = pop()
                if a >= SIGN32:
                    a -= 0x100000000
                if b >= SIGN32:
                    b -= 0x100000000
                push(1 if a <= b else 0)
            elif op == I32_GE_S:
                b = pop()
                a = pop()
                if a >= SIGN32:
                    a -= 0x100000000
                if b >= SIGN32:
                    b -= 0x100000000
                push(1 if a >= b else 0)
            elif op == CALL:
                callee, pops, pushes = arg
                if pops:
                    params = stack[-pops:]
                    del stack[-pops:]
                else:
                    params = []
                result = self._run(callee - self.mod.import_count, params)
                if pushes:
                    push(result)
            elif op == CALL_HOST:
                fn_, pops, pushes = arg
                if pops:
                    params = stack[-pops:]
                    del stack[-pops:]
                else:
                    params = []
                result = fn_(*params)
                if pushes:
                    push(int(result) & M64)
            elif op == RETURN:
                return stack[-1] if arg else None
            elif op == DROP:
                pop()
            elif op == SELECT:
                c = pop()
                b = pop()
                a = pop()
                push(a if c else b)
            elif op == I32_XOR:
                b = pop()
                push(pop() ^ b)
            elif op == I32_SHR_U:
                b = pop()
                push(pop() >> (b & 31))
            elif op == I32_SHR_S:
                b = pop()
                a = pop()
                if a >= SIGN32:
                    a -= 0x100000000
                push((a >> (b & 31)) & M32)
            elif op == I32_ROTL:
                b = pop() & 31
                a = pop()
                push(((a << b) | (a >> (32 - b))) & M32 if b else a)
            elif op == I32_ROTR:
                b = pop() & 31
                a = pop()
                push(((a >> b) | (a << (32 - b))) & M32 if b else a)
            elif op == I32_CLZ:
                a = pop()
                push(32 - a.bit_length())
            elif op == I32_CTZ:
                a = pop()
                push((a & -a).bit_length() - 1 if a else 32)
            elif op == I32_POPCNT:
                push(pop().bit_count())
            elif op == I32_DIV_U:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                push(a // b)
            elif op == I32_REM_U:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                push(a % b)
            elif op == I32_DIV_S:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                if a >= SIGN32:
                    a -= 0x100000000
                if b >= SIGN32:
                    b -= 0x100000000
                q = abs(a) // abs(b)
                if (a < 0) != (b < 0):
                    q = -q
                if q == 0x80000000:
                    raise Trap("integer overflow")
                push(q & M32)
            elif op == I32_REM_S:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                if a >= SIGN32:
                    a -= 0x100000000
                if b >= SIGN32:
                    b -= 0x100000000
                q = abs(a) // abs(b)
                if (a < 0) != (b < 0):
                    q = -q
                push((a - q * b) & M32)
            elif op == I32_LOAD8_U:
                addr = pop() + arg
                if addr + 1 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(mem[addr])
            elif op == I32_LOAD8_S:
                addr = pop() + arg
                if addr + 1 > memsize:
                    raise Trap("out-of-bounds memory access")
                v = mem[addr]
                push((v - 256) & M32 if v >= 128 else v)
            elif op == I32_LOAD16_U:
                addr = pop() + arg
                if addr + 2 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(int.from_bytes(mem[addr:addr + 2], "little"))
            elif op == I32_LOAD16_S:
                addr = pop() + arg
                if addr + 2 > memsize:
                    raise Trap("out-of-bounds memory access")
                v = int.from_bytes(mem[addr:addr + 2], "little")
                push((v - 65536) & M32 if v >= 32768 else v)
            elif op == I32_STORE8:
                v = pop()
                addr = pop() + arg
                if addr + 1 > memsize:
                    raise Trap("out-of-bounds memory access")
                mem[addr] = v & 0xFF
            elif op == I32_STORE16:
                v = pop()
                addr = pop() + arg
                if addr + 2 > memsize:
                    raise Trap("out-of-bounds memory access")
                mem[addr:addr + 2] = (v & 0xFFFF).to_bytes(2, "little")
            elif op == I64_LOAD:
                addr = pop() + arg
                if addr + 8 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(int.from_bytes(mem[addr:addr + 8], "little"))
            elif op == I64_STORE:
                v = pop()
                addr = pop() + arg
                if addr + 8 > memsize:
                    raise Trap("out-of-bounds memory access")
                mem[addr:addr + 8] = v.to_bytes(8, "little")
            elif op == I64_ADD:
                b = pop()
                push((pop() + b) & M64)
            elif op == I64_SUB:
                b = pop()
                push((pop() - b) & M64)
            elif op == I64_MUL:
                b = pop()
                push((pop() * b) & M64)
            elif op == I64_AND:
                b = pop()
                push(pop() & b)
            elif op == I64_OR:
                b = pop()
                push(pop() | b)
            elif op == I64_XOR:
                b = pop()
                push(pop() ^ b)
            elif op == I64_SHL:
                b = pop()
                push((pop() << (b & 63)) & M64)
            elif op == I64_SHR_U:
                b = pop()
                push(pop() >> (b & 63))
            elif op == I64_SHR_S:
                b = pop()
                a = pop()
                if a >= SIGN64:
                    a -= 0x10000000000000000
                push((a >> (b & 63)) & M64)
            elif op == I64_ROTL:
                b = pop() & 63
                a = pop()
                push(((a << b) | (a >> (64 - b))) & M64 if b else a)
            elif op == I64_ROTR:
                b = pop() & 63
                a = pop()
                push(((a >> b) | (a << (64 - b))) & M64 if b else a)
            elif op == I64_CLZ:
                push(64 - pop().bit_length())
            elif op == I64_CTZ:
                a = pop()
                push((a & -a).bit_length() - 1 if a else 64)
            elif op == I64_POPCNT:
                push(pop().bit_count())
            elif op == I64_DIV_U:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                push(a // b)
            elif op == I64_REM_U:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                push(a % b)
            elif op == I64_DIV_S:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                if a >= SIGN64:
                    a -= 0x10000000000000000
                if b >= SIGN64:
                    b -= 0x10000000000000000
                q = abs(a) // abs(b)
                if (a < 0) != (b < 0):
                    q = -q
                if q == SIGN64:
                    raise Trap("integer overflow")
                push(q & M64)
            elif op == I64_REM_S:
                b = pop()
                a = pop()
                if b == 0:
                    raise Trap("integer divide by zero")
                if a >= SIGN64:
                    a -= 0x10000000000000000
                if b >= SIGN64:
                    b -= 0x10000000000000000
                q = abs(a) // abs(b)
                if (a < 0) != (b < 0):
                    q = -q
                push((a - q * b) & M64)
            elif op == I64_EQZ:
                push(1 if pop() == 0 else 0)
            elif op == I64_EQ:
                b = pop()
                push(1 if pop() == b else 0)
            elif op == I64_NE:
                b = pop()
                push(1 if pop() != b else 0)
            elif op == I64_LT_U:
                b = pop()
                push(1 if pop() < b else 0)
            elif op == I64_GT_U:
                b = pop()
                push(1 if pop() > b else 0)
            elif op == I64_LE_U:
                b = pop()
                push(1 if pop() <= b else 0)
            elif op == I64_GE_U:
                b = pop()
                push(1 if pop() >= b else 0)
            elif op == I64_LT_S:
                b = pop()
                a = pop()
                if a >= SIGN64:
                    a -= 0x10000000000000000
                if b >= SIGN64:
                    b -= 0x10000000000000000
                push(1 if a < b else 0)
            elif op == I64_GT_S:
                b = pop()
                a = pop()
                if a >= SIGN64:
                    a -= 0x10000000000000000
                if b >= SIGN64:
                    b -= 0x10000000000000000
                push(1 if a > b else 0)
            elif op == I64_LE_S:
                b = pop()
                a = pop()
                if a >= SIGN64:
                    a -= 0x10000000000000000
                if b >= SIGN64:
                    b -= 0x10000000000000000
                push(1 if a <= b else 0)
            elif op == I64_GE_S:
                b = pop()
                a = pop()
                if a >= SIGN64:
                    a -= 0x10000000000000000
                if b >= SIGN64:
                    b -= 0x10000000000000000
                push(1 if a >= b else 0)
            elif op == I64_LOAD8_U:
                addr = pop() + arg
                if addr + 1 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(mem[addr])
            elif op == I64_LOAD8_S:
                addr = pop() + arg
                if addr + 1 > memsize:
                    raise Trap("out-of-bounds memory access")
                v = mem[addr]
                push((v - 256) & M64 if v >= 128 else v)
            elif op == I64_LOAD16_U:
                addr = pop() + arg
                if addr + 2 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(int.from_bytes(mem[addr:addr + 2], "little"))
            elif op == I64_LOAD16_S:
                addr = pop() + arg
                if addr + 2 > memsize:
                    raise Trap("out-of-bounds memory access")
                v = int.from_bytes(mem[addr:addr + 2], "little")
                push((v - 65536) & M64 if v >= 32768 else v)
            elif op == I64_LOAD32_U:
                addr = pop() + arg
                if addr + 4 > memsize:
                    raise Trap("out-of-bounds memory access")
                push(int.from_bytes(mem[addr:addr + 4], "little"))
            elif op == I64_LOAD32_S:
                addr = pop() + arg
                if addr + 4 > memsize:
                    raise Trap("out-of-bounds memory access")
                v = int.from_bytes(mem[addr:addr + 4], "little")
                push((v - 0x100000000) & M64 if v >= SIGN32 else v)
            elif op == I64_STORE8:
                v = pop()
                addr = pop() + arg
                if addr + 1 > memsize:
                    raise Trap("out-of-bounds memory access")
                mem[addr] = v & 0xFF
            elif op == I64_STORE16:
                v = pop()
                addr = pop() + arg
                if addr + 2 > memsize:
                    raise Trap("out-of-bounds memory access")
                mem[addr:addr + 2] = (v & 0xFFFF).to_bytes(2, "little")
            elif op == I64_STORE32:
                v = pop()
                addr = pop() + arg
                if addr + 4 > memsize:
                    raise Trap("out-of-bounds memory access")
                mem[addr:addr + 4] = (v & M32).to_bytes(4, "little")
            elif op == F64_SUB:
                b = pop()
                push(pop() - b)
            elif op == F64_DIV:
                b = pop()
                a = pop()
                if b == 0.0:
                    if a == 0.0 or a != a:
                        push(math.nan)
                    else:
                        push(math.copysign(math.inf, a) * math.copysign(1.0, b))
                else:
                    push(a / b)
            elif op == F64_ABS:
                push(abs(pop()))
            elif op == F64_NEG:
                push(-pop())
            elif op == F64_SQRT:
                a = pop()
                push(math.nan if a < 0 else math.sqrt(a))
            elif op == F64_EQ:
                b = pop()
                push(1 if pop() == b else 0)
            elif op == F64_NE:
                b = pop()
                push(1 if pop() != b else 0)
            elif op == F64_LT:
                b = pop()
                push(1 if pop() < b else 0)
            elif op == F64_GT:
                b = pop()
                push(1 if pop() > b else 0)
            elif op == F64_LE:
                b = pop()
                push(1 if pop() <= b else 0)
            elif op == F64_GE:
                b = pop()
                push(1 if pop() >= b else 0)
            elif op == I32_WRAP_I64:
                push(pop() & M32)
            elif op == I32_TRUNC_F64_S:
                a = pop()
                if a != a:
                    raise Trap("invalid conversion to integer")
                t = int(a)
                if not -0x80000000 <= t <= 0x7FFFFFFF:
                    raise Trap("integer overflow")
                push(t & M32)
            elif op == I64_EXTEND_I32_S:
                a = pop()
                push((a - 0x100000000) & M64 if a >= SIGN32 else a)
            elif op == I64_EXTEND_I32_U:
                push(pop())
            elif op == F64_CONVERT_I32_S:
                a = pop()
                push(float(a - 0x100000000 if a >= SIGN32 else a))
            elif op == F64_CONVERT_I32_U:
                push(float(pop()))
            elif op == F64_CONVERT_I64_S:
                a = pop()
                push(float(a - 0x10000000000000000 if a >= SIGN64 else a))
            elif op == I64_REINTERPRET_F64:
                push(int.from_bytes(struct.pack("<d", pop()), "little"))
            elif op == F64_REINTERPRET_I64:
                push(struct.unpack("<d", pop().to_bytes(8, "little"))[0])
            elif op == GLOBAL_GET:
                push(globals_[arg])
            elif op == GLOBAL_SET:
                globals_[arg] = pop()
            elif op == MEMORY_SIZE:
                push(memsize // 65536)
            elif op == MEMORY_GROW:
                pop()
                push(M32)  # fixed memory: growth always refused
            elif op == UNREACHABLE:
                raise Trap("unreachable executed")
            elif op == BR_TABLE:
                i = pop()
                pc = arg[i] if i < len(arg) - 1 else arg[-1]
            else:
                raise Trap(f"unknown internal op {op}")

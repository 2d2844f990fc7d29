"""Guest program loading and execution.

A guest is a WebAssembly binary whose only import is the single
`kernel.syscall` function and whose linear memory is exported. Each
instantiated guest owns a private interpreter, a private linear memory,
an auxiliary transfer buffer, and a shim that services its syscalls.

Lifecycle: instantiate_guest builds the instance (state "created"),
run_guest drives the entry export exactly once and leaves the instance
"exited" or "trapped". Wall time covers only the run, never the load.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .. import abi
from ..errors import InvalidModule, OutOfBounds, Trap, UnsupportedImport
from ..transport import AuxBuffer
from .interp import Interpreter
from .module import KIND_FUNC, KIND_MEMORY, ParsedModule, decode_module
from .shim import GuestExit, ProcessShim

__all__ = [
    "GuestModule",
    "ShimConfig",
    "GuestInstance",
    "ExitStatus",
    "GuestExit",
    "instantiate_guest",
    "run_guest",
    "guest_read",
    "guest_write",
]


@dataclass
class GuestModule:
    """A guest binary plus the export names the loader should resolve."""

    module_bytes: bytes
    entry: str = abi.ENTRY_EXPORT
    memory_export: str = abi.MEMORY_EXPORT


@dataclass
class ShimConfig:
    """Per-process runtime knobs."""

    aux_capacity: int = abi.DEFAULT_AUX_CAPACITY
    abi_namespace: str = abi.ABI_NAMESPACE
    # Artificial load cost in milliseconds, for timing-boundary tests.
    instantiate_delay_ms: float = 0.0

    def __post_init__(self):
        if self.instantiate_delay_ms < 0:
            raise ValueError("instantiate_delay_ms must be >= 0")


@dataclass
class ExitStatus:
    """How a guest run ended."""

    kind: str  # "exited" or "trapped"
    code: int | None = None
    reason: str | None = None

    @property
    def exited(self) -> bool:
        return self.kind == "exited"


class GuestInstance:
    """One loaded guest: memory, interpreter, aux buffer, and shim."""

    def __init__(self, module: GuestModule, config: ShimConfig,
                 parsed: ParsedModule, memory: bytearray, aux: AuxBuffer):
        self.module = module
        self.config = config
        self.parsed = parsed
        self.memory = memory
        self.aux = aux
        self.shim = ProcessShim(self)
        self.interp = Interpreter(parsed, memory, self._host_table())
        self.state = "created"
        self.status: ExitStatus | None = None
        self.wall_ms: float | None = None
        self.pid: int | None = None
        self.pre_entry_hooks: list = []
        self.post_exit_hooks: list = []
        # Set by an attached kernel to accept descriptor rebindings.
        self.stdio_hook = None

    def _host_table(self) -> list:
        return [self.shim.syscall] * self.parsed.import_count

    @property
    def memory_size(self) -> int:
        return len(self.memory)


def instantiate_guest(module: GuestModule,
                      config: ShimConfig | None = None) -> GuestInstance:
    """Decode, validate, and load a guest. Does not start it."""
    config = config if config is not None else ShimConfig()
    parsed = decode_module(module.module_bytes)

    for imp in parsed.imports:
        if (imp.kind != KIND_FUNC or imp.module != config.abi_namespace
                or imp.name != abi.SYSCALL_IMPORT):
            raise UnsupportedImport(f"{imp.module}.{imp.name}")
        ftype = parsed.types[imp.type_index]
        want = ((0x7F,) + (0x7E,) * 6, (0x7E,))
        if (tuple(ftype.params), tuple(ftype.results)) != want:
            raise InvalidModule("syscall import has the wrong signature")

    if parsed.memory is None:
        raise InvalidModule("module declares no memory")
    mem_exp = parsed.exports.get(module.memory_export)
    if mem_exp is None or mem_exp.kind != KIND_MEMORY:
        raise InvalidModule(f"missing memory export {module.memory_export!r}")
    entry_exp = parsed.exports.get(module.entry)
    if entry_exp is None or entry_exp.kind != KIND_FUNC:
        raise InvalidModule(f"missing entry export {module.entry!r}")
    entry_type = parsed.func_type(entry_exp.index)
    if entry_type.params or entry_type.results:
        raise InvalidModule("entry function must take and return nothing")

    memory = bytearray(parsed.memory[0] * abi.WASM_PAGE)
    for offset, payload in parsed.data:
        if offset < 0 or offset + len(payload) > len(memory):
            raise InvalidModule("data segment out of range")
        memory[offset:offset + len(payload)] = payload

    aux = AuxBuffer(config.aux_capacity)
    instance = GuestInstance(module, config, parsed, memory, aux)
    if config.instantiate_delay_ms:
        time.sleep(config.instantiate_delay_ms / 1000.0)
    return instance


def run_guest(instance: GuestInstance, argv=(), stdio=None) -> ExitStatus:
    """Run the entry export once and report how it ended."""
    if instance.state != "created":
        raise ValueError(f"guest already {instance.state}")
    instance.shim.argv = [str(a) for a in argv]
    if stdio is not None and instance.stdio_hook is not None:
        instance.stdio_hook(stdio)
    for hook in instance.pre_entry_hooks:
        hook(instance)
    instance.state = "running"
    t0 = time.perf_counter_ns()
    try:
        try:
            instance.interp.invoke(instance.module.entry)
            status = ExitStatus("exited", code=0)
        except GuestExit as exit_:
            status = ExitStatus("exited", code=exit_.code)
        except Trap as trap:
            status = ExitStatus("trapped", reason=trap.reason)
    finally:
        instance.wall_ms = (time.perf_counter_ns() - t0) / 1e6
        for hook in instance.post_exit_hooks:
            hook(instance)
    instance.state = status.kind
    instance.status = status
    return status


def guest_read(instance: GuestInstance, offset: int, length: int) -> bytes:
    """Copy bytes out of guest memory, bounds-checked."""
    if offset < 0 or length < 0 or offset + length > len(instance.memory):
        raise OutOfBounds(
            f"guest read [{offset}, {offset + length}) exceeds memory of "
            f"{len(instance.memory)} bytes")
    return bytes(instance.memory[offset:offset + length])


def guest_write(instance: GuestInstance, offset: int, data: bytes) -> None:
    """Copy bytes into guest memory, bounds-checked."""
    if offset < 0 or offset + len(data) > len(instance.memory):
        raise OutOfBounds(
            f"guest write [{offset}, {offset + len(data)}) exceeds memory "
            f"of {len(instance.memory)} bytes")
    instance.memory[offset:offset + len(data)] = data

"""Unix-like host environment for WebAssembly guests.

Guests talk to an in-memory kernel through a per-process auxiliary
buffer; a harness runs benchmark command files against that kernel,
collects timings and performance counters, and a statistics layer turns
the results into slowdown and counter-ratio reports.
"""

__version__ = "0.1.0"

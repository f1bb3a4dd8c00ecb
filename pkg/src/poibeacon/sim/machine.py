"""A toy 32-bit machine that executes the puppet's routines and records
one TraceEntry per instruction.

The instruction set is just what the puppet needs (mov/load/store/bswap,
byte stores, block reads, add-from-memory). Each instruction lives at a
fixed fake code address, so addresses are stable across runs and across
snapshot restores. Memory is little-endian like x86.
"""
from __future__ import annotations

import copy
from dataclasses import replace
from typing import NamedTuple

from ..dataset import DataClass
from ..trace import MemoryAccess, RegionTable, TraceEntry, TraceFilterConfig, apply_filter

# code regions
UNPACKED_BASE, UNPACKED_END = 0x00A30000, 0x00A40000    # unpacked payload, unnamed
IMAGE_BASE, IMAGE_END = 0x00401000, 0x00410000          # "puppet.exe"
WINSOCK_BASE, WINSOCK_END = 0x71AB0000, 0x71AC0000      # "ws2_32.dll"

CODE_REGIONS = RegionTable([
    (IMAGE_BASE, IMAGE_END, "puppet.exe"),
    (WINSOCK_BASE, WINSOCK_END, "ws2_32.dll"),
])

# data segments: name -> (base, size)
SEGMENTS = {
    "recv": (0x00C10000, 0x1000),
    "queue": (0x00C20000, 0x4000),
    "table": (0x00C30000, 0x1000),
    "cand": (0x0012F000, 0x400),      # stack array of parsed entries
    "sockaddr": (0x0012FE00, 0x10),
    "regpath": (0x0012FC00, 0x80),
    "strbuf": (0x0012FB00, 0x20),
    "state": (0x00C40000, 0x400),
    "scratch": (0x00C50000, 0x400),
    "log": (0x00C60000, 0x4000),
    "secondary": (0x00C70000, 0x100),
    "serial": (0x00C80000, 0x1000),
}
SEG = {name: base for name, (base, _) in SEGMENTS.items()}


class Site(NamedTuple):
    name: str
    role: str                 # "peer" | "decoy" | "os"
    data_class: DataClass | None
    pure: bool


IP, PORT = DataClass.IP, DataClass.PORT

# instruction addresses
SEND_LOAD_IP = 0x00A31010
SEND_BSWAP = 0x00A31014
SEND_STORE_IP = 0x00A31018
SEND_LOAD_PORT = 0x00A31020
SEND_STORE_PORT = 0x00A31024
PARSE_LOAD_IP = 0x00A32010
PARSE_BSWAP = 0x00A32014
PARSE_LOAD_PORT = 0x00A32018
PARSE_STORE_IP = 0x00A3201C
PARSE_STORE_PORT = 0x00A32020
CAND_LOAD_IP = 0x00A32030
CAND_LOAD_PORT = 0x00A32034
MERGE_STORE_IP = 0x00A33010
MERGE_STORE_PORT = 0x00A33014
REG_PREFIX = 0x00A34010
REG_DIGIT = 0x00A34020
REG_TERM = 0x00A34024
REG_HASH = 0x00A34030
SER_LOAD = 0x00A35010
SER_STORE = 0x00A35014
FMT_DIGIT = 0x00A36010
FMT_TERM = 0x00A36014
MEMCPY_LOAD = 0x00401A20
MEMCPY_STORE = 0x00401A24
CKSUM_ADD = 0x00401B10
WS_RECV_COPY = 0x71AB1234

SITES: dict[int, Site] = {
    SEND_LOAD_IP: Site("send.load_ip", "peer", IP, True),
    SEND_BSWAP: Site("send.bswap", "peer", IP, True),
    SEND_STORE_IP: Site("send.store_ip", "peer", IP, True),
    SEND_LOAD_PORT: Site("send.load_port", "peer", PORT, True),
    SEND_STORE_PORT: Site("send.store_port", "peer", PORT, True),
    PARSE_LOAD_IP: Site("parse.load_ip", "peer", IP, True),
    PARSE_BSWAP: Site("parse.bswap", "peer", IP, True),
    PARSE_LOAD_PORT: Site("parse.load_port", "peer", PORT, True),
    PARSE_STORE_IP: Site("parse.store_ip", "peer", IP, True),
    PARSE_STORE_PORT: Site("parse.store_port", "peer", PORT, True),
    CAND_LOAD_IP: Site("merge.load_ip", "peer", IP, True),
    CAND_LOAD_PORT: Site("merge.load_port", "peer", PORT, True),
    MERGE_STORE_IP: Site("merge.store_ip", "peer", IP, True),
    MERGE_STORE_PORT: Site("merge.store_port", "peer", PORT, True),
    REG_PREFIX: Site("registry.prefix", "peer", None, False),
    REG_DIGIT: Site("registry.digit", "peer", IP, True),
    REG_TERM: Site("registry.term", "peer", None, False),
    REG_HASH: Site("registry.hash", "peer", IP, True),
    SER_LOAD: Site("serialize.load", "peer", IP, False),
    SER_STORE: Site("serialize.store", "peer", IP, False),
    FMT_DIGIT: Site("format.digit", "peer", IP, True),
    FMT_TERM: Site("format.term", "peer", None, False),
    MEMCPY_LOAD: Site("memcpy.load", "decoy", None, False),
    MEMCPY_STORE: Site("memcpy.store", "decoy", None, False),
    CKSUM_ADD: Site("checksum.add", "decoy", None, False),
    WS_RECV_COPY: Site("ws2_32.recv", "os", None, False),
}


def _bswap(v: int) -> int:
    return int.from_bytes(v.to_bytes(4, "little"), "big")


class Memory:
    def __init__(self):
        self._segs: list[tuple[int, bytearray]] = [
            (base, bytearray(size)) for base, size in sorted(SEGMENTS.values())
        ]

    def _locate(self, addr: int, n: int) -> tuple[bytearray, int]:
        for base, buf in self._segs:
            if base <= addr and addr + n <= base + len(buf):
                return buf, addr - base
        raise IndexError(f"unmapped access {addr:#x}+{n}")

    def read(self, addr: int, n: int) -> bytes:
        buf, off = self._locate(addr, n)
        return bytes(buf[off:off + n])

    def write(self, addr: int, data: bytes) -> None:
        buf, off = self._locate(addr, len(data))
        buf[off:off + len(data)] = data


class Machine:
    """Registers, memory and a trace recorder. Recording is off until the
    snapshot has been taken; tracer-side filtering is applied when the
    trace is collected."""

    def __init__(self):
        self.mem = Memory()
        self.regs: dict[str, int] = {r: 0 for r in ("eax", "ebx", "ecx", "edx", "esi", "edi")}
        self.recording = False
        self._raw: list[TraceEntry] = []

    def clone(self) -> "Machine":
        return copy.deepcopy(self)

    def _emit(self, pc, regs=(), reads=(), writes=()):
        if self.recording:
            self._raw.append(TraceEntry(
                len(self._raw), pc,
                {r: self.regs[r] for r in regs},
                tuple(MemoryAccess(a, d) for a, d in reads),
                tuple(MemoryAccess(a, d) for a, d in writes),
            ))

    def collect(self, config: TraceFilterConfig) -> list[TraceEntry]:
        """Filtered trace, renumbered 0.. as a trace file would be."""
        kept = apply_filter(self._raw, config, CODE_REGIONS)
        return [replace(e, seq=i) for i, e in enumerate(kept)]

    # instructions

    def mov(self, pc: int, reg: str, value: int) -> None:
        self.regs[reg] = value & 0xFFFFFFFF
        self._emit(pc, (reg,))

    def load(self, pc: int, reg: str, addr: int, width: int = 4, big: bool = False) -> int:
        data = self.mem.read(addr, width)
        self.regs[reg] = int.from_bytes(data, "big" if big else "little")
        self._emit(pc, (reg,), reads=((addr, data),))
        return self.regs[reg]

    def store(self, pc: int, addr: int, reg: str, width: int = 4, big: bool = False) -> None:
        value = self.regs[reg] & ((1 << (8 * width)) - 1)
        data = value.to_bytes(width, "big" if big else "little")
        self.mem.write(addr, data)
        self._emit(pc, (reg,), writes=((addr, data),))

    def bswap(self, pc: int, reg: str) -> None:
        self.regs[reg] = _bswap(self.regs[reg])
        self._emit(pc, (reg,))

    def store_byte(self, pc: int, addr: int, byte: int) -> None:
        data = bytes([byte])
        self.mem.write(addr, data)
        self._emit(pc, writes=((addr, data),))

    def read_block(self, pc: int, reg: str, addr: int, n: int) -> None:
        """One instruction reading n bytes (string compare / hash step);
        the register receives a digest of them."""
        data = self.mem.read(addr, n)
        h = 0x811C9DC5
        for b in data:
            h = ((h ^ b) * 0x01000193) & 0xFFFFFFFF
        self.regs[reg] = h
        self._emit(pc, (reg,), reads=((addr, data),))

    def add_mem(self, pc: int, reg: str, addr: int) -> None:
        data = self.mem.read(addr, 4)
        self.regs[reg] = (self.regs[reg] + int.from_bytes(data, "little")) & 0xFFFFFFFF
        self._emit(pc, (reg,), reads=((addr, data),))

    # untraced host-side helpers (loader, initial state)

    def poke(self, addr: int, data: bytes) -> None:
        self.mem.write(addr, data)

    def peek(self, addr: int, n: int) -> bytes:
        return self.mem.read(addr, n)

    # library routines

    def memcpy(self, dst: int, src: int, n: int) -> None:
        """Word-wise copy through ecx, narrower moves for the tail."""
        for off in range(0, n, 4):
            w = min(4, n - off)
            self.load(MEMCPY_LOAD, "ecx", src + off, width=w)
            self.store(MEMCPY_STORE, dst + off, "ecx", width=w)

    def checksum(self, addr: int, n: int) -> int:
        self.regs["eax"] = 0
        for off in range(0, n - 3, 4):
            self.add_mem(CKSUM_ADD, "eax", addr + off)
        return self.regs["eax"]

    def os_recv(self, dst: int, payload: bytes) -> None:
        """The socket layer copying a datagram into the user buffer."""
        for off in range(0, len(payload), 4):
            chunk = payload[off:off + 4]
            self.mem.write(dst + off, chunk)
            self.regs["edi"] = int.from_bytes(chunk.ljust(4, b"\0"), "little")
            self._emit(WS_RECV_COPY, ("edi",), writes=((dst + off, chunk),))

"""Tracking of written memory: contiguous regions plus per-byte last writers.

Regions are maximal runs of written bytes. A region is identified by its
start address; ``identifier_map`` maps that identifier to the region size.
The per-address ``memory_map`` (address -> region identifier) is derived
from the sorted region list on demand, which is observably the same as
re-keying every absorbed address on each merge.
"""
from __future__ import annotations

import bisect
from typing import Iterator

from .trace import MemoryAccess


class NotTrackedError(KeyError):
    pass


class MemoryTracker:
    def __init__(self):
        self._starts: list[int] = []
        self.identifier_map: dict[int, int] = {}
        self._data: dict[int, bytearray] = {}
        self._writer: dict[int, tuple[int, int]] = {}

    def __len__(self) -> int:
        """Number of tracked bytes."""
        return len(self._writer)

    def _region_index(self, addr: int) -> int:
        i = bisect.bisect_right(self._starts, addr) - 1
        if i >= 0:
            start = self._starts[i]
            if addr < start + self.identifier_map[start]:
                return i
        return -1

    def find_memory_region(self, addr: int) -> tuple[int, int] | None:
        i = self._region_index(addr)
        if i < 0:
            return None
        start = self._starts[i]
        return start, self.identifier_map[start]

    def regions(self) -> list[tuple[int, int]]:
        return [(s, self.identifier_map[s]) for s in self._starts]

    @property
    def memory_map(self) -> dict[int, int]:
        return {a: s for s in self._starts for a in range(s, s + self.identifier_map[s])}

    def record_write(self, insn_addr: int, seq: int, access: MemoryAccess) -> None:
        lo = access.addr
        hi = lo + len(access.data)
        # regions overlapping or abutting [lo, hi); ends are sorted like starts
        j = bisect.bisect_right(self._starts, hi) - 1
        touching = []
        while j >= 0:
            s = self._starts[j]
            if s + self.identifier_map[s] < lo:
                break
            touching.append(j)
            j -= 1

        if len(touching) == 1 and self._starts[touching[0]] <= lo:
            start = self._starts[touching[0]]
            buf = self._data[start]
            if hi > start + len(buf):
                buf.extend(bytes(hi - start - len(buf)))
                self.identifier_map[start] = len(buf)
        else:
            touching.reverse()
            old = [self._starts[k] for k in touching]
            start = min([lo] + old)
            end = max([hi] + [s + self.identifier_map[s] for s in old])
            buf = bytearray(end - start)
            for s in old:
                chunk = self._data.pop(s)
                buf[s - start:s - start + len(chunk)] = chunk
                del self.identifier_map[s]
            if touching:
                del self._starts[touching[0]:touching[-1] + 1]
            bisect.insort(self._starts, start)
            self._data[start] = buf
            self.identifier_map[start] = len(buf)

        buf[lo - start:hi - start] = access.data
        who = (insn_addr, seq)
        for a in range(lo, hi):
            self._writer[a] = who

    def read(self, start: int, end: int) -> bytes:
        """Bytes in [start, end); the range must lie inside one region."""
        i = self._region_index(start)
        if i < 0:
            raise NotTrackedError(start)
        rid = self._starts[i]
        if end > rid + self.identifier_map[rid]:
            raise NotTrackedError(end - 1)
        return bytes(self._data[rid][start - rid:end - rid])

    def value_at(self, addr: int) -> int:
        return self.read(addr, addr + 1)[0]

    def last_writer(self, addr: int) -> tuple[int, int]:
        """(instruction address, trace seq) of the last write to ``addr``."""
        try:
            return self._writer[addr]
        except KeyError:
            raise NotTrackedError(addr) from None

    def shadow(self) -> Iterator[tuple[int, int, int, int]]:
        """(address, byte value, writer instruction, writer seq), address order."""
        for s in self._starts:
            for off, value in enumerate(self._data[s]):
                insn, seq = self._writer[s + off]
                yield s + off, value, insn, seq

    def search_window(self, last_addr: int, size: int) -> tuple[int, int]:
        """The [start, end) window searched for a pattern of ``size`` bytes."""
        region = self.find_memory_region(last_addr)
        if region is None:
            raise NotTrackedError(last_addr)
        rid, rsize = region
        return max(rid, last_addr - size), min(rid + rsize, last_addr + size)

    def search_pattern(self, last_addr: int, pattern: bytes) -> int:
        """Leftmost occurrence of ``pattern`` in the window around the
        last written address, or -1."""
        start, end = self.search_window(last_addr, len(pattern))
        if len(pattern) > end - start:
            return -1
        pos = self.read(start, end).find(pattern)
        return -1 if pos < 0 else start + pos

    def writers_of(self, start: int, length: int) -> list[tuple[int, int]]:
        return [self.last_writer(a) for a in range(start, start + length)]

    def attribute_pattern_bytes(self, start: int, length: int) -> list[int]:
        """Instruction address that last wrote each byte of [start, start+length)."""
        return [insn for insn, _ in self.writers_of(start, length)]

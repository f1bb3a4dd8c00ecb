"""Execution trace model and the JSON Lines trace file format.

One line per executed instruction::

    {"addr":"0x401000","regs":{"eax":"0x0a141e28"},"reads":[{"addr":"0x12ff00","data":"0a141e28"}],"writes":[]}

Register values are 32-bit quantities captured after the instruction
retires; the hex string is the value most-significant byte first.
``seq`` is not stored in the file, the parser numbers entries 0, 1, 2, ...
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping

ADDR_LIMIT = 1 << 32


class TraceFormatError(ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class MemoryAccess:
    addr: int
    data: bytes

    def __post_init__(self):
        if not self.data:
            raise ValueError("memory access must cover at least one byte")
        if self.addr < 0 or self.addr + len(self.data) > ADDR_LIMIT:
            raise ValueError(f"memory access {self.addr:#x}+{len(self.data)} outside address space")


@dataclass(frozen=True)
class TraceEntry:
    seq: int
    addr: int
    regs: Mapping[str, int] = field(default_factory=dict)
    reads: tuple[MemoryAccess, ...] = ()
    writes: tuple[MemoryAccess, ...] = ()

    def reg_bytes(self, name: str) -> bytes:
        return self.regs[name].to_bytes(4, "big")


@dataclass
class TraceFilterConfig:
    """Tracer-side filtering: which code regions are traced and how often."""

    trace_named_regions: bool = True
    named_region_allowlist: frozenset[str] | None = None
    trace_unnamed_regions: bool = True
    max_trace_count: int | None = None

    def __post_init__(self):
        if self.max_trace_count is not None and self.max_trace_count < 1:
            raise ValueError("max_trace_count must be >= 1")
        if self.named_region_allowlist is not None:
            self.named_region_allowlist = frozenset(self.named_region_allowlist)


class RegionTable:
    """Named code regions (module images), sorted, non-overlapping."""

    def __init__(self, regions: Iterable[tuple[int, int, str]] = ()):
        self._regions = sorted(regions)
        self._starts = [r[0] for r in self._regions]
        for (s0, e0, _), (s1, _, _) in zip(self._regions, self._regions[1:]):
            if s1 < e0:
                raise ValueError(f"overlapping regions at {s1:#x}")

    def name_of(self, addr: int) -> str | None:
        i = bisect.bisect_right(self._starts, addr) - 1
        if i >= 0:
            start, end, name = self._regions[i]
            if start <= addr < end:
                return name
        return None

    def __iter__(self):
        return iter(self._regions)


def _parse_int(text, what: str, line_no: int, limit: int = ADDR_LIMIT) -> int:
    if not isinstance(text, str) or not text.lower().startswith("0x"):
        raise TraceFormatError(line_no, f"{what} must be a 0x-prefixed hex string")
    try:
        value = int(text[2:], 16)
    except ValueError:
        raise TraceFormatError(line_no, f"bad hex in {what}: {text!r}") from None
    if value >= limit:
        raise TraceFormatError(line_no, f"{what} out of range: {text}")
    return value


def _parse_accesses(items, what: str, line_no: int) -> tuple[MemoryAccess, ...]:
    if not isinstance(items, list):
        raise TraceFormatError(line_no, f"{what} must be a list")
    out = []
    for item in items:
        if not isinstance(item, dict) or "addr" not in item or "data" not in item:
            raise TraceFormatError(line_no, f"{what} item needs addr and data")
        addr = _parse_int(item["addr"], f"{what} addr", line_no)
        try:
            data = bytes.fromhex(item["data"])
        except (TypeError, ValueError):
            raise TraceFormatError(line_no, f"bad hex data in {what}") from None
        try:
            out.append(MemoryAccess(addr, data))
        except ValueError as exc:
            raise TraceFormatError(line_no, str(exc)) from None
    return tuple(out)


def parse_line(line: str, seq: int, line_no: int | None = None) -> TraceEntry:
    line_no = seq + 1 if line_no is None else line_no
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(line_no, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict) or "addr" not in obj:
        raise TraceFormatError(line_no, "record must be an object with an addr")
    addr = _parse_int(obj["addr"], "addr", line_no)
    regs_obj = obj.get("regs", {})
    if not isinstance(regs_obj, dict):
        raise TraceFormatError(line_no, "regs must be an object")
    regs = {}
    for name, value in regs_obj.items():
        if not isinstance(value, str) or len(value) != 10:
            raise TraceFormatError(line_no, f"register {name} must be 0x + 8 hex digits")
        regs[name] = _parse_int(value, f"register {name}", line_no)
    return TraceEntry(
        seq=seq,
        addr=addr,
        regs=regs,
        reads=_parse_accesses(obj.get("reads", []), "reads", line_no),
        writes=_parse_accesses(obj.get("writes", []), "writes", line_no),
    )


def parse_trace(stream: IO | Iterable) -> Iterator[TraceEntry]:
    """Lazily parse a trace stream (text or binary lines)."""
    seq = 0
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError:
                raise TraceFormatError(line_no, "not valid UTF-8") from None
        if not raw.endswith("\n"):
            raise TraceFormatError(line_no, "truncated final line (missing newline)")
        if not raw.strip():
            raise TraceFormatError(line_no, "blank line")
        yield parse_line(raw, seq, line_no)
        seq += 1


def read_trace(path) -> list[TraceEntry]:
    with open(path, "rb") as fh:
        return list(parse_trace(fh))


def _access_json(acc: MemoryAccess) -> dict:
    return {"addr": f"{acc.addr:#x}", "data": acc.data.hex()}


def format_entry(entry: TraceEntry) -> str:
    obj = {
        "addr": f"{entry.addr:#x}",
        "regs": {name: f"0x{value:08x}" for name, value in entry.regs.items()},
        "reads": [_access_json(a) for a in entry.reads],
        "writes": [_access_json(a) for a in entry.writes],
    }
    return json.dumps(obj, separators=(",", ":")) + "\n"


def write_trace(entries: Iterable[TraceEntry], stream: IO[str]) -> None:
    for entry in entries:
        stream.write(format_entry(entry))


def save_trace(entries: Iterable[TraceEntry], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_trace(entries, fh)


def apply_filter(
    entries: Iterable[TraceEntry],
    config: TraceFilterConfig,
    regions: RegionTable | None = None,
) -> Iterator[TraceEntry]:
    """Drop entries from excluded code regions, then cap each address at
    the first ``max_trace_count`` occurrences. Surviving order and seq
    numbers are preserved."""
    regions = regions or RegionTable()
    counts: dict[int, int] = {}
    cap = config.max_trace_count
    for entry in entries:
        name = regions.name_of(entry.addr)
        if name is None:
            if not config.trace_unnamed_regions:
                continue
        else:
            if not config.trace_named_regions:
                continue
            allow = config.named_region_allowlist
            if allow is not None and name not in allow:
                continue
        if cap is not None:
            n = counts.get(entry.addr, 0)
            if n >= cap:
                continue
            counts[entry.addr] = n + 1
        yield entry

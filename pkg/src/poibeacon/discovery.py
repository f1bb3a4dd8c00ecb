"""Finding POI candidates: instructions that touch known data.

Standalone POIs see a whole 4-byte binary value in one register or memory
access. Contiguous POIs write (or read) the bytes of a longer ASCII
pattern that only becomes complete over several writes; they are found by
replaying writes into a :class:`~poibeacon.memory.MemoryTracker` and
searching around each written byte.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .dataset import DataClass, DataSet, Pattern, ReprKind, decode
from .memory import MemoryTracker
from .trace import TraceEntry


class PoiKind(str, enum.Enum):
    REGISTER = "REGISTER"
    MEMORY_READ = "MEMORY_READ"
    MEMORY_WRITE = "MEMORY_WRITE"
    CONTIGUOUS_WRITE = "CONTIGUOUS_WRITE"
    CONTIGUOUS_READ = "CONTIGUOUS_READ"

    @property
    def is_contiguous(self) -> bool:
        return self in (PoiKind.CONTIGUOUS_WRITE, PoiKind.CONTIGUOUS_READ)


# ("reg", name) | ("read", ordinal, offset) | ("write", ordinal, offset)
Slot = tuple


class PoiKey(NamedTuple):
    addr: int
    kind: PoiKind
    data_class: DataClass

    def __str__(self) -> str:
        return f"{self.addr:#x}/{self.kind.value}/{self.data_class.value}"


@dataclass(frozen=True)
class Observation:
    seq: int
    slot: Slot
    value: bytes


@dataclass(frozen=True)
class PatternOccurrence:
    pattern: Pattern
    match_start: int
    writers: tuple[int, ...]
    writer_seqs: tuple[int, ...]
    completed_at_seq: int

    def __post_init__(self):
        if not len(self.writers) == len(self.writer_seqs) == len(self.pattern.bytes):
            raise ValueError("one writer per pattern byte")


@dataclass
class PoiCandidate:
    addr: int
    kind: PoiKind
    data_class: DataClass
    observations: list[Observation] = field(default_factory=list)
    occurrences: list[PatternOccurrence] = field(default_factory=list)
    # operand slots that matched, with the byte order they matched in
    slots: dict[Slot, ReprKind] = field(default_factory=dict)

    @property
    def key(self) -> PoiKey:
        return PoiKey(self.addr, self.kind, self.data_class)

    def decoded_values(self) -> list[int | None]:
        """Observed values in trace order, decoded with each slot's byte
        order; None where the bytes are not a valid value of the class."""
        out = []
        for obs in self.observations:
            try:
                out.append(decode(obs.value, self.slots[obs.slot], self.data_class))
            except ValueError:
                out.append(None)
        return out


@dataclass
class AccessStats:
    """Total bytes written / read per instruction address."""

    written: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    read: dict[int, int] = field(default_factory=lambda: defaultdict(int))


def _entry_slots(entry: TraceEntry):
    """Every (kind, slot, 4-byte value) an entry processes."""
    for name, value in entry.regs.items():
        yield PoiKind.REGISTER, ("reg", name), value.to_bytes(4, "big")
    for kind, tag, accesses in (
        (PoiKind.MEMORY_READ, "read", entry.reads),
        (PoiKind.MEMORY_WRITE, "write", entry.writes),
    ):
        for i, acc in enumerate(accesses):
            data = acc.data
            for off in range(len(data) - 3):
                yield kind, (tag, i, off), data[off:off + 4]


class StandaloneScanner:
    def __init__(self, dataset: DataSet):
        self._lookups = [(cls, dataset.binary_lookup(cls)) for cls in DataClass]
        self._values: dict[tuple, list[tuple[int, bytes]]] = defaultdict(list)
        self._matched: dict[tuple, dict[DataClass, ReprKind]] = {}

    def feed(self, entry: TraceEntry) -> None:
        for kind, slot, value in _entry_slots(entry):
            site = (entry.addr, kind, slot)
            self._values[site].append((entry.seq, value))
            for cls, lookup in self._lookups:
                pat = lookup.get(value)
                if pat is not None:
                    classes = self._matched.setdefault(site, {})
                    classes.setdefault(cls, pat.repr_kind)

    def candidates(self) -> dict[PoiKey, PoiCandidate]:
        out: dict[PoiKey, PoiCandidate] = {}
        for site in sorted(self._matched, key=lambda s: (s[0], s[1].value, s[2])):
            addr, kind, slot = site
            for cls, repr_kind in self._matched[site].items():
                key = PoiKey(addr, kind, cls)
                cand = out.setdefault(key, PoiCandidate(addr, kind, cls))
                cand.slots[slot] = repr_kind
                cand.observations.extend(Observation(seq, slot, v) for seq, v in self._values[site])
        for cand in out.values():
            cand.observations.sort(key=lambda o: (o.seq, o.slot))
        return out


class PatternIndex:
    """ASCII patterns grouped by length for windowed multi-pattern lookup."""

    def __init__(self, patterns: Iterable[Pattern]):
        by_size: dict[int, dict[bytes, list[Pattern]]] = defaultdict(lambda: defaultdict(list))
        for p in patterns:
            by_size[len(p.bytes)][p.bytes].append(p)
        self.by_size = {s: dict(t) for s, t in sorted(by_size.items())}
        self.sizes = sorted(self.by_size)

    def __bool__(self) -> bool:
        return bool(self.sizes)


def window_matches(tracker: MemoryTracker, lo: int, hi: int, index: PatternIndex):
    """Patterns found by the windowed search run for every byte address in
    [lo, hi): for each address and each pattern, the leftmost occurrence
    inside that address's window. Yields (pattern bytes, start)."""
    region = tracker.find_memory_region(lo)
    if region is None:
        return
    rid, rsize = region
    rend = rid + rsize
    for size in index.sizes:
        if size > rsize:
            break
        ustart = max(rid, lo - size)
        uend = min(rend, hi - 1 + size)
        if uend - ustart < size:
            continue
        buf = tracker.read(ustart, uend)
        table = index.by_size[size]
        positions: dict[bytes, list[int]] = {}
        for j in range(len(buf) - size + 1):
            chunk = buf[j:j + size]
            if chunk in table:
                positions.setdefault(chunk, []).append(ustart + j)
        for chunk, starts in positions.items():
            found = set()
            for a in range(lo, hi):
                ws = max(rid, a - size)
                we = min(rend, a + size)
                for pos in starts:
                    if pos >= ws and pos + size <= we:
                        found.add(pos)
                        break
            for pos in sorted(found):
                yield chunk, pos


class ContiguousScanner:
    def __init__(self, dataset: DataSet):
        self.index = PatternIndex(dataset.ascii_patterns())
        self.tracker = MemoryTracker()
        self.stats = AccessStats()
        self._seen: set = set()
        self._cands: dict[PoiKey, PoiCandidate] = {}

    def _report(self, occ: PatternOccurrence, kind: PoiKind) -> None:
        key = (kind, occ.pattern, occ.match_start, occ.writer_seqs)
        if key in self._seen:
            return
        self._seen.add(key)
        for insn in sorted(set(occ.writers)):
            pkey = PoiKey(insn, kind, occ.pattern.data_class)
            cand = self._cands.setdefault(pkey, PoiCandidate(*pkey))
            cand.occurrences.append(occ)

    def feed(self, entry: TraceEntry) -> None:
        index = self.index
        for acc in entry.reads:
            self.stats.read[entry.addr] += len(acc.data)
            data = acc.data
            for size in index.sizes:
                if size > len(data):
                    break
                table = index.by_size[size]
                for j in range(len(data) - size + 1):
                    for pat in table.get(data[j:j + size], ()):
                        self._report(PatternOccurrence(
                            pat, acc.addr + j, (entry.addr,) * size, (entry.seq,) * size, entry.seq,
                        ), PoiKind.CONTIGUOUS_READ)
        for acc in entry.writes:
            self.stats.written[entry.addr] += len(acc.data)
            self.tracker.record_write(entry.addr, entry.seq, acc)
            if not index:
                continue
            lo, hi = acc.addr, acc.addr + len(acc.data)
            for chunk, pos in window_matches(self.tracker, lo, hi, index):
                who = self.tracker.writers_of(pos, len(chunk))
                writers = tuple(w for w, _ in who)
                seqs = tuple(s for _, s in who)
                for pat in index.by_size[len(chunk)][chunk]:
                    self._report(PatternOccurrence(pat, pos, writers, seqs, entry.seq),
                                 PoiKind.CONTIGUOUS_WRITE)

    def candidates(self) -> dict[PoiKey, PoiCandidate]:
        return dict(sorted(self._cands.items()))


@dataclass
class DiscoveryResult:
    candidates: dict[PoiKey, PoiCandidate]
    stats: AccessStats
    entries: int = 0

    def of_class(self, data_class: DataClass) -> list[PoiCandidate]:
        return [c for c in self.candidates.values() if c.data_class is data_class]


def find_standalone_pois(trace: Iterable[TraceEntry], dataset: DataSet) -> dict[PoiKey, PoiCandidate]:
    scanner = StandaloneScanner(dataset)
    for entry in trace:
        scanner.feed(entry)
    return scanner.candidates()


def find_contiguous_pois(trace: Iterable[TraceEntry], dataset: DataSet):
    """Returns (candidates, AccessStats)."""
    scanner = ContiguousScanner(dataset)
    for entry in trace:
        scanner.feed(entry)
    return scanner.candidates(), scanner.stats


def discover(trace: Iterable[TraceEntry], dataset: DataSet) -> DiscoveryResult:
    """Both strategies in a single pass over the trace."""
    standalone = StandaloneScanner(dataset)
    contiguous = ContiguousScanner(dataset)
    n = 0
    for entry in trace:
        standalone.feed(entry)
        contiguous.feed(entry)
        n += 1
    cands = standalone.candidates()
    cands.update(contiguous.candidates())
    return DiscoveryResult(dict(sorted(cands.items())), contiguous.stats, n)


def observe(trace: Iterable[TraceEntry], candidates: Iterable[PoiCandidate]) -> dict[PoiKey, list[Observation]]:
    """Values processed at each standalone candidate's matched slots in
    another trace of the same process (e.g. a crawl window)."""
    by_addr: dict[int, list[PoiCandidate]] = defaultdict(list)
    out: dict[PoiKey, list[Observation]] = {}
    for cand in candidates:
        if cand.kind.is_contiguous:
            continue
        by_addr[cand.addr].append(cand)
        out[cand.key] = []
    if not by_addr:
        return out
    for entry in trace:
        cands = by_addr.get(entry.addr)
        if not cands:
            continue
        for kind, slot, value in _entry_slots(entry):
            for cand in cands:
                if cand.kind is kind and slot in cand.slots:
                    out[cand.key].append(Observation(entry.seq, slot, value))
    for obs in out.values():
        obs.sort(key=lambda o: (o.seq, o.slot))
    return out

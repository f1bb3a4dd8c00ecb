"""BFS crawling on top of the crawl primitive, ground-truth classification
of extracted peers, and threshold sweeps over recorded crawl traces."""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .confidence import ScoredPoi, as_fraction
from .dataset import DataClass, PeerAddress
from .discovery import PoiCandidate, PoiKey, observe
from .extraction import ExtractionResult, decode_stream, extract_from_streams
from .trace import TraceEntry


@dataclass
class PeerCategories:
    correct: set[PeerAddress] = field(default_factory=set)
    bootstrap_only: set[PeerAddress] = field(default_factory=set)
    wrong: set[PeerAddress] = field(default_factory=set)

    @property
    def extracted(self) -> set[PeerAddress]:
        return self.correct | self.bootstrap_only | self.wrong


def classify_peers(extracted: Iterable[PeerAddress], bootstrap: Iterable[PeerAddress],
                   local: Iterable[PeerAddress]) -> PeerCategories:
    ext, boot, loc = set(extracted), set(bootstrap), set(local)
    return PeerCategories(ext & loc, ext & (boot - loc), ext - boot - loc)


def correctness(extracted: Iterable[PeerAddress], bootstrap: Iterable[PeerAddress],
                local: Iterable[PeerAddress]) -> Fraction | None:
    """Share of extracted peers that really belong to the botnet; None
    when nothing was extracted."""
    ext = set(extracted)
    if not ext:
        return None
    return Fraction(len(ext & (set(bootstrap) | set(local))), len(ext))


@dataclass
class CrawlCycle:
    index: int
    crawl_peer: PeerAddress
    result: ExtractionResult
    new_peers: list[PeerAddress]


def bfs_crawl(primitive: Callable[[PeerAddress], ExtractionResult],
              start_peers: Iterable[PeerAddress], budget: int):
    """Crawl breadth-first from ``start_peers``; each peer is crawled at
    most once. Returns (discovered, cycles)."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    start = sorted(set(start_peers))
    discovered = set(start)
    frontier = deque(start)
    cycles: list[CrawlCycle] = []
    while frontier and len(cycles) < budget:
        peer = frontier.popleft()
        result = primitive(peer)
        new = sorted(result.peers - discovered)
        discovered.update(new)
        frontier.extend(new)
        cycles.append(CrawlCycle(len(cycles), peer, result, new))
    return discovered, cycles


SWEEP_COLUMNS = ["threshold", "n", "avg_extracted", "avg_correct", "avg_bootstrap", "avg_wrong",
                 "conf_extracted", "conf_correct", "conf_bootstrap", "conf_wrong"]


@dataclass
class SweepRow:
    threshold: float
    n: int
    avg_extracted: float
    avg_correct: float
    avg_bootstrap: float
    avg_wrong: float
    conf_extracted: float | None
    conf_correct: float | None
    conf_bootstrap: float | None
    conf_wrong: float | None


class RecordedStreams:
    """Decoded IP/port value streams of one crawl trace, for all POIs at
    once, so that re-filtering by threshold needs no second pass."""

    def __init__(self, trace: Sequence[TraceEntry], ip_pois: Sequence[ScoredPoi],
                 port_pois: Iterable[PoiCandidate], mapping, responded: bool = True):
        ip_cands = [s.candidate for s in ip_pois]
        ports = {c.key: c for c in port_pois}
        needed = sorted({k for s in ip_pois for k in mapping.get(s.key, []) if k in ports})
        seen = observe(trace, ip_cands + [ports[k] for k in needed]) if responded else {}
        self.ip = {c.key: decode_stream(seen.get(c.key, []), c) for c in ip_cands}
        self.port = {k: decode_stream(seen.get(k, []), ports[k]) for k in needed}
        self.responded = responded


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


def threshold_sweep(recorded: Sequence[RecordedStreams], ip_pois: Sequence[ScoredPoi], mapping,
                    thresholds: Iterable, bootstrap: Iterable[PeerAddress],
                    local: Iterable[PeerAddress], fixed_port: int | None = None) -> list[SweepRow]:
    """Category counts and confidences per threshold, averaged over the
    recorded crawl cycles."""
    boot, loc = set(bootstrap), set(local)
    usable = [s for s in ip_pois
              if s.candidate.data_class is DataClass.IP and not s.candidate.kind.is_contiguous]
    rows = []
    n = len(recorded)
    if n < 1:
        raise ValueError("need at least one recorded crawl cycle")
    for t in thresholds:
        tf = as_fraction(t)
        if not 0 <= tf <= 1:
            raise ValueError(f"threshold {t} outside [0, 1]")
        kept = [s for s in usable if s.score >= tf]
        scores = {s.key: s.score for s in kept}
        counts = [0, 0, 0, 0]
        confs: list[list[float]] = [[], [], [], []]
        for rec in recorded:
            if not rec.responded:
                continue
            res = extract_from_streams({s.key: rec.ip[s.key] for s in kept}, rec.port,
                                       scores, mapping, fixed_port)
            cats = classify_peers(res.peers, boot, loc)
            best = res.peer_confidence()
            for i, group in enumerate((res.peers, cats.correct, cats.bootstrap_only, cats.wrong)):
                counts[i] += len(group)
                if group:
                    confs[i].append(float(sum(best[p] for p in group) / len(group)))
        rows.append(SweepRow(float(t), n, *(c / n for c in counts), *(_mean(c) for c in confs)))
    return rows


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def poi_correctness(cycles: Iterable[ExtractionResult], bootstrap, local) -> dict[PoiKey, Fraction | None]:
    """Correctness of what each POI extracted, over the union of cycles."""
    union: dict[PoiKey, set[PeerAddress]] = {}
    for res in cycles:
        for key, peers in res.per_poi.items():
            union.setdefault(key, set()).update(peers)
    return {k: correctness(v, bootstrap, local) for k, v in union.items()}

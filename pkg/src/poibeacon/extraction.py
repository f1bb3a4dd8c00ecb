"""Peer extraction from a trace using scored IP-POIs and their port-POIs."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .confidence import ScoredPoi
from .dataset import DataClass, PeerAddress, decode
from .discovery import Observation, PoiCandidate, PoiKey, observe
from .trace import TraceEntry


@dataclass
class ExtractionResult:
    peers: set[PeerAddress] = field(default_factory=set)
    per_poi: dict[PoiKey, set[PeerAddress]] = field(default_factory=dict)
    scores: dict[PoiKey, Fraction] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def avg_confidence(self) -> float | None:
        used = [float(self.scores[k]) for k, peers in self.per_poi.items() if peers]
        return sum(used) / len(used) if used else None

    def peer_confidence(self) -> dict[PeerAddress, Fraction]:
        """Best score among the POIs that extracted each peer."""
        best: dict[PeerAddress, Fraction] = {}
        for key, peers in self.per_poi.items():
            for peer in peers:
                if peer not in best or self.scores[key] > best[peer]:
                    best[peer] = self.scores[key]
        return best


def decode_stream(obs: list[Observation], cand: PoiCandidate) -> list[int | None]:
    out = []
    for o in obs:
        try:
            out.append(decode(o.value, cand.slots[o.slot], cand.data_class))
        except ValueError:
            out.append(None)
    return out


def extract_from_streams(
    ip_streams: Mapping[PoiKey, list[int | None]],
    port_streams: Mapping[PoiKey, list[int | None]],
    scores: Mapping[PoiKey, Fraction],
    mapping: Mapping[PoiKey, list[PoiKey]],
    fixed_port: int | None = None,
) -> ExtractionResult:
    """Positional pairing of already-decoded value streams."""
    result = ExtractionResult()
    for key in sorted(ip_streams):
        ips = ip_streams[key]
        found: set[PeerAddress] = set()
        if fixed_port is not None:
            found = {PeerAddress(ip, fixed_port) for ip in ips if ip is not None}
        else:
            port_keys = mapping.get(key, [])
            if not port_keys:
                result.diagnostics.append(f"{key}: no mapped port-POI, skipped")
            for pkey in port_keys:
                for ip, port in zip(ips, port_streams.get(pkey, [])):
                    if ip is not None and port is not None:
                        found.add(PeerAddress(ip, port))
        result.per_poi[key] = found
        result.scores[key] = scores[key]
        result.peers |= found
    return result


def extract_peers(
    trace: Iterable[TraceEntry],
    ip_pois: Iterable[ScoredPoi],
    mapping: Mapping[PoiKey, list[PoiKey]],
    port_pois: Iterable[PoiCandidate] = (),
    fixed_port: int | None = None,
) -> ExtractionResult:
    """Read the values processed at each IP-POI (and its mapped port-POIs)
    in ``trace`` and combine them into peer addresses. Contiguous POIs are
    not used for extraction."""
    ip_pois = [s for s in ip_pois
               if s.candidate.data_class is DataClass.IP and not s.candidate.kind.is_contiguous]
    ports_by_key = {c.key: c for c in port_pois}
    needed = set()
    if fixed_port is None:
        for s in ip_pois:
            needed.update(mapping.get(s.key, []))
    cands = [s.candidate for s in ip_pois] + [ports_by_key[k] for k in sorted(needed) if k in ports_by_key]
    seen = observe(trace, cands)
    ip_streams = {s.key: decode_stream(seen[s.key], s.candidate) for s in ip_pois}
    port_streams = {k: decode_stream(seen[k], ports_by_key[k]) for k in needed if k in ports_by_key}
    scores = {s.key: s.score for s in ip_pois}
    return extract_from_streams(ip_streams, port_streams, scores, mapping, fixed_port)

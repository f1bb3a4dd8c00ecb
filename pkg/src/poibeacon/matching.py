"""Pairing IP-POIs with port-POIs.

An IP-POI and a port-POI belong together when every (ip, port) tuple
formed by zipping their value streams is a known peer. Streams of unequal
length are truncated to the shorter one; a pair where either stream is
empty is never mapped.
"""
from __future__ import annotations

from typing import Hashable, Iterable, Mapping, Sequence

from .dataset import PeerAddress
from .discovery import PoiCandidate, PoiKey

PoiMapping = dict


def match_sequences(
    ip_seqs: Mapping[Hashable, Sequence[int | None]],
    port_seqs: Mapping[Hashable, Sequence[int | None]],
    known_peers: Iterable[PeerAddress],
) -> dict[Hashable, list[Hashable]]:
    known = set(known_peers)
    mapping: dict[Hashable, list[Hashable]] = {}
    for ip_key in sorted(ip_seqs):
        ips = ip_seqs[ip_key]
        if not ips:
            continue
        for port_key in sorted(port_seqs):
            ports = port_seqs[port_key]
            if not ports:
                continue
            if all(ip is not None and port is not None and (ip, port) in known
                   for ip, port in zip(ips, ports)):
                mapping.setdefault(ip_key, []).append(port_key)
    return mapping


def match_ip_port_pois(
    ip_pois: Iterable[PoiCandidate],
    port_pois: Iterable[PoiCandidate],
    known_peers: Iterable[PeerAddress],
) -> dict[PoiKey, list[PoiKey]]:
    """Only standalone POIs carry value streams; contiguous ones are skipped."""
    ip_seqs = {c.key: c.decoded_values() for c in ip_pois if not c.kind.is_contiguous}
    port_seqs = {c.key: c.decoded_values() for c in port_pois if not c.kind.is_contiguous}
    return match_sequences(ip_seqs, port_seqs, known_peers)


def mapped_port_keys(mapping: Mapping[PoiKey, list[PoiKey]]) -> set[PoiKey]:
    return {k for ports in mapping.values() for k in ports}

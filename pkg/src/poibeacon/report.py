"""JSON forms of POI reports, the flat POI export list, socket logs and
crawl reports. All writers produce canonical (sorted, fixed-format) text
so reruns are byte-identical."""
from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .confidence import ScoredPoi, confidence_class
from .dataset import DataClass, PeerAddress, ReprKind, parse_peer_list
from .discovery import PoiCandidate, PoiKey, PoiKind


class ReportError(ValueError):
    pass


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def key_str(key: PoiKey) -> str:
    return str(key)


def key_from_str(text: str) -> PoiKey:
    try:
        addr, kind, cls = text.split("/")
        return PoiKey(int(addr, 16), PoiKind(kind), DataClass(cls))
    except ValueError:
        raise ReportError(f"bad POI key {text!r}") from None


def export_records(scored: Iterable[ScoredPoi]) -> list[dict]:
    """The flat list a disassembler plugin reads: one record per POI."""
    out = []
    for s in sorted(scored, key=lambda s: s.key):
        out.append({
            "address": f"{s.key.addr:#x}",
            "kind": s.key.kind.value,
            "data_class": s.key.data_class.value,
            "confidence": float(s.score),
            "confidence_class": s.confidence_class,
        })
    return out


def poi_report(scored: Iterable[ScoredPoi], mapping, run_id: str | None, threshold=None,
               dataset_summary: dict | None = None) -> dict:
    pois = []
    for s in sorted(scored, key=lambda s: s.key):
        c = s.candidate
        pois.append({
            "key": key_str(s.key),
            "address": f"{c.addr:#x}",
            "kind": c.kind.value,
            "data_class": c.data_class.value,
            "score": f"{s.score.numerator}/{s.score.denominator}",
            "confidence": float(s.score),
            "confidence_class": s.confidence_class,
            "slots": [[list(slot), kind.value] for slot, kind in sorted(c.slots.items())],
            "observations": len(c.observations),
            "occurrences": len(c.occurrences),
        })
    present = {p["key"] for p in pois}
    pairs = {key_str(k): [key_str(p) for p in v if key_str(p) in present]
             for k, v in sorted(mapping.items()) if key_str(k) in present}
    return {
        "run_id": run_id,
        "threshold": None if threshold is None else float(threshold),
        "dataset": dataset_summary or {},
        "pois": pois,
        "mapping": {k: v for k, v in pairs.items() if v},
    }


def load_poi_report(obj: dict) -> tuple[list[ScoredPoi], dict[PoiKey, list[PoiKey]], str | None]:
    """Inverse of :func:`poi_report` as far as the crawl needs it: the
    candidates (without their collection observations), their scores and
    the IP/port mapping."""
    try:
        scored = []
        for p in obj["pois"]:
            key = key_from_str(p["key"])
            cand = PoiCandidate(*key)
            for slot, kind in p["slots"]:
                cand.slots[tuple(slot)] = ReprKind(kind)
            num, den = p["score"].split("/")
            scored.append(ScoredPoi(cand, Fraction(int(num), int(den))))
        mapping = {key_from_str(k): [key_from_str(v) for v in vs] for k, vs in obj["mapping"].items()}
        return scored, mapping, obj.get("run_id")
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        if isinstance(exc, ReportError):
            raise
        raise ReportError(f"malformed POI report: {exc}") from None


def check_export_record(rec: dict) -> None:
    if set(rec) != {"address", "kind", "data_class", "confidence", "confidence_class"}:
        raise ReportError(f"unexpected export fields {sorted(rec)}")
    if confidence_class(rec["confidence"]) != rec["confidence_class"]:
        raise ReportError("confidence_class does not match confidence")


def socket_log_lines(log: Iterable[tuple[str, PeerAddress, int]]) -> str:
    return "".join(json.dumps({"dir": d, "peer": str(p), "tick": t}, sort_keys=True) + "\n"
                   for d, p, t in log)


def read_socket_peers(path) -> set[PeerAddress]:
    """Peers from a socket log: JSON Lines as written by ``simulate`` or a
    plain ``ip:port`` list."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if body and body[0].lstrip().startswith("{"):
        out = set()
        for i, ln in enumerate(body, 1):
            try:
                rec = json.loads(ln)
                out.add(PeerAddress.parse(rec["peer"]))
            except (ValueError, KeyError, TypeError) as exc:
                raise ReportError(f"{path}: socket log line {i}: {exc}") from None
        return out
    return set(parse_peer_list(lines))

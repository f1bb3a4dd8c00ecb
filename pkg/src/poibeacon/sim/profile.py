"""Botnet profiles: the per-sample configuration of a simulated botnet and
of the trace collection / crawl windows.

Profiles are JSON files; ``bootstrap_list`` is a path relative to the
profile file (one ``ip:port`` per line).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..dataset import PeerAddress, format_peer_list, load_peer_list
from ..trace import TraceFilterConfig

STYLES = ("binary-msb", "binary-lsb", "ascii", "mixed")
TRANSPORTS = ("udp", "tcp")
FIXTURES = ("zeroaccess", "sality", "nugache", "kelihos")
PROFILE_DIR = Path(__file__).parent / "profiles"


class ProfileError(ValueError):
    pass


@dataclass
class BotnetProfile:
    name: str
    transport: str
    fixed_port: int | None
    mm_cycle_ticks: int
    peer_list_capacity: int
    retl_share_count: int
    representation_style: str
    bootstrap: list[PeerAddress]
    local_bootstrap: int = 1
    joiners: int = 40
    t_trace: int = 32
    t_crawl: int = 2
    sends_per_tick: int = 4
    secondary_peers: int = 0
    idle_junk_chunks: int = 8
    trace_filter: TraceFilterConfig = field(default_factory=TraceFilterConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.transport not in TRANSPORTS:
            raise ProfileError(f"transport must be one of {TRANSPORTS}")
        if self.representation_style not in STYLES:
            raise ProfileError(f"representation_style must be one of {STYLES}")
        for name in ("mm_cycle_ticks", "peer_list_capacity", "retl_share_count",
                     "t_crawl", "sends_per_tick", "local_bootstrap"):
            if getattr(self, name) < 1:
                raise ProfileError(f"{name} must be >= 1")
        if self.joiners < 0 or self.secondary_peers < 0 or self.idle_junk_chunks < 0:
            raise ProfileError("joiners, secondary_peers and idle_junk_chunks must be >= 0")
        if self.retl_share_count > self.peer_list_capacity:
            raise ProfileError("retl_share_count exceeds peer_list_capacity")
        if self.t_trace < self.mm_cycle_ticks:
            raise ProfileError("t_trace must cover at least one MM cycle (t_trace >= mm_cycle_ticks)")
        if self.fixed_port is not None and not 0 <= self.fixed_port <= 0xFFFF:
            raise ProfileError("fixed_port out of range")
        if not self.bootstrap:
            raise ProfileError("empty bootstrap list")
        if len(set(self.bootstrap)) != len(self.bootstrap):
            raise ProfileError("duplicate bootstrap entries")
        if self.local_bootstrap > len(self.bootstrap):
            raise ProfileError("more local bootstrap peers than bootstrap entries")
        if self.fixed_port is not None and any(p.port != self.fixed_port for p in self.bootstrap):
            raise ProfileError("bootstrap entries must use the fixed port")

    @property
    def uses_ports(self) -> bool:
        return self.fixed_port is None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bootstrap"] = [str(p) for p in self.bootstrap]
        tf = self.trace_filter
        d["trace_filter"] = {
            "trace_named_regions": tf.trace_named_regions,
            "named_region_allowlist": sorted(tf.named_region_allowlist)
            if tf.named_region_allowlist is not None else None,
            "trace_unnamed_regions": tf.trace_unnamed_regions,
            "max_trace_count": tf.max_trace_count,
        }
        return d

    def run_id(self, seed: int) -> str:
        """Identifies the (profile, seed) lineage of every output."""
        blob = json.dumps({"profile": self.to_dict(), "seed": seed}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def bootstrap_text(self) -> str:
        return format_peer_list(self.bootstrap)


_KNOWN_KEYS = {
    "name", "transport", "fixed_port", "mm_cycle_ticks", "peer_list_capacity",
    "retl_share_count", "representation_style", "bootstrap_list", "local_bootstrap",
    "joiners", "t_trace", "t_crawl", "sends_per_tick", "secondary_peers",
    "idle_junk_chunks", "trace_filter",
}


def profile_from_dict(obj: dict, base_dir: Path | None = None) -> BotnetProfile:
    unknown = set(obj) - _KNOWN_KEYS
    if unknown:
        raise ProfileError(f"unknown profile keys: {sorted(unknown)}")
    try:
        path = Path(obj["bootstrap_list"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        bootstrap = load_peer_list(path)
        tf = obj.get("trace_filter", {})
        allow = tf.get("named_region_allowlist")
        trace_filter = TraceFilterConfig(
            trace_named_regions=tf.get("trace_named_regions", True),
            named_region_allowlist=frozenset(allow) if allow is not None else None,
            trace_unnamed_regions=tf.get("trace_unnamed_regions", True),
            max_trace_count=tf.get("max_trace_count"),
        )
        kwargs = {k: v for k, v in obj.items() if k not in ("bootstrap_list", "trace_filter")}
        return BotnetProfile(bootstrap=bootstrap, trace_filter=trace_filter, **kwargs)
    except KeyError as exc:
        raise ProfileError(f"missing profile key {exc}") from None
    except (TypeError, ValueError, OSError) as exc:
        if isinstance(exc, ProfileError):
            raise
        raise ProfileError(str(exc)) from None


def load_profile(path) -> BotnetProfile:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ProfileError(f"{path}: {exc}") from None
    if not isinstance(obj, dict):
        raise ProfileError(f"{path}: profile must be a JSON object")
    return profile_from_dict(obj, path.parent)


def fixture_path(name: str) -> Path:
    return PROFILE_DIR / f"{name}.json"


def load_fixture(name: str) -> BotnetProfile:
    if name not in FIXTURES:
        raise ProfileError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    return load_profile(fixture_path(name))

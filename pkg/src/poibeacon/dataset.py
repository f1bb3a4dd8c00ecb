"""Known artifacts (IPs and ports) and their byte-level representations."""
from __future__ import annotations

import enum
import ipaddress
import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

log = logging.getLogger(__name__)


class DataClass(str, enum.Enum):
    IP = "IP"
    PORT = "PORT"


class ReprKind(str, enum.Enum):
    BINARY_MSB = "binary-msb"
    BINARY_LSB = "binary-lsb"
    ASCII_DOTTED = "ascii-dotted"
    ASCII_HEX = "ascii-hex"
    ASCII_DECIMAL = "ascii-decimal"

    @property
    def is_binary(self) -> bool:
        return self in (ReprKind.BINARY_MSB, ReprKind.BINARY_LSB)


class PeerAddress(NamedTuple):
    ip: int
    port: int

    @classmethod
    def parse(cls, text: str) -> "PeerAddress":
        host, sep, port = text.strip().rpartition(":")
        if not sep:
            raise ValueError(f"expected ip:port, got {text!r}")
        peer = cls(int(ipaddress.IPv4Address(host)), int(port))
        peer.validate()
        return peer

    def validate(self) -> None:
        if not 0 <= self.ip < 1 << 32:
            raise ValueError(f"bad IPv4 value {self.ip}")
        if not 0 <= self.port <= 0xFFFF:
            raise ValueError(f"bad port {self.port}")

    @property
    def ip_str(self) -> str:
        return ip_to_str(self.ip)

    def __str__(self) -> str:
        return f"{self.ip_str}:{self.port}"


def ip_to_str(ip: int) -> str:
    return str(ipaddress.IPv4Address(ip))


def ip_from_str(text: str) -> int:
    return int(ipaddress.IPv4Address(text))


@dataclass(frozen=True)
class Pattern:
    bytes: bytes
    repr_kind: ReprKind
    data_class: DataClass
    origin: int  # the IP (as int) or the port this pattern encodes

    def __post_init__(self):
        if not self.bytes:
            raise ValueError("empty pattern")
        if self.repr_kind.is_binary and len(self.bytes) != 4:
            raise ValueError("binary patterns are exactly 4 bytes")


def representations_of_ip(ip: int) -> set[Pattern]:
    msb = ip.to_bytes(4, "big")
    forms = {
        ReprKind.BINARY_MSB: msb,
        ReprKind.BINARY_LSB: msb[::-1],
        ReprKind.ASCII_DOTTED: ip_to_str(ip).encode("ascii"),
        ReprKind.ASCII_HEX: msb.hex().upper().encode("ascii"),
    }
    return set(_dedup(Pattern(b, kind, DataClass.IP, ip) for kind, b in forms.items()))


def representations_of_port(port: int) -> set[Pattern]:
    if not 0 <= port <= 0xFFFF:
        raise ValueError(f"bad port {port}")
    msb = port.to_bytes(4, "big")
    forms = {
        ReprKind.BINARY_MSB: msb,
        ReprKind.BINARY_LSB: msb[::-1],
        ReprKind.ASCII_DECIMAL: str(port).encode("ascii"),
    }
    return set(_dedup(Pattern(b, kind, DataClass.PORT, port) for kind, b in forms.items()))


def decode(pattern_bytes: bytes, repr_kind: ReprKind, data_class: DataClass) -> int:
    """Inverse of the representation functions."""
    if repr_kind is ReprKind.BINARY_MSB:
        value = int.from_bytes(pattern_bytes, "big")
    elif repr_kind is ReprKind.BINARY_LSB:
        value = int.from_bytes(pattern_bytes, "little")
    elif repr_kind is ReprKind.ASCII_DOTTED:
        value = ip_from_str(pattern_bytes.decode("ascii"))
    elif repr_kind is ReprKind.ASCII_HEX:
        value = int(pattern_bytes.decode("ascii"), 16)
    else:
        value = int(pattern_bytes.decode("ascii"), 10)
    if data_class is DataClass.PORT and value > 0xFFFF:
        raise ValueError(f"{value} is not a port")
    return value


_KIND_ORDER = {kind: i for i, kind in enumerate(ReprKind)}


def _dedup(patterns: Iterable[Pattern]) -> frozenset[Pattern]:
    # keep one pattern per byte content; the pick is deterministic
    best: dict[bytes, Pattern] = {}
    for p in patterns:
        cur = best.get(p.bytes)
        if cur is None or (_KIND_ORDER[p.repr_kind], p.origin) < (_KIND_ORDER[cur.repr_kind], cur.origin):
            best[p.bytes] = p
    return frozenset(best.values())


@dataclass(frozen=True)
class DataSet:
    ip_patterns: frozenset[Pattern]
    port_patterns: frozenset[Pattern]
    known_peers: frozenset[PeerAddress]
    _binary: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        binary = {DataClass.IP: {}, DataClass.PORT: {}}
        for p in self.ip_patterns | self.port_patterns:
            if p.repr_kind.is_binary:
                binary[p.data_class][p.bytes] = p
        object.__setattr__(self, "_binary", binary)

    def patterns(self, data_class: DataClass | None = None) -> frozenset[Pattern]:
        if data_class is DataClass.IP:
            return self.ip_patterns
        if data_class is DataClass.PORT:
            return self.port_patterns
        return self.ip_patterns | self.port_patterns

    def binary_lookup(self, data_class: DataClass) -> dict[bytes, Pattern]:
        """4-byte pattern content -> pattern, for standalone matching."""
        return self._binary[data_class]

    def contains_value(self, value: bytes, data_class: DataClass) -> bool:
        return value in self._binary[data_class]

    def ascii_patterns(self) -> list[Pattern]:
        return sorted(
            (p for p in self.patterns() if not p.repr_kind.is_binary),
            key=lambda p: (p.bytes, p.data_class.value),
        )


def build_dataset(
    bootstrap_peers: Iterable[PeerAddress],
    socket_log_peers: Iterable[PeerAddress] = (),
) -> DataSet:
    known = frozenset(bootstrap_peers) | frozenset(socket_log_peers)
    ips = sorted({p.ip for p in known})
    ports = sorted({p.port for p in known})
    ip_patterns = _dedup(pat for ip in ips for pat in representations_of_ip(ip))
    port_patterns = _dedup(pat for port in ports for pat in representations_of_port(port))
    for port in ports:
        if len(str(port)) <= 2:
            log.warning("port %d has a short ASCII form and will match unrelated data", port)
    for ip in ips:
        if ip.to_bytes(4, "big").count(0) >= 3:
            log.warning("IP %s is mostly zero bytes and will match unrelated data", ip_to_str(ip))
    return DataSet(ip_patterns, port_patterns, known)


def parse_peer_list(lines: Iterable[str]) -> list[PeerAddress]:
    """Bootstrap list format: one ``ip:port`` per line, ``#`` comments."""
    peers = []
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            peers.append(PeerAddress.parse(line))
        except ValueError as exc:
            raise ValueError(f"line {n}: {exc}") from None
    return peers


def load_peer_list(path) -> list[PeerAddress]:
    with open(path, encoding="utf-8") as fh:
        return parse_peer_list(fh)


def format_peer_list(peers: Iterable[PeerAddress]) -> str:
    return "".join(f"{p}\n" for p in peers)

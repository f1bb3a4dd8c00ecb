"""The simulated bot (the puppet), its network, snapshots and the crawl
primitive.

Message format (made up for the simulator, the analysis never parses it):
a getL carries nothing of interest; a retL is an 8-byte header
(``b"RL"``, share count as u16 big-endian, 4 random nonce bytes) followed
by one 8-byte record per shared peer: IPv4 address and port in network
byte order, then two random age bytes.

Event loop, one iteration per tick:

1. deliver replies that arrived; parse each retL, learn the new peers,
   write them to the peer table (evicting peers that stopped answering),
   and contact every newly learned peer right away;
2. at a cycle boundary, queue every peer-table entry not already queued;
3. send getL to the next ``sends_per_tick`` queued peers;
4. idle housekeeping (the decoy memcpy / checksum work).

The snapshot is cut at the first send to a bootstrap address: after the
send preparation, before the socket call (sendto for UDP, connect for
TCP). Every run resumes from that cut with the pending send.
"""
from __future__ import annotations

import copy
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..confidence import ScoredPoi
from ..dataset import DataClass, PeerAddress, ip_to_str
from ..discovery import PoiCandidate, PoiKey
from ..extraction import ExtractionResult, extract_peers
from ..trace import TraceEntry
from . import machine as mc
from .botnet import SimBotnet
from .machine import SEG, Machine
from .profile import BotnetProfile

REPLY_DELAY = 1
REPLY_TIMEOUT = 2
REGISTRY_PREFIX = b"Software\\GNU\\Data\\"


@dataclass
class PuppetRun:
    trace: list[TraceEntry]
    socket_log: list[tuple[str, PeerAddress, int]]
    shared_ground_truth: set[PeerAddress]
    diagnostics: list[str] = field(default_factory=list)

    @property
    def socket_peers(self) -> set[PeerAddress]:
        return {p for _, p, _ in self.socket_log}


class Network:
    """Delivers the puppet's getL requests to the local botnet. In crawl
    mode, traffic to the original target is redirected to the crawl peer
    (replies appear to come from the original target) and everything not
    between the puppet and the crawl peer is dropped."""

    def __init__(self, botnet: SimBotnet, seed: int, redirect: tuple[PeerAddress, PeerAddress] | None = None):
        self.botnet = botnet
        self.rng = random.Random(f"net:{seed}")
        self.redirect = redirect
        self.log: list[tuple[str, PeerAddress, int]] = []
        self._inbox: list[tuple[int, PeerAddress, PeerAddress, bytes]] = []

    def _route(self, dst: PeerAddress) -> PeerAddress | None:
        if self.redirect is None:
            return dst
        original, crawl_peer = self.redirect
        if dst == original or dst == crawl_peer:
            return crawl_peer
        return None

    def send(self, dst: PeerAddress, tick: int) -> None:
        actual = self._route(dst)
        if actual is None:
            return
        self.log.append(("out", actual, tick))
        shares = self.botnet.retl(actual)
        if shares is not None:
            self._inbox.append((tick + REPLY_DELAY, dst, actual, self._encode(shares)))

    def _encode(self, shares: Sequence[PeerAddress]) -> bytes:
        out = bytearray(b"RL")
        out += len(shares).to_bytes(2, "big")
        out += self.rng.randbytes(4)
        for p in shares:
            out += p.ip.to_bytes(4, "big") + p.port.to_bytes(2, "big") + self.rng.randbytes(2)
        return bytes(out)

    def receive(self, tick: int) -> list[tuple[PeerAddress, bytes]]:
        due = [m for m in self._inbox if m[0] <= tick]
        self._inbox = [m for m in self._inbox if m[0] > tick]
        for _, _, actual, _ in due:
            self.log.append(("in", actual, tick))
        return [(seen, payload) for _, seen, _, payload in due]


def decode_retl(payload: bytes) -> list[PeerAddress]:
    count = int.from_bytes(payload[2:4], "big")
    out = []
    for k in range(count):
        rec = payload[8 + 8 * k: 16 + 8 * k]
        out.append(PeerAddress(int.from_bytes(rec[:4], "big"), int.from_bytes(rec[4:6], "big")))
    return out


def secondary_peer_set(profile: BotnetProfile) -> list[PeerAddress]:
    """A constant set of addresses the sample keeps next to its peer list
    (same on every run of the profile)."""
    rng = random.Random(f"secondary:{profile.name}")
    taken = {p.ip for p in profile.bootstrap}
    out = []
    port = profile.fixed_port if profile.fixed_port is not None else 0
    while len(out) < profile.secondary_peers:
        ip = rng.randrange(0x0B000000, 0xDF000000)
        if ip in taken:
            continue
        taken.add(ip)
        out.append(PeerAddress(ip, port or rng.randrange(1024, 65536)))
    return out


def executed_sites(profile: BotnetProfile) -> dict[int, mc.Site]:
    """The annotated sites the profile's program actually runs."""
    style = profile.representation_style
    skip = set()
    if style != "binary-msb":
        skip.add(mc.SEND_BSWAP)
    if style != "ascii":
        skip |= {mc.REG_PREFIX, mc.REG_DIGIT, mc.REG_TERM, mc.REG_HASH}
    if style != "mixed":
        skip |= {mc.FMT_DIGIT, mc.FMT_TERM}
    if style != "mixed" or not profile.secondary_peers:
        skip |= {mc.SER_LOAD, mc.SER_STORE}
    return {a: s for a, s in mc.SITES.items() if a not in skip}


class Puppet:
    def __init__(self, profile: BotnetProfile):
        self.profile = profile
        self.m = Machine()
        self.msb = profile.representation_style == "binary-msb"
        self.table: list[PeerAddress] = []
        self.known: set[PeerAddress] = set()
        self.contacted: set[PeerAddress] = set()
        self.awaiting: dict[PeerAddress, int] = {}
        self.failed: set[PeerAddress] = set()
        self.shared: set[PeerAddress] = set()
        self.queue: deque[int] = deque()
        self.tick = 0
        self.phase = "start"
        self.sent = 0
        self.pending: PeerAddress | None = None
        self.rng = random.Random(0)
        self._qoff = 0
        self._logoff = 0
        self._load()

    # untraced loader: the embedded bootstrap list becomes the peer table
    def _load(self) -> None:
        cap = self.profile.peer_list_capacity
        for p in self.profile.bootstrap:
            self.known.add(p)
            if len(self.table) < cap:
                self._poke_record(len(self.table), p)
                self.table.append(p)
        for j, p in enumerate(secondary_peer_set(self.profile)):
            self.m.poke(SEG["secondary"] + 4 * j, p.ip.to_bytes(4, "little"))

    def _ip_bytes(self, ip: int) -> bytes:
        return ip.to_bytes(4, "big" if self.msb else "little")

    def _poke_record(self, idx: int, p: PeerAddress) -> None:
        self.m.poke(SEG["table"] + 8 * idx, self._ip_bytes(p.ip) + p.port.to_bytes(4, "little"))

    # traced routines

    def _prepare_send(self, rec: int) -> None:
        m = self.m
        m.load(mc.SEND_LOAD_IP, "eax", rec)
        if self.msb:
            m.bswap(mc.SEND_BSWAP, "eax")
        m.store(mc.SEND_STORE_IP, SEG["sockaddr"] + 4, "eax", big=True)
        m.load(mc.SEND_LOAD_PORT, "ecx", rec + 4)
        m.store(mc.SEND_STORE_PORT, SEG["sockaddr"] + 2, "ecx", width=2, big=True)

    def _send(self, peer: PeerAddress, net: Network) -> None:
        self.contacted.add(peer)
        self.awaiting.setdefault(peer, self.tick)
        net.send(peer, self.tick)

    def _parse(self, payload: bytes) -> list[PeerAddress]:
        m = self.m
        recv = SEG["recv"]
        m.os_recv(recv, payload)
        qsize = mc.SEGMENTS["queue"][1]
        if self._qoff + len(payload) > qsize:
            self._qoff = 0
        m.memcpy(SEG["queue"] + self._qoff, recv, len(payload))
        self._qoff += (len(payload) + 3) & ~3
        m.checksum(recv, len(payload))
        shares = decode_retl(payload)
        for k in range(len(shares)):
            rec = recv + 8 + 8 * k
            cand = SEG["cand"] + 8 * k
            m.load(mc.PARSE_LOAD_IP, "eax", rec)
            m.bswap(mc.PARSE_BSWAP, "eax")
            m.load(mc.PARSE_LOAD_PORT, "ecx", rec + 4, width=2, big=True)
            m.store(mc.PARSE_STORE_IP, cand, "eax", big=self.msb)
            m.store(mc.PARSE_STORE_PORT, cand + 4, "ecx")
        return shares

    def _merge_slot(self) -> int | None:
        if len(self.table) < self.profile.peer_list_capacity:
            self.table.append(None)
            return len(self.table) - 1
        for i, p in enumerate(self.table):
            if p in self.failed:
                return i
        return None

    def _merge(self, k: int, slot: int, peer: PeerAddress) -> None:
        m = self.m
        cand = SEG["cand"] + 8 * k
        rec = SEG["table"] + 8 * slot
        m.load(mc.CAND_LOAD_IP, "eax", cand)
        m.store(mc.MERGE_STORE_IP, rec, "eax")
        m.load(mc.CAND_LOAD_PORT, "ecx", cand + 4)
        m.store(mc.MERGE_STORE_PORT, rec + 4, "ecx")
        self.table[slot] = peer

    def _write_registry(self, peer: PeerAddress) -> None:
        m = self.m
        base = SEG["regpath"]
        prefix = REGISTRY_PREFIX + b"\0" * (-len(REGISTRY_PREFIX) % 4)
        for off in range(0, len(REGISTRY_PREFIX), 4):
            m.regs["edx"] = int.from_bytes(prefix[off:off + 4], "little")
            m.store(mc.REG_PREFIX, base + off, "edx", width=min(4, len(REGISTRY_PREFIX) - off))
        text = ip_to_str(peer.ip).encode()
        start = base + len(REGISTRY_PREFIX)
        for i, b in enumerate(text):
            m.store_byte(mc.REG_DIGIT, start + i, b)
        m.store_byte(mc.REG_TERM, start + len(text), 0)
        m.read_block(mc.REG_HASH, "eax", start, len(text))

    def _log_peer(self, peer: PeerAddress) -> None:
        m = self.m
        text = ip_to_str(peer.ip).encode()
        for i, b in enumerate(text):
            m.store_byte(mc.FMT_DIGIT, SEG["strbuf"] + i, b)
        m.store_byte(mc.FMT_TERM, SEG["strbuf"] + len(text), ord("\n"))
        self._append_log(SEG["strbuf"], len(text) + 1)

    def _append_log(self, src: int, n: int) -> None:
        if self._logoff + n > mc.SEGMENTS["log"][1]:
            self._logoff = 0
        self.m.memcpy(SEG["log"] + self._logoff, src, n)
        self._logoff += n

    def _serialize(self) -> None:
        m = self.m
        out = SEG["serial"]
        k = 0
        for i in range(len(self.table)):
            m.load(mc.SER_LOAD, "eax", SEG["table"] + 8 * i)
            m.store(mc.SER_STORE, out + 4 * k, "eax")
            k += 1
        for j in range(self.profile.secondary_peers):
            m.load(mc.SER_LOAD, "eax", SEG["secondary"] + 4 * j)
            m.store(mc.SER_STORE, out + 4 * k, "eax")
            k += 1

    def _on_retl(self, payload: bytes, net: Network) -> None:
        style = self.profile.representation_style
        shares = self._parse(payload)
        fresh = []
        in_table = set(self.table)
        for k, p in enumerate(shares):
            self.shared.add(p)
            slot = None
            if p not in in_table and p not in self.failed:
                slot = self._merge_slot()
                if slot is not None:
                    self._merge(k, slot, p)
                    in_table.add(p)
            if p in self.known:
                continue
            self.known.add(p)
            if style == "ascii":
                self._write_registry(p)
            elif style == "mixed":
                self._log_peer(p)
            fresh.append((k, slot, p))
        # contact every newly learned peer
        for k, slot, p in fresh:
            rec = SEG["table"] + 8 * slot if slot is not None else SEG["cand"] + 8 * k
            self._prepare_send(rec)
            self._send(p, net)
        if style == "mixed" and self.profile.secondary_peers:
            self._serialize()

    def _idle(self) -> None:
        n = 4 * self.profile.idle_junk_chunks
        if not n:
            return
        self.m.poke(SEG["state"], self.rng.randbytes(n))
        self.m.memcpy(SEG["scratch"], SEG["state"], n)
        self.m.checksum(SEG["state"], n)
        if self.profile.representation_style == "mixed":
            line = bytes(self.rng.choice(b"abcdefghijklmnopqrstuvwxyz =") for _ in range(23)) + b"\n"
            self.m.poke(SEG["scratch"] + 0x200, line)
            self._append_log(SEG["scratch"] + 0x200, len(line))

    def _deliver(self, net: Network) -> None:
        for peer, sent in list(self.awaiting.items()):
            if self.tick - sent > REPLY_TIMEOUT:
                self.failed.add(peer)
                del self.awaiting[peer]
        for src, payload in net.receive(self.tick):
            self.awaiting.pop(src, None)
            self.failed.discard(src)
            self._on_retl(payload, net)

    def step(self, net: Network, stop_at_bootstrap_send: bool = False) -> bool:
        """Advance by one tick, or until the snapshot cut if requested.
        Returns True when the cut was reached."""
        if self.phase == "start":
            self._deliver(net)
            if self.tick % self.profile.mm_cycle_ticks == 0:
                # an unfinished pass keeps its place; the rest of the table queues behind it
                queued = set(self.queue)
                self.queue.extend(i for i in range(len(self.table)) if i not in queued)
            self.phase = "sends"
            self.sent = 0
        while self.sent < self.profile.sends_per_tick and self.queue:
            idx = self.queue.popleft()
            peer = self.table[idx]
            self._prepare_send(SEG["table"] + 8 * idx)
            self.sent += 1
            if stop_at_bootstrap_send and peer in self.profile.bootstrap:
                self.pending = peer
                return True
            self._send(peer, net)
        self._idle()
        self.tick += 1
        self.phase = "start"
        return False

    def resume(self, net: Network) -> None:
        if self.pending is not None:
            peer, self.pending = self.pending, None
            self._send(peer, net)


@dataclass
class Snapshot:
    """Puppet state at the cut, plus the contact it was about to make."""
    puppet: Puppet
    original_target: PeerAddress

    def restore(self, seed) -> Puppet:
        p = copy.deepcopy(self.puppet)
        p.rng = random.Random(f"env:{seed}")
        return p


def take_snapshot(profile: BotnetProfile, botnet: SimBotnet, max_ticks: int = 10_000) -> Snapshot:
    puppet = Puppet(profile)
    net = Network(botnet, 0, redirect=(PeerAddress(0, 0), PeerAddress(0, 0)))  # nothing leaves before the cut
    for _ in range(max_ticks):
        if puppet.step(net, stop_at_bootstrap_send=True):
            return Snapshot(puppet, puppet.pending)
    raise RuntimeError("the puppet never contacted a bootstrap peer")


def _run(snapshot: Snapshot, net: Network, ticks: int, seed) -> PuppetRun:
    puppet = snapshot.restore(seed)
    puppet.m.recording = True
    start = puppet.tick
    puppet.resume(net)
    while puppet.tick < start + ticks:
        puppet.step(net)
    trace = puppet.m.collect(puppet.profile.trace_filter)
    return PuppetRun(trace, list(net.log), set(puppet.shared))


class Puppeteer:
    """Owns one botnet, one profile and the snapshot taken on it."""

    def __init__(self, botnet: SimBotnet, profile: BotnetProfile):
        self.botnet = botnet
        self.profile = profile
        self.snapshot = take_snapshot(profile, botnet)

    @property
    def original_target(self) -> PeerAddress:
        return self.snapshot.original_target

    def collect(self, t_trace: int | None = None, seed: int = 0) -> PuppetRun:
        ticks = self.profile.t_trace if t_trace is None else t_trace
        if ticks < self.profile.mm_cycle_ticks:
            raise ValueError("T_trace must cover at least one MM cycle")
        return _run(self.snapshot, Network(self.botnet, seed), ticks, seed)

    def crawl_run(self, crawl_peer: PeerAddress, t_crawl: int | None = None, seed: int = 0) -> PuppetRun:
        ticks = self.profile.t_crawl if t_crawl is None else t_crawl
        if ticks < 1:
            raise ValueError("T_crawl must be >= 1")
        net = Network(self.botnet, seed, redirect=(self.original_target, crawl_peer))
        run = _run(self.snapshot, net, ticks, seed)
        if not any(d == "in" and p == crawl_peer for d, p, _ in run.socket_log):
            run.diagnostics.append(f"crawl peer {crawl_peer} did not reply")
        return run

    def extract(self, run: PuppetRun, pois: Iterable[ScoredPoi], mapping,
                port_pois: Iterable[PoiCandidate] = ()) -> ExtractionResult:
        if run.diagnostics:
            return ExtractionResult(diagnostics=list(run.diagnostics))
        return extract_peers(run.trace, pois, mapping, port_pois, self.profile.fixed_port)

    def crawl(self, crawl_peer: PeerAddress, pois: Iterable[ScoredPoi], mapping,
              port_pois: Iterable[PoiCandidate] = (), t_crawl: int | None = None,
              seed: int = 0) -> ExtractionResult:
        return self.extract(self.crawl_run(crawl_peer, t_crawl, seed), pois, mapping, port_pois)


def run_puppet(botnet: SimBotnet, profile: BotnetProfile, t_trace: int | None = None, seed: int = 0) -> PuppetRun:
    return Puppeteer(botnet, profile).collect(t_trace, seed)


def crawl_primitive(botnet: SimBotnet, crawl_peer: PeerAddress, pois: Sequence[ScoredPoi],
                    mapping: dict[PoiKey, list[PoiKey]], t_crawl: int | None = None, seed: int = 0,
                    *, profile: BotnetProfile, port_pois: Iterable[PoiCandidate] = ()) -> ExtractionResult:
    return Puppeteer(botnet, profile).crawl(crawl_peer, pois, mapping, port_pois, t_crawl, seed)

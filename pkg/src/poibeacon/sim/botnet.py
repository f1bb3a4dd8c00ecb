"""The locally bootstrapped botnet the puppet talks to.

n peers take addresses from the bootstrap list, m joiners get synthetic
public addresses and join by asking the bootstrap peers for their peer
lists, then gossip once with the live peers they learned. After that the
overlay is frozen: getL requests are answered from fixed peer lists, so
every crawl cycle sees the same botnet.
"""
from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from ..dataset import PeerAddress
from .profile import BotnetProfile

# first octets avoided for synthetic addresses: private, loopback, multicast
_RESERVED_FIRST = {0, 10, 100, 127, 169, 172, 192, 198} | set(range(224, 256))


@dataclass
class SimPeer:
    addr: PeerAddress
    peers: list[PeerAddress] = field(default_factory=list)

    def shares(self, count: int) -> list[PeerAddress]:
        return self.peers[:count]


@dataclass
class SimBotnet:
    peers: dict[PeerAddress, SimPeer]
    bootstrap: list[PeerAddress]
    local: set[PeerAddress]
    local_bootstrap: list[PeerAddress]
    rng_seed: int
    capacity: int
    share_count: int
    tick: int = 0

    def is_live(self, addr: PeerAddress) -> bool:
        return addr in self.peers

    def retl(self, addr: PeerAddress) -> list[PeerAddress] | None:
        """Peers a live peer hands out in a retL; None if nobody answers."""
        peer = self.peers.get(addr)
        return None if peer is None else peer.shares(self.share_count)

    def _insert(self, peer: SimPeer, newcomer: PeerAddress) -> None:
        """Freshest entries go first. At capacity the oldest unreachable
        entry makes room, or the oldest entry if all are live."""
        if newcomer == peer.addr or newcomer in peer.peers:
            return
        if len(peer.peers) >= self.capacity:
            dead = [i for i, p in enumerate(peer.peers) if p not in self.peers]
            del peer.peers[dead[-1] if dead else -1]
        peer.peers.insert(0, newcomer)

    def _exchange(self, requester: SimPeer, target: SimPeer) -> None:
        """requester sends getL to target: target learns the requester,
        the requester merges the shared peers."""
        self._insert(target, requester.addr)
        for p in reversed(target.shares(self.share_count)):
            self._insert(requester, p)
        self.tick += 1

    def state(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "tick": self.tick,
            "capacity": self.capacity,
            "share_count": self.share_count,
            "bootstrap": [str(p) for p in self.bootstrap],
            "local_bootstrap": [str(p) for p in self.local_bootstrap],
            "local": sorted(str(p) for p in self.local),
            "peers": {str(a): [str(p) for p in sp.peers] for a, sp in sorted(self.peers.items())},
        }

    def state_json(self) -> str:
        return json.dumps(self.state(), sort_keys=True, indent=1)


def _synthetic_address(rng: random.Random, fixed_port: int | None, taken: set[int]) -> PeerAddress:
    while True:
        first = rng.randrange(1, 224)
        if first in _RESERVED_FIRST:
            continue
        ip = (first << 24) | rng.randrange(1 << 24)
        if ip & 0xFF in (0, 255) or ip in taken:
            continue
        taken.add(ip)
        port = fixed_port if fixed_port is not None else rng.randrange(1024, 65536)
        return PeerAddress(ip, port)


def bootstrap_local_botnet(profile: BotnetProfile, n: int, m: int, seed: int) -> SimBotnet:
    if n < 1:
        raise ValueError("need at least one local bootstrap peer")
    if n > len(profile.bootstrap):
        raise ValueError(f"n={n} exceeds the bootstrap list ({len(profile.bootstrap)} entries)")
    if m < 0:
        raise ValueError("m must be >= 0")
    rng = random.Random(seed)
    cap = profile.peer_list_capacity
    # the bootstrap peers come from the part of the list the sample loads
    loaded = profile.bootstrap[:cap] if len(profile.bootstrap) >= cap else profile.bootstrap
    if n > len(loaded):
        loaded = profile.bootstrap
    chosen = sorted(rng.sample(range(len(loaded)), n))
    local_boot = [loaded[i] for i in chosen]
    net = SimBotnet({}, list(profile.bootstrap), set(), local_boot, seed, cap, profile.retl_share_count)

    for addr in local_boot:
        net.peers[addr] = SimPeer(addr)
        net.local.add(addr)
    # every bot starts from the embedded bootstrap list
    for addr in local_boot:
        sp = net.peers[addr]
        for p in reversed(profile.bootstrap[:cap]):
            net._insert(sp, p)
    taken = {p.ip for p in profile.bootstrap}
    joiners = []
    for _ in range(m):
        addr = _synthetic_address(rng, profile.fixed_port, taken)
        sp = SimPeer(addr)
        for p in reversed(profile.bootstrap[:cap]):
            net._insert(sp, p)
        net.peers[addr] = sp
        net.local.add(addr)
        joiners.append(sp)
        for b in local_boot:
            net._exchange(sp, net.peers[b])
    for sp in joiners:
        targets = [p for p in sp.shares(net.share_count) if p in net.peers]
        for t in targets:
            net._exchange(sp, net.peers[t])
    return net


def share_closure(botnet: SimBotnet, start: Iterable[PeerAddress]) -> set[PeerAddress]:
    """Every address reachable from ``start`` by following retL shares."""
    seen = set(start)
    todo = deque(sorted(seen))
    while todo:
        shares = botnet.retl(todo.popleft()) or []
        for p in shares:
            if p not in seen:
                seen.add(p)
                todo.append(p)
    return seen

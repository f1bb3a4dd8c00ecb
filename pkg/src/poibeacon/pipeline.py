"""End-to-end glue: analysis of a collection trace, and a simulated
session bundling botnet, snapshot, collection run and discovered POIs."""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .confidence import ScoredPoi, filter_pois, score_all
from .crawler import RecordedStreams, bfs_crawl, threshold_sweep
from .dataset import DataClass, DataSet, PeerAddress, build_dataset
from .discovery import DiscoveryResult, PoiCandidate, PoiKey, discover
from .extraction import ExtractionResult
from .matching import match_ip_port_pois
from .sim.botnet import SimBotnet, bootstrap_local_botnet
from .sim.profile import BotnetProfile
from .sim.puppet import Puppeteer, PuppetRun
from .trace import TraceEntry


@dataclass
class Analysis:
    dataset: DataSet
    discovery: DiscoveryResult
    scored: list[ScoredPoi]
    mapping: dict[PoiKey, list[PoiKey]]

    def ip_pois(self, threshold=None) -> list[ScoredPoi]:
        pois = [s for s in self.scored
                if s.candidate.data_class is DataClass.IP and not s.candidate.kind.is_contiguous]
        return pois if threshold is None else filter_pois(pois, threshold)

    @property
    def port_candidates(self) -> list[PoiCandidate]:
        return self.discovery.of_class(DataClass.PORT)


def analyze(trace: Sequence[TraceEntry], bootstrap: Iterable[PeerAddress],
            socket_peers: Iterable[PeerAddress] = ()) -> Analysis:
    dataset = build_dataset(bootstrap, socket_peers)
    found = discover(trace, dataset)
    scored = score_all(found.candidates.values(), dataset, found.stats)
    mapping = match_ip_port_pois(found.of_class(DataClass.IP), found.of_class(DataClass.PORT),
                                 dataset.known_peers)
    return Analysis(dataset, found, scored, mapping)


@dataclass
class Session:
    profile: BotnetProfile
    seed: int
    botnet: SimBotnet
    puppeteer: Puppeteer
    collection: PuppetRun
    analysis: Analysis

    @property
    def run_id(self) -> str:
        return self.profile.run_id(self.seed)

    def crawl_seed(self, index: int) -> str:
        return f"{self.seed}:crawl:{index}"

    def crawl(self, crawl_peer: PeerAddress, threshold=0.8, index: int = 0) -> ExtractionResult:
        return self.puppeteer.crawl(crawl_peer, self.analysis.ip_pois(threshold), self.analysis.mapping,
                                    self.analysis.port_candidates, seed=self.crawl_seed(index))

    def bfs(self, budget: int, threshold=0.8, start: Iterable[PeerAddress] | None = None):
        counter = iter(range(budget))
        start = self.profile.bootstrap if start is None else start
        return bfs_crawl(lambda p: self.crawl(p, threshold, next(counter)), start, budget)

    def sample_crawl_peers(self, cycles: int) -> list[PeerAddress]:
        rng = random.Random(f"{self.seed}:crawl-peers")
        local = sorted(self.botnet.local)
        return [rng.choice(local) for _ in range(cycles)]

    def record_crawls(self, cycles: int) -> list[tuple[PeerAddress, PuppetRun]]:
        return [(p, self.puppeteer.crawl_run(p, seed=self.crawl_seed(i)))
                for i, p in enumerate(self.sample_crawl_peers(cycles))]

    def sweep(self, thresholds, cycles: int, recorded=None):
        runs = self.record_crawls(cycles) if recorded is None else recorded
        pois = self.analysis.ip_pois()
        streams = [RecordedStreams(run.trace, pois, self.analysis.port_candidates, self.analysis.mapping,
                                   responded=not run.diagnostics) for _, run in runs]
        return threshold_sweep(streams, pois, self.analysis.mapping, thresholds, self.botnet.bootstrap,
                               self.botnet.local, self.profile.fixed_port)


def prepare_session(profile: BotnetProfile, seed: int, n: int | None = None, m: int | None = None,
                    t_trace: int | None = None) -> Session:
    n = profile.local_bootstrap if n is None else n
    m = profile.joiners if m is None else m
    botnet = bootstrap_local_botnet(profile, n, m, seed)
    puppeteer = Puppeteer(botnet, profile)
    run = puppeteer.collect(t_trace, seed)
    analysis = analyze(run.trace, profile.bootstrap, run.socket_peers)
    return Session(profile, seed, botnet, puppeteer, run, analysis)

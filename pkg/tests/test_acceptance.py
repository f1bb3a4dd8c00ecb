"""Acceptance criteria 1-9. Each test prints one ``CRITERION n: PASS|FAIL``
line. Run with ``pytest tests/test_acceptance.py -s`` or as a script."""
import contextlib
import json
import random
import sys
import time
from fractions import Fraction

import pytest

from oracles import (ReplayMemory, bytes_read, bytes_written, contiguous_oracle, contiguous_score, ip_forms,
                     naive_closure, naive_matching, port_forms, standalone_oracle, standalone_score)
from poibeacon.cli import main as cli_main
from poibeacon.confidence import confidence_class, score_all
from poibeacon.crawler import classify_peers, poi_correctness
from poibeacon.dataset import (DataClass, PeerAddress, build_dataset, decode, ip_from_str,
                               representations_of_ip, representations_of_port)
from poibeacon.discovery import PoiKind, discover
from poibeacon.matching import match_sequences
from poibeacon.memory import MemoryTracker
from poibeacon.pipeline import prepare_session
from poibeacon.sim import load_fixture, share_closure
from poibeacon.sim.puppet import executed_sites
from poibeacon.trace import MemoryAccess, TraceEntry

FIXTURES = ("zeroaccess", "sality", "nugache", "kelihos")


@contextlib.contextmanager
def criterion(n, capsys):
    """Prints the verdict line even when the body raises."""
    state = {"detail": ""}
    start = time.perf_counter()
    try:
        yield state
    except BaseException as exc:
        msg = (str(exc).splitlines() or [""])[0][:200]
        with capsys.disabled():
            print(f"\nCRITERION {n}: FAIL ({type(exc).__name__}: {msg})")
        raise
    with capsys.disabled():
        print(f"\nCRITERION {n}: PASS ({state['detail']}; {time.perf_counter() - start:.2f}s)")


def test_criterion_1_representations(capsys):
    with criterion(1, capsys) as c:
        start = time.perf_counter()
        pats = {p.repr_kind.value: p.bytes for p in representations_of_ip(ip_from_str("10.20.30.40"))}
        assert pats == {"binary-msb": bytes.fromhex("0A141E28"), "binary-lsb": bytes.fromhex("281E140A"),
                        "ascii-dotted": b"10.20.30.40", "ascii-hex": b"0A141E28"}
        rng = random.Random(1)
        checked = 0
        for _ in range(1000):
            ip, port = rng.getrandbits(32), rng.randrange(65536)
            for origin, cls, pats, forms in ((ip, DataClass.IP, representations_of_ip(ip), ip_forms(ip)),
                                             (port, DataClass.PORT, representations_of_port(port),
                                              port_forms(port))):
                for p in pats:
                    assert p.bytes == forms[p.repr_kind.value]
                    assert decode(p.bytes, p.repr_kind, cls) == origin
                    checked += 1
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"{elapsed:.2f}s"
        c["detail"] = f"{checked} patterns decode to origin, literals exact"


def test_criterion_2_memory_tracker(capsys):
    with criterion(2, capsys) as c:
        start = time.perf_counter()
        rng = random.Random(2)
        alphabet = b"10.2"
        insns = [0x401000, 0x401004, 0x401008]
        searches = 0
        for _ in range(10_000):
            t, o = MemoryTracker(), ReplayMemory()
            for seq in range(rng.randint(1, 12)):
                insn = rng.choice(insns)
                addr = 0x2000 + rng.randrange(40)
                data = bytes(rng.choice(alphabet) for _ in range(rng.randint(1, 6)))
                t.record_write(insn, seq, MemoryAccess(addr, data))
                o.write(insn, seq, addr, data)
            comps = o.components()
            assert t.regions() == comps
            for _ in range(3):
                probe = 0x1FF8 + rng.randrange(56)
                assert t.find_memory_region(probe) == o.region_of(probe)
            cells = sorted(o.cells)
            for _ in range(3):
                a = rng.choice(cells)
                pat = bytes(rng.choice(alphabet) for _ in range(rng.randint(1, 4)))
                assert t.search_pattern(a, pat) == o.search(a, pat)
                searches += 1
            for s, n in comps:
                assert t.attribute_pattern_bytes(s, n) == o.writers(s, n)
        elapsed = time.perf_counter() - start
        assert elapsed < 30, f"{elapsed:.1f}s"
        c["detail"] = f"10000 write sequences, {searches} window searches equal replay"


def _random_trace(rng, peers):
    values = [p.ip for p in peers] + [int.from_bytes(p.ip.to_bytes(4, "big"), "little") for p in peers]
    values += [p.port for p in peers] + [7, 0xDEADBEEF]
    text = [ip_forms(p.ip)["ascii-dotted"] for p in peers] + [str(p.port).encode() for p in peers]
    trace = []
    for seq in range(rng.randint(5, 40)):
        addr = rng.choice([0x401000, 0x401004, 0x401008, 0x40100C])
        regs = {"eax": rng.choice(values)} if rng.random() < 0.6 else {}
        writes, reads = [], []
        if rng.random() < 0.5:
            chunk = rng.choice(text)
            off = rng.randrange(len(chunk))
            n = rng.randint(1, 3)
            data = chunk[off:off + n] or b"x"
            writes.append(MemoryAccess(0x3000 + rng.randrange(24), data))
        if rng.random() < 0.2:
            v = rng.choice(values).to_bytes(4, "big")
            reads.append(MemoryAccess(0x5000, b"\x11" + v + rng.choice([b"", b"10.2.3.4"])))
        trace.append(TraceEntry(seq, addr, regs, tuple(reads), tuple(writes)))
    return trace


def test_criterion_3_scores(capsys):
    with criterion(3, capsys) as c:
        start = time.perf_counter()
        rng = random.Random(3)
        peers = [PeerAddress(ip_from_str("10.2.3.4"), 80), PeerAddress(ip_from_str("1.2.3.4"), 16471)]
        ds = build_dataset(peers)
        n_sa = n_cg = 0
        while n_sa + n_cg < 1000:
            trace = _random_trace(rng, peers)
            res = discover(trace, ds)
            want_sa = standalone_oracle(trace, peers)
            want_w, want_r = contiguous_oracle(trace, peers)
            tw, tr = bytes_written(trace), bytes_read(trace)
            for s in score_all(res.candidates.values(), ds, res.stats):
                k = s.candidate.key
                assert 0 <= s.score <= 1
                if k.kind.is_contiguous:
                    pool, tot = (want_r, tr) if k.kind is PoiKind.CONTIGUOUS_READ else (want_w, tw)
                    occs = [o for o in pool if o[1] == k.data_class.value and k.addr in o[3]]
                    assert s.score == contiguous_score(k.addr, occs, tot[k.addr])
                    n_cg += 1
                else:
                    _, obs = want_sa[(k.addr, k.kind.value, k.data_class.value)]
                    assert s.score == standalone_score(obs, peers, k.data_class.value)
                    n_sa += 1
        for k in range(1, 10):
            edge = Fraction(k, 10)
            assert confidence_class(edge) == max(k - 1, 0)
            assert confidence_class(edge + Fraction(1, 10**9)) == k
        assert confidence_class(0) == 0 and confidence_class(Fraction(1, 10)) == 0 and confidence_class(1) == 9
        elapsed = time.perf_counter() - start
        assert elapsed < 10, f"{elapsed:.1f}s"
        c["detail"] = f"{n_sa} standalone + {n_cg} contiguous scores exact, class edges ok"


@pytest.mark.parametrize("name", FIXTURES)
def test_criterion_4_planted_pois(name, capsys):
    with criterion(f"4[{name}]", capsys) as c:
        start = time.perf_counter()
        s = prepare_session(load_fixture(name), 1)
        by_addr = {}
        for sc in s.analysis.scored:
            by_addr.setdefault(sc.candidate.addr, []).append(sc)
        peer_sites = pure = decoys = 0
        for addr, site in executed_sites(s.profile).items():
            if site.role == "peer" and site.data_class is not None:
                found = [x for x in by_addr.get(addr, []) if x.candidate.data_class is site.data_class]
                assert found, f"{site.name} not recovered"
                peer_sites += 1
                if site.pure:
                    assert all(x.score == 1 for x in found), site.name
                    pure += 1
            elif site.role == "decoy":
                worst = max((x.score for x in by_addr.get(addr, [])), default=None)
                if worst is not None:
                    assert worst < Fraction(4, 5), f"{site.name} scored {float(worst):.3f}"
                    decoys += 1
        assert decoys
        elapsed = time.perf_counter() - start
        assert elapsed < 60
        c["detail"] = f"{peer_sites} peer sites recovered, {pure} pure at 1.0, {decoys} decoys < 0.8"


def test_criterion_5_threshold_effect(capsys):
    with criterion(5, capsys) as c:
        start = time.perf_counter()
        s = prepare_session(load_fixture("zeroaccess"), 1)
        raw, filtered = s.sweep([0, 0.8], 100)
        assert raw.n == filtered.n == 100
        assert raw.avg_wrong > 0
        assert filtered.avg_wrong == 0
        assert filtered.avg_correct == raw.avg_correct
        elapsed = time.perf_counter() - start
        assert elapsed < 300
        c["detail"] = (f"WRONG {raw.avg_wrong:.2f} -> {filtered.avg_wrong:.2f}, "
                       f"CORRECT {raw.avg_correct:.2f} -> {filtered.avg_correct:.2f}")


def test_criterion_6_no_overestimation(capsys):
    with criterion(6, capsys) as c:
        start = time.perf_counter()
        checked, vacuous = 0, 0
        for name in FIXTURES:
            s = prepare_session(load_fixture(name), 1)
            cycles = [s.crawl(p, threshold=0, index=i) for i, p in enumerate(s.sample_crawl_peers(100))]
            corr = poi_correctness(cycles, s.botnet.bootstrap, s.botnet.local)
            for poi in s.analysis.ip_pois():
                if poi.score <= Fraction(4, 5):
                    continue
                got = corr.get(poi.key)
                if got is None:
                    vacuous += 1
                    continue
                assert got >= poi.score, f"{name} {poi.key}: correctness {float(got)} < {float(poi.score)}"
                checked += 1
        assert checked
        elapsed = time.perf_counter() - start
        assert elapsed < 300
        c["detail"] = f"{checked} POIs with score > 0.8 not overestimated, {vacuous} extracted nothing"


def test_criterion_7_bfs_closure(capsys):
    with criterion(7, capsys) as c:
        start = time.perf_counter()
        p = load_fixture("nugache")
        s = prepare_session(p, 1, n=8, m=41)
        assert len(s.botnet.local) == 49
        assert max(len(sp.peers) for sp in s.botnet.peers.values()) <= 15
        budget = len(s.botnet.local | set(s.botnet.bootstrap))
        found, cycles = s.bfs(budget, threshold=0.8)
        closure = share_closure(s.botnet, p.bootstrap)
        shares = {q: s.botnet.retl(q) or [] for q in s.botnet.peers}
        assert closure == naive_closure(shares, set(p.bootstrap))
        assert s.botnet.local <= closure, "overlay not connected through shares"
        assert found == closure
        assert len(cycles) <= len(closure) <= budget
        assert classify_peers(found, s.botnet.bootstrap, s.botnet.local).wrong == set()
        elapsed = time.perf_counter() - start
        assert elapsed < 120
        c["detail"] = (f"discovered == closure ({len(closure)} addresses, "
                       f"{len(closure & s.botnet.local)} live) in {len(cycles)} cycles")


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_criterion_8_cli_determinism(tmp_path, capsys):
    with criterion(8, capsys) as c:
        outputs = []
        for rep in ("a", "b"):
            root = tmp_path / rep
            sim, pois = root / "sim", root / "pois"
            steps = [
                ["simulate", "--profile", "zeroaccess", "--seed", "1", "--out", sim],
                ["discover", "--trace", sim / "trace.jsonl", "--bootstrap", sim / "bootstrap.txt",
                 "--socket-log", sim / "socket_log.jsonl", "--out", pois],
                ["crawl", "--profile", "zeroaccess", "--seed", "1", "--pois", pois / "pois.json",
                 "--budget", "10", "--out", root / "crawl.json"],
                ["sweep", "--profile", "zeroaccess", "--seed", "1", "--thresholds", "0,0.8",
                 "--cycles", "20", "--out", root / "sweep.csv"],
            ]
            for argv in steps:
                assert cli_main([str(a) for a in argv]) == 0, argv[0]
            outputs.append(_files(root))
        assert outputs[0] == outputs[1]
        assert json.loads(outputs[0]["crawl.json"])["run_id"] == load_fixture("zeroaccess").run_id(1)
        c["detail"] = f"{len(outputs[0])} output files byte-identical across reruns"


def test_criterion_9_matching(capsys):
    with criterion(9, capsys) as c:
        start = time.perf_counter()
        rng = random.Random(9)
        truncated = empty = mapped = 0
        for _ in range(1000):
            ips = [rng.getrandbits(32) for _ in range(4)]
            ports = [rng.randrange(65536) for _ in range(4)]
            known = {PeerAddress(rng.choice(ips), rng.choice(ports)) for _ in range(rng.randint(0, 10))}
            ip_seqs = {i: [rng.choice(ips + [None]) for _ in range(rng.randint(0, 4))]
                       for i in range(rng.randint(0, 4))}
            port_seqs = {10 + j: [rng.choice(ports) for _ in range(rng.randint(0, 4))]
                         for j in range(rng.randint(0, 4))}
            # plant a consistent pair so some instances map
            if ip_seqs and port_seqs and rng.random() < 0.5:
                pairs = [(rng.choice(ips), rng.choice(ports)) for _ in range(rng.randint(1, 4))]
                known |= {PeerAddress(a, b) for a, b in pairs}
                ip_seqs[0] = [a for a, _ in pairs] + [rng.choice(ips)] * rng.randint(0, 2)
                port_seqs[10] = [b for _, b in pairs]
            got = match_sequences(ip_seqs, port_seqs, known)
            assert got == naive_matching(ip_seqs, port_seqs, known)
            lens = [len(v) for v in ip_seqs.values()] + [len(v) for v in port_seqs.values()]
            truncated += len(set(lens)) > 1
            empty += 0 in lens
            mapped += bool(got)
        assert truncated and empty and mapped
        elapsed = time.perf_counter() - start
        assert elapsed < 10
        c["detail"] = f"1000 instances equal ({mapped} mapped, {truncated} unequal lengths, {empty} with empty)"


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))

import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import distinct_byte_forms, ip_forms, port_forms
from poibeacon.dataset import (DataClass, PeerAddress, ReprKind, build_dataset, decode, format_peer_list,
                               ip_from_str, parse_peer_list, representations_of_ip, representations_of_port)
from strategies import ips, peers, ports


def forms(patterns):
    return {p.repr_kind.value: p.bytes for p in patterns}


def test_ip_literal_forms():
    pats = representations_of_ip(ip_from_str("10.20.30.40"))
    assert forms(pats) == {
        "binary-msb": bytes.fromhex("0A141E28"),
        "binary-lsb": bytes.fromhex("281E140A"),
        "ascii-dotted": b"10.20.30.40",
        "ascii-hex": b"0A141E28",
    }


def test_all_zero_ip_collapses_binary_forms():
    pats = representations_of_ip(0)
    assert sorted(p.bytes for p in pats) == sorted([b"\0\0\0\0", b"0.0.0.0", b"00000000"])


def test_private_ip_forms():
    assert forms(representations_of_ip(ip_from_str("192.168.0.1"))) == {
        "binary-msb": bytes.fromhex("C0A80001"), "binary-lsb": bytes.fromhex("0100A8C0"),
        "ascii-dotted": b"192.168.0.1", "ascii-hex": b"C0A80001",
    }


@pytest.mark.parametrize("port, expect", [
    (80, {"binary-msb": bytes.fromhex("00000050"), "binary-lsb": bytes.fromhex("50000000"), "ascii-decimal": b"80"}),
    (16471, {"binary-msb": bytes.fromhex("00004057"), "binary-lsb": bytes.fromhex("57400000"),
             "ascii-decimal": b"16471"}),
])
def test_port_forms(port, expect):
    assert forms(representations_of_port(port)) == expect


def test_port_zero():
    assert sorted(p.bytes for p in representations_of_port(0)) == [b"\0\0\0\0", b"0"]


def test_port_out_of_range():
    with pytest.raises(ValueError):
        representations_of_port(70000)


@given(ips)
def test_ip_forms_match_oracle_and_decode(ip):
    pats = representations_of_ip(ip)
    expected = ip_forms(ip)
    for p in pats:
        assert p.data_class is DataClass.IP and p.origin == ip
        assert p.bytes == expected[p.repr_kind.value]
        assert decode(p.bytes, p.repr_kind, DataClass.IP) == ip
    assert len(pats) == distinct_byte_forms(list(expected.values()))


@given(ports)
def test_port_forms_match_oracle_and_decode(port):
    pats = representations_of_port(port)
    expected = port_forms(port)
    for p in pats:
        assert p.bytes == expected[p.repr_kind.value]
        assert decode(p.bytes, p.repr_kind, DataClass.PORT) == port
    assert len(pats) == distinct_byte_forms(list(expected.values()))


def test_decode_rejects_non_port():
    with pytest.raises(ValueError):
        decode(b"\x00\x01\x00\x00", ReprKind.BINARY_MSB, DataClass.PORT)


def test_single_peer_dataset():
    ds = build_dataset([PeerAddress.parse("10.20.30.40:80")])
    assert len(ds.ip_patterns) == 4 and len(ds.port_patterns) == 3


def test_shared_ip_different_ports():
    ds = build_dataset([PeerAddress.parse("10.20.30.40:80"), PeerAddress.parse("10.20.30.40:8080")])
    assert len(ds.ip_patterns) == 4 and len(ds.port_patterns) == 6


def test_random_set_pattern_counts():
    rng = random.Random(11)
    peer_list = [PeerAddress(rng.getrandbits(32), rng.randrange(65536)) for _ in range(256)]
    ds = build_dataset(peer_list[:200], peer_list[150:])
    ip_all = [f for ip in {p.ip for p in peer_list} for f in ip_forms(ip).values()]
    port_all = [f for port in {p.port for p in peer_list} for f in port_forms(port).values()]
    assert len(ds.ip_patterns) == distinct_byte_forms(ip_all)
    assert len(ds.port_patterns) == distinct_byte_forms(port_all)
    assert ds.known_peers == frozenset(peer_list)


@given(st.lists(peers, max_size=20))
def test_binary_lookup_is_exact(peer_list):
    ds = build_dataset(peer_list)
    for cls, attr, fn in ((DataClass.IP, "ip", ip_forms), (DataClass.PORT, "port", port_forms)):
        want = {b for p in peer_list for k, b in fn(getattr(p, attr)).items() if k.startswith("binary")}
        assert set(ds.binary_lookup(cls)) == want


def test_peer_list_parsing_and_format():
    text = "# comment\n10.20.30.40:80  # inline\n\n1.2.3.4:16471\n"
    parsed = parse_peer_list(text.splitlines())
    assert [str(p) for p in parsed] == ["10.20.30.40:80", "1.2.3.4:16471"]
    assert parse_peer_list(format_peer_list(parsed).splitlines()) == parsed


@pytest.mark.parametrize("bad", ["10.20.30.40", "10.20.30:80", "1.2.3.4:99999", "a.b.c.d:1"])
def test_bad_peer_entries(bad):
    with pytest.raises(ValueError):
        parse_peer_list([bad])

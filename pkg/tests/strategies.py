"""Hypothesis strategies for traces and peers."""
from hypothesis import strategies as st

from poibeacon.dataset import PeerAddress
from poibeacon.trace import MemoryAccess, TraceEntry

ips = st.integers(0, 2**32 - 1)
ports = st.integers(0, 0xFFFF)
peers = st.builds(PeerAddress, ips, ports)
REGS = ["eax", "ebx", "ecx", "edx"]


@st.composite
def accesses(draw, base=0x1000, span=64, max_len=12, alphabet=None):
    addr = draw(st.integers(base, base + span))
    n = draw(st.integers(1, max_len))
    if alphabet is None:
        data = draw(st.binary(min_size=n, max_size=n))
    else:
        data = bytes(draw(st.lists(st.sampled_from(alphabet), min_size=n, max_size=n)))
    return MemoryAccess(addr, data)


@st.composite
def traces(draw, max_len=30, insns=(0x401000, 0x401004, 0x401008, 0x40100C), alphabet=None,
           reg_values=None, span=64):
    n = draw(st.integers(0, max_len))
    out = []
    for seq in range(n):
        addr = draw(st.sampled_from(insns))
        names = draw(st.lists(st.sampled_from(REGS), max_size=2, unique=True))
        vals = reg_values if reg_values is not None else st.integers(0, 2**32 - 1)
        regs = {r: draw(vals) for r in names}
        reads = tuple(draw(st.lists(accesses(span=span, alphabet=alphabet), max_size=1)))
        writes = tuple(draw(st.lists(accesses(span=span, alphabet=alphabet), max_size=2)))
        out.append(TraceEntry(seq, addr, regs, reads, writes))
    return out

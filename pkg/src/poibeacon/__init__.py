"""Locating peer-handling instructions in execution traces of P2P bots and
reusing them to crawl the botnet."""

__version__ = "0.1.0"

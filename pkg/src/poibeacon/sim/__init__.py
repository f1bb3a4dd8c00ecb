"""Deterministic local botnet and a trace-emitting puppet bot."""
from .botnet import SimBotnet, SimPeer, bootstrap_local_botnet, share_closure
from .profile import BotnetProfile, ProfileError, load_fixture, load_profile
from .puppet import Puppeteer, PuppetRun, crawl_primitive, run_puppet

__all__ = [
    "BotnetProfile", "ProfileError", "PuppetRun", "Puppeteer", "SimBotnet", "SimPeer",
    "bootstrap_local_botnet", "crawl_primitive", "load_fixture", "load_profile",
    "run_puppet", "share_closure",
]

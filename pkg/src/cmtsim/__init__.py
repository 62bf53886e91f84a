"""Discrete-event simulator for concurrent multipath transport.

A single-process, deterministic event simulator plus a small network model
(links with finite capacity, propagation delay, random error loss and
drop-tail queues), a multipath reliable transport with per-path congestion
state, three pluggable congestion controllers, and an experiment harness
with a command line front end.
"""

__version__ = "0.1.0"

"""smrkit: component-based execution with automatic replication enrichment.

The package splits into layers:

* ``model``/``components`` — deterministic state-machine components and the
  per-unit sequential step loop.
* ``architecture``/``consolidate``/``transform`` — application descriptions,
  result-consolidation policies, and the enrichment pass that replaces
  selected components with replication groups wired through frontends,
  replica proxies, and consolidators.
* ``auth``/``wire``/``ordering`` — signatures, canonical frames, and the
  leader-based total-order broadcast that drives each group.
* ``runtime``/``sim``/``transport`` — executable nodes over either a seeded
  discrete-event simulator or real TCP sockets.
* ``deploy`` — device placement planning and deployment artifact generation.
* ``bench`` — throughput/latency, replication-overhead, and leader-failure
  benchmarks with CSV and plot output.
"""

from __future__ import annotations

__version__ = "0.1.0"

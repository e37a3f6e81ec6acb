"""Byte-exact message accounting and run analysis.

Every simulated message is charged once, at its send event, into exactly
one byte class; the announcement classes (low-fanout flood INVs,
reconciliation control+sketches, bisection, fallback exchanges,
post-reconciliation INVs) partition announcement traffic, and getdata /
tx_body cover the remainder. Counters are totals, not time series.

The closed-form flooding cost model returns a [1x, 2x] band per node:
each undirected link carries every announcement at least once, and a node
pays for an announcement on each of its links either once (one direction)
or twice (simultaneous in-flight announcements both ways), so the
direction split is reported as a band rather than a point.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import messages as msg

#: reach_latency fractions precomputed at finalize time
FRACTION_GRID = (0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 1.0)


@dataclass(frozen=True)
class MessageSizeModel:
    """Wire cost constants, bytes.

    One full single-peer relay (announcement + request share + body) is
    pinned to the 300-byte decomposition 32 + 24 + 244. The per-message
    header approximates the P2P envelope and is configurable so its effect
    can be tested. Sketches cost exactly ceil(bits*capacity/8); a sketch
    response additionally carries the responder's set size; recon and
    bisect requests share one fixed 12-byte payload.
    """

    header: int = 24
    inv_item: int = 32
    getdata_item: int = 32
    tx_body: int = 244
    recon_request: int = 12
    shortid_bits: int = 64

    def __post_init__(self):
        if self.inv_item + self.tx_body + self.header > 300:
            raise ValueError("relay decomposition exceeds 300 bytes")

    @property
    def shortid_item(self) -> int:
        return self.shortid_bits // 8

    def sketch_bytes(self, payload) -> int:
        return (payload.bits * payload.capacity + 7) // 8

    def size(self, message) -> int:
        """Total bytes for one message, header included."""
        if isinstance(message, msg.Inv):
            return self.header + self.inv_item * len(message.items)
        if isinstance(message, msg.GetData):
            return self.header + self.getdata_item * len(message.items)
        if isinstance(message, msg.Tx):
            return self.header + self.tx_body
        if isinstance(message, msg.TxResponse):
            return (self.header + self.tx_body * len(message.items)
                    + self.shortid_item * len(message.not_found))
        if isinstance(message, msg.ReconRequest):
            return self.header + self.recon_request
        if isinstance(message, msg.ReconSketchResponse):
            return self.header + self.sketch_bytes(message.payload)
        if isinstance(message, msg.BisectRequest):
            return self.header + self.recon_request
        if isinstance(message, msg.BisectResponse):
            return self.header + self.sketch_bytes(message.payload)
        if isinstance(message, msg.ShortIdTxRequest):
            return self.header + self.shortid_item * len(message.short_ids)
        raise TypeError(f"unsized message type {type(message)!r}")


def analytic_flood_cost(connectivity: int, tx_rate: float, seconds: float,
                        inv_item: int = 32) -> tuple[float, float]:
    """Per-node announcement bytes for pure flooding, as a (low, high) band.

    low = connectivity * tx_rate * inv_item * seconds (every link carries
    each announcement once); high doubles it (each announcement crossing
    every link in both directions)."""
    if connectivity <= 0 or tx_rate <= 0 or seconds <= 0:
        raise ValueError("arguments must be positive")
    low = connectivity * tx_rate * inv_item * seconds
    return low, 2.0 * low


class MetricsLedger:
    """Collected measurements of one simulation run."""

    def __init__(self, n_nodes: int, size_model: MessageSizeModel,
                 config_summary: dict | None = None):
        self.n_nodes = n_nodes
        self.size_model = size_model
        self.config = dict(config_summary or {})
        self.bytes_by_class = {c: 0 for c in msg.ALL_CLASSES}
        self.bytes_sent = 0
        self.bytes_received = 0
        self.messages_sent = 0
        self.node_sent = np.zeros(n_nodes, dtype=np.int64)
        self.node_received = np.zeros(n_nodes, dtype=np.int64)
        self.node_announce = np.zeros(n_nodes, dtype=np.int64)  # sent+received
        self.inv_items_sent = 0
        self.inv_items_redundant = 0
        self.inv_item_bytes = 0          # announcement items only, no headers
        self.shortid_not_found = 0
        # per-round records
        self.round_size_a: list[int] = []
        self.round_size_b: list[int] = []
        self.round_d: list[int] = []
        self.round_true_diff: list[int] = []
        self.round_outcome: list[str] = []
        # transactions
        self.tx_origin: list[int] = []
        self.tx_origin_time: list[float] = []
        # spy state: tx -> [time, announcing_peer, tie]
        self.spy_first: dict[int, list] = {}
        self.spy_count = 0
        self.spy_kind = None
        self.spy_fraction = 0.0
        self.originator_is_spy: set[int] = set()
        # filled by finalize()
        self.n_reachable = n_nodes
        self.reach_time = None           # (n_tx, len(FRACTION_GRID)) or None
        self.reach_count = None
        self.coverage_shortfall = 0

    # -- collection ----------------------------------------------------------

    def charge(self, src: int, dst: int, message, klass: str) -> None:
        size = self.size_model.size(message)
        self.bytes_by_class[klass] += size
        self.bytes_sent += size
        self.bytes_received += size
        self.messages_sent += 1
        self.node_sent[src] += size
        self.node_received[dst] += size
        if klass in msg.ANNOUNCEMENT_CLASSES:
            self.node_announce[src] += size
            self.node_announce[dst] += size
        if isinstance(message, msg.Inv):
            self.inv_items_sent += len(message.items)
            self.inv_item_bytes += self.size_model.inv_item * len(message.items)

    def charge_many(self, src: int, dst: int, count: int, each: int,
                    klass: str) -> None:
        """Charge count identical messages of `each` bytes in one call."""
        size = count * each
        self.bytes_by_class[klass] += size
        self.bytes_sent += size
        self.bytes_received += size
        self.messages_sent += count
        self.node_sent[src] += size
        self.node_received[dst] += size
        if klass in msg.ANNOUNCEMENT_CLASSES:
            self.node_announce[src] += size
            self.node_announce[dst] += size

    def record_round(self, size_a: int, size_b: int, d: int, true_diff: int,
                     outcome: str) -> None:
        self.round_size_a.append(size_a)
        self.round_size_b.append(size_b)
        self.round_d.append(d)
        self.round_true_diff.append(true_diff)
        self.round_outcome.append(outcome)

    def record_spy_exposure(self, tx: int, time: float, peer: int) -> None:
        cur = self.spy_first.get(tx)
        if cur is None or time < cur[0]:
            self.spy_first[tx] = [time, peer, False]
        elif time == cur[0] and peer != cur[1]:
            cur[2] = True

    def finalize(self, learn_time: np.ndarray, reachable_mask: np.ndarray,
                 origin_times: np.ndarray) -> None:
        """Reduce the (node, tx) learn-time matrix to per-transaction reach
        times on FRACTION_GRID, then drop it."""
        self.n_reachable = int(reachable_mask.sum())
        times = learn_time[reachable_mask, :]  # (n_reach, n_tx)
        n_tx = times.shape[1]
        self.reach_count = (np.isfinite(times)).sum(axis=0)
        self.coverage_shortfall = int(
            (self.reach_count < self.n_reachable).sum())
        times = np.sort(times, axis=0)
        self.reach_time = np.full((n_tx, len(FRACTION_GRID)), np.inf)
        for fi, f in enumerate(FRACTION_GRID):
            k = max(1, math.ceil(f * self.n_reachable)) - 1
            self.reach_time[:, fi] = times[k, :] - origin_times

    # -- analyses -------------------------------------------------------------

    def redundancy_ratio(self) -> float:
        """Redundant sent announcements / all sent announcements."""
        if self.inv_items_sent == 0:
            return 0.0
        return self.inv_items_redundant / self.inv_items_sent

    def reach_latency(self, fraction: float) -> float:
        """Mean seconds for a transaction to reach ceil(f * reachable)
        nodes; only transactions that actually got that far count."""
        if not 0.0 < fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        try:
            fi = FRACTION_GRID.index(fraction)
        except ValueError:
            raise ValueError(f"fraction {fraction} not precomputed; "
                             f"use one of {FRACTION_GRID}") from None
        col = self.reach_time[:, fi]
        ok = np.isfinite(col)
        return float(col[ok].mean()) if ok.any() else math.inf

    def first_spy_success(self) -> float | None:
        """Fraction of eligible transactions whose first spy exposure names
        the true originator; timestamp ties count as failures. None when no
        spies were configured."""
        if self.spy_count == 0:
            return None
        hits = 0
        eligible = 0
        for tx, origin in enumerate(self.tx_origin):
            if tx in self.originator_is_spy:
                continue
            eligible += 1
            rec = self.spy_first.get(tx)
            if rec is not None and not rec[2] and rec[1] == origin:
                hits += 1
        return hits / eligible if eligible else None

    def round_outcome_rates(self) -> dict:
        """direct/bisect/fallback shares plus estimation-correct rate and
        the mean pre-round true difference."""
        n = len(self.round_outcome)
        if n == 0:
            return {"rounds": 0, "direct": 0.0, "bisect": 0.0,
                    "fallback": 0.0, "est_correct": 0.0, "mean_diff": 0.0}
        counts = {"direct": 0, "bisect": 0, "fallback": 0}
        for o in self.round_outcome:
            counts[o] += 1
        return {
            "rounds": n,
            "direct": counts["direct"] / n,
            "bisect": counts["bisect"] / n,
            "fallback": counts["fallback"] / n,
            "est_correct": counts["direct"] / n,
            "mean_diff": sum(self.round_true_diff) / n,
        }

    def announcement_bytes(self) -> int:
        return sum(self.bytes_by_class[c] for c in msg.ANNOUNCEMENT_CLASSES)

    def announcement_bytes_per_node(self) -> float:
        return self.announcement_bytes() / self.n_nodes

    def total_bytes(self) -> int:
        return sum(self.bytes_by_class.values())

    def announcement_share(self) -> float:
        return self.announcement_bytes() / self.total_bytes()

    def breakdown(self) -> dict[str, float]:
        """Announcement byte classes as shares of announcement traffic."""
        total = self.announcement_bytes()
        if total == 0:
            return {c: 0.0 for c in msg.ANNOUNCEMENT_CLASSES}
        return {c: self.bytes_by_class[c] / total
                for c in msg.ANNOUNCEMENT_CLASSES}

    # -- CSV export -----------------------------------------------------------

    def export_csv(self, outdir: str, run_id: str) -> list[str]:
        """Write bandwidth/latency/rounds/spies CSVs; returns paths."""
        os.makedirs(outdir, exist_ok=True)
        protocol = self.config.get("protocol", "")
        connectivity = self.config.get("connectivity", "")
        paths = []

        path = os.path.join(outdir, "bandwidth.csv")
        new = not os.path.exists(path)
        with open(path, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["run_id", "protocol", "connectivity", "class",
                            "bytes"])
            for klass in msg.ALL_CLASSES:
                w.writerow([run_id, protocol, connectivity, klass,
                            self.bytes_by_class[klass]])
        paths.append(path)

        path = os.path.join(outdir, "latency.csv")
        new = not os.path.exists(path)
        with open(path, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["run_id", "protocol", "fraction", "seconds"])
            for f in FRACTION_GRID:
                sec = self.reach_latency(f) if self.reach_time is not None \
                    else math.inf
                w.writerow([run_id, protocol, f, sec])
        paths.append(path)

        path = os.path.join(outdir, "rounds.csv")
        new = not os.path.exists(path)
        with open(path, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["run_id", "size_a", "size_b", "d", "D",
                            "outcome"])
            for i in range(len(self.round_outcome)):
                w.writerow([run_id, self.round_size_a[i],
                            self.round_size_b[i], self.round_d[i],
                            self.round_true_diff[i], self.round_outcome[i]])
        paths.append(path)

        path = os.path.join(outdir, "spies.csv")
        new = not os.path.exists(path)
        with open(path, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(["run_id", "spy_kind", "spy_fraction",
                            "success_rate"])
            if self.spy_count:
                rate = self.first_spy_success()
                w.writerow([run_id, self.spy_kind, self.spy_fraction,
                            "" if rate is None else rate])
        paths.append(path)
        return paths

"""Per-link set reconciliation sessions.

A session lives on one end of a link. The end that owns the link outbound
(the connection initiator, which also chose the link salt) initiates
rounds and is the only side that ever decodes sketches; the other end only
serves. One round walks Idle -> AwaitSketch -> (done | AwaitBisect ->
(done | Fallback -> done)) and never revisits a phase; after it completes
the session is Idle again for the next round.

Difference estimate:    d = ceil(||A|-|B|| + q * min(|A|,|B|) + c), c = 1
q refit at round end:   q = (D - ||A|-|B||) / min(|A|,|B|), clamped to [0, 2]

Sketch contents are produced through a codec so the simulator can swap the
field arithmetic for an outcome-equivalent fast path; PinSketchCodec is
the real thing.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field as dc_field
from typing import Iterable

from . import messages as msg
from .sketch import DecodeFailure, SyndromeSketch, serialized_size

ESTIMATOR_CONST = 1
Q_MIN, Q_MAX = 0.0, 2.0
DEFAULT_SET_SIZE_CAP = 10_000

#: sessions keep q at max(fitted, decay * previous): the refit formula alone
#: tracks the last observed residual, which under-estimates about 40% of
#: rounds once link timing jitter makes the difference noisy; letting q fall
#: only slowly keeps the estimate near a running upper quantile instead
Q_DECAY = 0.9


class ProtocolError(Exception):
    """Out-of-phase call or malformed/hostile peer input."""


def estimate_diff(size_a: int, size_b: int, q: float,
                  c_const: int = ESTIMATOR_CONST) -> int:
    """Estimated set difference; always at least 1."""
    if size_a < 0 or size_b < 0:
        raise ValueError("set sizes must be nonnegative")
    d = math.ceil(abs(size_a - size_b) + q * min(size_a, size_b) + c_const)
    return max(1, d)


def update_q(true_diff: int, size_a: int, size_b: int, prev_q: float) -> float:
    """Refit q from the observed difference; unchanged when the smaller set
    was empty (the formula is undefined there)."""
    smaller = min(size_a, size_b)
    if smaller == 0:
        return prev_q
    q = (true_diff - abs(size_a - size_b)) / smaller
    return min(max(q, Q_MIN), Q_MAX)


def short_id(txid: bytes, salt: int, bits: int = 64) -> int:
    """Salted short id: keyed blake2b of the 32-byte txid truncated to
    bits, with 0 remapped to 1 (0 is unrepresentable in sketches)."""
    if len(txid) != 32:
        raise ValueError("txid must be 32 bytes")
    digest = hashlib.blake2b(
        txid, key=salt.to_bytes(8, "little"), digest_size=8).digest()
    v = int.from_bytes(digest, "little")
    if bits < 64:
        v &= (1 << bits) - 1
    return v if v else 1


def _mix64(x: int) -> int:
    """Bijective 64-bit mixer (splitmix64 finalizer)."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def mix64_table(n: int):
    """Vectorized _mix64 over 0..n-1 (0 remapped to 1), as uint64 array."""
    import numpy as np

    x = np.arange(n, dtype=np.uint64)
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    x[x == 0] = 1
    return x


# ---------------------------------------------------------------------------
# Sketch codecs


class PinSketchCodec:
    """Real PinSketch coding over salted short ids."""

    def __init__(self, salt: int, bits: int = 64, txid_bytes=None):
        self.salt = salt
        self.bits = bits
        self._txid_bytes = txid_bytes or (lambda t: int(t).to_bytes(32, "little"))

    def shortid_map(self, txs: Iterable) -> tuple[dict[int, object], list]:
        """sid -> tx map; same-sid collisions evict all but the first tx (in
        deterministic tx order) to the announcement list."""
        mapping: dict[int, object] = {}
        evicted = []
        for tx in sorted(txs):
            sid = short_id(self._txid_bytes(tx), self.salt, self.bits)
            if sid in mapping:
                evicted.append(tx)
            else:
                mapping[sid] = tx
        return mapping, evicted

    def encode(self, sids, capacity: int):
        return SyndromeSketch.from_elements(self.bits, capacity, sids)

    def encode_range(self, sids, capacity: int, lo: int, hi: int):
        return SyndromeSketch.from_elements(
            self.bits, capacity, (s for s in sids if lo <= s < hi))

    def merge(self, a, b):
        return a.merge(b)

    def decode(self, payload) -> frozenset[int] | None:
        try:
            return payload.decode()
        except DecodeFailure:
            return None

    def payload_bytes(self, payload) -> int:
        return serialized_size(payload.bits, payload.capacity)


@dataclass(frozen=True)
class ExactPayload:
    """Stand-in sketch: the short-id set itself plus the sketch geometry."""
    sids: frozenset[int]
    bits: int
    capacity: int


class ExactSetCodec:
    """Outcome-equivalent fast codec: short ids come from a bijective mixer
    (collision-free, uniform over the id space, as 64-bit salted hashing is
    at simulated scales) and decode succeeds exactly when the difference
    fits the capacity, which is the verified behavior of the real codec.

    sid_table, when provided, is the precomputed mixer output for dense tx
    indices (see mix64_table); it removes per-round hashing cost."""

    def __init__(self, salt: int = 0, bits: int = 64, sid_table=None):
        self.salt = salt
        self.bits = bits
        self.sid_table = sid_table

    def shortid_map(self, txs: Iterable) -> tuple[dict[int, object], list]:
        if self.sid_table is not None:
            txl = list(txs)
            sids = self.sid_table[txl]
            return dict(zip((int(s) for s in sids), txl)), []
        return {_mix64(int(tx)) or 1: tx for tx in txs}, []

    def encode(self, sids, capacity: int):
        return ExactPayload(frozenset(sids), self.bits, capacity)

    def encode_range(self, sids, capacity: int, lo: int, hi: int):
        return ExactPayload(frozenset(s for s in sids if lo <= s < hi),
                            self.bits, capacity)

    def merge(self, a: ExactPayload, b: ExactPayload) -> ExactPayload:
        if (a.bits, a.capacity) != (b.bits, b.capacity):
            raise ValueError("cannot merge payloads of different shape")
        return ExactPayload(a.sids ^ b.sids, a.bits, a.capacity)

    def decode(self, payload: ExactPayload) -> frozenset[int] | None:
        if len(payload.sids) > payload.capacity:
            return None
        return payload.sids

    def payload_bytes(self, payload: ExactPayload) -> int:
        return serialized_size(payload.bits, payload.capacity)


# ---------------------------------------------------------------------------
# Session state machine


class Phase(enum.Enum):
    IDLE = "idle"
    AWAIT_SKETCH = "await_sketch"
    AWAIT_BISECT = "await_bisect"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class RoundOutcome:
    """Terminal result of one reconciliation round (initiator side)."""
    kind: str                                  # direct | bisect | fallback
    missing_local_shortids: tuple[int, ...]    # to request by short id
    missing_remote_txs: tuple                  # to announce to the peer
    missing_local_txs: tuple = ()              # fallback path: known full ids
    size_a: int = 0
    size_b: int = 0
    d: int = 0
    true_diff: int = 0


@dataclass(frozen=True)
class BisectNeeded:
    d: int


@dataclass(frozen=True)
class FallbackNeeded:
    pass


@dataclass
class ReconSession:
    """One end of a link's reconciliation state.

    The initiator end drives rounds; the responder end keeps the snapshot
    of its last served sketch so bisection, short-id requests, and fallback
    refer to the same set the sketch was computed over.
    """

    codec: object
    q: float = 0.0
    c_const: int = ESTIMATOR_CONST
    set_size_cap: int = DEFAULT_SET_SIZE_CAP
    local_set: set = dc_field(default_factory=set)
    phase: Phase = Phase.IDLE

    # initiator per-round state
    _snapshot_map: dict = dc_field(default_factory=dict)
    _evicted: list = dc_field(default_factory=list)
    _claimed_size: int = 0
    _peer_size: int = 0
    _d: int = 0
    _my_payload: object = None
    _diff_payload: object = None
    last_estimate: int = 0

    # responder per-serve state
    _served_map: dict = dc_field(default_factory=dict)
    _served_d: int = 0
    _served_evicted: list = dc_field(default_factory=list)

    # -- reconciliation set maintenance -------------------------------------

    def add(self, tx) -> None:
        self.local_set.add(tx)

    def discard(self, tx) -> None:
        """Drop a transaction the peer is now known to have."""
        self.local_set.discard(tx)

    # -- initiator side ------------------------------------------------------

    def begin_round(self) -> msg.ReconRequest:
        if self.phase is not Phase.IDLE:
            raise ProtocolError(f"begin_round in phase {self.phase}")
        snapshot = frozenset(self.local_set)
        self.local_set.clear()
        self._snapshot_map, self._evicted = self.codec.shortid_map(snapshot)
        self._claimed_size = len(self._snapshot_map)
        self.phase = Phase.AWAIT_SKETCH
        return msg.ReconRequest(self._claimed_size, self.q)

    def finish_round(self, response: msg.ReconSketchResponse):
        if self.phase is not Phase.AWAIT_SKETCH:
            raise ProtocolError(f"finish_round in phase {self.phase}")
        self._peer_size = response.set_size
        self._d = estimate_diff(self._claimed_size, self._peer_size,
                                self.q, self.c_const)
        self.last_estimate = self._d
        self._my_payload = self.codec.encode(self._snapshot_map, self._d)
        self._diff_payload = self.codec.merge(self._my_payload,
                                              response.payload)
        decoded = self.codec.decode(self._diff_payload)
        if decoded is None:
            self.phase = Phase.AWAIT_BISECT
            return BisectNeeded(self._d)
        return self._success(decoded, "direct")

    def bisect_request(self) -> msg.BisectRequest:
        if self.phase is not Phase.AWAIT_BISECT:
            raise ProtocolError(f"bisect_request in phase {self.phase}")
        return msg.BisectRequest()

    def finish_bisect(self, response: msg.BisectResponse):
        """Decode low half from the peer's subset sketch and the high half
        by linearity (full-difference sketch XOR low-difference sketch)."""
        if self.phase is not Phase.AWAIT_BISECT:
            raise ProtocolError(f"finish_bisect in phase {self.phase}")
        mid = 1 << (self.codec.bits - 1)
        my_low = self.codec.encode_range(self._snapshot_map, self._d, 0, mid)
        low_diff = self.codec.merge(my_low, response.payload)
        low = self.codec.decode(low_diff)
        high_diff = self.codec.merge(self._diff_payload, low_diff)
        high = self.codec.decode(high_diff)
        if low is None or high is None:
            self.phase = Phase.FALLBACK
            return FallbackNeeded()
        return self._success(low | high, "bisect")

    def fallback_announce(self) -> msg.Inv:
        if self.phase is not Phase.FALLBACK:
            raise ProtocolError(f"fallback_announce in phase {self.phase}")
        items = tuple(sorted(self._snapshot_map.values())) \
            + tuple(self._evicted)
        return msg.Inv(items, klass=msg.CLASS_FALLBACK)

    def finish_fallback(self, remote_items: Iterable) -> RoundOutcome:
        if self.phase is not Phase.FALLBACK:
            raise ProtocolError(f"finish_fallback in phase {self.phase}")
        mine = frozenset(self._snapshot_map.values()) | set(self._evicted)
        theirs = frozenset(remote_items)
        true_diff = len(mine ^ theirs)
        outcome = RoundOutcome(
            kind="fallback",
            missing_local_shortids=(),
            missing_local_txs=tuple(sorted(theirs - mine)),
            missing_remote_txs=tuple(sorted(mine - theirs)),
            size_a=self._claimed_size, size_b=self._peer_size,
            d=self._d, true_diff=true_diff)
        self.q = max(update_q(true_diff, self._claimed_size,
                              self._peer_size, self.q),
                     self.q * Q_DECAY)
        self._reset_round()
        return outcome

    def _success(self, decoded_sids: frozenset[int], kind: str) -> RoundOutcome:
        missing_local = []
        missing_remote = []
        for sid in sorted(decoded_sids):
            tx = self._snapshot_map.get(sid)
            if tx is None:
                missing_local.append(sid)
            else:
                missing_remote.append(tx)
        true_diff = len(decoded_sids)
        outcome = RoundOutcome(
            kind=kind,
            missing_local_shortids=tuple(missing_local),
            missing_remote_txs=tuple(missing_remote) + tuple(self._evicted),
            size_a=self._claimed_size, size_b=self._peer_size,
            d=self._d, true_diff=true_diff)
        self.q = max(update_q(true_diff, self._claimed_size,
                              self._peer_size, self.q),
                     self.q * Q_DECAY)
        self._reset_round()
        return outcome

    def _reset_round(self) -> None:
        self.phase = Phase.IDLE
        self._snapshot_map = {}
        self._evicted = []
        self._my_payload = None
        self._diff_payload = None

    # -- responder side ------------------------------------------------------

    def serve_round(self, request: msg.ReconRequest) \
            -> tuple[msg.ReconSketchResponse, tuple]:
        """Build the capacity-d sketch of the local set. Returns the response
        plus any collision-evicted transactions to announce separately."""
        if request.set_size > self.set_size_cap or request.set_size < 0:
            raise ProtocolError(
                f"claimed set size {request.set_size} exceeds cap")
        snapshot = frozenset(self.local_set)
        self.local_set.clear()
        self._served_map, self._served_evicted = \
            self.codec.shortid_map(snapshot)
        size_b = len(self._served_map)
        self._served_d = estimate_diff(request.set_size, size_b,
                                       request.q, self.c_const)
        payload = self.codec.encode(self._served_map, self._served_d)
        return (msg.ReconSketchResponse(payload, size_b),
                tuple(self._served_evicted))

    def serve_bisect(self, request: msg.BisectRequest) -> msg.BisectResponse:
        mid = 1 << (self.codec.bits - 1)
        payload = self.codec.encode_range(self._served_map, self._served_d,
                                          0, mid)
        return msg.BisectResponse(payload)

    def serve_tx_request(self, request: msg.ShortIdTxRequest) \
            -> msg.TxResponse:
        """Resolve requested short ids against the snapshot the sketch was
        computed over; unknown ids get an explicit not-found."""
        found, missing = [], []
        for sid in request.short_ids:
            tx = self._served_map.get(sid)
            if tx is None:
                missing.append(sid)
            else:
                found.append(tx)
        return msg.TxResponse(tuple(found), tuple(missing))

    def served_fallback_items(self) -> tuple:
        return tuple(sorted(self._served_map.values())) \
            + tuple(self._served_evicted)

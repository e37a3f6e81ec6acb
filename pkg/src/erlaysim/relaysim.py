"""Deterministic discrete-event simulator of transaction relay.

Protocols:
  btcflood   every node announces on every link (minus echo suppression)
             behind per-link exponential diffusion clocks, mean t_oi on the
             announcer's outbound links and t_ii on its inbound links.
  erlay      public nodes flood on up to flood_outbound of their outbound
             links (mean t_oi); every link additionally runs periodic set
             reconciliation, initiated by the link's outbound owner.
  sweep      erlay variant flooding on X sampled inbound plus Y sampled
             outbound links of public nodes, reconciliation on all links
             (X=0, Y=8 is exactly erlay; X=Y=0 is reconciliation-only).

The event loop is single-threaded and fully deterministic for a given
seed: one random.Random stream, a sequence-numbered heap, and sorted
iteration everywhere order could leak into scheduling.

Performance notes (desk scale is thousands of nodes): transactions are
dense int indices; per-(node, tx) state lives in numpy matrices; INV and
body batches are processed vectorized. Announcement queues are implicit -
a per-channel pointer into the node's learn-ordered transaction list plus
a small suppression set replaces per-item queues, and reconciliation sets
are the same structure per link side, so inserts are O(1) bookkeeping.
GETDATA round trips are folded into the INV delivery (bytes charged, the
body batch scheduled two link-latencies later) rather than heap events.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field, fields

import numpy as np

from . import messages as msg
from .metrics import MessageSizeModel, MetricsLedger
from .recon import (
    BisectNeeded,
    ExactSetCodec,
    FallbackNeeded,
    Phase,
    PinSketchCodec,
    ProtocolError,
    ReconSession,
    RoundOutcome,
    mix64_table,
)
from .topology import ConfigError, Topology, build_topology

PROTOCOLS = ("btcflood", "erlay", "sweep")

STATE_UNKNOWN, STATE_REQUESTED, STATE_KNOWN = 0, 1, 2

EV_ORIGINATE = 0
EV_FLUSH = 1
EV_DELIVER = 2
EV_TXBATCH = 3
EV_RECON_TICK = 4
EV_RESPOND_TICK = 5


@dataclass(frozen=True)
class _TxBatch:
    """Bodies answering a GETDATA; charged as one Tx message per item."""
    items: tuple


@dataclass
class SimConfig:
    n_public: int = 600
    n_private: int = 5400
    connectivity: int = 8
    tx_rate: float = 7.0
    duration_s: float = 600.0
    protocol: str = "erlay"
    flood_inbound: int = 0          # sweep: X inbound flooding links
    flood_outbound: int = 8         # erlay cap / sweep Y
    t_recon: float = 1.0
    t_oi: float | None = None       # default 2.0 for btcflood, 1.0 otherwise
    t_ii: float = 2.0
    t_ri: float = 0.05
    black_hole_fraction: float = 0.0   # fraction of public nodes
    spy_kind: str | None = None        # "public" | "private"
    spy_fraction: float = 0.0
    seed: int = 1
    latency_min_s: float = 0.01
    latency_max_s: float = 0.30
    shortid_bits: int = 64
    recon_set_cap: int = 10_000
    codec: str = "exact"               # "exact" | "pinsketch"
    drain_s: float = 90.0
    size_model: MessageSizeModel = field(default_factory=MessageSizeModel)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.codec not in ("exact", "pinsketch"):
            raise ConfigError(f"unknown codec {self.codec!r}")
        for name in ("tx_rate", "duration_s", "t_recon", "t_ii", "t_ri"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.t_oi is not None and self.t_oi <= 0:
            raise ConfigError("t_oi must be positive")
        for name in ("black_hole_fraction", "spy_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.spy_kind not in (None, "public", "private"):
            raise ConfigError(f"unknown spy_kind {self.spy_kind!r}")
        if not 0 < self.latency_min_s <= self.latency_max_s:
            raise ConfigError("bad latency range")
        if self.flood_inbound < 0 or self.flood_outbound < 0:
            raise ConfigError("flood link counts must be >= 0")

    @property
    def effective_t_oi(self) -> float:
        if self.t_oi is not None:
            return self.t_oi
        return 2.0 if self.protocol == "btcflood" else 1.0

    def summary(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v if not isinstance(v, MessageSizeModel) else vars(v)
        out["t_oi"] = self.effective_t_oi
        return out


class Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.topo = build_topology(
            cfg.n_public, cfg.n_private, cfg.connectivity, self.rng,
            (cfg.latency_min_s, cfg.latency_max_s))
        self.n = self.topo.n_nodes
        self._assign_roles()
        self._build_links()
        self._schedule_originations()
        self._init_tx_state()
        self._init_recon()
        self.ledger = MetricsLedger(self.n, cfg.size_model, cfg.summary())
        self.ledger.spy_count = int(self.is_spy.sum())
        self.ledger.spy_kind = cfg.spy_kind
        self.ledger.spy_fraction = cfg.spy_fraction
        self.horizon = cfg.duration_s + cfg.drain_s
        self._covered = 0
        self._schedule_clocks()

    # -- setup ---------------------------------------------------------------

    def _assign_roles(self):
        cfg, rng = self.cfg, self.rng
        self.is_black_hole = np.zeros(self.n, dtype=bool)
        self.is_spy = np.zeros(self.n, dtype=bool)
        n_bh = int(cfg.black_hole_fraction * cfg.n_public)
        if n_bh:
            for u in rng.sample(range(cfg.n_public), n_bh):
                self.is_black_hole[u] = True
        if cfg.spy_kind and cfg.spy_fraction > 0:
            if cfg.spy_kind == "public":
                pool = [u for u in range(cfg.n_public)
                        if not self.is_black_hole[u]]
            else:
                pool = list(range(cfg.n_public, self.n))
            n_spy = int(cfg.spy_fraction * len(pool))
            for u in rng.sample(pool, n_spy):
                self.is_spy[u] = True

    def _build_links(self):
        topo, cfg = self.topo, self.cfg
        L = topo.n_links
        self.link_lat = np.array(topo.link_latency)
        # endpoint slots: position of the link in each endpoint's adjacency
        slot_a = np.zeros(L, dtype=np.int32)
        slot_b = np.zeros(L, dtype=np.int32)
        for u, adj in enumerate(topo.adjacency):
            for s, (_, link, outbound) in enumerate(adj):
                if outbound:
                    slot_a[link] = s
                else:
                    slot_b[link] = s
        self.link_slot_a, self.link_slot_b = slot_a, slot_b
        self.link_a = np.array(topo.link_a, dtype=np.int32)
        self.link_b = np.array(topo.link_b, dtype=np.int32)

        # directed flood channels: id 2*link (a->b) and 2*link+1 (b->a)
        C = 2 * L
        self.chan_sender = np.empty(C, dtype=np.int32)
        self.chan_target = np.empty(C, dtype=np.int32)
        self.chan_slot_sender = np.empty(C, dtype=np.int32)
        self.chan_slot_target = np.empty(C, dtype=np.int32)
        self.chan_mean = np.zeros(C)
        self.chan_active = np.zeros(C, dtype=bool)
        self.chan_sender[0::2] = self.link_a
        self.chan_target[0::2] = self.link_b
        self.chan_slot_sender[0::2] = slot_a
        self.chan_slot_target[0::2] = slot_b
        self.chan_sender[1::2] = self.link_b
        self.chan_target[1::2] = self.link_a
        self.chan_slot_sender[1::2] = slot_b
        self.chan_slot_target[1::2] = slot_a

        t_oi = cfg.effective_t_oi
        if cfg.protocol == "btcflood":
            self.chan_active[:] = True
            self.chan_mean[0::2] = t_oi   # sender owns the link outbound
            self.chan_mean[1::2] = cfg.t_ii
        else:
            self.chan_mean[:] = t_oi
            for u in range(cfg.n_public):
                out = [link for _, link, o in topo.adjacency[u] if o]
                inb = [link for _, link, o in topo.adjacency[u] if not o]
                n_out = min(cfg.flood_outbound, len(out))
                for link in (self.rng.sample(out, n_out) if n_out else []):
                    self.chan_active[2 * link] = True
                if cfg.protocol == "sweep":
                    n_in = min(cfg.flood_inbound, len(inb))
                    for link in (self.rng.sample(inb, n_in) if n_in else []):
                        self.chan_active[2 * link + 1] = True
        self.suppress: dict[int, set] = {}
        self.flush_ptr = np.zeros(C, dtype=np.int64)

    def _schedule_originations(self):
        cfg, rng = self.cfg, self.rng
        self.heap: list = []
        self._seq = 0
        honest_private = [u for u in range(cfg.n_public, self.n)
                          if not self.is_black_hole[u]]
        if not honest_private:
            raise ConfigError("no private nodes to originate transactions")
        origins, times = [], []
        t = rng.expovariate(cfg.tx_rate)
        while t < cfg.duration_s:
            origins.append(rng.choice(honest_private))
            times.append(t)
            t += rng.expovariate(cfg.tx_rate)
        self.n_tx = len(origins)
        self.tx_origin = np.array(origins, dtype=np.int32)
        self.tx_origin_time = np.array(times)
        for tx, (u, ot) in enumerate(zip(origins, times)):
            self._push(ot, EV_ORIGINATE, tx, 0, None)

    def _init_tx_state(self):
        n, t = self.n, max(1, self.n_tx)
        self.state = np.zeros((n, t), dtype=np.uint8)
        self.learn_time = np.full((n, t), np.inf, dtype=np.float32)
        self.learn_pos = np.full((n, t), -1, dtype=np.int32)
        self.src_slot = np.full((n, t), -2, dtype=np.int16)
        self.learned = np.zeros((n, t), dtype=np.int32)
        self.learned_n = np.zeros(n, dtype=np.int64)
        reach = (~self.is_black_hole).astype(np.int64)
        self.remaining = np.full(t, int(reach.sum()), dtype=np.int64)

    def _init_recon(self):
        cfg, topo = self.cfg, self.topo
        self.recon_on = cfg.protocol in ("erlay", "sweep")
        L = topo.n_links
        self.init_session: list[ReconSession | None] = [None] * L
        self.resp_session: list[ReconSession | None] = [None] * L
        self.rptr = np.zeros(2 * L, dtype=np.int64)   # per link side (a=0, b=1)
        self.rexclude: dict[int, set] = {}
        self.fallback_replied = np.zeros(L, dtype=bool)
        self.pending: list[list] = [[] for _ in range(self.n)]
        self.respond_armed = np.zeros(self.n, dtype=bool)
        self.last_served: list[dict] = [dict() for _ in range(self.n)]
        self.out_links: list[list[int]] = [[] for _ in range(self.n)]
        self.rr_idx = np.zeros(self.n, dtype=np.int64)
        if not self.recon_on:
            return
        if cfg.codec == "exact":
            table = mix64_table(max(1, self.n_tx))
            make_codec = lambda salt: ExactSetCodec(
                salt, bits=cfg.shortid_bits, sid_table=table)
        else:
            make_codec = lambda salt: PinSketchCodec(
                salt, bits=cfg.shortid_bits)
        for link in range(L):
            codec = make_codec(topo.link_salt[link])
            self.init_session[link] = ReconSession(
                codec=codec, set_size_cap=cfg.recon_set_cap)
            self.resp_session[link] = ReconSession(
                codec=codec, set_size_cap=cfg.recon_set_cap)
        for u, adj in enumerate(topo.adjacency):
            self.out_links[u] = [link for _, link, o in adj if o]

    def _schedule_clocks(self):
        cfg, rng = self.cfg, self.rng
        for chan in np.flatnonzero(self.chan_active):
            self._push(rng.expovariate(1.0 / self.chan_mean[chan]),
                       EV_FLUSH, int(chan), 0, None)
        if self.recon_on:
            for u in range(self.n):
                if self.is_black_hole[u] or not self.out_links[u]:
                    continue
                self._push(rng.uniform(0, cfg.t_recon), EV_RECON_TICK, u, 0,
                           None)

    # -- event machinery -------------------------------------------------------

    def _push(self, t: float, kind: int, a, b, c) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, a, b, c))

    def _send(self, t: float, link: int, src: int, dst: int, message,
              klass: str) -> None:
        self.ledger.charge(src, dst, message, klass)
        self._push(t + self.link_lat[link], EV_DELIVER, link, dst,
                   (message, klass, src))

    # -- main loop -------------------------------------------------------------

    def run(self) -> MetricsLedger:
        duration = self.cfg.duration_s
        heap = self.heap
        while heap:
            t, _, kind, a, b, c = heapq.heappop(heap)
            if t > self.horizon:
                break
            if self._covered == self.n_tx and t > duration:
                break
            if kind == EV_DELIVER:
                self._on_deliver(t, a, b, c)
            elif kind == EV_FLUSH:
                self._on_flush(t, a)
            elif kind == EV_TXBATCH:
                self._on_tx_batch(t, a, b, c)
            elif kind == EV_RECON_TICK:
                self._on_recon_tick(t, a)
            elif kind == EV_RESPOND_TICK:
                self._on_respond_tick(t, a)
            else:
                self._on_originate(t, a)
        self.ledger.tx_origin = self.tx_origin.tolist()
        self.ledger.tx_origin_time = self.tx_origin_time.tolist()
        self.ledger.originator_is_spy = {
            tx for tx, u in enumerate(self.tx_origin) if self.is_spy[u]}
        self.ledger.finalize(self.learn_time, ~self.is_black_hole,
                             self.tx_origin_time)
        return self.ledger

    # -- transaction knowledge --------------------------------------------------

    def _learn_batch(self, v: int, items: np.ndarray, t: float, slot: int,
                     from_peer: int) -> None:
        st = self.state[v]
        fresh = items[st[items] != STATE_KNOWN]
        if not fresh.size:
            return
        st[fresh] = STATE_KNOWN
        self.learn_time[v, fresh] = t
        self.src_slot[v, fresh] = slot
        pos0 = self.learned_n[v]
        k = fresh.size
        self.learned[v, pos0:pos0 + k] = fresh
        self.learn_pos[v, fresh] = np.arange(pos0, pos0 + k, dtype=np.int32)
        self.learned_n[v] = pos0 + k
        self.remaining[fresh] -= 1
        self._covered += int((self.remaining[fresh] == 0).sum())
        if self.is_spy[v] and from_peer >= 0:
            for tx in fresh.tolist():
                self.ledger.record_spy_exposure(tx, t, from_peer)

    def _on_originate(self, t: float, tx: int) -> None:
        u = int(self.tx_origin[tx])
        self._learn_batch(u, np.array([tx], dtype=np.int32), t, -1, -1)

    # -- flooding -----------------------------------------------------------------

    def _on_flush(self, t: float, chan: int) -> None:
        v = int(self.chan_sender[chan])
        ptr_end = int(self.learned_n[v])
        if not self.is_black_hole[v]:
            start = int(self.flush_ptr[chan])
            if start < ptr_end:
                cands = self.learned[v, start:ptr_end]
                keep = self.src_slot[v, cands] != self.chan_slot_sender[chan]
                items = cands[keep]
                sup = self.suppress.get(chan)
                if sup and items.size:
                    mask = np.array([int(x) not in sup for x in items])
                    sup.difference_update(int(x) for x in items[~mask])
                    items = items[mask]
                if items.size:
                    self._send(t, chan // 2, v, int(self.chan_target[chan]),
                               msg.Inv(items, klass=msg.CLASS_FLOOD_INV),
                               msg.CLASS_FLOOD_INV)
            self.flush_ptr[chan] = ptr_end
        nxt = t + self.rng.expovariate(1.0 / self.chan_mean[chan])
        if nxt <= self.horizon:
            self._push(nxt, EV_FLUSH, chan, 0, None)

    # -- delivery ----------------------------------------------------------------

    def _on_deliver(self, t: float, link: int, dst: int, payload) -> None:
        message, klass, src = payload
        if self.is_black_hole[dst]:
            # absorbs everything; announcements to it are never requested
            if isinstance(message, msg.Inv):
                self.ledger.inv_items_redundant += len(message.items)
            return
        if isinstance(message, msg.Inv):
            self._handle_inv(t, link, src, dst, message)
        elif isinstance(message, (msg.Tx, _TxBatch, msg.TxResponse)):
            self._handle_bodies(t, link, src, dst, message)
        elif isinstance(message, (msg.ReconRequest, msg.BisectRequest)):
            self._handle_recon_request(t, link, src, dst, message)
        elif isinstance(message, msg.ReconSketchResponse):
            self._handle_sketch_response(t, link, src, dst, message)
        elif isinstance(message, msg.BisectResponse):
            self._handle_bisect_response(t, link, src, dst, message)
        elif isinstance(message, msg.ShortIdTxRequest):
            self._handle_shortid_request(t, link, src, dst, message)

    def _dst_slot(self, link: int, dst: int) -> int:
        return int(self.link_slot_a[link] if dst == self.link_a[link]
                   else self.link_slot_b[link])

    def _side_index(self, link: int, node: int) -> int:
        return 2 * link + (0 if node == self.link_a[link] else 1)

    def _handle_inv(self, t: float, link: int, src: int, dst: int,
                    inv: msg.Inv) -> None:
        items = np.asarray(inv.items, dtype=np.int32)
        st = self.state[dst]
        seen = st[items] != STATE_UNKNOWN
        self.ledger.inv_items_redundant += int(seen.sum())
        if self.is_spy[dst]:
            for tx in items.tolist():
                self.ledger.record_spy_exposure(tx, t, src)
        # echo suppression toward the announcer + recon-set exclusion:
        # anything the peer announced must not be announced back (novel
        # items are covered by source-link exclusion once fetched)
        known_items = items[seen]
        if known_items.size:
            back = self._side_index(link, dst)  # direction dst -> src
            lp = self.learn_pos[dst, known_items]
            if self.chan_active[back]:
                fresh_mask = (lp < 0) | (lp >= self.flush_ptr[back])
                to_sup = known_items[fresh_mask]
                if to_sup.size:
                    self.suppress.setdefault(back, set()).update(
                        int(x) for x in to_sup)
            if self.recon_on:
                ex_mask = (lp < 0) | (lp >= self.rptr[back])
                to_ex = known_items[ex_mask]
                if to_ex.size:
                    self.rexclude.setdefault(back, set()).update(
                        int(x) for x in to_ex)
        novel = items[~seen]
        if novel.size:
            st[novel] = STATE_REQUESTED
            dslot = self._dst_slot(link, dst)
            self.ledger.charge(dst, src, msg.GetData(tuple(novel.tolist())),
                               msg.CLASS_GETDATA)
            self._push(t + 2 * self.link_lat[link], EV_TXBATCH, link,
                       (src, dst, dslot), novel)
        # fallback exchange hooks
        if inv.klass == msg.CLASS_FALLBACK and self.recon_on:
            if dst == self.link_b[link] and not self.fallback_replied[link]:
                self.fallback_replied[link] = True
                items_b = self.resp_session[link].served_fallback_items()
                self._send(t, link, dst, src,
                           msg.Inv(tuple(items_b), klass=msg.CLASS_FALLBACK),
                           msg.CLASS_FALLBACK)
            elif dst == self.link_a[link]:
                sess = self.init_session[link]
                if sess.phase is Phase.FALLBACK:
                    outcome = sess.finish_fallback(inv.items)
                    self.ledger.record_round(
                        outcome.size_a, outcome.size_b, outcome.d,
                        outcome.true_diff, outcome.kind)
                    self.fallback_replied[link] = False

    def _on_tx_batch(self, t: float, link: int, route, items: np.ndarray) \
            -> None:
        src, dst, dslot = route
        model = self.cfg.size_model
        self.ledger.charge_many(src, dst, items.size,
                                model.header + model.tx_body,
                                msg.CLASS_TX_BODY)
        self._learn_batch(dst, items, t, dslot, src)

    def _handle_bodies(self, t: float, link: int, src: int, dst: int,
                       message) -> None:
        if isinstance(message, msg.Tx):
            items = np.array([message.item], dtype=np.int32)
        else:
            items = np.asarray(message.items, dtype=np.int32)
            if isinstance(message, msg.TxResponse) and message.not_found:
                self.ledger.shortid_not_found += len(message.not_found)
        if items.size:
            self._learn_batch(dst, items, t, self._dst_slot(link, dst), src)

    # -- reconciliation ------------------------------------------------------------

    def _snapshot_set(self, node: int, link: int) -> set:
        """Materialize the implicit reconciliation set for node's side of
        link: everything learned since the last round on this side, minus
        what arrived on, was flooded over, or was announced by the peer on
        this link."""
        side = self._side_index(link, node)
        start = int(self.rptr[side])
        if self.chan_active[side]:
            start = max(start, int(self.flush_ptr[side]))
        end = int(self.learned_n[node])
        out: set = set()
        if start < end:
            cands = self.learned[node, start:end]
            slot = self.link_slot_a[link] if node == self.link_a[link] \
                else self.link_slot_b[link]
            keep = self.src_slot[node, cands] != slot
            items = cands[keep]
            ex = self.rexclude.get(side)
            if ex:
                out = {int(x) for x in items if int(x) not in ex}
            else:
                out = {int(x) for x in items}
        self.rptr[side] = end
        if self.chan_active[side] and end > self.flush_ptr[side]:
            # the round covers everything up to here; flooding it too
            # would announce transactions the peer just reconciled
            self.flush_ptr[side] = end
        exd = self.rexclude.get(side)
        if exd:
            exd.clear()
        return out

    def _on_recon_tick(self, t: float, u: int) -> None:
        links = self.out_links[u]
        for _ in range(len(links)):
            link = links[self.rr_idx[u] % len(links)]
            self.rr_idx[u] += 1
            sess = self.init_session[link]
            if sess.phase is Phase.IDLE:
                sess.local_set = self._snapshot_set(u, link)
                request = sess.begin_round()
                self._send(t, link, u, int(self.link_b[link]), request,
                           msg.CLASS_RECON)
                break
        nxt = t + self.cfg.t_recon
        if nxt <= self.horizon:
            self._push(nxt, EV_RECON_TICK, u, 0, None)

    def _arm_respond(self, t: float, v: int) -> None:
        if not self.respond_armed[v]:
            self.respond_armed[v] = True
            self._push(t + self.rng.expovariate(1.0 / self.cfg.t_ri),
                       EV_RESPOND_TICK, v, 0, None)

    def _serve_now(self, t: float, link: int, src: int, v: int, request) \
            -> list | None:
        """Serve a reconciliation request against the state at time t; the
        resulting messages are transmitted at the next shared response tick
        (the anti-timing delay postpones the send, not the snapshot)."""
        sess = self.resp_session[link]
        if isinstance(request, msg.ReconRequest):
            self.last_served[v][src] = t
            sess.local_set = self._snapshot_set(v, link)
            try:
                response, evicted = sess.serve_round(request)
            except ProtocolError:
                return None  # DoS guard: abort the session silently
            self.fallback_replied[link] = False
            out = [(response, msg.CLASS_RECON)]
            if evicted:
                out.append((msg.Inv(tuple(evicted),
                                    klass=msg.CLASS_POST_RECON_INV),
                            msg.CLASS_POST_RECON_INV))
            return out
        if sess._served_d < 1:
            return None  # bisect with no served round behind it
        return [(sess.serve_bisect(request), msg.CLASS_BISECTION)]

    def _handle_recon_request(self, t: float, link: int, src: int, dst: int,
                              request) -> None:
        last = self.last_served[dst].get(src)
        if isinstance(request, msg.ReconRequest) and last is not None \
                and t - last < self.cfg.t_recon:
            self.pending[dst].append((link, request, src))  # rate limited
        else:
            msgs = self._serve_now(t, link, src, dst, request)
            if msgs:
                self.pending[dst].append((link, msgs, src))
        self._arm_respond(t, dst)

    def _on_respond_tick(self, t: float, v: int) -> None:
        self.respond_armed[v] = False
        todo, self.pending[v] = self.pending[v], []
        for link, entry, src in todo:
            if not isinstance(entry, list):  # deferred by the rate limit
                entry = self._serve_now(t, link, src, v, entry)
                if not entry:
                    continue
            for message, klass in entry:
                self._send(t, link, v, src, message, klass)
        if self.pending[v]:
            self._arm_respond(t, v)

    def _handle_sketch_response(self, t: float, link: int, src: int,
                                dst: int, response) -> None:
        sess = self.init_session[link]
        if sess.phase is not Phase.AWAIT_SKETCH:
            return
        result = sess.finish_round(response)
        if isinstance(result, BisectNeeded):
            self._send(t, link, dst, src, sess.bisect_request(),
                       msg.CLASS_BISECTION)
            return
        self._complete_round(t, link, dst, src, result)

    def _handle_bisect_response(self, t: float, link: int, src: int,
                                dst: int, response) -> None:
        sess = self.init_session[link]
        if sess.phase is not Phase.AWAIT_BISECT:
            return
        result = sess.finish_bisect(response)
        if isinstance(result, FallbackNeeded):
            self._send(t, link, dst, src, sess.fallback_announce(),
                       msg.CLASS_FALLBACK)
            return
        self._complete_round(t, link, dst, src, result)

    def _complete_round(self, t: float, link: int, initiator: int,
                        responder: int, outcome: RoundOutcome) -> None:
        self.ledger.record_round(outcome.size_a, outcome.size_b, outcome.d,
                                 outcome.true_diff, outcome.kind)
        if outcome.missing_local_shortids:
            self._send(t, link, initiator, responder,
                       msg.ShortIdTxRequest(outcome.missing_local_shortids),
                       msg.CLASS_RECON)
        if outcome.missing_remote_txs:
            self._send(t, link, initiator, responder,
                       msg.Inv(tuple(outcome.missing_remote_txs),
                               klass=msg.CLASS_POST_RECON_INV),
                       msg.CLASS_POST_RECON_INV)

    def _handle_shortid_request(self, t: float, link: int, src: int,
                                dst: int, request) -> None:
        response = self.resp_session[link].serve_tx_request(request)
        self._send(t, link, dst, src, response, msg.CLASS_TX_BODY)


def run(config: SimConfig) -> MetricsLedger:
    """Build and run one simulation to quiescence; returns its metrics."""
    return Simulation(config).run()

"""Simulated wire messages exchanged between peers.

Transactions are referred to by opaque integer handles (the simulator's
transaction indices); short ids are b-bit ints. Byte costs live in
metrics.MessageSizeModel, not here. Inv carries the byte class it is
charged to, since the same wire shape serves flooding, post-reconciliation
announcements, and the fallback exchange.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

CLASS_FLOOD_INV = "flood_inv"
CLASS_RECON = "recon"
CLASS_BISECTION = "bisection"
CLASS_FALLBACK = "fallback"
CLASS_POST_RECON_INV = "post_recon_inv"
CLASS_GETDATA = "getdata"
CLASS_TX_BODY = "tx_body"

ANNOUNCEMENT_CLASSES = (
    CLASS_FLOOD_INV,
    CLASS_RECON,
    CLASS_BISECTION,
    CLASS_FALLBACK,
    CLASS_POST_RECON_INV,
)

ALL_CLASSES = ANNOUNCEMENT_CLASSES + (CLASS_GETDATA, CLASS_TX_BODY)


@dataclass(frozen=True)
class Inv:
    """Transaction announcement (full-size ids on the wire)."""
    items: tuple[int, ...]
    klass: str = CLASS_FLOOD_INV


@dataclass(frozen=True)
class GetData:
    """Request for announced transaction bodies."""
    items: tuple[int, ...]


@dataclass(frozen=True)
class Tx:
    """One full transaction body."""
    item: int


@dataclass(frozen=True)
class TxResponse:
    """Batch of bodies answering a short-id request; unknown short ids are
    reported back explicitly."""
    items: tuple[int, ...]
    not_found: tuple[int, ...] = ()


@dataclass(frozen=True)
class ReconRequest:
    """Round opener: initiator's reconciliation set size and its q."""
    set_size: int
    q: float


@dataclass(frozen=True)
class ReconSketchResponse:
    """Responder's sketch of its set, with the set size."""
    payload: Any
    set_size: int


@dataclass(frozen=True)
class BisectRequest:
    """Ask for a sketch restricted to the low half of the id space."""


@dataclass(frozen=True)
class BisectResponse:
    payload: Any


@dataclass(frozen=True)
class ShortIdTxRequest:
    """Request bodies for decoded short ids missing locally."""
    short_ids: tuple[int, ...]

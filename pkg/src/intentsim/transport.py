"""Media transport: dataset ingestion, packetization, RLC buffers,
and tolerant image reconstruction at the receiver.

Transport semantics are unacknowledged datagrams end to end; only MAC-layer
HARQ recovers losses.  Transport blocks may carry packet segments, so a
packet is delivered once every byte of it has been delivered and is lost as
soon as any carrying transport block exhausts HARQ.
"""

from __future__ import annotations

import csv
import os
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from . import pngcodec
from .radio import Direction


class PacketStatus(str, Enum):
    QUEUED = "queued"
    IN_FLIGHT = "in_flight"
    DELIVERED = "delivered"
    LOST = "lost"


@dataclass
class Packet:
    flow_id: str
    seq: int
    start: int        # payload range [start, end) in the source file
    end: int
    criticality: float
    created_tti: int = -1
    delivered_tti: int | None = None
    status: PacketStatus = PacketStatus.QUEUED
    bytes_delivered: int = 0
    loss_counted: bool = False

    @property
    def size(self) -> int:
        return self.end - self.start


@dataclass
class ImageFlow:
    ue_id: int
    direction: Direction
    path: str
    source_bytes: bytes
    label_ids: frozenset
    packets: list = field(default_factory=list)
    relevant: bool = False

    @property
    def flow_id(self) -> str:
        return f"{self.direction.value}-{self.ue_id}"

    def received_mask(self) -> list:
        return [p.status == PacketStatus.DELIVERED for p in self.packets]

    def missing_ranges(self) -> list:
        return [(p.start, p.end) for p in self.packets
                if p.status != PacketStatus.DELIVERED]


def packetize(source_bytes: bytes, chunks, pkt_bytes: int, flow_id: str) -> list:
    """Slice a file into dense fixed-size packets.

    Packet criticality is the max criticality over the chunk records the
    packet's byte range intersects (conservative for boundary-spanning
    headers); byte ranges partition the file exactly.
    """
    if not source_bytes:
        raise ValueError("empty source")
    spans = [(c.span[0], c.span[1], c.criticality) for c in chunks]
    packets = []
    seq = 0
    for start in range(0, len(source_bytes), pkt_bytes):
        end = min(start + pkt_bytes, len(source_bytes))
        crit = pngcodec.CRIT_OTHER
        for s, e, c in spans:
            if s < end and start < e and c > crit:
                crit = c
        packets.append(Packet(flow_id, seq, start, end, crit))
        seq += 1
    return packets


def arrival_ttis(n_packets: int, pkt_bytes: int, rate_bps: int) -> list:
    """Source pacing: packet k enters the sender buffer at
    floor(k * pkt_bytes*8*1000 / rate_bps) ms."""
    return [(k * pkt_bytes * 8 * 1000) // rate_bps for k in range(n_packets)]


def reconstruct(flow: ImageFlow):
    """Receiver-side image: zero-fill undelivered ranges, prefix-decode.

    Returns a grayscale matrix or None (undecodable).  Pure in the frozen
    mask, hence idempotent.
    """
    return pngcodec.tolerant_decode(flow.source_bytes, flow.missing_ranges())


class RlcBuffer:
    """FIFO byte queue of packet slices with lazy purge of lost packets.

    A per-criticality packet count keeps max_criticality O(#distinct levels)
    instead of O(queue length).
    """

    def __init__(self):
        self._slices = deque()  # [packet, offset]
        self._bytes = 0
        self._crit_counts = {}

    def __len__(self):
        return self._bytes

    @property
    def total_bytes(self) -> int:
        return self._bytes

    def enqueue(self, packet: Packet):
        self._slices.append([packet, packet.start])
        self._bytes += packet.size
        c = packet.criticality
        self._crit_counts[c] = self._crit_counts.get(c, 0) + 1

    def _drop_crit(self, pkt: Packet):
        c = pkt.criticality
        n = self._crit_counts.get(c, 0) - 1
        if n <= 0:
            self._crit_counts.pop(c, None)
        else:
            self._crit_counts[c] = n

    def _purge_head(self):
        while self._slices and self._slices[0][0].status == PacketStatus.LOST:
            pkt, off = self._slices.popleft()
            self._bytes -= pkt.end - off
            self._drop_crit(pkt)

    def max_criticality(self) -> float:
        self._purge_head()
        return max(self._crit_counts, default=0.0)

    def take(self, max_bytes: int) -> list:
        """Dequeue up to max_bytes as (packet, start, end) segments."""
        segments = []
        remaining = max_bytes
        self._purge_head()
        while remaining > 0 and self._slices:
            pkt, off = self._slices[0]
            if pkt.status == PacketStatus.LOST:
                self._purge_head()
                continue
            n = min(remaining, pkt.end - off)
            segments.append((pkt, off, off + n))
            if pkt.status == PacketStatus.QUEUED:
                pkt.status = PacketStatus.IN_FLIGHT
            self._bytes -= n
            remaining -= n
            if off + n == pkt.end:
                self._slices.popleft()
                self._drop_crit(pkt)
            else:
                self._slices[0][1] = off + n
        return segments


def credit_delivery(segments, tti: int):
    """Mark delivered bytes; a packet completes when all bytes arrived."""
    for pkt, s, e in segments:
        if pkt.status == PacketStatus.LOST:
            continue
        pkt.bytes_delivered += e - s
        if pkt.bytes_delivered >= pkt.size:
            pkt.status = PacketStatus.DELIVERED
            pkt.delivered_tti = tti


def mark_lost(segments):
    """A dropped TB loses every packet it carried (sticky)."""
    for pkt, _, _ in segments:
        if pkt.status != PacketStatus.DELIVERED:
            pkt.status = PacketStatus.LOST


# --- dataset ----------------------------------------------------------------

@dataclass
class DatasetImage:
    path: str
    data: bytes
    labels: frozenset
    chunks: list


@dataclass
class Dataset:
    images: list
    vocab: tuple  # sorted distinct object IDs


class DatasetError(ValueError):
    pass


def load_dataset(directory: str) -> Dataset:
    """Load PNGs listed in labels.csv (columns: filename, labels).

    The labels column is a comma-separated list of integer object IDs,
    CSV-quoted when it contains more than one.  Rows are taken in file
    order; images must parse and fully decode.
    """
    manifest = os.path.join(directory, "labels.csv")
    if not os.path.isfile(manifest):
        raise DatasetError(f"missing manifest {manifest}")
    images = []
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["filename", "labels"]:
            raise DatasetError("labels.csv must start with header 'filename,labels'")
        for row in reader:
            if not row:
                continue
            name, labels_raw = row[0], row[1] if len(row) > 1 else ""
            path = os.path.join(directory, name)
            try:
                with open(path, "rb") as img:
                    data = img.read()
            except OSError as exc:
                raise DatasetError(f"unreadable image {path}: {exc}") from exc
            try:
                chunks = pngcodec.parse_png(data)
                pngcodec.decode_png(data)
            except pngcodec.PngFormatError as exc:
                raise DatasetError(f"{name}: {exc}") from exc
            labels = frozenset(int(x) for x in labels_raw.split(",") if x.strip())
            if not labels:
                raise DatasetError(f"{name}: no object IDs")
            images.append(DatasetImage(path, data, labels, chunks))
    if not images:
        raise DatasetError(f"dataset {directory} lists no images")
    vocab = tuple(sorted(set().union(*[im.labels for im in images])))
    return Dataset(images, vocab)

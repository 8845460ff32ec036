"""Protocol transcripts and their line-delimited JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .frames import bits_to_hex, hex_to_bits

__all__ = ["KEPT", "DISCARDED", "BatchRecord", "Transcript"]

KEPT = "kept"
DISCARDED = "discarded"


@dataclass
class BatchRecord:
    batch_id: int
    circuit_ids: list[int]
    bitstrings: list[int] | None
    t_send: float
    t_recv: float
    status: str

    @property
    def T_b(self) -> float:
        return self.t_recv - self.t_send

    @property
    def kept(self) -> bool:
        return self.status == KEPT


@dataclass
class Transcript:
    n: int
    batches: list[BatchRecord] = field(default_factory=list)

    def add(self, rec: BatchRecord) -> None:
        if rec.status not in (KEPT, DISCARDED):
            raise ValueError(f"bad status {rec.status!r}")
        if rec.kept and (rec.bitstrings is None or len(rec.bitstrings) != len(rec.circuit_ids)):
            raise ValueError("a kept batch needs one bitstring per circuit")
        self.batches.append(rec)

    @property
    def kept_batches(self) -> list[BatchRecord]:
        return [b for b in self.batches if b.kept]

    @property
    def T_tot(self) -> float:
        return sum(b.T_b for b in self.kept_batches)

    @property
    def M_keep(self) -> int:
        return sum(len(b.circuit_ids) for b in self.kept_batches)

    @property
    def t_qc(self) -> float:
        return self.T_tot / self.M_keep if self.M_keep else float("inf")

    def kept_samples(self) -> list[tuple[int, int]]:
        """(circuit_id, bitstring) pairs of kept batches in submission order."""
        out = []
        for b in self.kept_batches:
            out.extend(zip(b.circuit_ids, b.bitstrings))
        return out

    def records(self) -> Iterator[dict]:
        for b in self.batches:
            for i, cid in enumerate(b.circuit_ids):
                x = None if b.bitstrings is None else bits_to_hex(b.bitstrings[i], self.n)
                yield {
                    "batch_id": b.batch_id,
                    "circuit_id": cid,
                    "bitstring": x,
                    "t_send": b.t_send,
                    "t_recv": b.t_recv,
                    "status": b.status,
                }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_records(cls, n: int, records: Iterable[dict]) -> "Transcript":
        t = cls(n)
        cur: BatchRecord | None = None
        for r in records:
            if cur is None or r["batch_id"] != cur.batch_id:
                if cur is not None:
                    t.add(cur)
                cur = BatchRecord(r["batch_id"], [], [] if r["bitstring"] is not None else None,
                                  r["t_send"], r["t_recv"], r["status"])
            cur.circuit_ids.append(int(r["circuit_id"]))
            if cur.bitstrings is not None:
                if r["bitstring"] is None:
                    raise ValueError(f"batch {cur.batch_id} mixes missing and present bitstrings")
                cur.bitstrings.append(hex_to_bits(r["bitstring"], n))
        if cur is not None:
            t.add(cur)
        return t

    @classmethod
    def from_jsonl(cls, n: int, text: str) -> "Transcript":
        return cls.from_records(n, (json.loads(line) for line in text.splitlines() if line.strip()))

    @classmethod
    def load(cls, n: int, path: str | Path) -> "Transcript":
        return cls.from_jsonl(n, Path(path).read_text())

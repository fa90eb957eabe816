"""Bounded replay memory with per-class reservoir sampling.

Each class owns ``per_class_budget`` slots. While a class has room its
samples are appended; afterwards the i-th sample of that class survives
with probability budget/i, replacing a uniformly chosen slot, so every
sample seen so far is retained with equal probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class BufferEntry:
    features: np.ndarray
    label: int
    logits: np.ndarray | None  # frozen at insertion time; None unless the method replays logits
    insert_task: int


class ReplayBuffer:
    def __init__(self, per_class_budget, num_classes, rng):
        if per_class_budget < 1 or num_classes < 1:
            raise DataError("per_class_budget and num_classes must be >= 1")
        self.per_class_budget = per_class_budget
        self.num_classes = num_classes
        self.rng = rng
        self.entries: list[BufferEntry] = []
        self.seen_counts: dict[int, int] = {}
        self._slots: dict[int, list[int]] = {}  # class -> indices into entries

    @property
    def capacity(self):
        return self.per_class_budget * self.num_classes

    def __len__(self):
        return len(self.entries)

    def insert(self, entry):
        """Offer one sample; never fails, may silently discard."""
        c = entry.label
        if not 0 <= c < self.num_classes:
            raise DataError(f"label {c} out of range [0, {self.num_classes})")
        seen = self.seen_counts.get(c, 0) + 1
        self.seen_counts[c] = seen
        slots = self._slots.setdefault(c, [])
        if len(slots) < self.per_class_budget:
            slots.append(len(self.entries))
            self.entries.append(entry)
        else:
            # classic reservoir draw: keep with prob budget/seen, uniform slot
            j = int(self.rng.integers(seen))
            if j < self.per_class_budget:
                self.entries[slots[j]] = entry

    def sample(self, batch_size):
        """Draw ``batch_size`` entries uniformly with replacement; None when empty."""
        if not self.entries:
            return None
        idx = self.rng.integers(len(self.entries), size=batch_size)
        return [self.entries[i] for i in idx]

    def per_class_counts(self):
        return {c: len(slots) for c, slots in self._slots.items() if slots}

    def to_json_dict(self):
        """Checkpoint representation; the generator state is not serialized."""
        return {
            "per_class_budget": self.per_class_budget,
            "num_classes": self.num_classes,
            "seen_counts": {str(c): n for c, n in self.seen_counts.items()},
            "entries": [
                {
                    "features": [float(v) for v in e.features],
                    "label": int(e.label),
                    "logits": None if e.logits is None else [float(v) for v in e.logits],
                    "insert_task": int(e.insert_task),
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_json_dict(cls, payload, rng):
        buf = cls(payload["per_class_budget"], payload["num_classes"], rng)
        for item in payload["entries"]:
            entry = BufferEntry(
                features=np.asarray(item["features"], dtype=np.float64),
                label=int(item["label"]),
                logits=None if item["logits"] is None else np.asarray(item["logits"], dtype=np.float64),
                insert_task=int(item["insert_task"]),
            )
            slots = buf._slots.setdefault(entry.label, [])
            slots.append(len(buf.entries))
            buf.entries.append(entry)
        buf.seen_counts = {int(c): n for c, n in payload["seen_counts"].items()}
        return buf


def stack_entries(entries):
    """Collate entries into (features, labels, logits-or-None) arrays."""
    features = np.stack([e.features for e in entries])
    labels = np.array([e.label for e in entries], dtype=np.int64)
    if all(e.logits is not None for e in entries):
        logits = np.stack([e.logits for e in entries])
    else:
        logits = None
    return features, labels, logits

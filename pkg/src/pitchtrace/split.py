"""Match-level train/validation/test splitting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pitchtrace.errors import DataError, TooFewMatches

PROPORTIONS = (0.70, 0.15, 0.15)


@dataclass(frozen=True)
class SplitManifest:
    assignment: dict[str, str]
    seed: int
    proportions: tuple[float, float, float] = PROPORTIONS

    def matches(self, part: str) -> list[str]:
        return sorted(m for m, p in self.assignment.items() if p == part)

    def sizes(self) -> tuple[int, int, int]:
        return tuple(len(self.matches(p)) for p in ("train", "val", "test"))

    def select(self, segments, part: str) -> list:
        keep = set(self.matches(part))
        return [s for s in segments if s.match_id in keep]

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "proportions": list(self.proportions), "assignment": dict(sorted(self.assignment.items()))},
            indent=2,
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "SplitManifest":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(dict(raw["assignment"]), int(raw["seed"]), tuple(raw["proportions"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"{path}: malformed split manifest ({exc})") from None


def split_dataset(match_ids, seed: int) -> SplitManifest:
    """Seeded shuffle of the distinct match ids, then a contiguous 70/15/15 cut.

    ``train = floor(0.7 n)``, ``test = floor(0.15 n)`` and validation takes
    the remainder.
    """
    ids = sorted(set(match_ids))
    n = len(ids)
    if n < 3:
        raise TooFewMatches(f"need at least 3 distinct matches, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = n * 70 // 100
    n_test = n * 15 // 100
    n_val = n - n_train - n_test
    parts = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    return SplitManifest({ids[k]: part for k, part in zip(order, parts)}, int(seed))

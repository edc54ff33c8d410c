"""Size-stratified train/val/small_test/large_test splits and class upsampling."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .datasets import Dataset

SPLIT_NAMES = ("train", "val", "small_test", "large_test")


class SplitError(ValueError):
    pass


@dataclass
class SplitBundle:
    train: list[int]
    val: list[int]
    small_test: list[int]
    large_test: list[int]

    def __getitem__(self, name: str) -> list[int]:
        if name not in SPLIT_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def class_counts(self, labels: Sequence[int], n_classes: int) -> dict[str, list[int]]:
        labels = np.asarray(labels)
        return {
            name: np.bincount(labels[self[name]], minlength=n_classes).tolist()
            if self[name] else [0] * n_classes
            for name in SPLIT_NAMES
        }

    def to_text(self) -> str:
        parts = []
        for name in SPLIT_NAMES:
            parts.append(f"[{name}]\n")
            parts.extend(f"{i}\n" for i in self[name])
        return "".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "SplitBundle":
        sections: dict[str, list[int]] = {}
        current = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                if current not in SPLIT_NAMES:
                    raise SplitError(f"unknown split section {current!r} at line {lineno}")
                sections[current] = []
            elif current is None:
                raise SplitError(f"index before any section header at line {lineno}")
            else:
                sections[current].append(int(line))
        missing = [n for n in SPLIT_NAMES if n not in sections]
        if missing:
            raise SplitError(f"missing split sections: {missing}")
        return cls(**sections)

    def save(self, path: Union[str, os.PathLike]) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "SplitBundle":
        return cls.from_text(Path(path).read_text())


def _floor(x: float) -> int:
    # 0.7 * 90 evaluates to 62.999...; it must count as 63
    return math.floor(x + 1e-9)


def make_size_splits(
    d: Dataset, ratios: tuple[float, float, float] = (0.7, 0.15, 0.15), seed: int = 0
) -> SplitBundle:
    """Split the smallest half of ``d`` per class, then pick a class-matched
    large_test from the largest graphs outside that half.

    Per class in the pool: train = floor(r_train * n), small_test =
    floor(r_test * n), val gets the remainder. The pool holds the
    ceil(|d| / 2) smallest graphs (size ties by index).
    """
    sizes = d.sizes
    labels = d.labels
    order = np.argsort(sizes, kind="stable")
    pool = order[: math.ceil(0.5 * len(d))]
    in_pool = np.zeros(len(d), dtype=bool)
    in_pool[pool] = True
    classes = sorted(set(labels.tolist()))
    rng = np.random.default_rng(seed)
    r_train, _, r_test = ratios

    train: list[int] = []
    val: list[int] = []
    small: list[int] = []
    large: list[int] = []
    for c in classes:
        members = pool[labels[pool] == c]
        if members.size == 0:
            raise SplitError(f"class {c} cannot satisfy split")
        members = members[rng.permutation(members.size)]
        n_train = _floor(r_train * members.size)
        n_test = _floor(r_test * members.size)
        train.extend(members[:n_train].tolist())
        val.extend(members[n_train: members.size - n_test].tolist())
        small.extend(members[members.size - n_test:].tolist())
        # largest first, ties broken toward the smaller index
        outside = [i for i in order[::-1] if labels[i] == c and not in_pool[i]]
        outside.sort(key=lambda i: (-sizes[i], i))
        if len(outside) < n_test:
            raise SplitError(f"class {c} cannot satisfy split")
        large.extend(outside[:n_test])
    return SplitBundle(train, val, small, large)


@dataclass(frozen=True)
class UpsampleRule:
    fraction: float = 1.0
    ratio: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.fraction <= 1:
            raise ValueError("upsample fraction must lie in (0, 1]")
        if int(self.ratio) != self.ratio or self.ratio < 1:
            raise ValueError("upsample ratio must be an integer >= 1")


def upsample(
    train_indices: Sequence[int],
    labels: Sequence[int],
    spec: Mapping[int, UpsampleRule],
    seed: int = 0,
) -> list[int]:
    """Original indices followed by the duplicates.

    For each class in ``spec``, floor(fraction * n_c) of its training graphs
    are drawn without replacement and appended ``ratio - 1`` more times.
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    train = np.asarray(train_indices, dtype=np.int64)
    out = train.tolist()
    for c in sorted(spec):
        rule = spec[c]
        members = train[labels[train] == c]
        k = _floor(rule.fraction * members.size)
        if k == 0 or rule.ratio == 1:
            continue
        chosen = np.sort(rng.choice(members, size=k, replace=False))
        for _ in range(int(rule.ratio) - 1):
            out.extend(chosen.tolist())
    return out


def parse_upsample(text: str) -> dict[int, UpsampleRule]:
    """Parse ``"0:1:6,1:0.6667:2"`` style ``class:fraction:ratio`` triples.

    Fractions may be written as ``2/3``.
    """
    spec: dict[int, UpsampleRule] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        c, frac, ratio = item.split(":")
        if "/" in frac:
            num, den = frac.split("/")
            fraction = float(num) / float(den)
        else:
            fraction = float(frac)
        spec[int(c)] = UpsampleRule(fraction, int(ratio))
    return spec

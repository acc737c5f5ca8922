"""Balanced multi-dataset mixing.

Samples are indexed as ``(source_idx, sample_idx)`` and always stay whole:
the 6 views of a timestep travel together.  An epoch is a strict round-robin
over sources; each source contributes a draw stream made of successive
SplitMix64 Fisher-Yates permutations of its samples, reshuffled on every pass,
so smaller sources are oversampled until the largest one is exhausted.

Stream seed for ``(seed, epoch, source_idx)`` is
``derive_seed(seed, "mix", epoch, source_idx)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Sequence

from .datasets import Dataset, LabelMap, Sample, unified_labels
from .errors import EmptySource
from .rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class MixedSample:
    source_idx: int
    source: str
    sample: Sample
    labels: tuple[str, ...]  # unified classes, aligned with sample.gt_boxes


@dataclass(frozen=True)
class MixedDataset:
    sources: tuple[Dataset, ...]
    unified_map: LabelMap
    index: tuple[tuple[int, int], ...]
    seed: int
    labels: tuple[tuple[tuple[str, ...], ...], ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.sources)

    def __len__(self) -> int:
        return len(self.index)

    def get(self, source_idx: int, sample_idx: int) -> MixedSample:
        ds = self.sources[source_idx]
        return MixedSample(source_idx, ds.name, ds.samples[sample_idx], self.labels[source_idx][sample_idx])


def build_mixed_dataset(sources: Sequence[Dataset], label_map: LabelMap, seed: int) -> MixedDataset:
    """Union of sources with labels re-tagged through ``label_map``.

    Raises:
        EmptySource: no sources, or a source without samples.
    """
    sources = tuple(sources)
    if not sources:
        raise EmptySource("at least one source dataset is required")
    for i, ds in enumerate(sources):
        if len(ds) == 0:
            raise EmptySource(f"source {i} ({ds.name!r}) has no samples")
        for s in ds.samples:
            if len(s.views) != 6:
                raise EmptySource(f"sample {s.sample_id!r} of {ds.name!r} does not have 6 views")
    index = tuple((i, k) for i, ds in enumerate(sources) for k in range(len(ds)))
    labels = tuple(tuple(unified_labels(s, label_map) for s in ds.samples) for ds in sources)
    return MixedDataset(sources, label_map, index, int(seed), labels)


def _source_stream(size: int, length: int, rng: SplitMix64) -> list[int]:
    out: list[int] = []
    while len(out) < length:
        out.extend(rng.permutation(size))
    return out[:length]


def epoch_iterator(m: MixedDataset, epoch: int) -> list[tuple[int, int]]:
    """Deterministic balanced ordering for one epoch.

    Length is ``n_sources * max(source sizes)``; every prefix of length
    ``n_sources * k`` holds exactly ``k`` draws from each source.
    """
    sizes = m.sizes
    longest = max(sizes)
    streams = [
        _source_stream(size, longest, SplitMix64(derive_seed(m.seed, "mix", epoch, i)))
        for i, size in enumerate(sizes)
    ]
    return [(i, streams[i][k]) for k in range(longest) for i in range(len(sizes))]


def iter_epoch_records(m: MixedDataset, epochs: Sequence[int]) -> Iterator[dict]:
    for e in epochs:
        for step, (i, k) in enumerate(epoch_iterator(m, e)):
            yield {
                "epoch": e,
                "step": step,
                "source": m.sources[i].name,
                "sample": m.sources[i].samples[k].sample_id,
            }


def epoch_index_jsonl(m: MixedDataset, epochs: Sequence[int]) -> str:
    """The ``mix`` subcommand's JSON-lines output."""
    return "".join(json.dumps(r) + "\n" for r in iter_epoch_records(m, epochs))

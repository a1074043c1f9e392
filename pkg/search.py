"""
Coarse-to-fine search over a corpus of standardized stacks.

Every indexed stack shares one schedule, so level L of one stack is
comparable with level L of any other. Each decoded layer is kept as a
small thumbnail; a query is compared level by level and only the entries
whose score stays under that level's threshold move on to the next,
finer, level.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from config import config
from errors import IndexConflictError, IndexFormatError, IndexMismatchError, ParameterError, ShapeError
from job_processor import JobManager
from pnm_io import atomic_write
from scale_space import resample_linear
from stack_codec import BlurStack

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.yaml"

Thumbnails = Tuple[np.ndarray, ...]


@dataclass(frozen=True)
class IndexEntry:
    path: str
    thumbnails: Thumbnails = field(compare=False, repr=False)


@dataclass(frozen=True)
class StackIndex:
    """Immutable: index_add returns a new index."""

    preset: str
    sigmas: Tuple[float, ...]
    channels: int
    thumbnail_size: int = 64
    entries: Dict[str, IndexEntry] = field(default_factory=dict)

    @property
    def level_count(self) -> int:
        return len(self.sigmas)

    def __len__(self):
        return len(self.entries)

    @classmethod
    def for_stack(cls, stack: BlurStack, preset: str, thumbnail_size: int = None) -> "StackIndex":
        """An empty index standardized on the schedule and channel count of `stack`."""
        return cls(preset, stack.sigmas, stack.channels, thumbnail_size or config.THUMBNAIL_SIZE)

    def lookup(self, entry_id: str) -> IndexEntry:
        return self.entries[entry_id]


@dataclass(frozen=True)
class MatchResult:
    id: str
    per_level_scores: Tuple[float, ...]
    deepest_level_reached: int
    accepted: bool

    @property
    def rank_key(self) -> Tuple:
        return (-self.deepest_level_reached, self.per_level_scores[-1], self.id)

    def to_dict(self) -> Dict:
        return {
            'id': self.id,
            'per_level_scores': list(self.per_level_scores),
            'deepest_level_reached': self.deepest_level_reached,
            'accepted': self.accepted,
        }


def _check_compatible(index: StackIndex, stack: BlurStack) -> None:
    if tuple(stack.sigmas) != tuple(index.sigmas):
        raise IndexMismatchError(
            f"stack schedule {list(stack.sigmas)} differs from the index '{index.preset}' schedule {list(index.sigmas)}")
    if stack.channels != index.channels:
        raise IndexMismatchError(f"stack has {stack.channels} channels, index expects {index.channels}")


def make_thumbnails(stack: BlurStack, size: int = None) -> Thumbnails:
    """Each decoded layer linearly resampled to size x size, as (C, size, size) uint8."""
    size = size or config.THUMBNAIL_SIZE
    thumbs = []
    for layer in stack.layers:
        planes = [np.clip(np.rint(resample_linear(p.samples, (size, size))), 0, 255) for p in layer.decoded]
        thumbs.append(np.stack(planes).astype(np.uint8))
    return tuple(thumbs)


def index_add(index: StackIndex, entry_id: str, stack: BlurStack, path: str = "") -> StackIndex:
    if entry_id in index.entries:
        raise IndexConflictError(f"entry '{entry_id}' is already indexed")
    _check_compatible(index, stack)
    entries = dict(index.entries)
    entries[entry_id] = IndexEntry(path, make_thumbnails(stack, index.thumbnail_size))
    logger.debug(f"Indexed '{entry_id}' ({len(entries)} entries)")
    return StackIndex(index.preset, index.sigmas, index.channels, index.thumbnail_size, entries)


def level_score(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference over all samples and channels, scaled to [0, 1]."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"thumbnail shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.float64) - b)) / 255.0)


def query_thumbnails(index: StackIndex, reference: BlurStack) -> Thumbnails:
    _check_compatible(index, reference)
    return make_thumbnails(reference, index.thumbnail_size)


def _check_thresholds(index: StackIndex, thresholds: Sequence[float]) -> Tuple[float, ...]:
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds:
        raise ParameterError("at least one level threshold is required")
    if len(thresholds) > index.level_count:
        raise ParameterError(f"{len(thresholds)} thresholds for a {index.level_count}-level index")
    return thresholds


def _rank(results: List[MatchResult], max_results: Optional[int]) -> List[MatchResult]:
    ranked = sorted(results, key=lambda r: r.rank_key)
    return ranked if max_results is None else ranked[:max_results]


def _search_thumbnails(index: StackIndex, query: Thumbnails, thresholds: Tuple[float, ...]) -> List[MatchResult]:
    scores: Dict[str, List[float]] = {entry_id: [] for entry_id in sorted(index.entries)}
    survivors = list(scores)
    eliminated: Dict[str, int] = {}
    for level, threshold in enumerate(thresholds, start=1):
        passed = []
        for entry_id in survivors:
            score = level_score(index.entries[entry_id].thumbnails[level - 1], query[level - 1])
            scores[entry_id].append(score)
            if score <= threshold:
                passed.append(entry_id)
            else:
                eliminated[entry_id] = level
        logger.debug(f"level {level}: {len(passed)} of {len(survivors)} entries under {threshold}")
        survivors = passed
    return [
        MatchResult(entry_id, tuple(s), eliminated.get(entry_id, len(thresholds)), entry_id not in eliminated)
        for entry_id, s in scores.items()
    ]


def coarse_to_fine_search(index: StackIndex, reference: BlurStack, thresholds: Sequence[float],
                          max_results: Optional[int] = 10) -> List[MatchResult]:
    """Ranked results: deepest level reached first, then that level's score, then id."""
    thresholds = _check_thresholds(index, thresholds)
    if not index.entries:
        return []
    query = query_thumbnails(index, reference)
    return _rank(_search_thumbnails(index, query, thresholds), max_results)


def split_index(index: StackIndex, shards: int) -> List[StackIndex]:
    if shards < 1:
        raise ParameterError(f"shard count must be >= 1, got {shards}")
    ids = sorted(index.entries)
    return [
        StackIndex(index.preset, index.sigmas, index.channels, index.thumbnail_size,
                   {entry_id: index.entries[entry_id] for entry_id in ids[k::shards]})
        for k in range(shards)
    ]


def _search_shard(job) -> List[MatchResult]:
    shard, query, thresholds = job
    return _search_thumbnails(shard, query, thresholds)


def search_sharded(index: StackIndex, reference: BlurStack, thresholds: Sequence[float], shards: int = 4,
                   max_results: Optional[int] = 10, num_workers: int = None) -> List[MatchResult]:
    """Search each shard separately and merge; the ranking equals the unsharded search."""
    thresholds = _check_thresholds(index, thresholds)
    if not index.entries:
        return []
    query = query_thumbnails(index, reference)
    jobs = [(shard, query, thresholds) for shard in split_index(index, shards) if shard.entries]
    partials = JobManager(num_workers, name="shard").run(_search_shard, jobs)
    return _rank([r for part in partials for r in part], max_results)


def _blob_name(position: int, level: int) -> str:
    return f"entry_{position:04d}_level_{level:02d}.raw"


def save_index(index: StackIndex, directory: str) -> None:
    """Manifest (YAML) plus one raw thumbnail blob per entry and level."""
    os.makedirs(directory, exist_ok=True)
    entries = []
    for position, entry_id in enumerate(sorted(index.entries)):
        entry = index.entries[entry_id]
        for level, thumb in enumerate(entry.thumbnails, start=1):
            atomic_write(os.path.join(directory, _blob_name(position, level)), thumb.tobytes())
        entries.append({'id': entry_id, 'path': entry.path, 'position': position})
    manifest = {
        'preset': index.preset,
        'sigmas': [float(s) for s in index.sigmas],
        'level_count': index.level_count,
        'channels': index.channels,
        'thumbnail_size': index.thumbnail_size,
        'entries': entries,
    }
    atomic_write(os.path.join(directory, MANIFEST_NAME),
                 yaml.safe_dump(manifest, sort_keys=False).encode('utf-8'))
    logger.info(f"Saved index with {len(entries)} entries to {directory}")


def load_index(directory: str) -> StackIndex:
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    with open(manifest_path, 'r') as f:
        try:
            manifest = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise IndexFormatError(f"{manifest_path}: {e}")
    required = {'preset', 'sigmas', 'level_count', 'channels', 'thumbnail_size', 'entries'}
    if not isinstance(manifest, dict) or not required <= set(manifest):
        raise IndexFormatError(f"{manifest_path}: manifest must contain {sorted(required)}")
    sigmas = tuple(float(s) for s in manifest['sigmas'])
    if len(sigmas) != manifest['level_count']:
        raise IndexFormatError(f"{manifest_path}: level_count {manifest['level_count']} but {len(sigmas)} sigmas")

    channels, size = int(manifest['channels']), int(manifest['thumbnail_size'])
    shape = (channels, size, size)
    entries = {}
    for item in manifest['entries'] or []:
        thumbs = []
        for level in range(1, len(sigmas) + 1):
            blob = os.path.join(directory, _blob_name(int(item['position']), level))
            with open(blob, 'rb') as f:
                data = f.read()
            if len(data) != channels * size * size:
                raise IndexFormatError(f"{blob}: {len(data)} bytes, expected {channels * size * size}")
            thumbs.append(np.frombuffer(data, dtype=np.uint8).reshape(shape))
        entries[str(item['id'])] = IndexEntry(item.get('path', ''), tuple(thumbs))
    return StackIndex(str(manifest['preset']), sigmas, channels, size, entries)

"""Deterministic, splittable random streams and the replicate engine.

Every random quantity in an experiment is drawn from a stream identified by
a tuple of integer labels below the master seed, e.g.
``(stage, n, chunk)``.  Streams are built from :class:`numpy.random.SeedSequence`
spawn keys feeding the counter-based Philox bit generator, so any stream can
be recreated on its own without replaying the others.

Replicates are simulated in fixed-size chunks whose size depends only on the
path length.  Chunks are always simulated in full and the result truncated,
which makes the first ``R`` replicate values independent of the total count
and of the number of worker threads.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

Label = Union[int, str]

#: Number of path entries simulated per chunk (bounds memory per worker).
CHUNK_ELEMENTS = 1 << 21


def _label_to_int(label: Label) -> int:
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    if isinstance(label, (bool, np.bool_)) or int(label) != label or label < 0:
        raise ValueError(f"stream labels must be non-negative integers or strings, got {label!r}")
    return int(label)


@dataclass(frozen=True)
class Streams:
    """A node in the tree of random streams.

    Parameters
    ----------
    master_seed : int
        Root entropy (64-bit).
    key : tuple of int
        Path from the root to this node.
    """

    master_seed: int
    key: tuple = ()

    def child(self, *labels: Label) -> "Streams":
        return Streams(self.master_seed, self.key + tuple(_label_to_int(x) for x in labels))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(seq))

    @property
    def stream_id(self) -> str:
        return "/".join([str(self.master_seed)] + [str(k) for k in self.key])


def as_streams(seed: Union[int, Streams, None]) -> Streams:
    if isinstance(seed, Streams):
        return seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
    return Streams(int(seed))


def thread_count(threads: int | None = None) -> int:
    """Worker threads: explicit value, else ``RVCLT_THREADS``, else CPU count."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("RVCLT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def chunk_size(length: int) -> int:
    return max(1, CHUNK_ELEMENTS // max(int(length), 1))


def map_replicates(
    simulate: Callable[[np.random.Generator, int], np.ndarray],
    replicates: int,
    length: int,
    streams: Streams,
    threads: int | None = None,
) -> np.ndarray:
    """Run ``simulate(rng, size)`` over replicate chunks and stack the results.

    ``simulate`` must return an array whose leading axis has length ``size``.
    Chunk ``j`` always uses stream ``streams.child(j)`` and always simulates
    ``chunk_size(length)`` replicates, so the output is a deterministic
    function of ``(streams, length)`` truncated to ``replicates`` rows.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    size = chunk_size(length)
    n_chunks = -(-replicates // size)

    def work(j: int) -> np.ndarray:
        return np.asarray(simulate(streams.child(j).generator(), size))

    workers = min(thread_count(threads), n_chunks)
    if workers == 1:
        parts = [work(j) for j in range(n_chunks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(n_chunks)))
    return np.concatenate(parts, axis=0)[:replicates]

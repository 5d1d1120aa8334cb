"""Counter-based, splittable random streams.

Every random quantity in zop is a pure function of ``(root seed, purpose tag,
index)``.  Streams are backed by numpy's Philox 4x64 counter generator: the
key is derived from the seed and the tag path, and draws are produced in
fixed-size blocks whose block number is written into the counter.  Row ``i``
of a stream therefore never depends on how many rows were requested before
it, which keeps Monte Carlo batches independent of scheduling.
"""

import hashlib

import numpy as np

BLOCK = 1024
_MASK64 = (1 << 64) - 1


def _tag_word(tag):
    digest = hashlib.blake2b(str(tag).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_key(seed, tags):
    """128-bit Philox key for a seed and a tuple of purpose tags."""
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    words = [seed & 0xFFFFFFFF, seed >> 32] + [_tag_word(t) for t in tags]
    ss = np.random.SeedSequence(words)
    return ss.generate_state(2, dtype=np.uint64)


class CounterStream:
    """Deterministic random stream addressed by (seed, tags, index).

    ``generator(k)`` returns a fresh numpy Generator for block ``k``;
    ``normals``/``uniforms``/``rows`` return the rows ``start:start+count`` of
    an infinite table whose contents depend only on the seed, the tag path and
    the row index.
    """

    def __init__(self, seed, tags=()):
        if isinstance(tags, str):
            tags = (tags,)
        self.seed = int(seed)
        self.tags = tuple(tags)
        self._key = derive_key(self.seed, self.tags)
        self._cache = {}

    def __repr__(self):
        return f"CounterStream(seed={self.seed}, tags={self.tags!r})"

    def split(self, tag):
        """Independent child stream for a sub-purpose."""
        return CounterStream(self.seed, self.tags + (tag,))

    def generator(self, block):
        counter = np.array([0, 0, int(block) & _MASK64, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))

    def rows(self, name, sampler, start, count, width=None):
        """Rows ``start:start+count`` of the table produced by ``sampler``.

        ``sampler(gen, nrows)`` must return an array with ``nrows`` leading
        rows and be a deterministic function of ``gen``.  ``name`` keys the
        block cache and must uniquely identify ``sampler`` (and ``width``).
        """
        if count < 0 or start < 0:
            raise ValueError("start and count must be nonnegative")
        out = []
        idx = start
        stop = start + count
        while idx < stop:
            block, offset = divmod(idx, BLOCK)
            table = self._block(name, sampler, block)
            take = min(BLOCK - offset, stop - idx)
            out.append(table[offset:offset + take])
            idx += take
        if not out:
            probe = self._block(name, sampler, 0)
            return probe[:0].copy()
        return np.concatenate(out, axis=0) if len(out) > 1 else out[0].copy()

    def _block(self, name, sampler, block):
        cached = self._cache.get(name)
        if cached is not None and cached[0] == block:
            return cached[1]
        table = sampler(self.generator(block), BLOCK)
        self._cache[name] = (block, table)
        return table

    def normals(self, start, count, width):
        return self.rows(("normal", width),
                         lambda g, k: g.standard_normal((k, width)),
                         start, count)

    def uniforms(self, start, count, width=1):
        return self.rows(("uniform", width),
                         lambda g, k: g.random((k, width)),
                         start, count)

    def uniform(self, index):
        """Single uniform on [0, 1) at a given index."""
        return float(self.uniforms(index, 1, 1)[0, 0])

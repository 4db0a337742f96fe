import heapq
import io
import os
import pickle
import shutil
import struct
import tempfile
import time
from dataclasses import dataclass
from operator import attrgetter

from miniform.kernel.term_core import term_core as tc
from miniform.utils import ExecutionError, get_logger, throw

logger = get_logger("sorter")

_LENGTH = struct.Struct("<I")
_by_key = attrgetter("key")

# one word per subterm plus the coefficient and length words
BYTES_PER_WORD = 4


@dataclass
class SortStatistics:
    generated: int = 0
    output: int = 0
    bytes: int = 0
    runs: int = 0
    started: float = 0.0
    elapsed: float = 0.0

    def block(self, name):
        """The three-line statistics block printed after each sort."""
        return "\n".join(
            (
                f"Time = {self.elapsed:11.2f} sec    Generated terms = {self.generated:10d}",
                f"{name:>17}        Terms in output = {self.output:10d}",
                f"{'':25}Bytes used      = {self.bytes:10d}",
            )
        )


def merge_sorted(streams):
    """Merge canonically sorted term streams, adding equal terms and dropping zeros."""
    current = None
    coef = None
    for term in heapq.merge(*streams, key=_by_key):
        if current is not None and term.key == current.key:
            coef += term.coef
            continue
        if current is not None and coef != 0:
            yield current if coef == current.coef else current.with_coef(coef)
        current, coef = term, term.coef
    if current is not None and coef != 0:
        yield current if coef == current.coef else current.with_coef(coef)


def term_bytes(term):
    return BYTES_PER_WORD * (term.size + 2)


class _TermPickler(pickle.Pickler):
    def persistent_id(self, obj):
        if isinstance(obj, tc.Variable):
            return obj.name
        return None


class _TermUnpickler(pickle.Unpickler):
    def __init__(self, handle, table):
        super().__init__(handle)
        self.table = table

    def persistent_load(self, pid):
        var = self.table.find(pid)
        if var is None:
            throw(f"Spill file refers to unknown variable {pid}", exc=ExecutionError)
        return var


class Sorter:
    """
    Collects the terms generated for one expression and hands them back
    normal ordered.

    Terms go into a buffer of `sort_buffer` terms. A full buffer is sorted
    into a patch; when `sort_patches` patches are waiting they are merged
    and written to disk as one run. At the end the runs (or, if nothing was
    spilled, the patches) are merged `merge_fan_in` at a time. An unbounded
    buffer keeps everything in memory.

    Variables are written to spill files by name and looked up again in
    the symbol table on reading, so the terms that come back share their
    Variable objects with the rest of the session.
    """

    def __init__(self, config, table, name=""):
        self.capacity = config.sort_buffer
        self.patch_limit = config.sort_patches
        self.fan_in = config.merge_fan_in
        self.spill_dir = config.spill_dir
        self.table = table
        self.name = name
        self.stats = SortStatistics(started=time.perf_counter())
        self._buffer = []
        self._patches = []
        self._runs = []
        self._tempdir = None

    def add(self, term):
        if term is None:
            return
        self.stats.generated += 1
        self._buffer.append(term)
        if self.capacity is not None and len(self._buffer) >= self.capacity:
            self._flush_buffer()

    def extend(self, terms):
        for term in terms:
            self.add(term)

    def finish(self):
        """The sorted expression; temporary files are gone afterwards."""
        try:
            self._flush_buffer()
            if not self._runs:
                result = tuple(merge_sorted(self._patches))
            else:
                self._spill_patches()
                result = tuple(self._merge_runs())
        finally:
            self._cleanup()
        self.stats.output = len(result)
        self.stats.bytes = sum(term_bytes(t) for t in result)
        self.stats.elapsed = time.perf_counter() - self.stats.started
        return result

    # in memory

    def _flush_buffer(self):
        if not self._buffer:
            return
        self._patches.append(tc.sort_terms(self._buffer))
        self._buffer = []
        if len(self._patches) >= self.patch_limit:
            self._spill_patches()

    # on disk

    def _spill_patches(self):
        if not self._patches:
            return
        self._runs.append(self._write_run(merge_sorted(self._patches)))
        self._patches = []

    def _write_run(self, terms):
        if self._tempdir is None:
            try:
                self._tempdir = tempfile.mkdtemp(prefix="miniform-", dir=self.spill_dir)
            except OSError as e:
                throw(f"Cannot create sort file directory in {self.spill_dir}: {e.strerror}", exc=ExecutionError)
        fd, path = tempfile.mkstemp(suffix=".run", dir=self._tempdir)
        count = 0
        try:
            with os.fdopen(fd, "wb") as handle:
                for term in terms:
                    data = io.BytesIO()
                    _TermPickler(data, protocol=pickle.HIGHEST_PROTOCOL).dump(term)
                    payload = data.getvalue()
                    handle.write(_LENGTH.pack(len(payload)))
                    handle.write(payload)
                    count += 1
        except OSError as e:
            throw(f"Cannot write sort file {path}: {e.strerror}", exc=ExecutionError)
        self.stats.runs += 1
        logger.debug("sort of %s spilled run %d with %d terms", self.name or "?", self.stats.runs, count)
        return path

    def _read_run(self, path):
        try:
            with open(path, "rb") as handle:
                while True:
                    header = handle.read(_LENGTH.size)
                    if not header:
                        return
                    (length,) = _LENGTH.unpack(header)
                    yield _TermUnpickler(io.BytesIO(handle.read(length)), self.table).load()
        except OSError as e:
            throw(f"Cannot read sort file {path}: {e.strerror}", exc=ExecutionError)

    def _merge_runs(self):
        runs = self._runs
        while len(runs) > self.fan_in:
            merged = []
            for start in range(0, len(runs), self.fan_in):
                group = runs[start : start + self.fan_in]
                if len(group) == 1:
                    merged.append(group[0])
                    continue
                merged.append(self._write_run(merge_sorted([self._read_run(p) for p in group])))
                for path in group:
                    os.remove(path)
            runs = merged
        self._runs = runs
        return merge_sorted([self._read_run(p) for p in runs])

    def _cleanup(self):
        if self._tempdir is not None:
            shutil.rmtree(self._tempdir, ignore_errors=True)
            self._tempdir = None
        self._runs = []
        self._patches = []
        self._buffer = []

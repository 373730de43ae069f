"""Multivariate heterogeneous time series and the (past, future) sequence library.

A series is organised as temporal blocks of consecutive samples. Each block
carries the same ordered list of measurement sources; a source is either a
real vector of fixed dimension or a symbol drawn from a finite alphabet.
Validity is tracked per sample and per source with explicit boolean flags,
so symbolic sources can have gaps too. Invalid real samples additionally
hold NaN so they can never be consumed silently.

The sequence library enumerates the anchors (block, t) at which a complete
past window (t - past_len + 1 .. t) and future window (t + 1 .. t + future_len)
are valid for every source. History lengths may differ per source.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError, EmptyLibraryError

REAL = "real"
SYMBOL = "symbol"


@dataclass(frozen=True)
class SourceMeta:
    """Description of one measurement source.

    kind is "real" (vector of `dim` floats) or "symbol" (alphabet members,
    stored as integer codes indexing `alphabet`). `units` is a free label.
    """

    name: str
    kind: str = REAL
    dim: int = 1
    alphabet: tuple[str, ...] = ()
    units: str = ""

    def __post_init__(self):
        if self.kind not in (REAL, SYMBOL):
            raise ValidationError(f"unknown source kind {self.kind!r}")
        if self.kind == REAL and self.dim < 1:
            raise ValidationError(f"source {self.name!r}: dim must be >= 1")
        if self.kind == SYMBOL and self.dim != 1:
            raise ValidationError(f"symbol source {self.name!r} must have dim 1")


class Block:
    """One temporal block: per-source value arrays plus validity flags.

    values[d] has shape (length, dim) for real sources and (length,) integer
    codes for symbol sources. valid[d] has shape (length,). Invalid real
    entries are NaN; invalid symbol entries are code -1.
    """

    def __init__(self, values, valid):
        if len(values) != len(valid):
            raise ValidationError("values and valid must list the same sources")
        if not values:
            raise ValidationError("block has no sources")
        lengths = {len(v) for v in values} | {len(f) for f in valid}
        if len(lengths) != 1:
            raise ValidationError("per-source arrays have mismatched lengths")
        self.length = lengths.pop()
        self.values = [np.asarray(v) for v in values]
        self.valid = [np.asarray(f, dtype=bool) for f in valid]
        for d, (v, f) in enumerate(zip(self.values, self.valid)):
            if v.dtype.kind == "f" and not f.all() and np.any(np.isfinite(v[~f])):
                # enforce the missing sentinel: invalid slots are never numbers
                v = v.copy()
                v[~f] = np.nan
                self.values[d] = v
        for v in self.values:
            v.setflags(write=False)
        for f in self.valid:
            f.setflags(write=False)

    def __len__(self):
        return self.length


class MultiSeries:
    """Ordered blocks sharing one ordered source list."""

    def __init__(self, sources: list[SourceMeta], blocks: list[Block],
                 block_ids: list[str] | None = None):
        self.sources = list(sources)
        self.blocks = list(blocks)
        self.block_ids = [str(b) for b in block_ids] if block_ids is not None \
            else [str(i) for i in range(len(blocks))]
        if len(self.block_ids) != len(self.blocks):
            raise ValidationError("need one id per block")
        for b in self.blocks:
            if len(b.values) != len(self.sources):
                raise ValidationError("block source count does not match series")
            for meta, v in zip(self.sources, b.values):
                if meta.kind == REAL:
                    if v.ndim != 2 or v.shape[1] != meta.dim:
                        raise ValidationError(
                            f"source {meta.name!r}: expected shape (L, {meta.dim}), got {v.shape}"
                        )
                else:
                    if v.ndim != 1:
                        raise ValidationError(f"symbol source {meta.name!r}: expected 1-D codes")

    @property
    def n_sources(self):
        return len(self.sources)

    def source_index(self, name: str) -> int:
        for d, meta in enumerate(self.sources):
            if meta.name == name:
                return d
        raise ValidationError(f"unknown source {name!r}")

    def source_std(self, d: int) -> float:
        """Pooled standard deviation of source d over valid samples.

        For vector sources the deviation is pooled across components. Used
        as the default kernel bandwidth.
        """
        meta = self.sources[d]
        if meta.kind != REAL:
            raise ValidationError(f"source {meta.name!r} is symbolic; set a bandwidth explicitly")
        chunks = [b.values[d][b.valid[d]] for b in self.blocks]
        data = np.concatenate([c for c in chunks if len(c)]) if chunks else np.empty((0, meta.dim))
        if data.size == 0:
            raise ValidationError(f"source {meta.name!r} has no valid samples")
        return float(np.sqrt(np.mean((data - data.mean(axis=0)) ** 2)))


def _broadcast_lengths(value, n_sources, what) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=int))
    if arr.size == 1:
        arr = np.full(n_sources, int(arr[0]))
    if arr.size != n_sources:
        raise ValidationError(f"{what}: expected 1 or {n_sources} lengths, got {arr.size}")
    if np.any(arr < 1):
        raise ValidationError(f"{what}: history lengths must be >= 1")
    return arr


@dataclass
class LibraryConfig:
    """Per-source past/future window lengths. Scalars broadcast to all sources."""

    past_len: object = 1
    future_len: object = 1

    def resolved(self, n_sources: int) -> tuple[np.ndarray, np.ndarray]:
        past = _broadcast_lengths(self.past_len, n_sources, "past_len")
        future = _broadcast_lengths(self.future_len, n_sources, "future_len")
        return past, future


class SequenceLibrary:
    """Anchors (block k, time t) with complete valid windows on all sources.

    Anchor t carries the past (t - past_len + 1 .. t) and the future
    (t + 1 .. t + future_len), per source. Entries are in (block, time)
    lexicographic order and construction is deterministic.
    """

    def __init__(self, series: MultiSeries, config: LibraryConfig, entries: np.ndarray,
                 past_lens: np.ndarray, future_lens: np.ndarray):
        self.series = series
        self.config = config
        self.entries = entries  # shape (N, 2): block index, time index
        self.past_lens = past_lens
        self.future_lens = future_lens
        self.entries.setflags(write=False)

    @property
    def n_pairs(self) -> int:
        return len(self.entries)

    def __len__(self):
        return self.n_pairs

    def past_window(self, i: int, d: int) -> np.ndarray:
        k, t = self.entries[i]
        lp = self.past_lens[d]
        return self.series.blocks[k].values[d][t - lp + 1 : t + 1]

    def future_window(self, i: int, d: int) -> np.ndarray:
        k, t = self.entries[i]
        lf = self.future_lens[d]
        return self.series.blocks[k].values[d][t + 1 : t + 1 + lf]

    def past_windows(self, d: int) -> np.ndarray:
        """All past windows of source d, stacked along axis 0, in anchor order."""
        return np.stack([self.past_window(i, d) for i in range(self.n_pairs)])

    def future_windows(self, d: int) -> np.ndarray:
        return np.stack([self.future_window(i, d) for i in range(self.n_pairs)])

    def subsample(self, stride: int) -> "SequenceLibrary":
        if stride < 1:
            raise ValidationError("stride must be >= 1")
        return SequenceLibrary(self.series, self.config, self.entries[::stride].copy(),
                               self.past_lens, self.future_lens)


def build_library(series: MultiSeries, config: LibraryConfig) -> SequenceLibrary:
    """Enumerate all anchors with fully valid past and future windows.

    With no missing data the count per block is L - max(past) - max(future) + 1.
    A missing sample knocks out every anchor whose combined window covers it.
    """
    past, future = config.resolved(series.n_sources)
    max_past, max_future = int(past.max()), int(future.max())

    any_long_enough = False
    entries = []
    for k, block in enumerate(series.blocks):
        L = block.length
        lo, hi = max_past - 1, L - max_future  # anchors in [lo, hi)
        if lo >= hi:
            continue
        any_long_enough = True
        ok = np.ones(hi - lo, dtype=bool)
        for d in range(series.n_sources):
            # count invalid samples inside each sliding window via a cumsum
            bad = np.cumsum(np.concatenate(([0], (~block.valid[d]).astype(np.int64))))
            lp, lf = past[d], future[d]
            t = np.arange(lo, hi)
            past_bad = bad[t + 1] - bad[t - lp + 1]
            future_bad = bad[t + 1 + lf] - bad[t + 1]
            ok &= (past_bad == 0) & (future_bad == 0)
        for t in np.nonzero(ok)[0] + lo:
            entries.append((k, t))

    if not entries:
        if not any_long_enough:
            raise EmptyLibraryError(
                "every block is shorter than max past + max future lengths"
            )
        raise EmptyLibraryError("missing data eliminates every candidate anchor")
    return SequenceLibrary(series, config, np.array(entries, dtype=np.int64), past, future)


# ---------------------------------------------------------------------------
# CSV input
# ---------------------------------------------------------------------------

@dataclass
class SourceSchema:
    """How one source appears in a CSV file.

    Real scalar sources live in a column named after the source; vector
    components in `name.0 .. name.{dim-1}`. A `<name>_qc` column, when
    present, flags validity (0 invalid, anything else valid). Missing or
    empty cells are invalid.
    """

    name: str
    kind: str = REAL
    dim: int = 1
    alphabet: tuple[str, ...] = ()

    def columns(self) -> list[str]:
        if self.kind == SYMBOL or self.dim == 1:
            return [self.name]
        return [f"{self.name}.{c}" for c in range(self.dim)]


@dataclass
class SeriesSchema:
    sources: list[SourceSchema] = field(default_factory=list)
    block_column: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "SeriesSchema":
        sources = []
        for s in doc.get("sources", []):
            sources.append(SourceSchema(
                name=s["name"],
                kind=s.get("kind", REAL),
                dim=int(s.get("dim", 1)),
                alphabet=tuple(s.get("alphabet", ())),
            ))
        if not sources:
            raise ValidationError("schema declares no sources")
        return cls(sources=sources, block_column=doc.get("block_column"))

    def to_dict(self) -> dict:
        out = {"sources": []}
        for s in self.sources:
            entry = {"name": s.name, "kind": s.kind}
            if s.kind == REAL:
                entry["dim"] = s.dim
            else:
                entry["alphabet"] = list(s.alphabet)
            out["sources"].append(entry)
        if self.block_column:
            out["block_column"] = self.block_column
        return out


def _parse_real(cell: str, column: str, row_num: int) -> tuple[float, bool]:
    cell = cell.strip()
    if cell == "":
        return np.nan, False
    try:
        return float(cell), True
    except ValueError:
        raise ValidationError(
            f"row {row_num}: non-numeric value {cell!r} in column {column!r}"
        ) from None


def load_csv(path, schema: SeriesSchema) -> MultiSeries:
    """Read a schema-described CSV file into a MultiSeries.

    Rows with a 0 quality flag, or with missing cells, become invalid
    samples of the affected source. Distinct values in the block column
    produce distinct blocks, in order of first appearance. File columns not
    referenced by the schema are ignored.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read input: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        rows = list(reader)

    col = {name: i for i, name in enumerate(header)}
    needed = []
    for s in schema.sources:
        needed.extend(s.columns())
    if schema.block_column:
        needed.append(schema.block_column)
    missing = [c for c in needed if c not in col]
    if missing:
        raise ValidationError(f"{path}: columns not found: {missing}")

    for r, row in enumerate(rows, start=2):
        if not row:  # fully blank line: a row of missing cells
            rows[r - 2] = [""] * len(header)
        elif len(row) != len(header):
            raise ValidationError(f"{path}: row {r}: expected {len(header)} cells, got {len(row)}")

    # group row indices by block id, in order of first appearance
    if schema.block_column:
        bcol = col[schema.block_column]
        block_rows: dict[str, list[int]] = {}
        for r, row in enumerate(rows):
            block_rows.setdefault(row[bcol], []).append(r)
        groups = list(block_rows.values())
        block_ids = list(block_rows.keys())
    else:
        groups = [list(range(len(rows)))]
        block_ids = None

    # symbol alphabets may be inferred from the data when not declared
    alphabets = {}
    for s in schema.sources:
        if s.kind == SYMBOL:
            if s.alphabet:
                alphabets[s.name] = list(s.alphabet)
            else:
                seen = []
                c = col[s.name]
                for row in rows:
                    tok = row[c].strip()
                    if tok and tok not in seen:
                        seen.append(tok)
                alphabets[s.name] = sorted(seen)

    metas = []
    for s in schema.sources:
        if s.kind == SYMBOL:
            metas.append(SourceMeta(s.name, SYMBOL, 1, tuple(alphabets[s.name])))
        else:
            metas.append(SourceMeta(s.name, REAL, s.dim))

    blocks = []
    for rows_idx in groups:
        values, valid = [], []
        for s in schema.sources:
            qc_name = f"{s.name}_qc"
            qc = col.get(qc_name)
            flags = np.ones(len(rows_idx), dtype=bool)
            if qc is not None:
                for j, r in enumerate(rows_idx):
                    tok = rows[r][qc].strip()
                    if tok == "":
                        flags[j] = False
                    else:
                        f, ok = _parse_real(tok, qc_name, r + 2)
                        flags[j] = ok and f != 0
            if s.kind == SYMBOL:
                codes = np.full(len(rows_idx), -1, dtype=np.int64)
                lookup = {tok: i for i, tok in enumerate(alphabets[s.name])}
                c = col[s.name]
                for j, r in enumerate(rows_idx):
                    tok = rows[r][c].strip()
                    if tok == "":
                        flags[j] = False
                    elif tok not in lookup:
                        raise ValidationError(
                            f"row {r + 2}: symbol {tok!r} outside the alphabet of {s.name!r}"
                        )
                    elif flags[j]:
                        codes[j] = lookup[tok]
                values.append(codes)
            else:
                arr = np.full((len(rows_idx), s.dim), np.nan)
                for ci, cname in enumerate(s.columns()):
                    c = col[cname]
                    for j, r in enumerate(rows_idx):
                        v, ok = _parse_real(rows[r][c], cname, r + 2)
                        if not ok:
                            flags[j] = False
                        arr[j, ci] = v
                arr[~flags] = np.nan
                values.append(arr)
            valid.append(flags)
        blocks.append(Block(values, valid))

    return MultiSeries(metas, blocks, block_ids=block_ids)

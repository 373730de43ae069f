"""Pipeline configuration, orchestration and file outputs.

A run is described by one JSON document bundling the input schema, window
lengths, the full kernel ledger, the regularization, the component
selection rule and the gap-filling parameters. Outputs are CSV files with
floats printed at 17 significant digits plus JSON manifests, all written
atomically, so identical configurations reproduce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .diffmap import (DiffusionConfig, DiffusionEmbedding, DiffusionOperator,
                      diffusion_operator, spectral_decompose)
from .embed import EmbeddingConfig, coefficients, state_gram
from .errors import ValidationError
from .gapfill import GapfillConfig, GapfillResult, two_pass_refill
from .kernels import (DecayProfile, GramPair, KernelSpec, SourceKernelSpec,
                      backend_name, gram_pair, resolve_spec)
from .series import (REAL, MultiSeries, SequenceLibrary, SeriesSchema,
                     build_library, LibraryConfig, load_csv)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class PipelineConfig:
    input_path: str
    schema: SeriesSchema
    library: LibraryConfig = field(default_factory=LibraryConfig)
    kernel: KernelSpec | None = None
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    gapfill: GapfillConfig = field(default_factory=GapfillConfig)
    output_dir: str = "out"
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")

    # -- JSON round trip ----------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        inp = doc.get("input") or {}
        if "path" not in inp:
            raise ValidationError("config: input.path is required")
        schema = SeriesSchema.from_dict(inp.get("schema") or {})
        names = [s.name for s in schema.sources]

        lib_doc = doc.get("library") or {}
        library = LibraryConfig(
            past_len=_per_source(lib_doc.get("past_len", 1), names, "library.past_len"),
            future_len=_per_source(lib_doc.get("future_len", 1), names, "library.future_len"),
        )

        k_doc = doc.get("kernel") or {}
        per_source = k_doc.get("sources") or {}
        unknown = set(per_source) - set(names)
        if unknown:
            raise ValidationError(f"config: kernel.sources refers to unknown sources {sorted(unknown)}")
        sources = []
        for s in schema.sources:
            sd = per_source.get(s.name) or {}
            default_metric = "discrete" if s.kind == "symbol" else "euclidean"
            sources.append(SourceKernelSpec(
                metric=sd.get("metric", default_metric),
                shape=sd.get("shape", "gaussian"),
                bandwidth=sd.get("bandwidth"),
            ))
        d_doc = k_doc.get("decay") or {}
        decay = DecayProfile(kind=d_doc.get("kind", "uniform"),
                             rate=d_doc.get("rate"), exponent=d_doc.get("exponent"))
        w_doc = k_doc.get("source_weights")
        weights = None
        if w_doc is not None:
            weights = [float(w_doc.get(n, 1.0)) for n in names] if isinstance(w_doc, dict) \
                else [float(v) for v in w_doc]
        kernel = KernelSpec(
            sources=sources,
            temporal_aggregation=k_doc.get("temporal_aggregation", "geometric"),
            decay=decay,
            source_aggregation=k_doc.get("source_aggregation", "geometric"),
            source_weights=weights,
            normalize=bool(k_doc.get("normalize", True)),
        )

        e_doc = doc.get("embedding") or {}
        embedding = EmbeddingConfig(regularization=float(e_doc.get("regularization", 1e-6)))

        df_doc = doc.get("diffusion") or {}
        nc = df_doc.get("n_components", "auto")
        diffusion = DiffusionConfig(
            n_components=nc if nc == "auto" else int(nc),
            residual_threshold=df_doc.get("residual_threshold"),
        )

        g_doc = doc.get("gapfill") or {}
        gapfill = GapfillConfig(epsilon=float(g_doc.get("epsilon", 0.1)),
                                max_passes=int(g_doc.get("max_passes", 2)))

        return cls(
            input_path=inp["path"],
            schema=schema,
            library=library,
            kernel=kernel,
            embedding=embedding,
            diffusion=diffusion,
            gapfill=gapfill,
            output_dir=doc.get("output_dir", "out"),
            stride=int(doc.get("stride", 1)),
            seed=int(doc.get("seed", 0)),
        )

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        names = [s.name for s in self.schema.sources]
        k = self.kernel
        doc = {
            "input": {"path": self.input_path, "schema": self.schema.to_dict()},
            "library": {
                "past_len": _lengths_doc(self.library.past_len, names),
                "future_len": _lengths_doc(self.library.future_len, names),
            },
            "kernel": {
                "sources": {
                    n: {"metric": s.metric, "shape": s.shape, "bandwidth": s.bandwidth}
                    for n, s in zip(names, k.sources)
                },
                "temporal_aggregation": k.temporal_aggregation,
                "decay": {kk: vv for kk, vv in
                          (("kind", k.decay.kind), ("rate", k.decay.rate),
                           ("exponent", k.decay.exponent)) if vv is not None},
                "source_aggregation": k.source_aggregation,
                "source_weights": {n: float(w) for n, w in zip(names, k.source_weights)},
                "normalize": k.normalize,
            },
            "embedding": {"regularization": self.embedding.regularization},
            "diffusion": {
                "n_components": self.diffusion.n_components,
                "residual_threshold": self.diffusion.residual_threshold,
            },
            "gapfill": {"epsilon": self.gapfill.epsilon, "max_passes": self.gapfill.max_passes},
            "output_dir": self.output_dir,
            "stride": self.stride,
            "seed": self.seed,
        }
        return doc

    def canonical_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _per_source(value, names, what):
    if isinstance(value, dict):
        unknown = set(value) - set(names)
        if unknown:
            raise ValidationError(f"config: {what} refers to unknown sources {sorted(unknown)}")
        return [int(value.get(n, 1)) for n in names]
    return int(value)


def _lengths_doc(value, names):
    arr = np.atleast_1d(np.asarray(value, dtype=int))
    if arr.size == 1:
        return int(arr[0])
    return {n: int(v) for n, v in zip(names, arr)}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

@dataclass
class EmbedRun:
    config: PipelineConfig
    series: MultiSeries
    library: SequenceLibrary
    kernel: KernelSpec                # resolved (bandwidths filled)
    gram: GramPair
    coeffs: np.ndarray
    gcs: np.ndarray
    operator: DiffusionOperator
    embedding: DiffusionEmbedding
    timings: dict
    threads: int


def run_embed(config: PipelineConfig, threads: int = 1) -> EmbedRun:
    timings = {}
    t0 = time.perf_counter()
    series = load_csv(config.input_path, config.schema)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    library = build_library(series, config.library)
    if config.stride > 1:
        library = library.subsample(config.stride)
    if library.n_pairs < 3:
        raise ValidationError(
            f"library has only {library.n_pairs} pairs; need at least 3 to embed"
        )
    timings["library"] = time.perf_counter() - t0

    kernel = resolve_spec(config.kernel or KernelSpec(
        sources=[SourceKernelSpec(metric="discrete" if m.kind != REAL else "euclidean")
                 for m in series.sources]), series)

    t0 = time.perf_counter()
    gram = gram_pair(library, kernel, threads=threads)
    timings["gram"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    A = coefficients(gram, config.embedding)
    gcs = state_gram(A, gram)
    timings["coefficients"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    op = diffusion_operator(gcs)
    emb = spectral_decompose(op, config.diffusion)
    timings["spectral"] = time.perf_counter() - t0

    return EmbedRun(config=config, series=series, library=library, kernel=kernel,
                    gram=gram, coeffs=A, gcs=gcs, operator=op, embedding=emb,
                    timings=timings, threads=threads)


def run_gapfill(config: PipelineConfig, threads: int = 1) -> tuple[EmbedRun, GapfillResult]:
    if config.stride > 1:
        raise ValidationError("gap filling needs consecutive anchors; use stride 1")
    run = run_embed(config, threads=threads)
    t0 = time.perf_counter()
    result = two_pass_refill(
        run.series, run.library, run.embedding, run.gcs,
        run.config.diffusion, run.config.gapfill,
        source_weights=run.kernel.source_weights,
    )
    run.timings["gapfill"] = time.perf_counter() - t0
    return run, result


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _atomic_write(path, text: str):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_coordinates(run: EmbedRun, path):
    emb = run.embedding
    m = emb.n_components
    lines = ["anchor,block,time," + ",".join(f"psi_{j}" for j in range(1, m + 1))]
    for i, (k, t) in enumerate(run.library.entries):
        coords = ",".join(_fmt(c) for c in emb.coordinates[i])
        lines.append(f"{i},{k},{t},{coords}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_eigenvalues(run: EmbedRun, path):
    emb = run.embedding
    doc = {
        "eigenvalues": [float(v) for v in emb.eigenvalues],
        "n_components": emb.n_components,
        "gap_index": emb.gap_index,
        "residual_mean": float(emb.residual_means[emb.n_components]),
        "degenerate": emb.degenerate,
    }
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")


def write_manifest(run: EmbedRun, path, extra: dict | None = None):
    emb = run.embedding
    doc = {
        "config_hash": run.config.canonical_hash(),
        "n_pairs": run.library.n_pairs,
        "clamp_mass": run.operator.clamped_mass,
        "clamp_max": run.operator.clamped_max,
        "eigenvalues": [float(v) for v in emb.eigenvalues],
        "n_components": emb.n_components,
        "gap_index": emb.gap_index,
        "residual_achieved": float(emb.residual_means[emb.n_components]),
        "seed": run.config.seed,
        "backend": backend_name(),
        "threads": run.threads,
        "timings": {k: round(v, 6) for k, v in run.timings.items()},
    }
    if extra:
        doc.update(extra)
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")


def write_filled_series(series: MultiSeries, imputed, schema: SeriesSchema, path,
                        block_ids: list | None = None):
    """Gap-filled CSV: original value columns plus per-source imputed flags."""
    header = []
    if schema.block_column:
        header.append(schema.block_column)
    for s in schema.sources:
        header.extend(s.columns())
    for s in schema.sources:
        if s.kind == REAL:
            header.append(f"{s.name}_imputed")
    lines = [",".join(header)]
    for k, block in enumerate(series.blocks):
        bid = str(block_ids[k]) if block_ids else str(k)
        for t in range(block.length):
            cells = []
            if schema.block_column:
                cells.append(bid)
            for d, s in enumerate(schema.sources):
                v = block.values[d][t]
                if s.kind == REAL:
                    cells.extend("" if not np.isfinite(x) else _fmt(x) for x in np.atleast_1d(v))
                else:
                    meta = series.sources[d]
                    cells.append("" if v < 0 else meta.alphabet[int(v)])
            for d, s in enumerate(schema.sources):
                if s.kind == REAL:
                    cells.append("1" if imputed[k][d][t] else "0")
            lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_updated_coordinates(series: MultiSeries, result: GapfillResult, path):
    m = result.states[0].shape[1]
    lines = ["block,time,origin," + ",".join(f"psi_{j}" for j in range(1, m + 1))]
    origin_names = {-1: "none", 0: "anchor", 1: "edge", 2: "imputed"}
    for k in range(len(series.blocks)):
        table, kinds = result.states[k], result.state_kind[k]
        for t in range(len(table)):
            if kinds[t] < 0:
                continue
            coords = ",".join(_fmt(c) for c in table[t])
            lines.append(f"{k},{t},{origin_names[kinds[t]]},{coords}")
    _atomic_write(path, "\n".join(lines) + "\n")

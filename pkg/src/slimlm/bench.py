"""Output-layer timing benchmark: dense softmax vs on-the-fly hashed
sharing vs the two-step pooled evaluation.

All variants score the same `batch` random hidden vectors against
identical effective weights, built once (untimed) from a hashed mapping:

* dense            — a materialized V x H matrix, one matmul per call;
* hash_on_the_fly  — recomputes every (word, position) pool index by
                     hash on each call and gathers pool rows per use,
                     never materializing the V x H matrix;
* se_dp            — the two-step partial-dot-product evaluation, also
                     reported with its two steps timed separately.

Logits of all variants must agree to 1e-10 relative — timing differences
are never correctness differences.  param_bytes counts bytes of fixed
data each variant must hold to answer queries: the dense matrix (V*H*8),
pool plus mapping table for se_dp, pool only for the hash variant.
Hash index arithmetic is not counted as flops.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field
from statistics import mean, median

import numpy as np

from .embedding import EmbeddingPool, materialize_dense
from .mapping import build_hashed_mapping
from .rng import SplitMix64, derive_seed, hash_u64s_vec
from .softmax import FlopCounter, OutputLayer, logits_dp, partial_products

VARIANTS = ("dense", "hash_on_the_fly", "se_dp")


@dataclass
class BenchSpec:
    vocab_size: int
    hidden_dim: int
    parts: int
    pool_size: int
    batch: int = 20
    reps: int = 10
    warmup: int = 3
    variants: tuple[str, ...] = VARIANTS
    seed: int = 1
    threads: int = 1
    hash_chunk: int = 4096

    def validate(self) -> None:
        if min(self.vocab_size, self.hidden_dim, self.parts, self.pool_size) < 1:
            raise ValueError("dimensions must be positive")
        if self.hidden_dim % self.parts:
            raise ValueError(
                f"parts {self.parts} must divide hidden_dim {self.hidden_dim}"
            )
        if self.pool_size % self.parts:
            raise ValueError(
                f"parts {self.parts} must divide pool_size {self.pool_size}"
            )
        if self.batch < 1 or self.reps < 1 or self.warmup < 0:
            raise ValueError("batch and reps must be >= 1, warmup >= 0")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")


@dataclass
class VariantResult:
    variant: str
    times: list[float]
    counter: FlopCounter
    param_bytes: int

    @property
    def median_s(self) -> float:
        return median(self.times)

    @property
    def mean_s(self) -> float:
        return mean(self.times)

    @property
    def min_s(self) -> float:
        return min(self.times)


@dataclass
class BenchResult:
    spec: BenchSpec
    variants: list[VariantResult] = dataclass_field(default_factory=list)
    errors: dict = dataclass_field(default_factory=dict)

    def get(self, variant: str) -> VariantResult:
        for vr in self.variants:
            if vr.variant == variant:
                return vr
        raise KeyError(variant)


def _time_calls(fn, reps: int, warmup: int):
    out = None
    for _ in range(warmup):
        out = fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return times, out


def _hash_on_the_fly_logits(
    pool: np.ndarray, h: np.ndarray, spec: BenchSpec, map_seed: int
) -> np.ndarray:
    """Gathered logits with pool indices re-hashed per use, in word chunks."""
    parts = spec.parts
    part = spec.pool_size // parts
    sub = spec.hidden_dim // parts
    hs = h.reshape(h.shape[0], parts, sub)
    z = np.empty((h.shape[0], spec.vocab_size))
    for start in range(0, spec.vocab_size, spec.hash_chunk):
        stop = min(start + spec.hash_chunk, spec.vocab_size)
        words = np.arange(start, stop, dtype=np.uint64)
        rows = np.empty((stop - start, parts), dtype=np.int64)
        for p in range(parts):
            rows[:, p] = p * part + (
                hash_u64s_vec(map_seed, words, p) % np.uint64(part)
            ).astype(np.int64)
        vecs = pool[rows]  # (chunk, K, d)
        z[:, start:stop] = np.einsum("wkd,bkd->bw", vecs, hs)
    return z


def run_bench(spec: BenchSpec) -> BenchResult:
    spec.validate()
    map_seed = derive_seed(spec.seed, "bench/mapping")
    mapping = build_hashed_mapping(
        spec.vocab_size, spec.parts, spec.pool_size, map_seed
    )
    rng = SplitMix64(derive_seed(spec.seed, "bench/data"))
    sub = spec.hidden_dim // spec.parts
    pool_data = rng.uniform_array(-0.05, 0.05, (spec.pool_size, sub))
    h = rng.uniform_array(-1.0, 1.0, (spec.batch, spec.hidden_dim))
    layer = OutputLayer(EmbeddingPool(mapping, pool_data), mapping)

    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - dependency is declared
        threadpool_limits = None

    result = BenchResult(spec)
    outputs = {}
    batch, vocab, hidden = spec.batch, spec.vocab_size, spec.hidden_dim
    parts, pool_size = spec.parts, spec.pool_size
    table_bytes = vocab * parts * 8
    pool_bytes = pool_size * sub * 8

    def run_all():
        # counters hold per-call counts for one batch of logits
        if "dense" in spec.variants:
            try:
                dense = materialize_dense(layer.pool, mapping)
                times, out = _time_calls(lambda: h @ dense.T, spec.reps, spec.warmup)
                counter = FlopCounter(macs=batch * vocab * hidden)
                result.variants.append(
                    VariantResult("dense", times, counter, vocab * hidden * 8)
                )
                outputs["dense"] = out
            except MemoryError as exc:
                result.errors["dense"] = (
                    f"memory exhausted materializing {vocab}x{hidden} matrix: {exc}"
                )
        if "hash_on_the_fly" in spec.variants:
            times, out = _time_calls(
                lambda: _hash_on_the_fly_logits(pool_data, h, spec, map_seed),
                spec.reps,
                spec.warmup,
            )
            counter = FlopCounter(macs=batch * vocab * hidden)
            result.variants.append(
                VariantResult("hash_on_the_fly", times, counter, pool_bytes)
            )
            outputs["hash_on_the_fly"] = out
        if "se_dp" in spec.variants:
            counter = FlopCounter()
            logits_dp(layer, h, counter)  # one instrumented call
            times, out = _time_calls(
                lambda: logits_dp(layer, h), spec.reps, spec.warmup
            )
            result.variants.append(
                VariantResult("se_dp", times, counter, pool_bytes + table_bytes)
            )
            outputs["se_dp"] = out

            u = partial_products(layer, h)
            t1, _ = _time_calls(
                lambda: partial_products(layer, h), spec.reps, spec.warmup
            )
            result.variants.append(
                VariantResult(
                    "se_dp_step1",
                    t1,
                    FlopCounter(macs=batch * pool_size * sub),
                    pool_bytes,
                )
            )

            def step2():
                z = u[mapping.table[:, 0]]
                for p in range(1, parts):
                    z = z + u[mapping.table[:, p]]
                return z.T

            t2, _ = _time_calls(step2, spec.reps, spec.warmup)
            result.variants.append(
                VariantResult(
                    "se_dp_step2",
                    t2,
                    FlopCounter(adds=batch * vocab * (parts - 1)),
                    table_bytes,
                )
            )

    if threadpool_limits is not None:
        with threadpool_limits(limits=spec.threads):
            run_all()
    else:
        run_all()

    if len(outputs) > 1:
        names = sorted(outputs)
        ref = outputs[names[0]]
        scale = max(1.0, float(np.abs(ref).max()))
        for name in names[1:]:
            diff = float(np.abs(outputs[name] - ref).max()) / scale
            if diff > 1e-10:
                raise RuntimeError(
                    f"variant {name} disagrees with {names[0]} by {diff:.3e}"
                )
    return result


CSV_HEADER = "V,H,K,M,variant,median_s,mean_s,min_s,flops,param_bytes"


def render_csv(results: list[BenchResult]) -> str:
    lines = [CSV_HEADER]
    for res in results:
        s = res.spec
        for vr in res.variants:
            lines.append(
                f"{s.vocab_size},{s.hidden_dim},{s.parts},{s.pool_size},"
                f"{vr.variant},{vr.median_s:.9f},{vr.mean_s:.9f},{vr.min_s:.9f},"
                f"{vr.counter.flops},{vr.param_bytes}"
            )
    return "\n".join(lines) + "\n"


def emit_csv(results: list[BenchResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_csv(results))

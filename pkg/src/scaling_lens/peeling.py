"""Monte-Carlo peeling over random bipartite text-concept graphs.

A graph has R concept nodes and T text nodes; each of the R*T pairs is
an edge independently with probability p.  Peeling repeatedly finds a
text with exactly one unknown concept and learns that concept.  The
process is confluent: the final learned set does not depend on the
order in which eligible texts are processed, so any two correct
implementations agree exactly, and the residual unknown concepts always
form a stopping set (no text sees exactly one of them).

Two kernels implement the inner loop: a Cython extension and a pure
Python fallback with identical semantics.  Selection is automatic with
an env-var override, see :func:`active_backend`.

Sampling draws edge positions on the flattened T*R grid by geometric
gap skipping, which reproduces i.i.d. Bernoulli(p) cells exactly in
O(edges) time.  Every trial owns a counter-based RNG keyed by
(seed, trial), so results are reproducible and independent of the
thread count; trial 0 of a Monte-Carlo run sees the same graph as
``sample_graph(R, T, p, seed)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _peel_py

try:
    from . import _peel as _peel_ext
except ImportError:
    _peel_ext = None

__all__ = [
    "BACKEND_ENV",
    "THREADS_ENV",
    "MAX_EXPECTED_EDGES",
    "BipartiteGraph",
    "BudgetExceeded",
    "MCStats",
    "PeelingOutcome",
    "active_backend",
    "dump_graph",
    "is_stopping_set",
    "mc_expected_learned",
    "mc_parent_graph_erasure",
    "peel",
    "resolve_threads",
    "sample_graph",
]

MAX_EXPECTED_EDGES = 1e8

BACKEND_ENV = "SCALING_LENS_PEEL_BACKEND"
THREADS_ENV = "SCALING_LENS_THREADS"


class BudgetExceeded(RuntimeError):
    """Expected edge count is past MAX_EXPECTED_EDGES."""


def active_backend() -> str:
    """Resolve the peeling kernel choice: 'ext' or 'python'.

    Honors SCALING_LENS_PEEL_BACKEND = auto | python | ext at call time.
    """
    mode = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if mode not in ("auto", "python", "ext"):
        raise ValueError(
            f"{BACKEND_ENV} must be one of auto, python, ext; got {mode!r}"
        )
    if mode == "python":
        return "python"
    if mode == "ext":
        if _peel_ext is None:
            raise RuntimeError(
                "compiled peeling kernel requested via "
                f"{BACKEND_ENV}=ext but the extension is not built"
            )
        return "ext"
    return "ext" if _peel_ext is not None else "python"


def _kernel():
    return _peel_ext.peel_kernel if active_backend() == "ext" else _peel_py.peel_kernel


def resolve_threads(threads: int | None = None) -> int:
    """Explicit argument, else SCALING_LENS_THREADS, else cpu count."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        if env is not None:
            threads = int(env)
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    return threads


@dataclass(frozen=True)
class BipartiteGraph:
    """Text-concept adjacency in CSR form (texts are the rows)."""

    n_concepts: int
    n_texts: int
    p: float
    seed: int
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)

    @property
    def n_edges(self) -> int:
        return int(self.indices.shape[0])

    def text_neighbors(self, t: int) -> np.ndarray:
        return self.indices[self.indptr[t]:self.indptr[t + 1]]

    def reverse_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Concept -> incident texts adjacency, built on demand."""
        degrees = np.diff(self.indptr)
        text_ids = np.repeat(
            np.arange(self.n_texts, dtype=np.int64), degrees
        )
        order = np.argsort(self.indices, kind="stable")
        rev_indices = text_ids[order]
        counts = np.bincount(self.indices, minlength=self.n_concepts)
        rev_indptr = np.zeros(self.n_concepts + 1, dtype=np.int64)
        np.cumsum(counts, out=rev_indptr[1:])
        return rev_indptr, np.ascontiguousarray(rev_indices, dtype=np.int64)


@dataclass(frozen=True)
class PeelingOutcome:
    learned_mask: np.ndarray
    iterations: int
    unlearned_count: int

    @property
    def learned(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.learned_mask).tolist())


@dataclass(frozen=True)
class MCStats:
    """Per-trial values with their mean and standard error."""

    mean: float
    stderr: float
    trials: int
    values: np.ndarray = field(repr=False)


def _check_seed(seed: int) -> int:
    if not (0 <= int(seed) < 2**64):
        raise ValueError(f"seed must fit in uint64, got {seed}")
    return int(seed)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    key = np.array([seed, trial], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _sample_positions(rng: np.random.Generator, n_cells: int, p: float) -> np.ndarray:
    """Indices of occupied cells on a Bernoulli(p) grid of size n_cells.

    Geometric gaps between successes; positions come out sorted.
    """
    if p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_cells, dtype=np.int64)
    expected = n_cells * p
    chunk = int(expected + 10.0 * math.sqrt(expected) + 32.0)
    pieces = []
    last = -1
    while last < n_cells:
        gaps = rng.geometric(p, size=chunk).astype(np.int64, copy=False)
        pos = last + np.cumsum(gaps)
        pieces.append(pos)
        last = int(pos[-1])
        chunk = max(1024, chunk // 8)
    out = np.concatenate(pieces) if len(pieces) > 1 else pieces[0]
    return out[out < n_cells]


def _sample_with_rng(
    rng: np.random.Generator, R: int, T: int, p: float, seed: int
) -> BipartiteGraph:
    positions = _sample_positions(rng, T * R, p)
    indices = positions % R
    text_of_edge = positions // R
    counts = np.bincount(text_of_edge, minlength=T)
    indptr = np.zeros(T + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return BipartiteGraph(
        n_concepts=R,
        n_texts=T,
        p=float(p),
        seed=seed,
        indptr=indptr,
        indices=np.ascontiguousarray(indices, dtype=np.int64),
    )


def _check_budget(R: int, T: int, p: float) -> None:
    # T = 0 is legal: an empty text side peels nothing
    if R < 1 or T < 0:
        raise ValueError("graph needs at least one concept and T >= 0 texts")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    if R * T * p > MAX_EXPECTED_EDGES:
        raise BudgetExceeded(
            f"expected edges R*T*p = {R * T * p:.3g} exceeds "
            f"{MAX_EXPECTED_EDGES:.0e}; reduce the instance size"
        )


def sample_graph(R: int, T: int, p: float, seed: int) -> BipartiteGraph:
    """Draw G(R, T, p): each text-concept pair is an edge w.p. p."""
    seed = _check_seed(seed)
    _check_budget(R, T, p)
    return _sample_with_rng(_trial_rng(seed, 0), R, T, p, seed)


def _peel_masked(graph: BipartiteGraph, unknown: np.ndarray) -> tuple[np.ndarray, int]:
    """Run the kernel with the given unknown-concept mask (uint8)."""
    rev_indptr, rev_indices = graph.reverse_csr()
    degrees = np.diff(graph.indptr)
    text_ids = np.repeat(np.arange(graph.n_texts, dtype=np.int64), degrees)
    edge_unknown = unknown[graph.indices].astype(bool)
    cnt = np.bincount(
        text_ids[edge_unknown], minlength=graph.n_texts
    ).astype(np.int64)
    # float64 holds id sums exactly here (everything stays far below 2^53)
    ssum = np.bincount(
        text_ids[edge_unknown],
        weights=graph.indices[edge_unknown].astype(np.float64),
        minlength=graph.n_texts,
    ).astype(np.int64)
    learned = np.zeros(graph.n_concepts, dtype=np.uint8)
    stack = np.empty(graph.n_texts + 1, dtype=np.int64)
    n_peeled = _kernel()(rev_indptr, rev_indices, cnt, ssum, learned, stack)
    return learned, int(n_peeled)


def peel(graph: BipartiteGraph, unknown: np.ndarray | None = None) -> PeelingOutcome:
    """Peel to completion; by default every concept starts unknown.

    ``unknown`` may restrict the initially unknown set (uint8/bool mask
    over concepts).  The returned iteration count equals the number of
    concepts learned; the residual unknowns form a stopping set.
    """
    if unknown is None:
        unknown_mask = np.ones(graph.n_concepts, dtype=np.uint8)
    else:
        unknown_mask = np.asarray(unknown).astype(np.uint8)
        if unknown_mask.shape != (graph.n_concepts,):
            raise ValueError("unknown mask must have one entry per concept")
    learned, n_peeled = _peel_masked(graph, unknown_mask)
    n_unknown = int(unknown_mask.sum())
    return PeelingOutcome(
        learned_mask=learned,
        iterations=n_peeled,
        unlearned_count=n_unknown - n_peeled,
    )


def is_stopping_set(graph: BipartiteGraph, concept_mask: np.ndarray) -> bool:
    """True when no text has exactly one neighbor inside the mask."""
    mask = np.asarray(concept_mask).astype(bool)
    degrees = np.diff(graph.indptr)
    text_ids = np.repeat(np.arange(graph.n_texts, dtype=np.int64), degrees)
    edge_in = mask[graph.indices]
    per_text = np.bincount(text_ids[edge_in], minlength=graph.n_texts)
    return not np.any(per_text == 1)


def _run_trials(trial_fn, trials: int, threads: int | None) -> np.ndarray:
    """Evaluate trial_fn(i) for i in range(trials) into a fixed-order array.

    Values land at their trial index, so the aggregate is byte-identical
    for any thread count.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    n_workers = resolve_threads(threads)
    values = np.empty(trials, dtype=np.float64)
    if n_workers == 1:
        for i in range(trials):
            values[i] = trial_fn(i)
        return values
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        for i, v in zip(range(trials), pool.map(trial_fn, range(trials))):
            values[i] = v
    return values


def _stats(values: np.ndarray) -> MCStats:
    mean = float(np.mean(values))
    if values.size > 1:
        stderr = float(np.std(values, ddof=1) / math.sqrt(values.size))
    else:
        stderr = 0.0
    return MCStats(mean=mean, stderr=stderr, trials=int(values.size), values=values)


def mc_expected_learned(
    R: int,
    T: int,
    d_t: float,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> MCStats:
    """Monte-Carlo mean count of concepts learned from scratch.

    Graphs are G(R, T, p) with p = d_t / R; all R concepts start unknown.
    """
    seed = _check_seed(seed)
    p = d_t / R
    _check_budget(R, T, p)

    def one_trial(i: int) -> float:
        rng = _trial_rng(seed, i)
        graph = _sample_with_rng(rng, R, T, p, seed)
        _, n_peeled = _peel_masked(
            graph, np.ones(R, dtype=np.uint8)
        )
        return float(n_peeled)

    return _stats(_run_trials(one_trial, trials, threads))


def mc_parent_graph_erasure(
    model,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> MCStats:
    """Unconditional stuck-bit fraction on the parent-graph experiment.

    The parent graph has ceil(R / epsilon) concepts of which a uniformly
    random floor(epsilon * n_parent) start unknown; each trial reports
    (unknown still unlearned after peeling) / n_parent.  This matches the
    density-evolution bit erasure normalization, which is also
    unconditional over decoding success.
    """
    seed = _check_seed(seed)
    n_parent = math.ceil(model.R / model.epsilon)
    n_erased = math.floor(model.epsilon * n_parent)
    p = model.p
    _check_budget(n_parent, model.T, p)

    def one_trial(i: int) -> float:
        rng = _trial_rng(seed, i)
        graph = _sample_with_rng(rng, n_parent, model.T, p, seed)
        unknown = np.zeros(n_parent, dtype=np.uint8)
        erased_ids = rng.permutation(n_parent)[:n_erased]
        unknown[erased_ids] = 1
        _, n_peeled = _peel_masked(graph, unknown)
        return float(n_erased - n_peeled) / n_parent

    return _stats(_run_trials(one_trial, trials, threads))


def dump_graph(graph: BipartiteGraph) -> str:
    """Plain-text adjacency listing; one line per text."""
    lines = [
        f"R={graph.n_concepts} T={graph.n_texts} "
        f"p={graph.p:.17g} seed={graph.seed}"
    ]
    for t in range(graph.n_texts):
        neigh = " ".join(str(r) for r in graph.text_neighbors(t))
        lines.append(f"t {t}: {neigh}".rstrip())
    return "\n".join(lines) + "\n"

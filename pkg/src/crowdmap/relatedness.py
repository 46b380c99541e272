"""Pairwise relatedness between observations, derived from their labels.

Three providers produce the raw label-to-label score:

* ``exact-id``  -- 1 when labels are byte-equal, else 0.
* ``lexical``   -- offline hashed character-trigram embedding + Gaussian kernel.
* ``service``   -- vectors from an external embedding service + Gaussian kernel.

:func:`build_matrix` then applies the structural options (same-recording
exclusion, sparsification, duplicate-label removal).
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from crowdmap.errors import InputError, ProtocolError
from crowdmap.geometry import Observation
from crowdmap.services import post_json

LEXICAL_DIM = 512
PROVIDERS = ("exact-id", "lexical", "service")
DUPLICATE_SEPARATION = 3.0  # m


@dataclass(frozen=True)
class RelatednessOptions:
    exclude_same_recording: bool = True
    sparsify_below: float = 0.1
    drop_duplicate_labels: bool = False
    tau: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.sparsify_below < 1.0:
            raise InputError("sparsify_below must lie in [0, 1)")
        if not self.tau > 0:
            raise InputError("tau must be positive")


class RelatednessMatrix:
    """Symmetric n x n scores in [0, 1] with a zero diagonal."""

    def __init__(self, values: np.ndarray):
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InputError(f"relatedness must be square, got shape {values.shape}")
        if not np.array_equal(values, values.T):
            raise InputError("relatedness must be symmetric")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise InputError("relatedness entries must lie in [0, 1]")
        if np.any(np.diag(values) != 0.0):
            raise InputError("relatedness diagonal must be zero")
        values.setflags(write=False)
        self.values = values

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangle nonzero entries as ``(i, j, s)`` with ``i < j``."""
        i, j = np.nonzero(np.triu(self.values, k=1))
        return i, j, self.values[i, j]

    def __repr__(self) -> str:
        return f"RelatednessMatrix(n={self.n}, nnz={len(self.pairs()[0])})"


def exact_id_score(a: str, b: str) -> float:
    return 1.0 if a == b else 0.0


def _bucket(trigram: str) -> int:
    digest = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % LEXICAL_DIM


def trigrams(label: str) -> list[str]:
    """Character trigrams of the case-folded label with ``^``/``$`` boundary markers."""
    padded = "^" + label.casefold() + "$"
    return [padded[k : k + 3] for k in range(len(padded) - 2)]


def lexical_embed(label: str) -> np.ndarray:
    if not label:
        raise InputError("label must be non-empty")
    vec = np.zeros(LEXICAL_DIM)
    for gram in trigrams(label):
        vec[_bucket(gram)] += 1.0
    return vec / np.linalg.norm(vec)


def score_from_vectors(u, v, tau: float) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise InputError(f"vector dimensions differ: {u.shape} vs {v.shape}")
    d2 = float(np.sum((u - v) ** 2))
    if math.isinf(tau):
        return 1.0
    return math.exp(-d2 / (2.0 * tau * tau))


class EmbeddingClient:
    """Batched, caching client for the embedding service.

    The cache is keyed by label text, so repeated labels always map to the
    identical vector; a lock makes the client safe to share between threads.
    """

    def __init__(self, endpoint: str, timeout: float | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, labels: Sequence[str]) -> list[np.ndarray]:
        if len(labels) == 0:
            raise InputError("labels must be non-empty")
        with self._lock:
            missing = list(dict.fromkeys(lb for lb in labels if lb not in self._cache))
        if missing:
            fetched = self._fetch(missing)
            with self._lock:
                self._cache.update(zip(missing, fetched))
                dims = {v.shape[0] for v in self._cache.values()}
            if len(dims) > 1:
                raise ProtocolError(f"embedding dimensions differ across batches: {sorted(dims)}")
        with self._lock:
            return [self._cache[lb] for lb in labels]

    def _fetch(self, texts: list[str]) -> list[np.ndarray]:
        response = post_json(self.endpoint, {"texts": texts}, self.timeout)
        vectors = response.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProtocolError("embedding response must hold one vector per text")
        try:
            arrays = [np.asarray(v, dtype=float) for v in vectors]
        except (TypeError, ValueError) as exc:
            raise ProtocolError("embedding vectors must be numeric") from exc
        if any(a.ndim != 1 or a.size == 0 for a in arrays):
            raise ProtocolError("embedding vectors must be non-empty flat lists")
        if len({a.shape[0] for a in arrays}) != 1:
            raise ProtocolError("embedding dimension mismatch within batch")
        out = []
        for a in arrays:
            norm = np.linalg.norm(a)
            if not np.isfinite(norm) or norm == 0.0:
                raise ProtocolError("embedding vector has zero or non-finite norm")
            out.append(a / norm)
        return out


def embed_via_service(
    labels: Sequence[str],
    endpoint: str,
    timeout: float | None = None,
    client: EmbeddingClient | None = None,
) -> list[np.ndarray]:
    if client is None:
        client = EmbeddingClient(endpoint, timeout)
    return client.embed(labels)


def find_duplicate_labels(
    observations: Sequence[Observation], min_separation: float = DUPLICATE_SEPARATION
) -> set[str]:
    """Labels seen at two places more than ``min_separation`` apart within one recording."""
    by_key: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for o in observations:
        by_key.setdefault((o.recording_id, o.label), []).append((o.position.x, o.position.y))
    flagged = set()
    for (_, label), pts in by_key.items():
        if len(pts) < 2 or label in flagged:
            continue
        arr = np.array(pts)
        if cdist(arr, arr).max() > min_separation:
            flagged.add(label)
    return flagged


def _kernel_scores(vectors: np.ndarray, tau: float) -> np.ndarray:
    return np.exp(-cdist(vectors, vectors, "sqeuclidean") / (2.0 * tau * tau))


def label_scores(
    labels: Sequence[str],
    provider: str,
    tau: float,
    endpoint: str | None = None,
    client: EmbeddingClient | None = None,
) -> np.ndarray:
    """Score matrix between the distinct ``labels`` (in the given order)."""
    if provider == "exact-id":
        return np.eye(len(labels))
    if provider == "lexical":
        vectors = np.array([lexical_embed(lb) for lb in labels])
    elif provider == "service":
        if client is None:
            if not endpoint:
                raise InputError("the service provider needs an embedding endpoint")
            client = EmbeddingClient(endpoint)
        vectors = np.array(client.embed(list(labels)))
    else:
        raise InputError(f"unknown relatedness provider {provider!r}; choose from {PROVIDERS}")
    return _kernel_scores(vectors, tau)


def build_matrix(
    observations: Sequence[Observation],
    provider: str = "exact-id",
    options: RelatednessOptions = RelatednessOptions(),
    *,
    flagged_labels: Iterable[str] = (),
    endpoint: str | None = None,
    client: EmbeddingClient | None = None,
) -> RelatednessMatrix:
    """Relatedness over all observations.

    ``flagged_labels`` lists labels the caller already knows to be duplicated
    (e.g. from a simulated environment). They are only used when
    ``options.drop_duplicate_labels`` is set, together with any label
    detected by :func:`find_duplicate_labels`.
    """
    if len(observations) == 0:
        raise InputError("observations must be non-empty")
    labels = [o.label for o in observations]
    distinct = list(dict.fromkeys(labels))
    slot = {lb: k for k, lb in enumerate(distinct)}
    idx = np.array([slot[lb] for lb in labels])
    scores = label_scores(distinct, provider, options.tau, endpoint, client)
    S = np.clip(scores[np.ix_(idx, idx)], 0.0, 1.0)

    np.fill_diagonal(S, 0.0)
    if options.exclude_same_recording:
        rec = np.array([o.recording_id for o in observations], dtype=object)
        S[rec[:, None] == rec[None, :]] = 0.0
    S[S < options.sparsify_below] = 0.0
    if options.drop_duplicate_labels:
        dup = set(flagged_labels) | find_duplicate_labels(observations)
        mask = np.array([lb in dup for lb in labels])
        S[mask, :] = 0.0
        S[:, mask] = 0.0
    # kernel rounding can leave S[i, j] and S[j, i] one ulp apart
    S = np.maximum(S, S.T)
    return RelatednessMatrix(S)

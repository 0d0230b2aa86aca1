"""Corpus ingestion, preprocessing and averaged word-vector sentence embeddings.

The embedding cache is a small binary format so that features computed once
can be reused, bit for bit, by every later stage::

    b"EMB1" | u32 n | u32 d | u8 scaled | f32[n*d] features | u32[n] labels
           | (if scaled) f32[d] minima, f32[d] maxima

All integers and floats are little-endian.
"""

import csv
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_float_matrix, as_label_vector

CACHE_MAGIC = b"EMB1"
_CACHE_HEADER = struct.Struct("<4sIIB")
STOPWORDS_FILE = "english_stopwords_v1.txt"
MIN_TOKEN_LENGTH = 3


class DataFormatError(ValueError):
    """Raised for malformed word-vector, corpus or cache files."""


@dataclass(frozen=True)
class WordVectorTable:
    vocab: dict
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[1] == 0:
            raise ValueError("vectors must be a non-empty 2-D matrix")
        if len(self.vocab) != self.vectors.shape[0]:
            raise ValueError("vocab size does not match the number of vectors")

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, token):
        return token in self.vocab

    def __getitem__(self, token):
        return self.vectors[self.vocab[token]]


@dataclass(frozen=True)
class LabeledCorpus:
    documents: list
    labels: list
    class_names: list

    def __post_init__(self):
        if len(self.documents) != len(self.labels):
            raise ValueError(
                f"{len(self.documents)} documents but {len(self.labels)} labels"
            )
        k = len(self.class_names)
        for i, label in enumerate(self.labels):
            if not 0 <= label < k:
                raise ValueError(f"label {label} of document {i} outside [0, {k})")

    def __len__(self):
        return len(self.documents)

    def subset(self, n, seed):
        """Pseudorandom subset of ``n`` documents, kept in corpus order."""
        if n >= len(self):
            return self
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(self), size=n, replace=False))
        return LabeledCorpus(
            [self.documents[i] for i in idx],
            [self.labels[i] for i in idx],
            list(self.class_names),
        )


@dataclass(frozen=True)
class EmbeddedDataset:
    """Feature matrix plus integer labels.

    ``scaler`` holds the ``(minima, maxima)`` pair when the features were
    min-max scaled. ``flagged`` marks documents that had no in-vocabulary
    token; it is informational and is not persisted in the cache file.
    """

    features: np.ndarray
    labels: np.ndarray
    scaler: tuple = None
    flagged: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if self.scaler is not None and self.features.size:
            if self.features.min() < 0 or self.features.max() > 1:
                raise ValueError("scaled features must lie in [0, 1]")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def scaled(self):
        return self.scaler is not None


def load_word_vectors(path):
    """Parse a GloVe-style text file: a token then ``d`` floats per line.

    Duplicate tokens keep their first vector.
    """
    vocab = {}
    rows = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            token, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise DataFormatError(f"line {lineno}: token without a vector")
                dim = len(values)
            elif len(values) != dim:
                raise DataFormatError(
                    f"line {lineno}: expected {dim} values, found {len(values)}"
                )
            try:
                vec = np.array(values, dtype=np.float64)
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: {exc}") from None
            if token in vocab:
                continue
            vocab[token] = len(rows)
            rows.append(vec)
    if not rows:
        raise DataFormatError(f"{path}: no word vectors found")
    return WordVectorTable(vocab, np.vstack(rows))


def load_stopwords(path=None):
    """Stop-word set, normalized the same way as document tokens."""
    if path is None:
        text = resources.files("snnl_text.resources").joinpath(STOPWORDS_FILE).read_text()
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = set()
    for line in text.splitlines():
        word = _strip_non_alnum(line.strip().lower())
        if word:
            words.add(word)
    return frozenset(words)


_DEFAULT_STOPWORDS = None


def default_stopwords():
    global _DEFAULT_STOPWORDS
    if _DEFAULT_STOPWORDS is None:
        _DEFAULT_STOPWORDS = load_stopwords()
    return _DEFAULT_STOPWORDS


def _strip_non_alnum(text):
    return "".join(ch for ch in text if ch.isalnum() or ch.isspace())


def preprocess(text, stopwords=None):
    """Lowercase, drop non-alphanumerics, short tokens and stop words."""
    if stopwords is None:
        stopwords = default_stopwords()
    tokens = _strip_non_alnum(text.lower()).split()
    return [
        tok for tok in tokens if len(tok) >= MIN_TOKEN_LENGTH and tok not in stopwords
    ]


def embed_document(tokens, table):
    """Mean vector of the in-vocabulary tokens.

    Returns ``(vector, flagged)``; ``flagged`` is True when no token was found
    and the zero vector was returned instead.
    """
    idx = [table.vocab[t] for t in tokens if t in table.vocab]
    if not idx:
        return np.zeros(table.dim), True
    # sorted index order keeps the sum independent of token order
    idx.sort()
    return table.vectors[idx].mean(axis=0), False


def embed_corpus(documents, table, stopwords=None):
    features = np.zeros((len(documents), table.dim), dtype=np.float64)
    flagged = np.zeros(len(documents), dtype=bool)
    for i, doc in enumerate(documents):
        features[i], flagged[i] = embed_document(preprocess(doc, stopwords), table)
    return features, flagged


def build_embedding_cache(corpus, table, path=None, stopwords=None):
    features, flagged = embed_corpus(corpus.documents, table, stopwords)
    dataset = EmbeddedDataset(
        features.astype(np.float32),
        np.asarray(corpus.labels, dtype=np.int64),
        flagged=flagged,
    )
    if path is not None:
        write_embedding_cache(path, dataset)
    return dataset


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Per-feature map onto [0, 1] using training minima and maxima.

    Constant columns map to 0.5. Data transformed after fitting is clamped
    into [0, 1].
    """

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = as_float_matrix(X, allow_empty=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"scaler was fitted on {self.n_features_in_} features, got {X.shape[1]}"
            )
        span = self.data_max_ - self.data_min_
        constant = span <= 0
        out = (X - self.data_min_) / np.where(constant, 1.0, span)
        out[:, constant] = 0.5
        return np.clip(out, 0.0, 1.0)

    def inverse_transform(self, X):
        check_is_fitted(self, "data_min_")
        X = as_float_matrix(X, allow_empty=True)
        return X * (self.data_max_ - self.data_min_) + self.data_min_

    @classmethod
    def from_bounds(cls, minima, maxima):
        scaler = cls()
        scaler.data_min_ = np.asarray(minima, dtype=np.float64)
        scaler.data_max_ = np.asarray(maxima, dtype=np.float64)
        scaler.n_features_in_ = scaler.data_min_.shape[0]
        return scaler


def minmax_scale(dataset, scaler=None):
    """Scale ``dataset`` to [0, 1].

    With ``scaler`` (a fitted :class:`MinMaxScaler` or a ``(minima, maxima)``
    pair) its statistics are reused, e.g. to scale a test split with the
    training split's bounds.
    """
    if scaler is None:
        scaler = MinMaxScaler().fit(dataset.features)
    elif isinstance(scaler, tuple):
        scaler = MinMaxScaler.from_bounds(*scaler)
    scaled = scaler.transform(dataset.features).astype(dataset.features.dtype)
    bounds = (
        scaler.data_min_.astype(dataset.features.dtype),
        scaler.data_max_.astype(dataset.features.dtype),
    )
    return EmbeddedDataset(scaled, dataset.labels, bounds, dataset.flagged)


def write_embedding_cache(path, dataset):
    n, d = dataset.features.shape
    labels = np.asarray(dataset.labels)
    if labels.size and labels.min() < 0:
        raise ValueError("cache labels must be non-negative")
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(CACHE_MAGIC, n, d, int(dataset.scaled)))
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())
        fh.write(labels.astype("<u4").tobytes())
        if dataset.scaled:
            lo, hi = dataset.scaler
            fh.write(np.asarray(lo, dtype="<f4").tobytes())
            fh.write(np.asarray(hi, dtype="<f4").tobytes())


def read_embedding_cache(path):
    raw = Path(path).read_bytes()
    if len(raw) < _CACHE_HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, n, d, scaled = _CACHE_HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    expected = _CACHE_HEADER.size + 4 * n * d + 4 * n + (8 * d if scaled else 0)
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = _CACHE_HEADER.size
    features = np.frombuffer(raw, "<f4", n * d, off).reshape(n, d).astype(np.float32)
    off += 4 * n * d
    labels = np.frombuffer(raw, "<u4", n, off).astype(np.int64)
    off += 4 * n
    scaler = None
    if scaled:
        lo = np.frombuffer(raw, "<f4", d, off).astype(np.float32)
        hi = np.frombuffer(raw, "<f4", d, off + 4 * d).astype(np.float32)
        scaler = (lo, hi)
    return EmbeddedDataset(features, labels, scaler)


def read_class_names(path):
    names = [line.strip() for line in Path(path).read_text().splitlines()]
    return [n for n in names if n]


def read_corpus_csv(path, class_names=None):
    """Read a ``label,text`` CSV.

    Labels may be integer class indices or, when ``class_names`` is given,
    class names resolved against it.
    """
    documents, labels = [], []
    lookup = {name: i for i, name in enumerate(class_names or [])}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["label", "text"]:
            raise DataFormatError(f"{path}: expected header 'label,text'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataFormatError(f"{path}: line {lineno}: expected 2 fields")
            raw_label, text = row
            raw_label = raw_label.strip()
            if raw_label in lookup:
                label = lookup[raw_label]
            else:
                try:
                    label = int(raw_label)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: line {lineno}: unknown label {raw_label!r}"
                    ) from None
            documents.append(text)
            labels.append(label)
    if class_names is None:
        k = max(labels) + 1 if labels else 0
        class_names = [str(i) for i in range(k)]
    try:
        return LabeledCorpus(documents, labels, list(class_names))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def read_agnews_csv(path):
    """Read the distributed AG News CSV (``class,title,description``, classes 1-4)."""
    documents, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 3:
                raise DataFormatError(f"{path}: line {lineno}: expected 3 fields")
            documents.append(f"{row[1]} {row[2]}".replace("\\", " "))
            labels.append(int(row[0]) - 1)
    return LabeledCorpus(documents, labels, ["World", "Sports", "Business", "Sci/Tech"])


class SentenceEmbedder(TransformerMixin, BaseEstimator):
    """Map raw documents to averaged word vectors."""

    def __init__(self, table=None, stopwords=None):
        self.table = table
        self.stopwords = stopwords

    def fit(self, X=None, y=None):
        if self.table is None:
            raise ValueError("SentenceEmbedder needs a WordVectorTable")
        self.n_features_out_ = self.table.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        features, flagged = embed_corpus(list(X), self.table, self.stopwords)
        self.flagged_ = flagged
        return features


def as_dataset(X, y=None):
    """Wrap arrays into an :class:`EmbeddedDataset` (labels default to zeros)."""
    X = as_float_matrix(X)
    y = np.zeros(X.shape[0], dtype=np.int64) if y is None else as_label_vector(y, X.shape[0])
    return EmbeddedDataset(X, y)

"""Rating data ingestion, level encoding, preprocessing, and splitting.

Ratings are stored as (user, item, level) triplets with dense integer ids
and a sorted vocabulary of the distinct raw rating values; the level of a
triplet is its raw value's index in that vocabulary. Splits produce row
subsets that share the parent's id spaces and vocabulary, so factor models
and transforms line up across train, validation, and test.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class SparseRatingDataset:
    users: np.ndarray  # dense user ids
    items: np.ndarray  # dense item ids
    levels: np.ndarray  # 0-based index into level_vocab
    timestamps: np.ndarray | None
    level_vocab: np.ndarray  # distinct raw rating values, ascending
    user_labels: np.ndarray  # original labels; position = dense id
    item_labels: np.ndarray

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=np.int64)
        self.items = np.asarray(self.items, dtype=np.int64)
        self.levels = np.asarray(self.levels, dtype=np.int64)
        self.level_vocab = np.asarray(self.level_vocab, dtype=float)
        if self.n_ratings == 0:
            raise DataError("dataset has no ratings")
        if self.level_vocab.size < 2:
            raise DataError("rating scale needs at least two distinct levels")
        if np.any(np.diff(self.level_vocab) <= 0):
            raise DataError("level vocabulary must be strictly ascending")
        if self.levels.min() < 0 or self.levels.max() >= self.level_vocab.size:
            raise DataError("level index out of vocabulary range")
        pairs = self.users * (self.items.max() + 1) + self.items
        if np.unique(pairs).size != pairs.size:
            raise DataError("duplicate (user, item) pairs")

    @property
    def n_ratings(self) -> int:
        return self.users.size

    @property
    def n_users(self) -> int:
        return self.user_labels.size

    @property
    def n_items(self) -> int:
        return self.item_labels.size

    @property
    def n_levels(self) -> int:
        return self.level_vocab.size

    @property
    def raw_values(self) -> np.ndarray:
        """Raw rating value per triplet."""
        return self.level_vocab[self.levels]

    def level_of_value(self, value: float) -> int:
        """0-based vocabulary index of a raw rating value."""
        idx = int(np.searchsorted(self.level_vocab, value))
        if idx >= self.n_levels or self.level_vocab[idx] != value:
            raise DataError(f"rating value {value!r} not in vocabulary")
        return idx

    def subset(self, index) -> "SparseRatingDataset":
        """Row subset sharing this dataset's id spaces and vocabulary."""
        index = np.asarray(index)
        return SparseRatingDataset(
            self.users[index],
            self.items[index],
            self.levels[index],
            None if self.timestamps is None else self.timestamps[index],
            self.level_vocab,
            self.user_labels,
            self.item_labels,
        )

    def compact(self) -> "SparseRatingDataset":
        """Renumber dense ids so every user and item has at least one row."""
        used_u, new_users = np.unique(self.users, return_inverse=True)
        used_i, new_items = np.unique(self.items, return_inverse=True)
        return SparseRatingDataset(
            new_users,
            new_items,
            self.levels,
            self.timestamps,
            self.level_vocab,
            self.user_labels[used_u],
            self.item_labels[used_i],
        )


@dataclass
class SplitSpec:
    strategy: str  # "chronological" or "uniform"
    seed: int = 0
    train_fraction: float = 0.8
    val_fraction: float = 0.1  # fraction of the train block held out

    def __post_init__(self):
        if self.strategy not in ("chronological", "uniform"):
            raise ValueError(f"unknown split strategy {self.strategy!r}")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")


_DELIMS = {"tsv": "\t", "csv": ","}


def load_triplets(
    path,
    fmt: str = "tsv",
    columns: tuple = ("user", "item", "rating", "timestamp"),
) -> SparseRatingDataset:
    """Parse a delimiter-separated ratings file.

    `columns` names the role of each input column; ``user``, ``item`` and
    ``rating`` are required, ``timestamp`` is optional. Duplicate
    (user, item) pairs keep the last occurrence with a warning. Parse
    failures report the offending line number.
    """
    try:
        delim = _DELIMS[fmt]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}; expected tsv or csv") from None
    roles = {name: pos for pos, name in enumerate(columns) if name != "-"}
    for required in ("user", "item", "rating"):
        if required not in roles:
            raise ValueError(f"column spec is missing {required!r}")
    has_ts = "timestamp" in roles

    raw_users, raw_items, ratings, stamps = [], [], [], []
    ts_col = roles.get("timestamp")
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(delim)
            try:
                raw_users.append(fields[roles["user"]].strip())
                raw_items.append(fields[roles["item"]].strip())
                ratings.append(float(fields[roles["rating"]]))
                if has_ts:
                    # A trailing timestamp column may be absent entirely.
                    if ts_col < len(fields):
                        stamps.append(float(fields[ts_col]))
                    else:
                        stamps.append(None)
            except (IndexError, ValueError) as exc:
                raise DataError(f"{path}: malformed row at line {lineno}: {exc}")
    if not raw_users:
        raise DataError(f"{path}: no ratings found")
    if has_ts:
        if all(s is None for s in stamps):
            stamps = []
        elif any(s is None for s in stamps):
            raise DataError(f"{path}: timestamps present on only some rows")

    def _encode(labels):
        try:
            arr = np.asarray([int(v) for v in labels], dtype=np.int64)
        except ValueError:
            arr = np.asarray(labels, dtype=object)
        uniq, dense = np.unique(arr, return_inverse=True)
        return uniq, dense

    user_labels, users = _encode(raw_users)
    item_labels, items = _encode(raw_items)
    values = np.asarray(ratings, dtype=float)

    pair_key = users.astype(np.int64) * (items.max() + 1) + items
    last_of_pair = {}
    for row, key in enumerate(pair_key):
        last_of_pair[key] = row
    if len(last_of_pair) < pair_key.size:
        warnings.warn(
            f"{pair_key.size - len(last_of_pair)} duplicate (user, item) "
            "pairs; keeping the last occurrence of each"
        )
        keep = np.sort(np.fromiter(last_of_pair.values(), dtype=np.int64))
        users, items, values = users[keep], items[keep], values[keep]
        if stamps:
            stamps = [stamps[k] for k in keep]

    vocab = np.unique(values)
    levels = np.searchsorted(vocab, values)
    if stamps:
        ts = np.asarray(stamps)
        timestamps = ts.astype(np.int64) if np.all(ts == np.round(ts)) else ts
    else:
        timestamps = None

    return SparseRatingDataset(
        users, items, levels, timestamps, vocab, user_labels, item_labels
    ).compact()


def write_triplets(dataset: SparseRatingDataset, path) -> None:
    """Write the canonical tab-separated triplet format."""
    values = dataset.raw_values
    with open(path, "w") as fh:
        for row in range(dataset.n_ratings):
            fields = [
                str(dataset.user_labels[dataset.users[row]]),
                str(dataset.item_labels[dataset.items[row]]),
                f"{values[row]:g}",
            ]
            if dataset.timestamps is not None:
                fields.append(f"{dataset.timestamps[row]:g}")
            fh.write("\t".join(fields) + "\n")


def align_to(
    reference: SparseRatingDataset, other: SparseRatingDataset
) -> SparseRatingDataset:
    """Re-express `other` in the id spaces and vocabulary of `reference`.

    Every user label, item label, and rating value of `other` must already
    occur in `reference`; unseen ones raise, since no model trained on the
    reference could score them.
    """
    user_map = {label: idx for idx, label in enumerate(reference.user_labels)}
    item_map = {label: idx for idx, label in enumerate(reference.item_labels)}
    try:
        users = np.asarray(
            [user_map[lbl] for lbl in other.user_labels[other.users]]
        )
        items = np.asarray(
            [item_map[lbl] for lbl in other.item_labels[other.items]]
        )
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} not present in reference data")
    levels = np.searchsorted(reference.level_vocab, other.raw_values)
    levels = np.clip(levels, 0, reference.n_levels - 1)
    if not np.allclose(reference.level_vocab[levels], other.raw_values):
        raise DataError("rating vocabulary mismatch with reference data")
    return SparseRatingDataset(
        users,
        items,
        levels,
        other.timestamps,
        reference.level_vocab,
        reference.user_labels,
        reference.item_labels,
    )


def concat_rows(
    a: SparseRatingDataset, b: SparseRatingDataset
) -> SparseRatingDataset:
    """Union of two row sets over identical id spaces and vocabulary."""
    if (
        not np.array_equal(a.user_labels, b.user_labels)
        or not np.array_equal(a.item_labels, b.item_labels)
        or not np.array_equal(a.level_vocab, b.level_vocab)
    ):
        raise DataError("datasets must share id spaces and vocabulary")
    if (a.timestamps is None) != (b.timestamps is None):
        timestamps = None
    elif a.timestamps is None:
        timestamps = None
    else:
        timestamps = np.concatenate([a.timestamps, b.timestamps])
    return SparseRatingDataset(
        np.concatenate([a.users, b.users]),
        np.concatenate([a.items, b.items]),
        np.concatenate([a.levels, b.levels]),
        timestamps,
        a.level_vocab,
        a.user_labels,
        a.item_labels,
    )


def _split_indices(dataset: SparseRatingDataset, spec: SplitSpec):
    """Row indices of the (train, validation, test) blocks, each sorted."""
    n = dataset.n_ratings
    if spec.strategy == "chronological":
        if dataset.timestamps is None:
            raise DataError("chronological split requires timestamps")
        order = np.argsort(dataset.timestamps, kind="stable")
    else:
        order = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(n * spec.train_fraction)
    n_val = int(n_train * spec.val_fraction)
    if n_train == 0 or n_train == n:
        raise DataError("split produced an empty train or test block")
    train_block = order[:n_train]
    return (
        np.sort(train_block[: n_train - n_val]),
        np.sort(train_block[n_train - n_val :]),
        np.sort(order[n_train:]),
    )


def split(dataset: SparseRatingDataset, spec: SplitSpec):
    """Partition rows into (train, validation, test) subsets.

    Chronological: sort by timestamp (ties keep input order), train on the
    earliest block, test on the rest, validation is the last slice of the
    train block. Uniform: a seeded shuffle plays the role of the ordering.
    The validation subset is None when its share rounds down to nothing.
    """
    train_idx, val_idx, test_idx = _split_indices(dataset, spec)
    return (
        dataset.subset(train_idx),
        dataset.subset(val_idx) if val_idx.size else None,
        dataset.subset(test_idx),
    )


def _constant_user_rows(dataset: SparseRatingDataset) -> np.ndarray:
    """Boolean mask of rows belonging to users with a single distinct level."""
    n_lv = dataset.n_levels
    seen = np.zeros((dataset.n_users, n_lv), dtype=bool)
    seen[dataset.users, dataset.levels] = True
    constant = seen.sum(axis=1) == 1
    return constant[dataset.users]


def preprocess(dataset: SparseRatingDataset, spec: SplitSpec) -> SparseRatingDataset:
    """Filter the dataset until its split is clean, then compact ids.

    Two filters run to a joint fixed point: users whose ratings are all one
    level are dropped, and test rows whose user or item never occurs in the
    train block (validation included) are dropped. Because removals shift
    the split boundary, the split is recomputed each round.
    """
    current = dataset
    while True:
        const_rows = _constant_user_rows(current)
        if const_rows.all():
            raise DataError("preprocessing removed every rating")
        if const_rows.any():
            current = current.subset(~const_rows)
            continue
        train_idx, val_idx, test_idx = _split_indices(current, spec)
        fit_users = np.zeros(current.n_users, dtype=bool)
        fit_items = np.zeros(current.n_items, dtype=bool)
        for idx in (train_idx, val_idx):
            fit_users[current.users[idx]] = True
            fit_items[current.items[idx]] = True
        cold = ~(
            fit_users[current.users[test_idx]]
            & fit_items[current.items[test_idx]]
        )
        if not cold.any():
            return current.compact()
        keep = np.ones(current.n_ratings, dtype=bool)
        keep[test_idx[cold]] = False
        if not keep.any():
            raise DataError("preprocessing removed every rating")
        current = current.subset(keep)

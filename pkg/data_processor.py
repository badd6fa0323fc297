"""
Dataset ingestion, min-max scaling, splitting and synthetic datasets
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split as sk_train_test_split
from sklearn.preprocessing import MinMaxScaler

from classifiers import AnalyticClassifier, LABELS
from config import Config

logger = logging.getLogger(__name__)


class DatasetParseError(ValueError):
    """Raised when a CSV file cannot be turned into a binary numeric dataset."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.row = row
        self.column = column


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled examples with feature metadata and the scaling applied to them."""

    feature_names: List[str]
    features: np.ndarray
    labels: np.ndarray
    scaler: Optional[MinMaxScaler] = None
    label_names: Tuple[str, str] = ('0', '1')
    provenance: str = ''

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if features.ndim != 2 or features.shape[0] != labels.size:
            raise ValueError(f"Features {features.shape} and labels {labels.shape} do not align")
        if features.shape[1] != len(self.feature_names):
            raise ValueError(f"{len(self.feature_names)} feature names for {features.shape[1]} features")
        if not np.isin(labels, LABELS).all():
            raise ValueError("Labels must be binary (0 or 1)")
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_scaled(self) -> bool:
        return self.scaler is not None

    @property
    def scaler_min(self) -> Optional[np.ndarray]:
        return None if self.scaler is None else self.scaler.data_min_

    @property
    def scaler_max(self) -> Optional[np.ndarray]:
        return None if self.scaler is None else self.scaler.data_max_

    def scale(self, raw: np.ndarray) -> np.ndarray:
        """Map raw-space points into this dataset's normalized space."""
        if self.scaler is None:
            return np.asarray(raw, dtype=float)
        return self.scaler.transform(np.atleast_2d(raw))

    def unscale(self, scaled: np.ndarray) -> np.ndarray:
        """Map normalized points back to raw feature space."""
        if self.scaler is None:
            return np.asarray(scaled, dtype=float)
        return self.scaler.inverse_transform(np.atleast_2d(scaled))

    def subset(self, indices: Sequence[int]) -> 'Dataset':
        indices = np.asarray(indices, dtype=int)
        return replace(self, features=self.features[indices], labels=self.labels[indices])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=self.feature_names)
        frame['label'] = self.labels
        return frame


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = Config.TEST_SIZE
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"Test fraction must lie in (0, 1), got {self.test_fraction}")


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Load a numeric CSV whose last column is the binary label."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset file not found: {path}")
    try:
        df = pd.read_csv(path, encoding='utf-8', dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetParseError(f"Dataset file is empty: {path}")

    if df.shape[1] < 2:
        raise DatasetParseError("Need at least one feature column and a label column", column=None)
    if len(df) < 2:
        raise DatasetParseError(f"Need at least 2 data rows, found {len(df)}")

    numeric = df.apply(lambda col: pd.to_numeric(col.str.strip(), errors='coerce'))
    bad = ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        # header is line 1, first data row is line 2
        raise DatasetParseError(f"Non-numeric or missing value '{df.iat[row, col]}'",
                                row=int(row) + 2, column=df.columns[col])

    label_column = df.columns[-1]
    labels = numeric[label_column].to_numpy()
    invalid = ~np.isin(labels, LABELS)
    if invalid.any():
        row = int(np.argmax(invalid))
        raise DatasetParseError(f"Label must be 0 or 1, got {df.iat[row, df.shape[1] - 1]}",
                                row=row + 2, column=label_column)

    dataset = Dataset(
        feature_names=[str(c) for c in df.columns[:-1]],
        features=numeric.iloc[:, :-1].to_numpy(dtype=float),
        labels=labels.astype(int),
        provenance=str(path),
    )
    logger.info(f"Loaded {len(dataset)} rows with {dataset.n_features} features from {path}")
    return dataset


def minmax_scale(dataset: Dataset, reference: Optional[Dataset] = None) -> Dataset:
    """Scale features to [0, 1] with parameters fitted on ``reference`` (default: the dataset itself).

    Constant features map to 0.0. Values outside the reference range are clipped.
    """
    fit_on = reference if reference is not None else dataset
    scaler = MinMaxScaler(clip=True)
    scaler.fit(fit_on.features)
    constant = np.flatnonzero(scaler.data_max_ == scaler.data_min_)
    for col in constant:
        logger.warning(f"Feature '{dataset.feature_names[col]}' is constant; mapped to 0.0")
    return replace(dataset, features=scaler.transform(dataset.features), scaler=scaler)


def scaler_from_bounds(data_min: Sequence[float], data_max: Sequence[float]) -> MinMaxScaler:
    """Rebuild a fitted scaler from stored per-feature bounds."""
    scaler = MinMaxScaler(clip=True)
    scaler.fit(np.vstack([np.asarray(data_min, dtype=float), np.asarray(data_max, dtype=float)]))
    return scaler


def train_test_split(dataset: Dataset, split: SplitSpec = SplitSpec()) -> Tuple[Dataset, Dataset]:
    """Deterministic shuffled split; the test side gets ceil(fraction * n) rows."""
    if len(dataset) < 2:
        raise ValueError("Need at least 2 examples to split")
    train_idx, test_idx = sk_train_test_split(
        np.arange(len(dataset)), test_size=split.test_fraction, random_state=split.seed, shuffle=True
    )
    logger.info(f"Split {len(dataset)} rows into {len(train_idx)} train / {len(test_idx)} test")
    return dataset.subset(train_idx), dataset.subset(test_idx)


def prepare_splits(raw: Dataset, split: SplitSpec = SplitSpec()) -> Tuple[Dataset, Dataset]:
    """Split, then scale both sides with parameters taken from the training side only."""
    train, test = train_test_split(raw, split)
    return minmax_scale(train), minmax_scale(test, reference=train)


# ─── Synthetic datasets ──────────────────────────────────────

SYNTHETIC_KINDS = ('ball', 'diamond', 'cube', 'two_gaussians')


def synthetic_classifier(kind: str) -> AnalyticClassifier:
    """Analytic classifier that labels the synthetic dataset of the given kind."""
    center = (0.5, 0.5)
    if kind == 'ball':
        return AnalyticClassifier('ball', center=center, radius=0.3)
    if kind == 'diamond':
        return AnalyticClassifier('diamond', center=center, radius=0.35)
    if kind == 'cube':
        return AnalyticClassifier('cube', center=center, radius=0.25)
    if kind == 'two_gaussians':
        return AnalyticClassifier('halfspace', normal=(1.0, 1.0), offset=1.0)
    raise ValueError(f"Unknown synthetic dataset kind: {kind}; choose from {SYNTHETIC_KINDS}")


def synthetic_dataset(kind: str, n: int, seed: int = 0) -> Dataset:
    """Samples in [0, 1]^2 labelled by the matching analytic classifier."""
    if n < 10:
        raise ValueError(f"Synthetic datasets need n >= 10, got {n}")
    classifier = synthetic_classifier(kind)
    rng = np.random.default_rng(seed)
    if kind == 'two_gaussians':
        half = n // 2
        means = np.vstack([np.tile([0.3, 0.3], (half, 1)), np.tile([0.7, 0.7], (n - half, 1))])
        points = np.clip(means + rng.normal(0.0, 0.1, size=(n, 2)), 0.0, 1.0)
    else:
        points = rng.uniform(0.0, 1.0, size=(n, 2))
    labels = classifier.predict(points)
    logger.info(f"Generated {kind} dataset: {n} rows, {int(labels.sum())} labelled 1")
    return Dataset(
        feature_names=['x1', 'x2'],
        features=points,
        labels=labels,
        provenance=f"synthetic:{kind}:n={n}:seed={seed}",
    )

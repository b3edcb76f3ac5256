# -*- coding: utf-8 -*-
"""
Gait classifiers and their leave-one-subject-out evaluation.

ESKNN is an ensemble of k-nearest-neighbour learners, each restricted to
a random subspace of the feature indices, combined by plurality vote.
The LSTM classifiers live in ``gaitforge.lstm``; ``loso_evaluate``
dispatches on the classifier configuration.

Test folds only ever hold real trials. For gender and age the held-out
unit is a subject; for identity it is one real source trial with all its
views, since a held-out subject's identity cannot be learned.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from joblib import Parallel, delayed
import numpy as np
import pandas as pd
from sklearn.base import clone
from sklearn.neighbors import KNeighborsClassifier

from gaitforge import configs
from gaitforge.features import trial_features
from gaitforge.misc import GaitForgeError, require
from gaitforge.trials import GaitTrial

logger = logging.getLogger(__name__)
logger.setLevel(configs.LOG_LEVEL)

TRAINING_CONDITIONS = {
    "real": ("real",),
    "sim": ("simulated",),
    "real_plus_sim": ("real", "simulated"),
}
CONDITION_ALIASES = {"real+sim": "real_plus_sim"}
ALL_VIEWS = "all"


class DimensionMismatch(GaitForgeError, ValueError):
    """Raised when feature dimensions disagree with the training data."""
    pass


class InsufficientSubjects(GaitForgeError):
    """Raised when fewer than two subjects hold real trials."""
    pass


class EmptyConfusion(GaitForgeError, ValueError):
    """Raised on a confusion matrix without any counts."""
    pass


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class DatasetItem:
    features: np.ndarray
    label: int
    subject_id: str
    provenance: str = "real"
    view_deg: Optional[float] = None
    group: str = ""
    trial_id: str = ""
    scale_factor: Optional[float] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled feature items; ``classes[label]`` names a class id."""
    items: Tuple[DatasetItem, ...]
    task: str
    classes: Tuple[str, ...]

    def __post_init__(self):
        require(len(self.classes) >= 2,
                f"a '{self.task}' dataset needs at least 2 classes")
        shapes = {item.features.shape for item in self.items}
        if len(shapes) > 1:
            raise DimensionMismatch(f"inconsistent feature shapes {shapes}")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def feature_shape(self) -> Tuple[int, ...]:
        return self.items[0].features.shape if self.items else ()

    def matrix(self) -> np.ndarray:
        """Features stacked as (n, ...)."""
        return np.stack([item.features for item in self.items])

    def labels(self) -> np.ndarray:
        return np.array([item.label for item in self.items], dtype=int)

    def subset(self, keep: Sequence[bool]) -> "Dataset":
        items = tuple(i for i, k in zip(self.items, keep) if k)
        return replace(self, items=items)

    def subjects(self, provenance: str = "real") -> List[str]:
        return sorted({item.subject_id for item in self.items
                       if item.provenance == provenance})


def holdout_group(trial: GaitTrial, task: str) -> str:
    if task == "identity":
        return trial.source_trial_id or trial.trial_id
    return trial.subject_id


def build_dataset(trials: Sequence[GaitTrial], task: str,
                  representation: str = "histogram", frames: int = 100,
                  bins: int = 20,
                  ranges: Optional[Sequence[Tuple[float, float]]] = None,
                  normalize: bool = True) -> Dataset:
    """
    Featurize trials for one task.

    Class ids follow the sorted class names, so the lowest id is the
    alphabetically first label.
    """
    names = tuple(sorted({trial.label(task) for trial in trials}))
    index = {name: i for i, name in enumerate(names)}
    items = tuple(
        DatasetItem(
            features=np.asarray(trial_features(trial, representation, frames,
                                               bins, ranges, normalize),
                                dtype=float),
            label=index[trial.label(task)],
            subject_id=trial.subject_id,
            provenance=trial.provenance,
            view_deg=trial.view_deg,
            group=holdout_group(trial, task),
            trial_id=trial.trial_id,
            scale_factor=trial.scale_factor)
        for trial in trials)
    logger.debug(f"Dataset '{task}': {len(items)} item(s), "
                 f"{len(names)} class(es), {representation} features")
    return Dataset(items=items, task=task, classes=names)


# --------------------------------------------------------------------------
# ESKNN
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ESKNNConfig:
    n_learners: int = 30
    k: int = 1
    subspace_dim: int = 0     # 0 selects ceil(D / 2)
    seed: int = 0

    def __post_init__(self):
        require(self.n_learners >= 1, "n_learners must be >= 1")
        require(self.k >= 1, "k must be >= 1")
        require(self.subspace_dim >= 0, "subspace_dim must be >= 0")

    @classmethod
    def from_settings(cls, values: Optional[Mapping[str, Any]] = None,
                      seed: int = 0):
        values = configs.DEFAULTS["esknn"] if values is None else values
        return cls(n_learners=int(values["n_learners"]), k=int(values["k"]),
                   subspace_dim=int(values["subspace_dim"]), seed=int(seed))

    def dimension(self, n_features: int) -> int:
        d = self.subspace_dim or math.ceil(n_features / 2)
        require(1 <= d <= n_features,
                f"subspace dimension {d} outside [1, {n_features}]")
        return d


class ESKNN:
    """Random-subspace ensemble of brute-force Euclidean kNN learners."""

    def __init__(self, config: ESKNNConfig = None):
        self.config = config or ESKNNConfig()
        self.base_estimator = KNeighborsClassifier(
            n_neighbors=self.config.k, algorithm="brute", metric="euclidean")
        self.subspaces: List[np.ndarray] = []
        self.learners: List[KNeighborsClassifier] = []
        self.n_features = None
        self.n_classes = None

    def fit(self, X, y, n_classes: Optional[int] = None) -> "ESKNN":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        require(X.ndim == 2 and X.shape[0] > 0,
                "training matrix must be a non-empty (n, D) array")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{X.shape[0]} rows vs {y.shape[0]} "
                                    f"labels")
        self.n_features = X.shape[1]
        self.n_classes = int(n_classes or y.max() + 1)
        d = self.config.dimension(self.n_features)
        rng = np.random.default_rng(self.config.seed)
        k = min(self.config.k, X.shape[0])

        self.subspaces, self.learners = [], []
        for _ in range(self.config.n_learners):
            subspace = np.sort(rng.choice(self.n_features, size=d,
                                          replace=False))
            learner = clone(self.base_estimator).set_params(n_neighbors=k)
            learner.fit(X[:, subspace], y)
            self.subspaces.append(subspace)
            self.learners.append(learner)
        return self

    def votes(self, X) -> np.ndarray:
        """Learner votes (n, E)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, "
                                    f"got {X.shape[1]}")
        return np.stack([learner.predict(X[:, subspace])
                         for learner, subspace in zip(self.learners,
                                                      self.subspaces)],
                        axis=1)

    def predict(self, X) -> np.ndarray:
        return plurality_vote(self.votes(X), self.n_classes)


def plurality_vote(votes, n_classes: int) -> np.ndarray:
    """Row-wise most frequent class; ties go to the lowest class id."""
    votes = np.atleast_2d(np.asarray(votes, dtype=int))
    counts = np.stack([np.bincount(row, minlength=n_classes)
                       for row in votes])
    return np.argmax(counts, axis=1)


def esknn_fit(train: Dataset, cfg: ESKNNConfig = None) -> ESKNN:
    require(len(train) > 0, "training set is empty")
    X = train.matrix().reshape(len(train), -1)
    return ESKNN(cfg).fit(X, train.labels(), n_classes=len(train.classes))


def esknn_predict(model: ESKNN, x) -> int:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return int(model.predict(x)[0])


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------
def weighted_accuracy(confusion, balanced: bool = False) -> float:
    """
    Support-weighted per-class recall, in percent.

    With ``balanced`` every class with support counts equally instead.

    Raises:
        EmptyConfusion: if the matrix holds no counts
    """
    confusion = np.asarray(confusion, dtype=float)
    require(confusion.ndim == 2 and
            confusion.shape[0] == confusion.shape[1],
            "confusion matrix must be square")
    require(np.all(confusion >= 0), "confusion counts must be non-negative")
    total = confusion.sum()
    if total <= 0:
        raise EmptyConfusion("confusion matrix has no counts")
    support = confusion.sum(axis=1)
    if not balanced:
        return float(100.0 * np.trace(confusion) / total)
    present = support > 0
    recall = np.diag(confusion)[present] / support[present]
    return float(100.0 * recall.mean())


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int],
                     n_classes: int) -> np.ndarray:
    confusion = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(confusion, (np.asarray(truth, dtype=int),
                          np.asarray(predicted, dtype=int)), 1)
    return confusion


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------
def view_key(view_deg: Optional[float]) -> str:
    return ALL_VIEWS if view_deg is None else f"{view_deg:g}"


def _view_order(key: str):
    return (key != ALL_VIEWS, float(key) if key != ALL_VIEWS else 0.0)


@dataclass
class ExperimentReport:
    """
    Accuracies per training condition (rows) and view (columns).

    ``confusions[condition][view]`` holds the aggregated fold counts the
    accuracies were computed from.
    """
    task: str
    classifier: str
    representation: str
    classes: Tuple[str, ...]
    balanced: bool = False
    rows: Dict[str, Dict[str, float]] = field(default_factory=dict)
    confusions: Dict[str, Dict[str, List[List[int]]]] = field(
        default_factory=dict)
    folds: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)

    def mean(self, condition: str) -> float:
        return float(np.mean(list(self.rows[condition].values())))

    def views(self) -> List[str]:
        keys = {key for row in self.rows.values() for key in row}
        return sorted(keys, key=_view_order)

    def merge(self, other: "ExperimentReport") -> "ExperimentReport":
        require(self.task == other.task,
                f"cannot merge '{self.task}' and '{other.task}' reports")
        classifier = self.classifier if self.classifier == other.classifier \
            else "mixed"
        return ExperimentReport(
            task=self.task, classifier=classifier,
            representation=self.representation, classes=self.classes,
            balanced=self.balanced,
            rows={**self.rows, **other.rows},
            confusions={**self.confusions, **other.confusions},
            folds={**self.folds, **other.folds})

    def relabel(self, prefix: str) -> "ExperimentReport":
        """Copy with every row name prefixed, e.g. ``lstm/real``."""
        def rename(mapping):
            return {f"{prefix}/{k}": v for k, v in mapping.items()}
        return replace(self, rows=rename(self.rows),
                       confusions=rename(self.confusions),
                       folds=rename(self.folds))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task": self.task,
            "classifier": self.classifier,
            "representation": self.representation,
            "classes": list(self.classes),
            "balanced": self.balanced,
            "rows": {condition: {**{v: row[v] for v in sorted(
                row, key=_view_order)}, "mean": self.mean(condition)}
                for condition, row in self.rows.items()},
            "confusions": self.confusions,
            "folds": self.folds,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentReport":
        return cls(
            task=data["task"], classifier=data["classifier"],
            representation=data["representation"],
            classes=tuple(data["classes"]),
            balanced=bool(data.get("balanced", False)),
            rows={condition: {k: float(v) for k, v in row.items()
                              if k != "mean"}
                  for condition, row in data["rows"].items()},
            confusions=dict(data.get("confusions", {})),
            folds=dict(data.get("folds", {})))

    def table(self) -> pd.DataFrame:
        views = self.views()
        frame = pd.DataFrame(
            [[self.rows[c].get(v, np.nan) for v in views] + [self.mean(c)]
             for c in self.rows],
            index=list(self.rows), columns=views + ["Mean"])
        frame.index.name = "train"
        return frame

    def format_table(self) -> str:
        """Plain-text table, one row per training condition."""
        metric = "balanced" if self.balanced else "weighted"
        title = (f"{self.task} / {self.classifier} / {self.representation}: "
                 f"{metric} accuracy (%)")
        body = self.table().to_string(float_format=lambda x: f"{x:.2f}",
                                      na_rep="-")
        return f"{title}\n{body}\n"


# --------------------------------------------------------------------------
# leave-one-subject-out
# --------------------------------------------------------------------------
def normalize_condition(condition: str) -> str:
    condition = CONDITION_ALIASES.get(condition, condition)
    require(condition in TRAINING_CONDITIONS,
            f"unknown training condition '{condition}'")
    return condition


def _fit_predict(train: Dataset, test: Dataset, classifier_cfg) -> np.ndarray:
    if isinstance(classifier_cfg, ESKNNConfig):
        model = esknn_fit(train, classifier_cfg)
        return model.predict(test.matrix().reshape(len(test), -1))
    # gaitforge.lstm imports this module
    from gaitforge.lstm import lstm_predict_batch, lstm_train
    model = lstm_train(train, classifier_cfg)
    return lstm_predict_batch(model, test.matrix())


def _run_fold(dataset: Dataset, group: str, provenances: Tuple[str, ...],
              classifier_cfg) -> Dict[str, Any]:
    held_out = [item.group == group for item in dataset.items]
    subjects = {item.subject_id for item, h in zip(dataset.items, held_out)
                if h}
    if dataset.task == "identity":
        keep_train = [not h and item.provenance in provenances
                      for item, h in zip(dataset.items, held_out)]
    else:
        keep_train = [item.subject_id not in subjects
                      and item.provenance in provenances
                      for item in dataset.items]
    keep_test = [h and item.provenance == "real"
                 for item, h in zip(dataset.items, held_out)]
    train, test = dataset.subset(keep_train), dataset.subset(keep_test)
    require(len(train) > 0, f"fold '{group}' has an empty training set")

    predicted = _fit_predict(train, test, classifier_cfg)
    return {
        "group": group,
        "train_trials": [item.trial_id for item in train.items],
        "test_trials": [item.trial_id for item in test.items],
        "truth": [int(item.label) for item in test.items],
        "predicted": [int(p) for p in predicted],
        "views": [view_key(item.view_deg) for item in test.items],
    }


def classifier_name(classifier_cfg) -> str:
    if isinstance(classifier_cfg, ESKNNConfig):
        return "esknn"
    return "bilstm" if getattr(classifier_cfg, "bidirectional", False) \
        else "lstm"


def loso_evaluate(dataset: Dataset,
                  classifier_cfg: Union[ESKNNConfig, Any],
                  training_condition: str = "real",
                  n_jobs: int = 1, balanced: bool = False,
                  representation: str = "",
                  row_name: Optional[str] = None) -> ExperimentReport:
    """
    Leave-one-subject-out evaluation of one classifier.

    Every fold trains on the other units' trials whose provenance matches
    ``training_condition`` and tests on the held-out unit's real trials.
    Fold counts are summed per view before any accuracy is computed.

    Raises:
        InsufficientSubjects: if fewer than 2 subjects hold real trials
    """
    condition = normalize_condition(training_condition)
    subjects = dataset.subjects("real")
    if len(subjects) < 2:
        raise InsufficientSubjects(f"{len(subjects)} subject(s) with real "
                                   f"trials, at least 2 required")
    groups = sorted({item.group for item in dataset.items
                     if item.provenance == "real"})
    provenances = TRAINING_CONDITIONS[condition]

    folds = Parallel(n_jobs=n_jobs)(
        delayed(_run_fold)(dataset, group, provenances, classifier_cfg)
        for group in groups)

    n_classes = len(dataset.classes)
    truth: Dict[str, List[int]] = {}
    predicted: Dict[str, List[int]] = {}
    for fold in folds:
        for t, p, view in zip(fold["truth"], fold["predicted"],
                              fold["views"]):
            truth.setdefault(view, []).append(t)
            predicted.setdefault(view, []).append(p)

    row_name = row_name or condition
    confusions, row = {}, {}
    for view in sorted(truth, key=_view_order):
        confusion = confusion_matrix(truth[view], predicted[view], n_classes)
        confusions[view] = confusion.tolist()
        row[view] = weighted_accuracy(confusion, balanced)

    report = ExperimentReport(
        task=dataset.task, classifier=classifier_name(classifier_cfg),
        representation=representation, classes=dataset.classes,
        balanced=balanced, rows={row_name: row},
        confusions={row_name: confusions}, folds={row_name: folds})
    logger.info(f"LOSO {dataset.task}/{report.classifier} trained on "
                f"'{row_name}': {len(groups)} fold(s), mean "
                f"{report.mean(row_name):.2f}%")
    return report

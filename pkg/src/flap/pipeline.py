"""Fair learning through data preprocessing.

Fit: process every training row with a fitted preprocessor, then train an
AML or FTU learner on the processed attributes. Predict: process the new
row the same way and score it; decisions are Bernoulli draws of the score.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .learners import (RIDGE, Design, LogisticModel, Predictor, fit_design, predict_aml,
                       predict_ftu, predictor_from_dict, predictor_to_dict)
from .preprocess import MARGINAL_MAPPING, Preprocessor, fit_preprocessor, normalize_kind

LEARNERS = ("AML", "FTU")


def method_tag(procedure: str, learner: str) -> str:
    """``FLAP-1(M)`` style tag: 1 = AML learner, 2 = FTU learner."""
    kind = normalize_kind(procedure)
    return f"FLAP-{1 if learner == 'AML' else 2}({'M' if kind == MARGINAL_MAPPING else 'O'})"


class FlapModel(Predictor):
    def __init__(self, prep: Preprocessor, learner: str, model: LogisticModel,
                 group_probs: np.ndarray):
        if learner not in LEARNERS:
            raise ValueError(f"learner must be one of {LEARNERS}")
        self.prep = prep
        self.learner = learner
        self.model = model
        self.group_probs = np.asarray(group_probs, dtype=float)
        self.method = method_tag(prep.kind, learner)

    def score_processed(self, a_processed) -> np.ndarray:
        if self.learner == "AML":
            return predict_aml(self.model, self.group_probs, a_processed)
        return predict_ftu(self.model, a_processed)

    def score(self, s, a) -> np.ndarray:
        return self.score_processed(self.prep.apply(s, a))

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.prep.save(directory / "preprocessor.json")
        (directory / "model.json").write_text(json.dumps(self.model.to_dict()), encoding="utf-8")
        manifest = {"format_version": 1, "method": self.method, "learner": self.learner,
                    "procedure": self.prep.kind, "group_probs": self.group_probs.tolist()}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "FlapModel":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        prep = Preprocessor.load(directory / "preprocessor.json")
        model = LogisticModel.from_dict(json.loads((directory / "model.json").read_text(encoding="utf-8")))
        return cls(prep, manifest["learner"], model, np.array(manifest["group_probs"]))


def flap_fit(train: Dataset, procedure: str = "M", learner: str = "AML",
             ridge: float = RIDGE, prep: Preprocessor | None = None) -> FlapModel:
    if learner not in LEARNERS:
        raise ValueError(f"learner must be one of {LEARNERS}")
    if prep is None:
        prep = fit_preprocessor(train, procedure)
    elif prep.kind != normalize_kind(procedure):
        raise ValueError(f"supplied preprocessor is {prep.kind}, asked for {procedure}")
    processed = prep.apply(train.s, train.a)
    if learner == "AML":
        model = fit_design(Design(train.k, train.d), train.s, processed, train.y, ridge)
    else:
        model = fit_design(Design(0, train.d), None, processed, train.y, ridge)
    return FlapModel(prep, learner, model, train.group_probs)


def flap_score(m: FlapModel, s, a) -> np.ndarray:
    return m.score(s, a)


@dataclass(frozen=True, eq=False)
class DecisionDraw:
    score: np.ndarray
    decision: np.ndarray
    stream: int | None = None


def bernoulli_decide(scores, rng: np.random.Generator, stream: int | None = None) -> DecisionDraw:
    scores = np.asarray(scores, dtype=float)
    u = rng.random(scores.shape)
    return DecisionDraw(scores, (u < scores).astype(np.int64), stream)


def flap_decide(m: Predictor, s, a, rng: np.random.Generator | int) -> DecisionDraw:
    """Bernoulli(score) decisions; ``rng`` may be a seed."""
    stream = None
    if not isinstance(rng, np.random.Generator):
        stream = int(rng)
        rng = np.random.default_rng(stream)
    return bernoulli_decide(m.score(s, a), rng, stream)


def save_predictor(pred: Predictor, directory) -> None:
    """Write any shipped predictor into ``directory`` (FLAP models as three files)."""
    directory = Path(directory)
    if isinstance(pred, FlapModel):
        pred.save(directory)
        return
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "predictor.json").write_text(json.dumps(predictor_to_dict(pred)), encoding="utf-8")


def load_predictor(directory) -> Predictor:
    directory = Path(directory)
    if (directory / "manifest.json").exists():
        return FlapModel.load(directory)
    path = directory / "predictor.json"
    if not path.exists():
        raise FileNotFoundError(f"no saved predictor in {directory}")
    return predictor_from_dict(json.loads(path.read_text(encoding="utf-8")))

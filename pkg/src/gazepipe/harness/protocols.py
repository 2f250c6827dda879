"""Evaluation protocols: leave-one-person-out, cross-dataset, resolution grid, eye fusion."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from ..dataset_io import SampleSet
from ..errors import EmptyArchive, NoPairedSamples, TooFewPersons
from ..imaging import resize_batch
from ..regressors import Estimator, EstimatorConfig, fit_estimator, mean_predictor
from .report import EvalReport, PredictionTable, build_report


def fold_config(config: EstimatorConfig, fold: int) -> EstimatorConfig:
    """Per-fold copy of ``config`` whose seed is offset by the fold index."""
    train = dataclasses.replace(config.train, seed=config.train.seed + fold)
    return dataclasses.replace(config, train=train)


def _fit_and_predict(train: SampleSet, test: SampleSet, config: EstimatorConfig, fold: int):
    est = fit_estimator(train, config)
    base = mean_predictor(train.g).predict(test.patches)
    return est, PredictionTable.from_samples(test, est.predict(test), base, fold)


def leave_one_person_out(samples: SampleSet, config: EstimatorConfig) -> EvalReport:
    """One fold per person (sorted by id): train on everyone else, test on them."""
    persons = samples.persons
    if len(persons) < 2:
        raise TooFewPersons(f"leave-one-person-out needs >= 2 persons, got {len(persons)}")
    parts = []
    for fold, p in enumerate(persons):
        held = samples.person == p
        _, table = _fit_and_predict(
            samples.subset(~held), samples.subset(held), fold_config(config, fold), fold
        )
        parts.append(table)
    return build_report(PredictionTable.concat(parts), "lopo", config.echo())


def cross_dataset_eval(
    train: SampleSet, test: SampleSet, config: EstimatorConfig
) -> tuple[EvalReport, Estimator]:
    """Train once on ``train``, evaluate on ``test``; returns the report and model."""
    if len(train) == 0 or len(test) == 0:
        raise EmptyArchive("cross-dataset evaluation needs non-empty train and test archives")
    est, table = _fit_and_predict(train, test, config, 0)
    return build_report(table, "cross", config.echo()), est


def evaluate_model(est: Estimator, test: SampleSet, baseline_g=None) -> EvalReport:
    """Report for an already fitted model. The baseline is the mean of
    ``baseline_g`` (training labels) when given, else of the test labels."""
    if len(test) == 0:
        raise EmptyArchive("empty test archive")
    ref = test.g if baseline_g is None else baseline_g
    base = mean_predictor(ref).predict(test.patches)
    return build_report(PredictionTable.from_samples(test, est.predict(test), base), "cross")


# ---------------------------------------------------------------------------
# resolution grid

DEFAULT_RESOLUTIONS = ((60, 36), (30, 18), (15, 9), (8, 5))


@dataclass
class ResolutionGrid:
    resolutions: list[tuple[int, int]]
    errors: np.ndarray  # [train index, test index], mean degrees


def at_resolution(samples: SampleSet, width: int, height: int) -> SampleSet:
    out = samples.subset(np.arange(len(samples)))
    out.patches = resize_batch(samples.patches, width, height)
    return out


def resolution_study(
    train: SampleSet, test: SampleSet, resolutions, config: EstimatorConfig
) -> ResolutionGrid:
    """Train one model per resolution and test it at every resolution.

    Test patches are first brought to the test resolution, then the model
    resizes them bicubically to its own training resolution.
    """
    resolutions = [tuple(int(v) for v in r) for r in resolutions]
    if not resolutions:
        raise ValueError("resolution list is empty")
    if len(train) == 0 or len(test) == 0:
        raise EmptyArchive("resolution study needs non-empty train and test archives")
    tests = [at_resolution(test, w, h) for w, h in resolutions]
    errors = np.zeros((len(resolutions), len(resolutions)))
    for i, (w, h) in enumerate(resolutions):
        est = fit_estimator(train, dataclasses.replace(config, width=w, height=h))
        for j, t in enumerate(tests):
            errors[i, j] = float(np.mean(geo.angular_error(est.predict(t), t.g)))
    return ResolutionGrid(resolutions, errors)


# ---------------------------------------------------------------------------
# two-eye fusion


@dataclass
class FusionReport:
    n_pairs: int
    per_eye_mean: float
    oracle_best_eye: float
    geometric_fusion: float


def fusion_eval(samples: SampleSet, pred: np.ndarray) -> FusionReport:
    """Compare per-eye errors, the better-eye oracle, and averaged-vector fusion.

    Pairs are the unflipped left and right samples of the same record. Each
    prediction is rotated back to camera space; the fused ray starts at the
    midpoint of the eye centres and its ground truth points from there to the
    gaze target.
    """
    pred = np.asarray(pred, float).reshape(len(samples), 2)
    by_record: dict[int, dict[str, int]] = {}
    for i in range(len(samples)):
        if not samples.flipped[i]:
            by_record.setdefault(int(samples.record[i]), {})[str(samples.eye[i])] = i
    pairs = [(d["left"], d["right"]) for _, d in sorted(by_record.items()) if len(d) == 2]
    if not pairs:
        raise NoPairedSamples("no record has both an unflipped left and right eye sample")
    li, ri = np.array(pairs).T
    err = np.atleast_1d(geo.angular_error(pred, samples.g))
    per_eye = 0.5 * (err[li] + err[ri])
    oracle = np.minimum(err[li], err[ri])
    d_cam = np.einsum("nji,nj->ni", samples.R, geo.angles_to_vector(pred))  # R^T v
    fused = []
    for l, r in zip(li, ri):
        origin, direction = geo.fuse_both_eyes(d_cam[l], d_cam[r], samples.e_r[l], samples.e_r[r])
        truth = samples.target[l] - origin
        fused.append(geo.angular_error(direction, truth / np.linalg.norm(truth)))
    return FusionReport(len(pairs), float(per_eye.mean()), float(oracle.mean()),
                        float(np.mean(fused)))  # fmt: skip

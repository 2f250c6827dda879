from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazepipe import geometry as geo
from gazepipe.errors import EmptyArchive, InsufficientBins, NoPairedSamples, TooFewPersons
from gazepipe.harness import (
    build_report, cross_dataset_eval, error_by_bin, fusion_eval, leave_one_person_out,
    quadratic_fit, resolution_study,
)  # fmt: skip
from gazepipe.harness.protocols import at_resolution, fold_config
from gazepipe.harness.report import read_predictions, write_predictions
from gazepipe.regressors import EstimatorConfig, fit_estimator

KNN1 = EstimatorConfig(kind="knn", k=1, clusters=None)


def test_lopo_folds_cover_each_person_once(small_samples):
    rep = leave_one_person_out(small_samples, EstimatorConfig(kind="knn"))
    t = rep.table
    assert sorted(t.ids) == sorted(small_samples.ids)
    persons = small_samples.persons
    assert len(set(t.fold.tolist())) == len(persons)
    for f in set(t.fold.tolist()):
        assert set(t.person[t.fold == f]) == {persons[f]}
    assert [p.person for p in rep.persons] == persons
    assert sum(p.n for p in rep.persons) == len(small_samples)


def test_lopo_is_deterministic(small_samples):
    cfg = EstimatorConfig(kind="knn", clusters=2)
    a = leave_one_person_out(small_samples, cfg)
    b = leave_one_person_out(small_samples, cfg)
    np.testing.assert_array_equal(a.table.pred, b.table.pred)
    assert a.overall_mean == b.overall_mean


def test_fold_seed_offset():
    cfg = EstimatorConfig()
    assert fold_config(cfg, 3).train.seed == cfg.train.seed + 3


def test_lopo_needs_two_persons(small_samples):
    one = small_samples.subset(small_samples.person == small_samples.persons[0])
    with pytest.raises(TooFewPersons):
        leave_one_person_out(one, KNN1)


def test_overall_is_count_weighted_mean_of_persons(small_samples):
    s = small_samples.subset(np.arange(len(small_samples)) % 3 != 0)
    rep = leave_one_person_out(s, EstimatorConfig(kind="linear"))
    w = np.array([p.n for p in rep.persons])
    m = np.array([p.mean for p in rep.persons])
    assert rep.overall_mean == pytest.approx(np.sum(w * m) / w.sum(), rel=1e-12)


def test_cross_on_training_set_with_1nn_is_exact(small_samples):
    rep, _ = cross_dataset_eval(small_samples, small_samples, KNN1)
    assert rep.overall_mean == 0.0
    assert rep.overall_mean <= leave_one_person_out(small_samples, KNN1).overall_mean


def test_cross_empty_archive(small_samples):
    empty = small_samples.subset(np.zeros(len(small_samples), bool))
    with pytest.raises(EmptyArchive):
        cross_dataset_eval(empty, small_samples, KNN1)


def test_mean_predictor_on_symmetric_gaze(small_samples):
    s = small_samples.subset(np.arange(40))
    a = np.radians(7.0)
    s.g = np.tile([[a, 0.0], [-a, 0.0]], (20, 1))
    rep, _ = cross_dataset_eval(s, s, EstimatorConfig(kind="mean"))
    assert rep.overall_mean == pytest.approx(7.0, abs=1e-9)
    assert rep.baseline_mean == pytest.approx(7.0, abs=1e-9)


def test_predictions_round_trip(small_samples, tmp_path):
    rep = leave_one_person_out(small_samples, EstimatorConfig(kind="mean"))
    write_predictions(tmp_path / "p.csv", rep.table)
    back = read_predictions(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.pred, rep.table.pred)
    assert build_report(back, "lopo").overall_mean == rep.overall_mean


# --- binned analysis ---------------------------------------------------------


def test_bins_exact_quadratic():
    x = np.linspace(-23.5, 23.5, 200)
    edges = np.arange(-24, 25, 4.0)
    centres = 0.5 * (edges[:-1] + edges[1:])
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(centres) - 1)
    err = 0.02 * centres[idx] ** 2 - 0.1 * centres[idx] + 3.0
    res = error_by_bin(x, err, edges)
    np.testing.assert_allclose(res.coeffs, [0.02, -0.1, 3.0], atol=1e-9)


def test_bins_constant_errors():
    res = error_by_bin(np.linspace(0, 1, 50), np.full(50, 4.0), 8)
    np.testing.assert_allclose(res.coeffs, [0, 0, 4.0], atol=1e-9)
    assert res.counts.sum() == 50


def _exact_normal_equations(x, y):
    """Solve (A^T A) c = A^T y for A = [x^2, x, 1] in exact rational arithmetic."""
    xs, ys = [Fraction(float(v)) for v in x], [Fraction(float(v)) for v in y]
    rows = [[v * v, v, Fraction(1)] for v in xs]
    ata = [[sum(r[i] * r[j] for r in rows) for j in range(3)] for i in range(3)]
    aty = [sum(r[i] * t for r, t in zip(rows, ys)) for i in range(3)]
    m = [ata[i] + [aty[i]] for i in range(3)]
    for c in range(3):
        piv = next(r for r in range(c, 3) if m[r][c] != 0)
        m[c], m[piv] = m[piv], m[c]
        for r in range(3):
            if r != c and m[r][c] != 0:
                f = m[r][c] / m[c][c]
                m[r] = [a - f * b for a, b in zip(m[r], m[c])]
    return np.array([float(m[i][3] / m[i][i]) for i in range(3)])


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 5.0))
@settings(max_examples=30, deadline=None)
def test_bins_noisy_quadratic_matches_normal_equations(seed, noise):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-24, 24, 300)
    errs = 0.01 * x**2 + 0.05 * x + 4.0 + rng.normal(0, noise, x.size)
    res = error_by_bin(x, errs, np.arange(-24, 25, 4.0))
    ok = res.counts > 0
    want = _exact_normal_equations(res.centres[ok], res.means[ok])
    np.testing.assert_allclose(res.coeffs, want, rtol=0, atol=1e-9)


def test_bins_too_few():
    with pytest.raises(InsufficientBins):
        error_by_bin([0.5, 0.6, 2.5], [1, 2, 3], [0, 1, 2, 3, 4])


def test_quadratic_fit_exact():
    x = np.array([-2.0, 0.0, 1.0, 3.0])
    np.testing.assert_allclose(quadratic_fit(x, 2 * x**2 + 1), [2, 0, 1], atol=1e-12)


# --- resolution grid ---------------------------------------------------------


def test_resolution_grid(small_samples):
    res = [(60, 36), (15, 9), (8, 5)]
    cfg = EstimatorConfig(kind="linear", ridge=10.0)
    grid = resolution_study(small_samples, small_samples, res, cfg)
    assert grid.errors.shape == (3, 3)
    assert np.all(np.isfinite(grid.errors))
    for i, (w, h) in enumerate(res):
        cfg_i = EstimatorConfig(kind="linear", ridge=10.0, width=w, height=h)
        est = fit_estimator(small_samples, cfg_i)
        t = at_resolution(small_samples, w, h)
        single = float(np.mean(geo.angular_error(est.predict(t), t.g)))
        assert grid.errors[i, i] == pytest.approx(single, rel=1e-12)


def test_resolution_grid_trend_reported(small_samples, capsys):
    res = [(60, 36), (30, 18), (15, 9), (8, 5)]
    grid = resolution_study(small_samples, small_samples, res, EstimatorConfig(kind="knn", clusters=None))
    wins = [grid.errors[j, j] <= grid.errors[i, j] for i in range(4) for j in range(4) if j > i]
    with capsys.disabled():
        print(f"\nmatched <= mismatched (test below train) in {sum(wins)}/{len(wins)} cells")
    assert np.all(np.isfinite(grid.errors))


def test_resolution_grid_rejects_empty(small_samples):
    with pytest.raises(ValueError):
        resolution_study(small_samples, small_samples, [], KNN1)


# --- fusion ------------------------------------------------------------------


def test_fusion_identical_predictions(small_samples):
    s = small_samples
    pred = s.g.copy()  # perfect per-eye predictions
    fr = fusion_eval(s, pred)
    assert fr.n_pairs == len(s) // 2
    assert fr.per_eye_mean == pytest.approx(0.0, abs=1e-9)
    assert fr.oracle_best_eye == pytest.approx(0.0, abs=1e-9)
    # oracle: bisector of the true per-eye rays vs the midpoint ray
    want = []
    for i in range(0, len(s)):
        if s.eye[i] != "left" or s.flipped[i]:
            continue
        j = next(k for k in range(len(s)) if s.record[k] == s.record[i] and s.eye[k] == "right"
                 and not s.flipped[k])  # fmt: skip
        u = sum((s.target[k] - s.e_r[k]) / np.linalg.norm(s.target[k] - s.e_r[k]) for k in (i, j))
        m = s.target[i] - 0.5 * (s.e_r[i] + s.e_r[j])
        want.append(np.degrees(np.arccos(np.clip(u @ m / np.linalg.norm(u) / np.linalg.norm(m), -1, 1))))
    assert fr.geometric_fusion == pytest.approx(np.mean(want), abs=1e-5)
    assert fr.geometric_fusion < 0.2


def test_fusion_identical_eyes_give_equal_numbers(small_samples, rng):
    s = small_samples.subset(~small_samples.flipped)
    s = s.subset(np.arange(len(s)))
    for rec in set(s.record.tolist()):
        l, r = (np.flatnonzero((s.record == rec) & (s.eye == e))[0] for e in ("left", "right"))
        for name in ("g", "e_r", "R", "target"):
            getattr(s, name)[r] = getattr(s, name)[l]
    pred = s.g + rng.normal(0, 0.03, s.g.shape)
    for rec in set(s.record.tolist()):
        l, r = (np.flatnonzero((s.record == rec) & (s.eye == e))[0] for e in ("left", "right"))
        pred[r] = pred[l]
    fr = fusion_eval(s, pred)
    assert fr.per_eye_mean == pytest.approx(fr.oracle_best_eye, abs=1e-12)
    assert fr.geometric_fusion == pytest.approx(fr.per_eye_mean, abs=1e-9)


def test_fusion_oracle_not_worse(small_samples, rng):
    pred = small_samples.g + rng.normal(0, 0.05, small_samples.g.shape)
    fr = fusion_eval(small_samples, pred)
    assert fr.oracle_best_eye <= fr.per_eye_mean


def test_fusion_needs_pairs(small_samples):
    left = small_samples.subset(small_samples.eye == "left")
    with pytest.raises(NoPairedSamples):
        fusion_eval(left, left.g)


# --- domain shift ------------------------------------------------------------


def test_cnn_cross_domain_exceeds_within_domain():
    from gazepipe.dataset_io import build_normalized_dataset
    from gazepipe.regressors import TrainConfig
    from gazepipe.synth import generate_persons

    def samples(seed, yaw):
        ds = generate_persons(n_persons=2, samples_each=100, seed=seed, gaze_yaw=yaw)
        return build_normalized_dataset(ds.records, ds.calibration, ds.spec, geo.GENERIC_FACE_MODEL,
                                        ds.load_image).samples  # fmt: skip

    left, left_test, right_test = samples(5, (-18.0, -6.0)), samples(6, (-18.0, -6.0)), samples(6, (6.0, 18.0))
    cfg = EstimatorConfig(kind="cnn", train=TrainConfig(batch_size=8, learning_rate=1e-3, iterations=400))
    within = cross_dataset_eval(left, left_test, cfg)[0].overall_mean
    across = cross_dataset_eval(left, right_test, cfg)[0].overall_mean
    assert across > within


def test_predictions_align_by_id(small_samples):
    rep = leave_one_person_out(small_samples, EstimatorConfig(kind="linear"))
    rev = small_samples.subset(np.arange(len(small_samples))[::-1])
    pred = rep.table.predictions_for(rev.ids)
    np.testing.assert_array_equal(pred, rep.table.predictions_for(small_samples.ids)[::-1])

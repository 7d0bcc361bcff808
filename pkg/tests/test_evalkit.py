"""Error-metric and report-formatting tests."""

import numpy as np
import pytest

from scenemotion.errors import EvaluationError
from scenemotion.evalkit import (ErrorReport, SequencePrediction,
                                 SequenceTruth, best_of_k,
                                 destination_error, error_curves,
                                 evaluate_deterministic, format_report,
                                 mpjpe, parse_error_curves,
                                 report_timesteps)
from scenemotion.geometry import PoseSequence3D


def _seq(values):
    return PoseSequence3D(values=np.asarray(values, dtype=np.float64),
                          frame_rate=10.0)


def _random_pair(rng, frames=6, joints=5):
    gt = rng.normal(size=(frames, joints, 3))
    gt[..., 2] += 5.0
    pred = gt + rng.normal(scale=0.05, size=gt.shape)
    return _seq(pred), _seq(gt)


class TestMpjpe:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(0)
        pred, _ = _random_pair(rng)
        assert mpjpe(pred, pred, 2) == 0.0

    def test_three_four_five(self):
        gt = np.zeros((2, 4, 3))
        gt[..., 2] = 3.0
        pred = gt + np.array([0.003, 0.004, 0.0])
        assert mpjpe(_seq(pred), _seq(gt), 1) == pytest.approx(5.0)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(7)
        pred, gt = _random_pair(rng, frames=9, joints=21)
        for frame in (0, 4, 8):
            total = 0.0
            for j in range(21):
                d = 0.0
                for axis in range(3):
                    d += (pred.values[frame, j, axis]
                          - gt.values[frame, j, axis]) ** 2
                total += d ** 0.5
            naive = total / 21 * 1000.0
            assert abs(mpjpe(pred, gt, frame) - naive) < 1e-9

    def test_frame_index_out_of_range(self):
        rng = np.random.default_rng(1)
        pred, gt = _random_pair(rng, frames=4)
        with pytest.raises(EvaluationError, match="frame_index"):
            mpjpe(pred, gt, 4)
        with pytest.raises(EvaluationError, match="frame_index"):
            mpjpe(pred, gt, -1)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(2)
        pred, _ = _random_pair(rng, joints=5)
        _, gt = _random_pair(rng, joints=6)
        with pytest.raises(EvaluationError, match="shape"):
            mpjpe(pred, gt, 0)

    def test_translation_invariance_and_symmetry(self):
        rng = np.random.default_rng(3)
        pred, gt = _random_pair(rng)
        shift = np.array([1.5, -2.0, 0.7])
        moved_pred = _seq(pred.values + shift)
        moved_gt = _seq(gt.values + shift)
        for frame in range(pred.frames):
            base = mpjpe(pred, gt, frame)
            assert mpjpe(moved_pred, moved_gt, frame) == pytest.approx(base)
            assert mpjpe(gt, pred, frame) == pytest.approx(base)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(4)
        a, b = _random_pair(rng)
        c = _seq(b.values + rng.normal(scale=0.1, size=b.values.shape))
        for frame in range(a.frames):
            assert mpjpe(a, c, frame) <= (mpjpe(a, b, frame)
                                          + mpjpe(b, c, frame) + 1e-12)


def _truth(rng, t=20, joints=5):
    poses = rng.normal(size=(t, joints, 3))
    return SequenceTruth(path3d=poses[:, 0].copy(), poses3d=poses)


def _offset_pred(truth, pose_offset_m):
    return SequencePrediction(path3d=truth.path3d + pose_offset_m,
                              poses3d=truth.poses3d + pose_offset_m)


class TestReports:
    def test_timestep_columns(self):
        assert report_timesteps(20, 10.0) == (0.5, 1.0, 1.5, 2.0)
        assert report_timesteps(30, 10.0) == (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

    def test_uniform_offset_report(self):
        rng = np.random.default_rng(5)
        truths = [_truth(rng) for _ in range(3)]
        preds = [_offset_pred(t, np.array([0.003, 0.004, 0.0]))
                 for t in truths]
        report = evaluate_deterministic(preds, truths)
        assert report.mode == "deterministic"
        assert report.samples_used == 1
        assert report.timesteps == (0.5, 1.0, 1.5, 2.0)
        for s in report.timesteps:
            assert report.path_mm[s] == pytest.approx(5.0)
            assert report.pose_mm[s] == pytest.approx(5.0)
        assert report.pose_all_mm == pytest.approx(5.0)

    def test_all_mean_covers_every_frame_not_just_steps(self):
        rng = np.random.default_rng(6)
        truth = _truth(rng)
        poses = truth.poses3d.copy()
        poses[2] += 0.010  # frame 2 is not a half-second column
        pred = SequencePrediction(path3d=poses[:, 0].copy(), poses3d=poses)
        report = evaluate_deterministic([pred], [truth])
        for s in report.timesteps:
            assert report.pose_mm[s] == pytest.approx(0.0)
        assert report.pose_all_mm > 0.0

    def test_half_second_column_reads_fifth_future_frame(self):
        rng = np.random.default_rng(7)
        truth = _truth(rng)
        poses = truth.poses3d.copy()
        poses[4, :, 0] += 0.010  # 0-based index 4 = fifth future frame
        pred = SequencePrediction(path3d=poses[:, 0].copy(), poses3d=poses)
        report = evaluate_deterministic([pred], [truth])
        assert report.pose_mm[0.5] == pytest.approx(10.0)
        assert report.pose_mm[1.0] == pytest.approx(0.0)

    def test_negative_entries_rejected(self):
        with pytest.raises(EvaluationError):
            ErrorReport(timesteps=(0.5,), path_mm={0.5: -1.0},
                        pose_mm={0.5: 0.0}, path_all_mm=0.0,
                        pose_all_mm=0.0, samples_used=1, mode="x")


class TestBestOfK:
    def test_argmin_selects_middle(self):
        rng = np.random.default_rng(8)
        truth = _truth(rng)
        bundle = [_offset_pred(truth, np.array([0.0, 0.0, off / 1000]))
                  for off in (5.0, 3.0, 7.0)]
        report = best_of_k([bundle], [truth])
        assert report.pose_all_mm == pytest.approx(3.0)
        assert report.samples_used == 3
        assert report.mode == "best-of-3"

    def test_k1_equals_deterministic(self):
        rng = np.random.default_rng(9)
        truths = [_truth(rng) for _ in range(4)]
        preds = [_offset_pred(t, rng.normal(scale=0.01, size=3))
                 for t in truths]
        a = best_of_k([[p] for p in preds], truths)
        b = evaluate_deterministic(preds, truths)
        assert a.pose_all_mm == b.pose_all_mm
        assert a.path_mm == b.path_mm and a.pose_mm == b.pose_mm
        assert a.mode == b.mode == "deterministic"

    def test_nested_prefixes_non_increasing(self):
        rng = np.random.default_rng(10)
        truths = [_truth(rng) for _ in range(5)]
        bundles = [[_offset_pred(t, rng.normal(scale=0.02, size=3))
                    for _ in range(10)] for t in truths]
        last = None
        for k in (1, 3, 5, 10):
            report = best_of_k([b[:k] for b in bundles], truths)
            if last is not None:
                assert report.pose_all_mm <= last + 1e-12
            last = report.pose_all_mm

    def test_empty_bundle_rejected(self):
        with pytest.raises(EvaluationError):
            best_of_k([], [])
        rng = np.random.default_rng(11)
        truth = _truth(rng)
        with pytest.raises(EvaluationError):
            best_of_k([[]], [truth])


class TestDestinationError:
    def test_exact_sample(self):
        gt = np.array([10.0, 20.0])
        assert destination_error(gt[None], gt) == (0.0, 0.0, 0.0)

    def test_three_four(self):
        gt = np.array([0.0, 0.0])
        samples = np.array([[3.0, 0.0], [0.0, 4.0]])
        mn, avg, std = destination_error(samples, gt)
        assert mn == pytest.approx(3.0)
        assert avg == pytest.approx(3.5)
        assert std == pytest.approx(0.5)

    def test_matches_oracle_loop(self):
        rng = np.random.default_rng(12)
        gt = rng.uniform(0, 100, size=2)
        samples = rng.uniform(0, 100, size=(30, 2))
        dists = []
        for s in samples:
            dists.append(((s[0] - gt[0]) ** 2 + (s[1] - gt[1]) ** 2) ** 0.5)
        mn, avg, std = destination_error(samples, gt)
        assert mn == pytest.approx(min(dists), abs=1e-12)
        assert avg == pytest.approx(sum(dists) / 30, abs=1e-12)
        assert std == pytest.approx(np.std(dists), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EvaluationError):
            destination_error(np.zeros((0, 2)), np.zeros(2))


class TestCurvesAndFormatting:
    def _reports(self):
        rng = np.random.default_rng(13)
        truths = [_truth(rng) for _ in range(4)]
        bundles = [[_offset_pred(t, rng.normal(scale=0.02, size=3))
                    for _ in range(10)] for t in truths]
        return [best_of_k([b[:k] for b in bundles], truths)
                for k in (1, 5, 10)]

    def test_one_row_per_step_plus_all(self):
        reports = self._reports()
        text = error_curves(reports[:1])
        lines = text.strip().splitlines()
        assert len(lines) == 1 + len(reports[0].timesteps) + 1

    def test_round_trip_lossless(self):
        reports = self._reports()
        text = error_curves(reports)
        rows = parse_error_curves(text)
        i = 0
        for r in reports:
            for s in r.timesteps:
                assert rows[i] == (s, r.samples_used, r.path_mm[s],
                                   r.pose_mm[s])
                i += 1
            assert rows[i] == (None, r.samples_used, r.path_all_mm,
                               r.pose_all_mm)
            i += 1
        assert i == len(rows)

    def test_all_rows_non_increasing_across_nested_k(self):
        reports = self._reports()
        rows = parse_error_curves(error_curves(reports))
        all_rows = [r for r in rows if r[0] is None]
        pose_by_k = {r[1]: r[3] for r in all_rows}
        assert pose_by_k[10] <= pose_by_k[5] <= pose_by_k[1]

    def test_format_report_columns(self):
        report = self._reports()[1]
        text = format_report(report)
        lines = text.splitlines()
        assert lines[0] == "mode=best-of-5 K=5"
        header = lines[1].split()
        assert header == ["0.5s", "1s", "1.5s", "2s", "All"]
        assert lines[2].startswith("path (mm)")
        assert lines[3].startswith("pose (mm)")
        # aligned: all rows end at the same width
        assert len(lines[1]) == len(lines[2]) == len(lines[3])

    def test_bad_header_rejected(self):
        with pytest.raises(EvaluationError):
            parse_error_curves("nope\n1\t2\t3\t4\n")

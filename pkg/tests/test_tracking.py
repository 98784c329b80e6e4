import logging

import numpy as np
import pytest

from blursplat.detector import MetricPlugin
from blursplat.enums import *
from blursplat.errors import BlurSplatError
from blursplat.lie import SE3Pose
from blursplat.pipeline import ate_rmse
from blursplat.structs import ClassifierThresholds, Image
from blursplat.tracking import DeblurProvider, DetectorState, GroundTruthTracker, MiddleFrameDeblurOracle,\
    PlanarDepthOracle, PoseHistory, Providers, Tracker, constant_velocity_extrapolate, read_tum, track_frame,\
    write_tum

SHARP_VALUE = 0.2
BLURRED_VALUE = 0.8


def mean_metric():
    return MetricPlugin('mean', Polarity.higher_is_blurrier, lambda img: img.data.mean())


def history(*poses):
    h = PoseHistory()
    for i, pose in enumerate(poses):
        h.append(pose, float(i))
    return h


def velocity_trajectory(count, xi=(0.01, -0.02, 0.03, 0.05, 0.01, -0.02)):
    step = SE3Pose.exp(np.array(xi))
    poses = [SE3Pose.identity()]
    for _ in range(count - 1):
        poses.append(step * poses[-1])
    return poses


class PlannedSequence(object):
    """Constant images whose mean encodes the planned class, with oracle providers."""

    def __init__(self, poses, planned):
        self.poses = poses
        self.planned = planned
        self.frames = [Image(np.full((8, 8, 3), SHARP_VALUE if planned.get(i, FrameClass.sharp) == FrameClass.sharp
                                     else BLURRED_VALUE), ColorSpace.srgb_encoded) for i in range(len(poses))]
        sharp = dict((i, Image(np.full((8, 8, 3), SHARP_VALUE), ColorSpace.srgb_encoded))
                     for i in range(len(poses)))
        self.tracker = GroundTruthTracker(poses)
        self.providers = Providers(self.tracker, PlanarDepthOracle(2.0), MiddleFrameDeblurOracle(sharp, planned))
        self.detector_state = DetectorState(mean_metric(), ClassifierThresholds(0.5, tau_success=0.2))


class TestConstantVelocity:
    def test_identity(self):
        assert constant_velocity_extrapolate(history(SE3Pose(), SE3Pose())).almost_equal(SE3Pose())

    def test_doubled_step(self):
        out = constant_velocity_extrapolate(history(SE3Pose(), SE3Pose.from_translation(1.0, 0.0, 0.0)))
        assert out.almost_equal(SE3Pose.from_translation(2.0, 0.0, 0.0), 1e-12)

    def test_matrix_oracle(self, rng):
        t2 = SE3Pose.exp(rng.normal(size=6))
        t1 = SE3Pose.exp(rng.normal(size=6))
        expected = t1.matrix() @ t1.matrix() @ np.linalg.inv(t2.matrix())
        assert np.allclose(constant_velocity_extrapolate(history(t2, t1)).matrix(), expected, atol=1e-9)

    def test_too_few_poses(self):
        with pytest.raises(BlurSplatError) as exc_info:
            constant_velocity_extrapolate(history(SE3Pose()))
        assert exc_info.value.error['msg_key'] == 'errorMsgTooFewPoses'


class TestPoseHistory:
    def test_timestamps_increase(self):
        h = history(SE3Pose())
        with pytest.raises(BlurSplatError) as exc_info:
            h.append(SE3Pose(), 0.0)
        assert exc_info.value.error['msg_key'] == 'errorMsgTimestampNotIncreasing'

    def test_capacity(self):
        h = PoseHistory(capacity=2)
        for i in range(4):
            h.append(SE3Pose.from_translation(i, 0.0, 0.0), float(i))
        assert len(h) == 2
        assert h.last(2).translation[0] == 2.0


class TestTrackFrame:
    def test_sharp_frame_uses_tracker(self):
        seq = PlannedSequence(velocity_trajectory(3), {})
        result = track_frame(seq.frames[1], PoseHistory(), seq.providers, seq.detector_state, index=1)
        assert result.frame_class == FrameClass.sharp
        assert result.pose.almost_equal(seq.poses[1])
        assert seq.tracker.calls == 1

    def test_deblurred_frame_tracks_deblurred_image(self):
        seq = PlannedSequence(velocity_trajectory(3), {2: FrameClass.deblurred})
        result = track_frame(seq.frames[2], PoseHistory(), seq.providers, seq.detector_state, index=2)
        assert result.frame_class == FrameClass.deblurred
        assert result.tracked_img.data.mean() == pytest.approx(SHARP_VALUE)
        assert result.confidence == 1.0

    def test_fail_frame_extrapolates(self):
        poses = velocity_trajectory(4)
        seq = PlannedSequence(poses, {3: FrameClass.fail})
        h = history(poses[1], poses[2])
        result = track_frame(seq.frames[3], h, seq.providers, seq.detector_state, index=3, timestamp=3.0)
        assert result.frame_class == FrameClass.fail
        assert result.pose.almost_equal(poses[3], 1e-9)
        assert seq.tracker.calls == 0
        assert np.all(result.depth.data == 2.0)
        assert len(h) == 3

    def test_fail_bootstrap_warns(self, caplog):
        seq = PlannedSequence(velocity_trajectory(2), {0: FrameClass.fail})
        with caplog.at_level(logging.WARNING, logger='blursplat.tracking'):
            result = track_frame(seq.frames[0], PoseHistory(), seq.providers, seq.detector_state, index=0)
        assert result.frame_class == FrameClass.fail
        assert seq.tracker.calls == 1
        assert 'bootstrapping' in caplog.text

    def test_forced_class(self):
        seq = PlannedSequence(velocity_trajectory(3), {})
        seq.detector_state.forced_class = FrameClass.fail
        tracker = Tracker(seq.providers, seq.detector_state)
        results = [tracker.track(img, i, float(i)) for i, img in enumerate(seq.frames)]
        assert [result.frame_class for result in results] == [FrameClass.fail] * 3
        # the first two frames bootstrap the history, the third is extrapolated
        assert seq.tracker.calls == 2

    def test_provider_confidence_mode(self):
        seq = PlannedSequence(velocity_trajectory(3), {0: FrameClass.sharp, 1: FrameClass.deblurred,
                                                       2: FrameClass.fail})
        seq.detector_state.mode = ClassifierMode.provider_confidence
        tracker = Tracker(seq.providers, seq.detector_state)
        classes = [tracker.track(img, i, float(i)).frame_class for i, img in enumerate(seq.frames)]
        assert classes == [FrameClass.sharp, FrameClass.deblurred, FrameClass.fail]

    def test_provider_failure_carries_index(self):
        class BrokenDeblur(DeblurProvider):
            def deblur(self, img, index=None):
                raise RuntimeError('network unavailable')

        seq = PlannedSequence(velocity_trajectory(6), {5: FrameClass.deblurred})
        providers = Providers(seq.tracker, PlanarDepthOracle(2.0), BrokenDeblur())
        with pytest.raises(BlurSplatError) as exc_info:
            track_frame(seq.frames[5], PoseHistory(), providers, seq.detector_state, index=5)
        assert exc_info.value.error['msg_key'] == 'errorMsgProviderFailed'
        assert exc_info.value.error['object_id'] == 5

    def test_missing_ground_truth_pose(self):
        seq = PlannedSequence(velocity_trajectory(2), {})
        with pytest.raises(BlurSplatError) as exc_info:
            track_frame(seq.frames[0], PoseHistory(), seq.providers, seq.detector_state, index=7)
        assert exc_info.value.error['msg_key'] == 'errorMsgMissingGroundTruthPose'

    def test_fallback_sequence_ate(self):
        poses = velocity_trajectory(20)
        seq = PlannedSequence(poses, dict((i, FrameClass.fail) for i in (8, 9, 10)))
        tracker = Tracker(seq.providers, seq.detector_state)
        for i, img in enumerate(seq.frames):
            tracker.track(img, i, i / 30.0)
        assert [result.frame_class for result in tracker.results].count(FrameClass.fail) == 3
        gt = [(i / 30.0, pose) for i, pose in enumerate(poses)]
        assert ate_rmse(tracker.trajectory(), gt) < 1e-6
        assert seq.tracker.calls == 17

    def test_depth_updates(self):
        poses = velocity_trajectory(4)
        seq = PlannedSequence(poses, {3: FrameClass.fail})
        refined = Image(np.full((8, 8, 1), 2.5))
        seq.tracker.depths = [None, refined, Image(np.full((8, 8, 1), 2.0)), refined]
        tracker = Tracker(seq.providers, seq.detector_state)
        results = [tracker.track(img, i, float(i)) for i, img in enumerate(seq.frames)]
        assert np.all(results[1].prior_depth.data == 2.0)
        assert results[1].depth is refined
        # frame 2 returns an equal depth, frame 3 is extrapolated without the tracker
        assert tracker.depth_updates() == {1: refined}


def test_tum_round_trip(tmp_path, rng):
    trajectory = [(0.1 * i, SE3Pose.exp(rng.normal(size=6))) for i in range(5)]
    filename = str(tmp_path / 'traj.txt')
    write_tum(filename, trajectory)
    back = read_tum(filename)
    assert [timestamp for timestamp, _ in back] == [timestamp for timestamp, _ in trajectory]
    for (_, a), (_, b) in zip(back, trajectory):
        assert a.almost_equal(b, 1e-15)


def test_tum_invalid_line(tmp_path):
    filename = tmp_path / 'traj.txt'
    filename.write_text('0.0 1 2 3\n')
    with pytest.raises(BlurSplatError) as exc_info:
        read_tum(str(filename))
    assert exc_info.value.error['msg_key'] == 'errorMsgInvalidTrajectoryLine'

"""Blur-aware tracking with pluggable providers and the constant-velocity fallback."""
import logging

import numpy as np

from .detector import classify_frame, deblur_success
from .enums import *
from .errors import Error, BlurSplatError
from .lie import SE3Pose
from .structs import Image
from .utils import read_table_lines

logger = logging.getLogger(__name__)


class TrackerProvider(object):
    name = 'tracker'

    def estimate(self, img, depth_prior, prev_pose, index=None):
        """Return (pose, refined_depth) for img."""
        raise NotImplementedError()


class DepthProvider(object):
    name = 'depth'

    def mono_depth(self, img, index=None):
        raise NotImplementedError()


class DeblurProvider(object):
    name = 'deblur'

    def deblur(self, img, index=None):
        """Return (deblurred image, confidence in [0, 1])."""
        raise NotImplementedError()

    def sharp_confidence(self, img, index=None):
        """Confidence that img needs no deblurring, used when classifying without thresholds."""
        return 0.0


class GroundTruthTracker(TrackerProvider):
    """Returns known poses; counts calls so callers can check which frames reached the tracker."""
    name = 'ground_truth_tracker'

    def __init__(self, poses, depths=None):
        self.poses = poses
        self.depths = depths
        self.calls = 0

    def estimate(self, img, depth_prior, prev_pose, index=None):
        self.calls += 1
        if index is None or index >= len(self.poses) or self.poses[index] is None:
            raise BlurSplatError(Error('errorMsgMissingGroundTruthPose', object_id=index))
        depth = depth_prior
        if self.depths is not None and self.depths[index] is not None:
            depth = self.depths[index]
        return self.poses[index].copy(), depth


class GroundTruthDepth(DepthProvider):
    name = 'ground_truth_depth'

    def __init__(self, depths):
        self.depths = depths

    def mono_depth(self, img, index=None):
        if index is None or index >= len(self.depths) or self.depths[index] is None:
            raise BlurSplatError(Error('errorMsgMissingGroundTruthDepth', object_id=index))
        return self.depths[index]


class PlanarDepthOracle(DepthProvider):
    """Fronto-parallel plane at a fixed distance."""
    name = 'planar_depth'

    def __init__(self, distance):
        self.distance = float(distance)

    def mono_depth(self, img, index=None):
        return Image(np.full((img.height, img.width, 1), self.distance))


class MiddleFrameDeblurOracle(DeblurProvider):
    """Deblurs by handing back the known middle sub-frame of the exposure window.

    Frames planned as Fail are returned unchanged with confidence 0, mimicking a
    network that gives up on heavy blur.
    """
    name = 'middle_frame_deblur'

    def __init__(self, sharp_frames, planned_classes):
        self.sharp_frames = sharp_frames
        self.planned_classes = planned_classes

    def deblur(self, img, index=None):
        planned = self.planned_classes.get(index)
        if planned == FrameClass.fail or self.sharp_frames.get(index) is None:
            return img, 0.0
        return self.sharp_frames[index], 1.0

    def sharp_confidence(self, img, index=None):
        return 1.0 if self.planned_classes.get(index) == FrameClass.sharp else 0.0


class Providers(object):
    def __init__(self, tracker, depth, deblur):
        self.tracker = tracker
        self.depth = depth
        self.deblur = deblur


class DetectorState(object):
    """Blur metric and thresholds used to classify frames.

    :param forced_class: when set every frame gets this class without scoring
    """

    def __init__(self, metric, thresholds, mode=ClassifierMode.threshold, confidence_threshold=0.5,
                 forced_class=None):
        self.metric = metric
        self.thresholds = thresholds
        self.mode = mode
        self.confidence_threshold = confidence_threshold
        self.forced_class = forced_class


class PoseHistory(object):
    def __init__(self, capacity=None):
        self.capacity = capacity
        self.poses = []
        self.timestamps = []

    def append(self, pose, timestamp):
        if self.timestamps and timestamp <= self.timestamps[-1]:
            raise BlurSplatError(Error('errorMsgTimestampNotIncreasing', field='timestamp', info=timestamp))
        self.poses.append(pose)
        self.timestamps.append(timestamp)
        if self.capacity is not None and len(self.poses) > self.capacity:
            del self.poses[0]
            del self.timestamps[0]

    def last(self, n=1):
        return self.poses[-n]

    def __len__(self):
        return len(self.poses)


class TrackResult(object):
    def __init__(self, index, timestamp, pose, depth, frame_class, tracked_img, confidence=None, prior_depth=None):
        self.index = index
        self.timestamp = timestamp
        self.pose = pose
        self.depth = depth
        # monocular depth before the tracker refined it
        self.prior_depth = depth if prior_depth is None else prior_depth
        self.frame_class = frame_class
        # deblurred image for Deblurred frames, otherwise the input
        self.tracked_img = tracked_img
        self.confidence = confidence


def constant_velocity_extrapolate(h):
    if len(h) < 2:
        raise BlurSplatError(Error('errorMsgTooFewPoses', field='history', info=len(h)))
    prev = h.last(1)
    velocity = prev * h.last(2).inverse()
    return prev * velocity


def _call_provider(provider, index, method, *args):
    try:
        return getattr(provider, method)(*args, index=index)
    except BlurSplatError as ex:
        if ex.error.get('object_id') is None:
            ex.error['object_id'] = index
        raise
    except Exception as ex:
        raise BlurSplatError(Error('errorMsgProviderFailed', object_id=index,
                                   field=getattr(provider, 'name', type(provider).__name__), info=str(ex)))


def classify(img, providers, detector_state, index):
    """Return (frame class, image to track with, confidence)."""
    if detector_state.forced_class is not None:
        return detector_state.forced_class, img, None
    metric = detector_state.metric
    th = detector_state.thresholds
    if detector_state.mode == ClassifierMode.provider_confidence:
        if _call_provider(providers.deblur, index, 'sharp_confidence', img) >= detector_state.confidence_threshold:
            return FrameClass.sharp, img, None
        deblurred, confidence = _call_provider(providers.deblur, index, 'deblur', img)
        if confidence >= detector_state.confidence_threshold:
            return FrameClass.deblurred, deblurred, confidence
        return FrameClass.fail, img, confidence
    if classify_frame(metric(img), th, metric) == FrameClass.sharp:
        return FrameClass.sharp, img, None
    deblurred, confidence = _call_provider(providers.deblur, index, 'deblur', img)
    if deblur_success(img, deblurred, th, metric) == FrameClass.deblurred:
        return FrameClass.deblurred, deblurred, confidence
    return FrameClass.fail, img, confidence


def track_frame(img, h, providers, detector_state, index=None, timestamp=None):
    """Track one frame and append its pose to the history.

    Fail frames take the constant-velocity pose and the monocular depth without
    consulting the tracker, unless the history holds fewer than two poses.
    """
    if timestamp is None:
        timestamp = float(index if index is not None else len(h))
    prior_depth = _call_provider(providers.depth, index, 'mono_depth', img)
    depth = prior_depth
    frame_class, tracked_img, confidence = classify(img, providers, detector_state, index)
    if frame_class == FrameClass.fail and len(h) >= 2:
        pose = constant_velocity_extrapolate(h)
    else:
        if frame_class == FrameClass.fail:
            logger.warning('frame %s: fail class with %d poses in history, bootstrapping with tracker',
                           index, len(h))
        prev_pose = h.last() if len(h) else None
        pose, depth = _call_provider(providers.tracker, index, 'estimate', tracked_img, depth, prev_pose)
    h.append(pose, timestamp)
    logger.info('frame %s: %s', index, frame_class.name)
    return TrackResult(index, timestamp, pose, depth, frame_class, tracked_img, confidence, prior_depth)


class Tracker(object):
    """Sequential tracking front end keeping the pose history and every frame's result."""

    def __init__(self, providers, detector_state, history_capacity=None):
        self.providers = providers
        self.detector_state = detector_state
        self.history = PoseHistory(history_capacity)
        self.results = []

    def track(self, img, index, timestamp):
        result = track_frame(img, self.history, self.providers, self.detector_state, index, timestamp)
        self.results.append(result)
        return result

    def trajectory(self):
        return [(result.timestamp, result.pose) for result in self.results]

    def depth_updates(self):
        """Refined depth of every frame whose depth the tracker changed from the monocular prior."""
        updates = dict()
        for result in self.results:
            if result.depth is not result.prior_depth and\
                    not np.array_equal(result.depth.data, result.prior_depth.data):
                updates[result.index] = result.depth
        return updates


def read_tum(filename):
    """Return list of (timestamp, SE3Pose) from a TUM trajectory file."""
    trajectory = []
    for row in read_table_lines(filename):
        if len(row) != 8:
            raise BlurSplatError(Error('errorMsgInvalidTrajectoryLine', object_id=filename, info=' '.join(row)))
        values = [float(value) for value in row]
        tx, ty, tz, qx, qy, qz, qw = values[1:]
        trajectory.append((values[0], SE3Pose((qw, qx, qy, qz), (tx, ty, tz))))
    return trajectory


def write_tum(filename, trajectory):
    with open(filename, 'w') as f:
        f.write('# timestamp tx ty tz qx qy qz qw\n')
        for timestamp, pose in trajectory:
            qw, qx, qy, qz = pose.rotation
            values = [timestamp] + list(pose.translation) + [qx, qy, qz, qw]
            f.write(' '.join('{0:.17g}'.format(value) for value in values) + '\n')

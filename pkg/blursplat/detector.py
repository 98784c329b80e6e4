import csv
import logging
import math
import os

import numpy as np

from .enums import *
from .errors import Error, BlurSplatError
from .imaging import laplacian_variance
from .structs import ClassifierThresholds

logger = logging.getLogger(__name__)

DEFAULT_TAU_SUCCESS = 1.2
DEFAULT_WEIGHT_LAPLACIAN = 0.5


class MetricPlugin(object):
    """Named no-reference image score with a declared polarity."""

    def __init__(self, name, polarity, score):
        self.name = name
        self.polarity = polarity
        self.score = score

    def __call__(self, img):
        return float(self.score(img))

    def blur_score(self, img):
        """Score normalized so that higher means blurrier."""
        return self.normalize(self(img))

    def normalize(self, value):
        return -value if self.polarity == Polarity.higher_is_sharper else value


class ScoresFileMetric(MetricPlugin):
    """Plugin backed by externally computed scores, a TSV of image path and score.

    Images are looked up by their source path, falling back to the file name.
    """

    def __init__(self, filename, name=None, polarity=Polarity.higher_is_sharper):
        self.filename = filename
        self.scores = dict()
        with open(filename, 'r') as f:
            for row in csv.reader(f, delimiter='\t'):
                if not row or row[0].startswith('#') or row[0] == 'path':
                    continue
                try:
                    self.scores[row[0]] = float(row[1])
                except (IndexError, ValueError):
                    raise BlurSplatError(Error('errorMsgInvalidScoresFile', object_id=filename, info=row))
        MetricPlugin.__init__(self, name or os.path.splitext(os.path.basename(filename))[0],
                              polarity, self.lookup)

    def lookup(self, img):
        path = img if isinstance(img, str) else getattr(img, 'source', None)
        if path is not None:
            for key in (path, os.path.basename(path)):
                if key in self.scores:
                    return self.scores[key]
        raise BlurSplatError(Error('errorMsgMissingScore', object_id=path, context=self.filename))


class PairScores(object):
    def __init__(self, pairs, metric_name, polarity=Polarity.higher_is_blurrier):
        self.pairs = [(float(q_sharp), float(q_blur)) for q_sharp, q_blur in pairs]
        self.metric_name = metric_name
        self.polarity = polarity

    def differences(self):
        return np.array([q_sharp - q_blur for q_sharp, q_blur in self.pairs])

    def __len__(self):
        return len(self.pairs)


def _check_not_empty(ps):
    if len(ps) == 0:
        raise BlurSplatError(Error('errorMsgEmptyPairs', object_id=ps.metric_name))


def improvement_score(ps):
    _check_not_empty(ps)
    return float(np.mean(np.abs(ps.differences())))


def cohens_d(ps):
    if len(ps) < 2:
        raise BlurSplatError(Error('errorMsgTooFewPairs', object_id=ps.metric_name, info=len(ps)))
    sigma = float(np.std(ps.differences(), ddof=1))
    if sigma == 0.0:
        raise BlurSplatError(Error('errorMsgDegenerateZeroVariance', object_id=ps.metric_name,
                                   info='degenerate-zero-variance'))
    return improvement_score(ps) / sigma


def ranking_accuracy(ps):
    _check_not_empty(ps)
    if ps.polarity == Polarity.higher_is_sharper:
        correct = sum(1 for q_sharp, q_blur in ps.pairs if q_blur < q_sharp)
    else:
        correct = sum(1 for q_sharp, q_blur in ps.pairs if q_blur > q_sharp)
    return 100.0 * correct / len(ps)


def consistency_score(accuracy, effect_size):
    if not 0.0 <= accuracy <= 100.0:
        raise BlurSplatError(Error('errorMsgInvalidAccuracy', field='accuracy', info=accuracy))
    return accuracy * abs(effect_size) / 100.0


def builtin_sharpness_metric():
    return MetricPlugin('lapvar', Polarity.higher_is_sharper, lambda img: math.log1p(laplacian_variance(img)))


def score_pairs(pairs, metric):
    """PairScores of a metric over BenchmarkPair objects (or (sharp, blurred) image tuples)."""
    scores = []
    for pair in pairs:
        sharp, blurred = (pair.sharp, pair.blurred) if hasattr(pair, 'sharp') else pair
        scores.append((metric(sharp), metric(blurred)))
    return PairScores(scores, metric.name, metric.polarity)


def metric_table_row(ps):
    """Row of the metric benchmark table; a degenerate effect size is flagged instead of raised."""
    accuracy = ranking_accuracy(ps)
    row = dict(metric=ps.metric_name, accuracy=accuracy, effect_size=None, consistency=None, flag='')
    try:
        row['effect_size'] = cohens_d(ps)
        row['consistency'] = consistency_score(accuracy, row['effect_size'])
    except BlurSplatError as ex:
        logger.warning('metric %s: %s', ps.metric_name, ex.error['info'])
        if ex.error['msg_key'] == 'errorMsgDegenerateZeroVariance':
            row['flag'] = ex.error['info']
        else:
            row['flag'] = 'degenerate-too-few-pairs'
    return row


def classify_frame(blur_score, th, metric=None):
    """Sharp when the blur score (higher is blurrier) is strictly below tau_sharp.

    :param blur_score: raw score of the metric; normalized by the metric's polarity when metric is given
    """
    if metric is not None:
        blur_score = metric.normalize(blur_score)
    if blur_score < th.tau_sharp:
        return FrameClass.sharp
    return FrameClass.candidate_blurry


def success_score(input_img, deblurred_img, th, metric):
    lapvar_ratio = laplacian_variance(deblurred_img) / max(laplacian_variance(input_img), th.lapvar_eps)
    gain = metric.blur_score(input_img) - metric.blur_score(deblurred_img)
    return th.weight_laplacian * lapvar_ratio + (1.0 - th.weight_laplacian) * gain


def deblur_success(input_img, deblurred_img, th, metric):
    if not input_img.same_size(deblurred_img):
        raise BlurSplatError(Error('errorMsgDimensionMismatch', field='deblurred_img'))
    if success_score(input_img, deblurred_img, th, metric) > th.tau_success:
        return FrameClass.deblurred
    return FrameClass.fail


def calibrate_tau_sharp(sharp_scores, blur_scores):
    """Threshold on normalized blur scores maximizing the share of correctly separated frames.

    Candidates are midpoints between consecutive distinct scores; the first best one wins.
    """
    sharp_scores = np.asarray(sharp_scores, dtype=np.float64)
    blur_scores = np.asarray(blur_scores, dtype=np.float64)
    if sharp_scores.size == 0 or blur_scores.size == 0:
        raise BlurSplatError(Error('errorMsgEmptyPairs', field='scores'))
    values = np.unique(np.concatenate([sharp_scores, blur_scores]))
    candidates = np.concatenate([[values[0] - 1.0], (values[:-1] + values[1:]) / 2.0, [values[-1] + 1.0]])
    best_tau, best_correct = candidates[0], -1
    for tau in candidates:
        correct = np.count_nonzero(sharp_scores < tau) + np.count_nonzero(blur_scores >= tau)
        if correct > best_correct:
            best_tau, best_correct = tau, correct
    return float(best_tau)


def calibrate_thresholds(pairs, metric, tau_success=DEFAULT_TAU_SUCCESS,
                         weight_laplacian=DEFAULT_WEIGHT_LAPLACIAN):
    ps = score_pairs(pairs, metric)
    tau_sharp = calibrate_tau_sharp([metric.normalize(q) for q, _ in ps.pairs],
                                    [metric.normalize(q) for _, q in ps.pairs])
    logger.info('calibrated tau_sharp=%.6g for metric %s on %d pairs', tau_sharp, metric.name, len(ps))
    return ClassifierThresholds(tau_sharp, tau_success, weight_laplacian)

"""End-to-end orchestration: dataset synthesis, pipeline runs, evaluation, metric benchmark and rendering."""
import logging
import math
import os
import time

import numpy as np
import torch

from .blurmodel import VirtualTrajectory
from .detector import builtin_sharpness_metric, calibrate_tau_sharp, metric_table_row, score_pairs
from .enums import *
from .errors import Error, BlurSplatError, BlurSplatErrors, BlurSplatStageError
from .imaging import linear_to_srgb, psnr, srgb_to_linear, ssim
from .lie import SE3Pose
from .optimizer import FrameRecord, LossTrace, apply_depth_update, final_refinement, run_global_optimization,\
    run_mapping
from .raster import read_pfm, read_png, write_pfm, write_png
from .report import FrameReport, RunReport
from .scene import Gaussian3D, GaussianScene, render, seed_gaussians_from_depth, write_scene
from .structs import Image
from .synthesis import FrameSequence, make_benchmark_pair
from .tracking import DetectorState, GroundTruthDepth, GroundTruthTracker, MiddleFrameDeblurOracle,\
    PlanarDepthOracle, Providers, Tracker, read_tum, write_tum
from .config import write_dataset_config, DATASET_CONFIG_NAME
from .utils import ensure_dir, frame_filename, list_files, read_table_lines

logger = logging.getLogger(__name__)

MAX_TIME_DIFFERENCE = 0.02
FRAME_RATE = 30.0
MAX_REFERENCE_GAUSSIANS = 200
MANIFEST_HEADER = ('frame', 'planned_class', 'n_averaged', 'mid_index', 'timestamp')


# trajectory error

def associate(first, second, max_difference=MAX_TIME_DIFFERENCE):
    """Match timestamps of two {timestamp: data} dicts, closest pairs first, each stamp used once."""
    first_keys = set(first)
    second_keys = set(second)
    potential_matches = sorted((abs(a - b), a, b) for a in first for b in second if abs(a - b) < max_difference)
    matches = []
    for _, a, b in potential_matches:
        if a in first_keys and b in second_keys:
            first_keys.remove(a)
            second_keys.remove(b)
            matches.append((a, b))
    matches.sort()
    return matches


def align(model, data):
    """Rigid transform (rotation, translation) mapping 3xN model points onto data points (Horn, closed form)."""
    model_centered = model - model.mean(1, keepdims=True)
    data_centered = data - data.mean(1, keepdims=True)
    w = model_centered @ data_centered.T
    u, _, vh = np.linalg.svd(w.T)
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vh) < 0:
        s[2, 2] = -1
    rot = u @ s @ vh
    trans = data.mean(1, keepdims=True) - rot @ model.mean(1, keepdims=True)
    return rot, trans


def alignment_pose(rot, trans):
    m = np.eye(4)
    m[:3, :3] = rot
    m[:3, 3] = np.asarray(trans).reshape(3)
    return SE3Pose.from_matrix(m)


def ate_errors(est, gt, max_difference=MAX_TIME_DIFFERENCE):
    """Translation residuals after rigid alignment of est onto gt; trajectories are (timestamp, SE3Pose) lists."""
    est_dict = dict((timestamp, pose) for timestamp, pose in est)
    gt_dict = dict((timestamp, pose) for timestamp, pose in gt)
    matches = associate(est_dict, gt_dict, max_difference)
    if len(matches) < 3:
        raise BlurSplatError(Error('errorMsgTooFewPoses', field='trajectory', info=len(matches),
                                   context='ate_rmse'))
    model = np.array([est_dict[a].translation for a, _ in matches]).T
    data = np.array([gt_dict[b].translation for _, b in matches]).T
    alignment = alignment_pose(*align(model, data))
    aligned = np.array([(alignment * est_dict[a]).translation for a, _ in matches]).T
    residuals = aligned - data
    return np.sqrt(np.sum(residuals * residuals, 0))


def ate_rmse(est, gt, max_difference=MAX_TIME_DIFFERENCE):
    errors = ate_errors(est, gt, max_difference)
    return float(np.sqrt(np.mean(errors * errors)))


# reference scene

def make_reference_scene(cam, plane_depth=2.0, travel=0.0, max_gaussians=MAX_REFERENCE_GAUSSIANS, rng=None):
    """Textured fronto-parallel plane at plane_depth covering the view of a camera moving travel meters along x."""
    if rng is None:
        rng = np.random.default_rng(0)
    half_w = (cam.width / 2.0) / cam.fx * plane_depth
    half_h = (cam.height / 2.0) / cam.fy * plane_depth
    x0, x1 = -half_w * 1.1, travel + half_w * 1.1
    y0, y1 = -half_h * 1.1, half_h * 1.1
    spacing = math.sqrt((x1 - x0) * (y1 - y0) / max_gaussians)
    while True:
        cols = int(math.ceil((x1 - x0) / spacing))
        rows = int(math.ceil((y1 - y0) / spacing))
        if cols * rows <= max_gaussians:
            break
        spacing *= 1.05
    gaussians = []
    for row in range(rows):
        for col in range(cols):
            mean = (x0 + (col + 0.5) * spacing, y0 + (row + 0.5) * spacing, plane_depth)
            color = rng.uniform(0.05, 0.95, size=3)
            gaussians.append(Gaussian3D(mean, scale=(0.5 * spacing, 0.5 * spacing, 0.1 * spacing), opacity=0.95,
                                        color=color))
    return GaussianScene.from_gaussians(gaussians)


def render_reference_sequence(scene, cam, n_dense, step, dt):
    """Dense frames of a camera translating step meters along x per frame.

    :return: list of (sRGB Image, depth Image, SE3Pose, timestamp)
    """
    frames = []
    with torch.no_grad():
        for j in range(n_dense):
            pose = SE3Pose.from_translation(j * step, 0.0, 0.0)
            out = render(scene, cam, pose)
            color, depth, alpha = out.to_images()
            depth = depth.with_data(np.where(alpha.data >= 0.5, depth.data, 0.0))
            frames.append((linear_to_srgb(color), depth, pose, j * dt))
    return frames


# dataset

class ManifestEntry(object):
    def __init__(self, frame, planned_class, n_averaged, mid_index, timestamp):
        self.frame = frame
        self.planned_class = planned_class
        self.n_averaged = n_averaged
        self.mid_index = mid_index
        self.timestamp = timestamp


def write_manifest(filename, entries):
    with open(filename, 'w') as f:
        f.write('\t'.join(MANIFEST_HEADER) + '\n')
        for entry in entries:
            f.write('{0}\t{1}\t{2}\t{3}\t{4!r}\n'.format(entry.frame, entry.planned_class.name, entry.n_averaged,
                                                       entry.mid_index, float(entry.timestamp)))


def read_manifest(filename):
    entries = []
    for row in read_table_lines(filename):
        if tuple(row) == MANIFEST_HEADER:
            continue
        if len(row) != len(MANIFEST_HEADER):
            raise BlurSplatError(Error('errorMsgInvalidManifestLine', object_id=filename, info=' '.join(row)))
        entries.append(ManifestEntry(int(row[0]), FrameClass[row[1]], int(row[2]), int(row[3]), float(row[4])))
    return entries


def _planned_class(k, config):
    if k in config['synth_heavy_frames']:
        return FrameClass.fail
    if k in config['synth_sharp_frames']:
        return FrameClass.sharp
    return FrameClass.deblurred


def _load_source_frames(source_dir):
    """Dense PNG frames (plus optional depth/*.pfm and groundtruth.txt) of a source directory."""
    files = list_files(source_dir, '.png')
    if not files:
        raise BlurSplatError(Error('errorMsgNoFrames', object_id=source_dir))
    errors = []
    images = []
    for filename in files:
        try:
            images.append(read_png(filename))
        except BlurSplatError as ex:
            errors.append(ex.error)
    depth_files = list_files(os.path.join(source_dir, 'depth'), '.pfm')
    depths = []
    for filename in depth_files:
        try:
            depths.append(read_pfm(filename))
        except BlurSplatError as ex:
            errors.append(ex.error)
    if errors:
        raise BlurSplatErrors(errors)
    if depths and len(depths) != len(images):
        raise BlurSplatError(Error('errorMsgDepthCountMismatch', object_id=source_dir, info=len(depths)))
    poses_file = os.path.join(source_dir, 'groundtruth.txt')
    if os.path.isfile(poses_file):
        trajectory = read_tum(poses_file)
        if len(trajectory) != len(images):
            raise BlurSplatError(Error('errorMsgPoseCountMismatch', object_id=poses_file, info=len(trajectory)))
    else:
        trajectory = [(j / FRAME_RATE, SE3Pose.identity()) for j in range(len(images))]
    frames = []
    for j, img in enumerate(images):
        depth = depths[j] if depths else Image(np.zeros((img.height, img.width, 1)))
        frames.append((img, depth, trajectory[j][1], trajectory[j][0]))
    return frames


def cmd_synth(config, out_dir, source_dir=None, seed=0):
    """Write a benchmark dataset: blurred and sharp PNGs, depth PFMs, trajectories, manifest and dataset.cfg.

    Without source_dir a reference plane scene is rendered along a lateral camera path.
    """
    cam = config.camera()
    n_out = config['synth_frames']
    stride = config['synth_stride']
    rng = np.random.default_rng(seed)
    if source_dir is None:
        dt = 1.0 / (FRAME_RATE * stride)
        step = config['synth_speed'] / stride
        scene = make_reference_scene(cam, config['plane_depth'], travel=n_out * config['synth_speed'], rng=rng)
        logger.info('rendering reference sequence: %d gaussians, %d dense frames', len(scene), n_out * stride)
        dense = render_reference_sequence(scene, cam, n_out * stride, step, dt)
    else:
        dense = _load_source_frames(source_dir)
        n_out = min(n_out, len(dense) // stride)

    for name in ('blurred', 'sharp', 'depth'):
        ensure_dir(os.path.join(out_dir, name))
    entries = []
    groundtruth = []
    endpoints = []
    sharp_scores = []
    blur_scores = []
    metric = builtin_sharpness_metric()
    errors = []
    for k in range(n_out):
        planned = _planned_class(k, config)
        n = {FrameClass.sharp: 1, FrameClass.deblurred: config['synth_window'],
             FrameClass.fail: config['synth_heavy_window']}[planned]
        center = k * stride + stride // 2
        start = center - n // 2
        if start < 0 or start + n > len(dense):
            errors.append(Error('errorMsgWindowOutOfRange', object_id=k, field='synth_stride', info=n))
            continue
        window = dense[start:start + n]
        seq = FrameSequence([frame[0] for frame in window], [frame[3] for frame in window])
        pair = make_benchmark_pair(seq, n)
        blurred = pair.sharp if n == 1 else pair.blurred
        sharp_img, depth, pose, timestamp = dense[center]
        write_png(blurred, os.path.join(out_dir, 'blurred', frame_filename(k, '.png')))
        write_png(sharp_img, os.path.join(out_dir, 'sharp', frame_filename(k, '.png')))
        write_pfm(depth, os.path.join(out_dir, 'depth', frame_filename(k, '.pfm')))
        groundtruth.append((timestamp, pose))
        if n > 1:
            endpoints.append((window[0][3], window[0][2]))
            endpoints.append((window[-1][3], window[-1][2]))
            blur_scores.append(metric.blur_score(blurred))
        sharp_scores.append(metric.blur_score(sharp_img))
        entries.append(ManifestEntry(k, planned, n, center, timestamp))
    if errors:
        raise BlurSplatErrors(errors)

    write_tum(os.path.join(out_dir, 'groundtruth.txt'), groundtruth)
    write_tum(os.path.join(out_dir, 'endpoints.txt'), endpoints)
    write_manifest(os.path.join(out_dir, 'manifest.tsv'), entries)
    if blur_scores:
        tau_sharp = calibrate_tau_sharp(sharp_scores, blur_scores)
    else:
        tau_sharp = max(sharp_scores) + 1.0
    write_dataset_config(os.path.join(out_dir, DATASET_CONFIG_NAME), [
        ('fx', cam.fx), ('fy', cam.fy), ('cx', cam.cx), ('cy', cam.cy), ('width', cam.width),
        ('height', cam.height), ('tau_sharp', tau_sharp), ('plane_depth', config['plane_depth']),
        ('exposure_fraction', (config['synth_heavy_window'] - 1) / float(stride))])
    logger.info('synthesized %d frames into %s, tau_sharp=%.6g', len(entries), out_dir, tau_sharp)
    return entries


class Dataset(object):
    def __init__(self, frames, timestamps, planned=None, sharp=None, depths=None, groundtruth=None,
                 endpoints=None, filenames=None):
        self.frames = frames
        self.timestamps = timestamps
        self.planned = planned or dict()
        self.sharp = sharp or dict()
        self.depths = depths
        # per frame SE3Pose or None, plus the raw trajectory for ATE
        self.groundtruth = groundtruth
        self.endpoints = endpoints or dict()
        self.filenames = filenames or []

    def groundtruth_poses(self):
        if self.groundtruth is None:
            return None
        gt_dict = dict(self.groundtruth)
        matches = dict(associate(dict((t, i) for i, t in enumerate(self.timestamps)), gt_dict))
        return [gt_dict[matches[t]] if t in matches else None for t in self.timestamps]


def _match_endpoints(rows, timestamps):
    endpoints = dict()
    for i in range(0, len(rows) - 1, 2):
        (t0, start), (t1, end) = rows[i], rows[i + 1]
        mid = (t0 + t1) / 2.0
        for index, timestamp in enumerate(timestamps):
            if abs(mid - timestamp) < MAX_TIME_DIFFERENCE:
                endpoints[index] = (start, end)
                break
    return endpoints


def load_dataset(config):
    files = list_files(config['frames_dir'], '.png')
    if not files:
        raise BlurSplatError(Error('errorMsgNoFrames', object_id=config['frames_dir']))
    errors = []
    frames = []
    for filename in files:
        try:
            frames.append(read_png(filename))
        except BlurSplatError as ex:
            errors.append(ex.error)
    if errors:
        raise BlurSplatErrors(errors)
    planned = dict()
    timestamps = [i / FRAME_RATE for i in range(len(frames))]
    if config['manifest_file'] and os.path.isfile(config['manifest_file']):
        entries = read_manifest(config['manifest_file'])
        if len(entries) == len(frames):
            timestamps = [entry.timestamp for entry in entries]
            planned = dict((i, entry.planned_class) for i, entry in enumerate(entries))
    groundtruth = None
    if config['poses_file'] and os.path.isfile(config['poses_file']):
        groundtruth = read_tum(config['poses_file'])
        if not planned and len(groundtruth) == len(frames):
            timestamps = [timestamp for timestamp, _ in groundtruth]
    sharp = dict()
    if config['sharp_dir'] and os.path.isdir(config['sharp_dir']):
        for i, filename in enumerate(files):
            sharp_file = os.path.join(config['sharp_dir'], os.path.basename(filename))
            if os.path.isfile(sharp_file):
                sharp[i] = read_png(sharp_file)
    depths = None
    depth_files = list_files(config['depth_dir'], '.pfm') if config['depth_dir'] else []
    if depth_files:
        if len(depth_files) != len(frames):
            raise BlurSplatError(Error('errorMsgDepthCountMismatch', object_id=config['depth_dir'],
                                       info=len(depth_files)))
        depths = [read_pfm(filename) for filename in depth_files]
    endpoints = dict()
    if config['endpoints_file'] and os.path.isfile(config['endpoints_file']):
        endpoints = _match_endpoints(read_tum(config['endpoints_file']), timestamps)
    return Dataset(frames, timestamps, planned, sharp, depths, groundtruth, endpoints,
                   [os.path.basename(filename) for filename in files])


def make_providers(config, dataset):
    poses = dataset.groundtruth_poses()
    if poses is None:
        raise BlurSplatError(Error('errorMsgMissingGroundTruth', field='poses_file', context='oracle tracker'))
    if dataset.depths is not None and config['depth_prior'] == 'dataset':
        depth = GroundTruthDepth(dataset.depths)
    else:
        depth = PlanarDepthOracle(config['plane_depth'])
    return Providers(GroundTruthTracker(poses, dataset.depths), depth,
                     MiddleFrameDeblurOracle(dataset.sharp, dataset.planned))


def fail_trajectory(index, pose, prev_pose, dataset, exposure_fraction, n_sub):
    """Exposure path of a Fail frame: known endpoints, else a symmetric span along the last motion step."""
    if index in dataset.endpoints:
        start, end = dataset.endpoints[index]
        return VirtualTrajectory(start.copy(), end.copy(), n_sub)
    if prev_pose is None:
        return VirtualTrajectory.static(pose, n_sub)
    xi = (pose * prev_pose.inverse()).log()
    half = 0.5 * exposure_fraction * xi
    return VirtualTrajectory(SE3Pose.exp(-half) * pose, SE3Pose.exp(half) * pose, n_sub)


def build_frame_records(results, dataset, config):
    """Mapping records observed with the monocular depth; tracker refinements reach the map by deformation."""
    records = []
    for i, result in enumerate(results):
        obs = srgb_to_linear(result.tracked_img)
        trajectory = None
        pose = result.pose
        if result.frame_class == FrameClass.fail:
            prev_pose = results[i - 1].pose if i > 0 else None
            trajectory = fail_trajectory(result.index, result.pose, prev_pose, dataset,
                                         config['exposure_fraction'], config['n_sub'])
            pose = None
        records.append(FrameRecord(result.index, obs, result.prior_depth, result.frame_class, pose=pose,
                                   trajectory=trajectory, timestamp=result.timestamp))
    return records


def build_initial_scene(records, cam, stride, jitter=0.0, rng=None):
    """Seed Gaussians from the first non-Fail frame, then from regions later frames see uncovered.

    Fail frames seed at their trajectory midpoint only when no other frame exists.
    """
    scene = GaussianScene.empty()
    seeding = [fr for fr in records if fr.frame_class != FrameClass.fail] or records
    for fr in seeding:
        pose = fr.estimated_pose()
        depth = fr.depth_obs
        if len(scene):
            with torch.no_grad():
                covered = render(scene, cam, pose).alpha.numpy() >= 0.5
            depth = depth.with_data(np.where(covered[:, :, None], 0.0, depth.data))
        seeded = seed_gaussians_from_depth(fr.image_obs, depth, cam, pose, stride, jitter, rng)
        if seeded:
            scene = scene.concat(GaussianScene.from_gaussians(seeded))
    logger.info('seeded %d gaussians', len(scene))
    return scene


def _render_srgb(scene, cam, pose):
    with torch.no_grad():
        color, _, _ = render(scene, cam, pose).to_images()
    return linear_to_srgb(color)


class RunResult(object):
    def __init__(self, run_dir, report, scene, records, trace):
        self.run_dir = run_dir
        self.report = report
        self.scene = scene
        self.records = records
        self.trace = trace


def _run_stage(stage, run_dir, report, fn, *args):
    started = time.perf_counter()
    logger.info('stage %s', stage.name)
    try:
        result = fn(*args)
    except BlurSplatError as ex:
        with open(os.path.join(run_dir, 'failure.txt'), 'w') as f:
            f.write('stage: {0}\n{1}\n'.format(stage.name, ex))
        report.add_notice('stage {0} failed: {1}'.format(stage.name, ex.error.get('msg_key')))
        report.write_tsv(os.path.join(run_dir, 'report.tsv'))
        raise BlurSplatStageError(stage, ex.error)
    return result, time.perf_counter() - started


def cmd_run(config, run_dir=None, seed=None):
    """Track, map, optionally optimize globally and refine; write all run artifacts."""
    run_dir = ensure_dir(run_dir or config['run_dir'])
    seed = config['seed'] if seed is None else seed
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    rng = np.random.default_rng(seed)
    cam = config.camera()
    lw = config.loss_weights()
    settings = config.settings()
    config.write_snapshot(os.path.join(run_dir, 'config.snapshot'))
    report = RunReport()

    dataset = load_dataset(config)
    providers = make_providers(config, dataset)
    detector_state = DetectorState(config.metric(), config.thresholds(), config.classifier_mode(),
                                   config['confidence_threshold'], config.forced_class())
    tracker = Tracker(providers, detector_state)

    def track_all():
        for i, img in enumerate(dataset.frames):
            tracker.track(img, i, dataset.timestamps[i])
        return tracker.results
    results, seconds = _run_stage(Stage.tracking, run_dir, report, track_all)
    report.set_stage_time(Stage.tracking, seconds, len(results))
    write_tum(os.path.join(run_dir, 'trajectory_tracked.txt'), tracker.trajectory())

    records, seconds = _run_stage(Stage.seeding, run_dir, report, build_frame_records, results, dataset, config)
    scene, seeding_seconds = _run_stage(Stage.seeding, run_dir, report, build_initial_scene, records, cam,
                                        config['seed_stride'], config['seed_jitter'], rng)
    depth_updates = tracker.depth_updates()
    if depth_updates:
        logger.info('deforming the map for %d refined keyframe depths', len(depth_updates))
        scene, deform_seconds = _run_stage(Stage.seeding, run_dir, report, apply_depth_update, records, scene, cam,
                                           depth_updates)
        seeding_seconds += deform_seconds
    report.set_stage_time(Stage.seeding, seconds + seeding_seconds, len(records))

    trace = LossTrace()
    mapping, seconds = _run_stage(Stage.mapping, run_dir, report, run_mapping, records, scene, cam, lw,
                                  config.schedule(), settings)
    report.set_stage_time(Stage.mapping, seconds, len(records))
    scene = mapping.scene
    trace.extend(mapping.trace)
    if config['global_iterations'] > 0:
        result, seconds = _run_stage(Stage.global_optimization, run_dir, report, run_global_optimization,
                                     records, scene, cam, lw, config['global_iterations'], settings)
        report.set_stage_time(Stage.global_optimization, seconds, len(records))
        scene = result.scene
        trace.extend(result.trace)
    if config['final_refinement']:
        result, seconds = _run_stage(Stage.refinement, run_dir, report, final_refinement, records, scene, cam,
                                     lw, config.schedule(config['refinement_iterations']), settings)
        report.set_stage_time(Stage.refinement, seconds, len(records))
        scene = result.scene
        trace.extend(result.trace)

    started = time.perf_counter()
    write_scene(scene, os.path.join(run_dir, 'scene.txt'))
    trace.write(os.path.join(run_dir, 'losses.csv'))
    report.loss_trace = 'losses.csv'
    estimated = [(fr.timestamp, fr.estimated_pose()) for fr in records]
    write_tum(os.path.join(run_dir, 'trajectory_est.txt'), estimated)
    renders_dir = ensure_dir(os.path.join(run_dir, 'renders'))
    proposals_dir = ensure_dir(os.path.join(run_dir, 'proposals'))
    for fr, filename in zip(records, dataset.filenames):
        rendered = _render_srgb(scene, cam, fr.estimated_pose())
        write_png(rendered, os.path.join(renders_dir, filename))
        frame_report = FrameReport(fr.index, fr.timestamp, fr.frame_class.name,
                                   dataset.planned[fr.index].name if fr.index in dataset.planned else None)
        sharp = dataset.sharp.get(fr.index)
        if sharp is not None:
            frame_report.psnr = psnr(rendered, sharp)
            frame_report.ssim = ssim(rendered, sharp)
            frame_report.psnr_input = psnr(dataset.frames[fr.index], sharp)
        report.add_frame(frame_report)
        for factor in sorted(fr.proposals):
            proposals = fr.proposals[factor]
            if not isinstance(proposals, list):
                proposals = [proposals]
            with open(os.path.join(proposals_dir, '{0:06d}_{1}.txt'.format(fr.index, factor)), 'w') as f:
                f.write(''.join(bp.to_text() for bp in proposals))
    if not dataset.sharp:
        report.add_notice('no ground-truth sharp frames, image metrics omitted')
    if dataset.groundtruth is not None:
        try:
            report.ate_rmse = ate_rmse(estimated, dataset.groundtruth)
            report.ate_matches = len(associate(dict(estimated), dict(dataset.groundtruth)))
        except BlurSplatError as ex:
            report.add_notice('ate omitted: {0}'.format(ex.error.get('msg_key')))
    else:
        report.add_notice('no ground-truth trajectory, ate omitted')
    report.set_stage_time(Stage.export, time.perf_counter() - started, len(records))
    report.write_tsv(os.path.join(run_dir, 'report.tsv'))
    report.write_summary(os.path.join(run_dir, 'summary.txt'), config['report_locale'])
    report.write_xlsx(os.path.join(run_dir, 'report.xlsx'))
    report.write_pdf(os.path.join(run_dir, 'summary.pdf'), locale=config['report_locale'])
    logger.info('run finished: %s', run_dir)
    return RunResult(run_dir, report, scene, records, trace)


def cmd_eval(run_dir, gt_dir):
    """Compare a run's renders and estimated trajectory against a dataset's sharp frames and ground truth."""
    report = RunReport()
    classes = dict()
    report_file = os.path.join(run_dir, 'report.tsv')
    if os.path.isfile(report_file):
        classes = dict((frame.index, frame) for frame in RunReport.read_tsv(report_file).frames)
    renders = list_files(os.path.join(run_dir, 'renders'), '.png')
    sharp_dir = os.path.join(gt_dir, 'sharp')
    for i, filename in enumerate(renders):
        previous = classes.get(i)
        frame_report = FrameReport(i, previous.timestamp if previous else i / FRAME_RATE,
                                   previous.frame_class if previous else None,
                                   previous.planned_class if previous else None)
        sharp_file = os.path.join(sharp_dir, os.path.basename(filename))
        if os.path.isfile(sharp_file):
            rendered = read_png(filename)
            sharp = read_png(sharp_file)
            frame_report.psnr = psnr(rendered, sharp)
            frame_report.ssim = ssim(rendered, sharp)
        else:
            report.add_notice('no ground truth for {0}, metrics omitted'.format(os.path.basename(filename)))
        report.add_frame(frame_report)
    est_file = os.path.join(run_dir, 'trajectory_est.txt')
    gt_file = os.path.join(gt_dir, 'groundtruth.txt')
    if os.path.isfile(est_file) and os.path.isfile(gt_file):
        est = read_tum(est_file)
        gt = read_tum(gt_file)
        report.ate_matches = len(associate(dict(est), dict(gt)))
        try:
            report.ate_rmse = ate_rmse(est, gt)
        except BlurSplatError as ex:
            report.add_notice('ate omitted: {0}'.format(ex.error.get('msg_key')))
    else:
        report.add_notice('trajectory missing, ate omitted')
    report.write_tsv(os.path.join(run_dir, 'eval.tsv'))
    return report


def load_pairs(pairs_dir):
    """(sharp, blurred) images with matching file names in pairs_dir/sharp and pairs_dir/blurred."""
    pairs = []
    for blurred_file in list_files(os.path.join(pairs_dir, 'blurred'), '.png'):
        sharp_file = os.path.join(pairs_dir, 'sharp', os.path.basename(blurred_file))
        if os.path.isfile(sharp_file):
            pairs.append((read_png(sharp_file), read_png(blurred_file)))
    if not pairs:
        raise BlurSplatError(Error('errorMsgNoPairs', object_id=pairs_dir))
    return pairs


def cmd_bench_metrics(pairs_dir, plugins, out_file=None):
    """Accuracy, effect size and consistency per plugin, sorted by consistency descending."""
    pairs = load_pairs(pairs_dir)
    rows = [metric_table_row(score_pairs(pairs, plugin)) for plugin in plugins]
    rows.sort(key=lambda row: (row['consistency'] is None, -(row['consistency'] or 0.0), row['metric']))
    if out_file:
        with open(out_file, 'w') as f:
            f.write('metric\taccuracy\teffect_size\tconsistency\tflag\n')
            for row in rows:
                f.write('\t'.join('' if row[key] is None else
                                  ('{0:.4f}'.format(row[key]) if isinstance(row[key], float) else str(row[key]))
                                  for key in ('metric', 'accuracy', 'effect_size', 'consistency', 'flag')) + '\n')
    return rows


def cmd_render(scene, cam, pose, out_file, depth_file=None):
    """Render a scene from a pose to an sRGB PNG (and optionally the depth to a PFM)."""
    with torch.no_grad():
        color, depth, _ = render(scene, cam, pose).to_images()
    write_png(linear_to_srgb(color), out_file)
    if depth_file:
        write_pfm(depth, depth_file)

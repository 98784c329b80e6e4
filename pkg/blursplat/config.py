"""Flat key = value run configuration with typed keys and expression values.

Layers are applied in order (later wins): package default.cfg, the dataset's
dataset.cfg, a user file and --set overrides. Numeric values may be expressions
evaluated with simpleeval against the other numeric keys, e.g.
``lambda_depth = 1 - lambda_rgb``.
"""
import logging
import math
import os

from simpleeval import simple_eval, NameNotDefined, FunctionNotDefined
from simpleeval import DEFAULT_FUNCTIONS as EVAL_DEFAULT_FUNCTIONS

from .detector import ScoresFileMetric, builtin_sharpness_metric
from .enums import *
from .errors import Error, BlurSplatError, BlurSplatErrors
from .optimizer import OptimizationSettings, ScaleLevel
from .structs import Camera, ClassifierThresholds, LossWeights
from .utils import parse_bool, parse_list

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_FILE = os.path.join(os.path.dirname(__file__), 'data', 'default.cfg')
DATASET_CONFIG_NAME = 'dataset.cfg'

# path keys resolved relative to dataset_dir; run_dir is an output
DATASET_PATH_KEYS = ('frames_dir', 'depth_dir', 'poses_file', 'endpoints_file', 'manifest_file', 'sharp_dir')


class ConfigKey(object):
    def __init__(self, name, value_type, choices=None, required_path=False):
        self.name = name
        self.value_type = value_type
        self.choices = choices
        self.required_path = required_path


def _keys(value_type, *names, **kwargs):
    return [ConfigKey(name, value_type, **kwargs) for name in names]


SCHEMA = dict((key.name, key) for key in (
    _keys(ConfigValueType.string, 'dataset_dir', 'frames_dir', 'depth_dir', 'poses_file', 'endpoints_file',
          'manifest_file', 'sharp_dir', 'run_dir', 'scores_file') +
    _keys(ConfigValueType.number, 'fx', 'fy', 'cx', 'cy', 'tau_sharp', 'tau_success', 'weight_laplacian',
          'lapvar_eps', 'confidence_threshold', 'lambda_rgb', 'lambda_depth', 'lambda_sparse', 'lambda_reg',
          'w_sharp', 'w_deblur', 'w_fail', 'lr_means', 'lr_scales', 'lr_rotations', 'lr_opacities', 'lr_colors',
          'lr_exposure', 'lr_proposal', 'lr_corrections', 'lr_endpoints', 'seed_jitter', 'exposure_fraction',
          'plane_depth', 'synth_speed') +
    _keys(ConfigValueType.integer, 'width', 'height', 'iterations', 'refinement_iterations', 'global_iterations',
          'grid_factor', 'n_sub', 'log_every', 'seed_stride', 'synth_frames', 'synth_stride', 'synth_window',
          'synth_heavy_window', 'seed') +
    _keys(ConfigValueType.int_list, 'scales', 'kernel_sizes', 'synth_sharp_frames', 'synth_heavy_frames') +
    _keys(ConfigValueType.boolean, 'enable_fallback', 'final_refinement') +
    [ConfigKey('classifier_mode', ConfigValueType.choice, choices=[m.name for m in ClassifierMode]),
     ConfigKey('provider', ConfigValueType.choice, choices=[p.name for p in ProviderKind]),
     ConfigKey('metric', ConfigValueType.choice, choices=['lapvar']),
     ConfigKey('scores_polarity', ConfigValueType.choice, choices=[p.name for p in Polarity]),
     ConfigKey('force_class', ConfigValueType.choice, choices=['none', 'sharp', 'fail']),
     ConfigKey('depth_prior', ConfigValueType.choice, choices=['dataset', 'planar']),
     ConfigKey('report_locale', ConfigValueType.string)]))

EVAL_FUNCTIONS = EVAL_DEFAULT_FUNCTIONS.copy()
EVAL_FUNCTIONS.update(sqrt=math.sqrt, log=math.log, exp=math.exp, ceil=math.ceil, floor=math.floor,
                      min=min, max=max, abs=abs)
EVAL_NAMES = dict(pi=math.pi, e=math.e)


def read_config_lines(filename, source=None):
    """Return list of (key, raw value, location) entries of a key = value file."""
    entries = []
    with open(filename, 'r') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            location = '{0}:{1}'.format(source or filename, line_number)
            if '=' not in line:
                entries.append((None, line, location))
                continue
            key, value = line.split('=', 1)
            entries.append((key.strip(), value.strip(), location))
    return entries


def parse_override(text):
    if '=' not in text:
        return None, text, '--set'
    key, value = text.split('=', 1)
    return key.strip(), value.strip(), '--set'


def evaluate_expression(expr, names, key):
    try:
        return simple_eval(expr, names=names, functions=EVAL_FUNCTIONS)
    except NameNotDefined as ex:
        raise BlurSplatError(Error('errorMsgInvalidExpressionNameNotDefined', field=key, info=ex.name,
                                   context=expr))
    except FunctionNotDefined as ex:
        raise BlurSplatError(Error('errorMsgInvalidExpressionFuncNotDefined', field=key,
                                   info=getattr(ex, 'func_name'), context=expr))
    except SyntaxError as ex:
        raise BlurSplatError(Error('errorMsgInvalidExpression', field=key, info=ex.msg, context=expr))
    except Exception as ex:
        raise BlurSplatError(Error('errorMsgInvalidExpression', field=key, info=str(ex), context=expr))


class RunConfig(object):
    """Resolved configuration values plus the raw text they came from."""

    def __init__(self, values, raw):
        self.values = values
        self.raw = raw

    @staticmethod
    def load(config_file=None, dataset_dir=None, overrides=(), check_paths=True):
        """Layer configuration sources, resolve and verify all values.

        :raise BlurSplatErrors: with every problem found
        """
        errors = []
        raw = dict()
        sources = [read_config_lines(DEFAULT_CONFIG_FILE, 'default.cfg')]
        override_entries = [parse_override(text) for text in overrides]
        user_entries = []
        if config_file:
            if os.path.isfile(config_file):
                user_entries = read_config_lines(config_file)
            else:
                errors.append(Error('errorMsgConfigFileNotFound', object_id=config_file))
        if dataset_dir is None:
            for entries in (override_entries, user_entries, sources[0]):
                found = [value for key, value, _ in entries if key == 'dataset_dir']
                if found:
                    dataset_dir = found[-1]
                    break
        if dataset_dir:
            dataset_cfg = os.path.join(dataset_dir, DATASET_CONFIG_NAME)
            if os.path.isfile(dataset_cfg):
                sources.append(read_config_lines(dataset_cfg))
        sources.append(user_entries)
        sources.append(override_entries)
        for entries in sources:
            for key, value, location in entries:
                if key is None:
                    errors.append(Error('errorMsgInvalidConfigLine', object_id=location, info=value))
                elif key not in SCHEMA:
                    errors.append(Error('errorMsgUnknownConfigKey', object_id=location, field=key))
                else:
                    raw[key] = value
        if dataset_dir is not None:
            raw['dataset_dir'] = dataset_dir
        values = RunConfig._resolve(raw, errors)
        config = RunConfig(values, raw)
        if not errors:
            config._resolve_paths()
            errors.extend(config.verify(check_paths))
        if errors:
            raise BlurSplatErrors(errors)
        return config

    @staticmethod
    def _resolve(raw, errors):
        values = dict()
        numeric = dict(EVAL_NAMES)
        pending = [name for name in SCHEMA if name in raw]
        missing = [name for name in SCHEMA if name not in raw]
        for name in missing:
            errors.append(Error('errorMsgMissingConfigKey', field=name))
        # numeric keys may reference each other, resolve until no further progress
        while pending:
            progress = False
            failed = []
            for name in pending:
                try:
                    values[name] = RunConfig._convert(SCHEMA[name], raw[name], numeric)
                except BlurSplatError as ex:
                    failed.append((name, ex.error))
                    continue
                if isinstance(values[name], (int, float)) and not isinstance(values[name], bool):
                    numeric[name] = values[name]
                progress = True
            pending = [name for name, _ in failed]
            if not progress:
                errors.extend(error for _, error in failed)
                break
        return values

    @staticmethod
    def _convert(key, text, names):
        if key.value_type == ConfigValueType.string:
            return text
        if key.value_type == ConfigValueType.choice:
            if text not in key.choices:
                raise BlurSplatError(Error('errorMsgInvalidChoice', field=key.name, info=text,
                                           context=', '.join(key.choices)))
            return text
        if key.value_type == ConfigValueType.boolean:
            try:
                return parse_bool(text)
            except ValueError:
                raise BlurSplatError(Error('errorMsgInvalidBoolean', field=key.name, info=text))
        if key.value_type in (ConfigValueType.int_list, ConfigValueType.float_list):
            items = parse_list(text, str) if text else []
            values = [evaluate_expression(item, names, key.name) for item in items]
            item_type = int if key.value_type == ConfigValueType.int_list else float
            return [RunConfig._cast(item_type, value, key.name) for value in values]
        value = evaluate_expression(text, names, key.name)
        return RunConfig._cast(int if key.value_type == ConfigValueType.integer else float, value, key.name)

    @staticmethod
    def _cast(item_type, value, name):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BlurSplatError(Error('errorMsgInvalidNumber', field=name, info=str(value)))
        if item_type == int and value != int(value):
            raise BlurSplatError(Error('errorMsgInvalidInteger', field=name, info=value))
        return item_type(value)

    def _resolve_paths(self):
        dataset_dir = self.values.get('dataset_dir')
        if not dataset_dir:
            return
        for key in DATASET_PATH_KEYS:
            value = self.values.get(key)
            if value and not os.path.isabs(value):
                self.values[key] = os.path.join(dataset_dir, value)

    def verify(self, check_paths=True):
        errors = []
        v = self.values
        for key in ('scales', 'kernel_sizes'):
            if not v[key]:
                errors.append(Error('errorMsgEmptyList', field=key))
        for kernel_size in v['kernel_sizes']:
            if kernel_size % 2 == 0 or kernel_size < 1:
                errors.append(Error('errorMsgEvenKernelSize', field='kernel_sizes', info=kernel_size))
        for factor in v['scales']:
            if factor < 1:
                errors.append(Error('errorMsgInvalidFactor', field='scales', info=factor))
        if len(v['scales']) != len(v['kernel_sizes']):
            errors.append(Error('errorMsgScheduleLengthMismatch', field='kernel_sizes'))
        for key in ('n_sub', 'grid_factor', 'seed_stride', 'synth_stride', 'synth_window', 'synth_heavy_window'):
            if v[key] < 1:
                errors.append(Error('errorMsgValueTooSmall', field=key, info=v[key]))
        for key in ('iterations', 'refinement_iterations', 'global_iterations', 'log_every'):
            if v[key] < 0:
                errors.append(Error('errorMsgValueTooSmall', field=key, info=v[key]))
        for key in ('lr_means', 'lr_scales', 'lr_rotations', 'lr_opacities', 'lr_colors', 'lr_exposure',
                    'lr_proposal', 'lr_corrections', 'lr_endpoints'):
            if v[key] <= 0:
                errors.append(Error('errorMsgInvalidLearningRate', field=key, info=v[key]))
        errors.extend(self.loss_weights().verify())
        try:
            self.camera()
        except BlurSplatError as ex:
            errors.append(ex.error)
        try:
            self.thresholds()
        except BlurSplatError as ex:
            errors.append(ex.error)
        if v['provider'] == ProviderKind.external_scores.name and not v['scores_file']:
            errors.append(Error('errorMsgMissingScoresFile', field='scores_file'))
        if check_paths:
            keys = list(DATASET_PATH_KEYS) + ['scores_file']
            for key in keys:
                path = v.get(key)
                if path and not os.path.exists(path) and key in self.required_paths():
                    errors.append(Error('errorMsgPathNotFound', field=key, info=path))
        return errors

    def required_paths(self):
        required = ['frames_dir']
        if self.values['provider'] == ProviderKind.external_scores.name:
            required.append('scores_file')
        return required

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def camera(self):
        v = self.values
        return Camera(v['fx'], v['fy'], v['cx'], v['cy'], v['width'], v['height'])

    def thresholds(self):
        v = self.values
        return ClassifierThresholds(v['tau_sharp'], v['tau_success'], v['weight_laplacian'], v['lapvar_eps'])

    def loss_weights(self):
        v = self.values
        return LossWeights(v['lambda_rgb'], v['lambda_depth'], v['lambda_sparse'], v['lambda_reg'],
                           v['w_sharp'], v['w_deblur'], v['w_fail'])

    def schedule(self, iterations=None):
        if iterations is None:
            iterations = self.values['iterations']
        return [ScaleLevel(factor, kernel_size, iterations)
                for factor, kernel_size in zip(self.values['scales'], self.values['kernel_sizes'])]

    def settings(self):
        v = self.values
        return OptimizationSettings(
            lr_means=v['lr_means'], lr_scales=v['lr_scales'], lr_rotations=v['lr_rotations'],
            lr_opacities=v['lr_opacities'], lr_colors=v['lr_colors'], lr_exposure=v['lr_exposure'],
            lr_proposal=v['lr_proposal'], lr_corrections=v['lr_corrections'], lr_endpoints=v['lr_endpoints'],
            grid_factor=v['grid_factor'], log_every=v['log_every'], enable_fallback=v['enable_fallback'])

    def metric(self):
        if self.values['provider'] == ProviderKind.external_scores.name:
            return ScoresFileMetric(self.values['scores_file'], polarity=Polarity[self.values['scores_polarity']])
        return builtin_sharpness_metric()

    def classifier_mode(self):
        return ClassifierMode[self.values['classifier_mode']]

    def forced_class(self):
        force = self.values['force_class']
        return None if force == 'none' else FrameClass[force]

    def snapshot(self):
        """Resolved values as key = value text, in sorted key order."""
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, list):
                value = ', '.join(str(item) for item in value)
            elif isinstance(value, bool):
                value = 'true' if value else 'false'
            elif isinstance(value, float):
                value = repr(value)
            lines.append('{0} = {1}'.format(key, value))
        return '\n'.join(lines) + '\n'

    def write_snapshot(self, filename):
        with open(filename, 'w') as f:
            f.write(self.snapshot())


def write_dataset_config(filename, values):
    """Write dataset specific values (intrinsics, calibrated thresholds) as key = value lines."""
    with open(filename, 'w') as f:
        f.write('# written by blursplat synth\n')
        for key, value in values:
            if isinstance(value, (list, tuple)):
                value = ', '.join(str(item) for item in value)
            elif isinstance(value, float):
                value = repr(value)
            f.write('{0} = {1}\n'.format(key, value))

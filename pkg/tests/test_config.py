import pytest

from blursplat.config import RunConfig, parse_override, read_config_lines, write_dataset_config
from blursplat.detector import ScoresFileMetric
from blursplat.enums import *
from blursplat.errors import BlurSplatError, BlurSplatErrors


def msg_keys(exc_info):
    return [error['msg_key'] for error in exc_info.value.errors]


def load(*overrides, **kwargs):
    kwargs.setdefault('check_paths', False)
    return RunConfig.load(overrides=list(overrides), **kwargs)


class TestLayering:
    def test_defaults(self):
        config = load()
        assert config['scales'] == [4, 2, 1]
        assert config['kernel_sizes'] == [3, 5, 9]
        assert config['enable_fallback'] is True
        assert config['fy'] == 80.0
        assert config['cx'] == pytest.approx(31.5)
        assert config['w_fail'] == config['w_deblur']
        assert config.forced_class() is None
        assert config.classifier_mode() == ClassifierMode.threshold

    def test_expression_over_other_keys(self):
        config = load('lambda_rgb = 0.75', 'lambda_depth = 1 - lambda_rgb')
        assert config['lambda_depth'] == pytest.approx(0.25)
        assert config.loss_weights().lambda_depth == pytest.approx(0.25)

    def test_later_layers_win(self, tmp_path):
        dataset_dir = tmp_path / 'data'
        dataset_dir.mkdir()
        write_dataset_config(str(dataset_dir / 'dataset.cfg'), [('tau_sharp', 12.5), ('width', 32), ('height', 24)])
        user = tmp_path / 'user.cfg'
        user.write_text('width = 40\n# comment\n\nn_sub = 5  # trailing comment\n')
        config = RunConfig.load(str(user), dataset_dir=str(dataset_dir), overrides=['n_sub=7'], check_paths=False)
        assert config['tau_sharp'] == 12.5
        assert config['width'] == 40
        assert config['height'] == 24
        assert config['n_sub'] == 7
        assert config['frames_dir'] == str(dataset_dir / 'blurred')
        assert config.camera().cy == pytest.approx(11.5)

    def test_schedule_and_settings(self):
        config = load('iterations = 3', 'lr_colors = 0.5', 'enable_fallback = no')
        schedule = config.schedule()
        assert [(level.factor, level.kernel_size, level.iterations) for level in schedule] ==\
            [(4, 3, 3), (2, 5, 3), (1, 9, 3)]
        assert [level.iterations for level in config.schedule(1)] == [1, 1, 1]
        settings = config.settings()
        assert settings.lr_colors == 0.5
        assert settings.enable_fallback is False

    def test_forced_class(self):
        assert load('force_class = fail').forced_class() == FrameClass.fail

    def test_external_scores_metric(self, tmp_path):
        scores = tmp_path / 'scores.tsv'
        scores.write_text('a.png\t1.0\n')
        config = load('provider = external_scores', 'scores_file = ' + str(scores),
                      'scores_polarity = higher_is_blurrier')
        metric = config.metric()
        assert isinstance(metric, ScoresFileMetric)
        assert metric.polarity == Polarity.higher_is_blurrier


class TestErrors:
    def test_unknown_key(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('no_such_key = 1')
        assert msg_keys(exc_info) == ['errorMsgUnknownConfigKey']
        assert exc_info.value.errors[0]['field'] == 'no_such_key'

    def test_line_without_assignment(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('width')
        assert 'errorMsgInvalidConfigLine' in msg_keys(exc_info)

    def test_even_kernel_size(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('kernel_sizes = 3, 4, 9')
        assert msg_keys(exc_info) == ['errorMsgEvenKernelSize']

    def test_schedule_length_mismatch(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('scales = 2, 1')
        assert msg_keys(exc_info) == ['errorMsgScheduleLengthMismatch']

    def test_weight_ordering(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('w_sharp = 0.5', 'w_fail = 0.25')
        assert msg_keys(exc_info) == ['errorMsgSharpWeightNotDominant', 'errorMsgBlurWeightsDiffer']

    def test_errors_are_collected(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('n_sub = 0', 'lr_means = -1', 'enable_fallback = maybe')
        keys = msg_keys(exc_info)
        assert 'errorMsgInvalidBoolean' in keys

    def test_verify_collects_all(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('n_sub = 0', 'lr_means = -1')
        assert set(msg_keys(exc_info)) == {'errorMsgValueTooSmall', 'errorMsgInvalidLearningRate'}

    def test_undefined_name(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('lambda_depth = 1 - lambda_green')
        assert msg_keys(exc_info) == ['errorMsgInvalidExpressionNameNotDefined']
        assert exc_info.value.errors[0]['info'] == 'lambda_green'

    def test_integer_required(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('n_sub = 2.5')
        assert msg_keys(exc_info) == ['errorMsgInvalidInteger']

    def test_invalid_choice(self):
        with pytest.raises(BlurSplatErrors) as exc_info:
            load('classifier_mode = guess')
        assert msg_keys(exc_info) == ['errorMsgInvalidChoice']

    def test_config_file_not_found(self, tmp_path):
        with pytest.raises(BlurSplatErrors) as exc_info:
            RunConfig.load(str(tmp_path / 'missing.cfg'), check_paths=False)
        assert msg_keys(exc_info) == ['errorMsgConfigFileNotFound']

    def test_missing_frames_dir(self, tmp_path):
        with pytest.raises(BlurSplatErrors) as exc_info:
            RunConfig.load(dataset_dir=str(tmp_path))
        assert msg_keys(exc_info) == ['errorMsgPathNotFound']
        assert exc_info.value.errors[0]['field'] == 'frames_dir'

    def test_external_scores_need_file(self):
        with pytest.raises(BlurSplatError) as exc_info:
            load('provider = external_scores')
        assert exc_info.value.error['msg_key'] == 'errorMsgMissingScoresFile'


class TestSnapshot:
    def test_snapshot_reloads(self, tmp_path):
        config = load('lambda_rgb = 0.8', 'lambda_depth = 1 - lambda_rgb', 'enable_fallback = false')
        filename = tmp_path / 'config.snapshot'
        config.write_snapshot(str(filename))
        text = filename.read_text()
        assert 'scales = 4, 2, 1\n' in text
        assert 'enable_fallback = false\n' in text
        keys = [line.split(' = ')[0] for line in text.splitlines()]
        assert keys == sorted(keys)
        reloaded = RunConfig.load(str(filename), check_paths=False)
        assert reloaded.values == config.values

    def test_read_lines_and_override(self, tmp_path):
        filename = tmp_path / 'a.cfg'
        filename.write_text('a = 1\nbroken\n')
        entries = read_config_lines(str(filename), 'a.cfg')
        assert entries == [('a', '1', 'a.cfg:1'), (None, 'broken', 'a.cfg:2')]
        assert parse_override(' n_sub = 4 ') == ('n_sub', '4', '--set')

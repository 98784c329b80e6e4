import math

import pytest

from blursplat.enums import *
from blursplat.errors import BlurSplatError
from blursplat.report import FrameReport, RunReport


@pytest.fixture
def report():
    report = RunReport()
    report.add_frame(FrameReport(0, 0.0, 'sharp', 'sharp', 31.25, 0.9, 30.0))
    report.add_frame(FrameReport(1, 1 / 30.0, 'deblurred', 'deblurred', float('inf'), 1.0, 25.5))
    report.add_frame(FrameReport(2, 2 / 30.0, 'fail', 'deblurred', None, None, None))
    report.ate_rmse = 0.0123
    report.ate_matches = 3
    report.loss_trace = 'losses.csv'
    report.set_stage_time(Stage.tracking, 2.0, 3)
    report.add_notice('global optimization skipped')
    return report


class TestRunReport:
    def test_tsv_round_trip(self, report, tmp_path):
        filename = str(tmp_path / 'report.tsv')
        report.write_tsv(filename)
        loaded = RunReport.read_tsv(filename)
        assert [frame.row() for frame in loaded.frames] == [frame.row() for frame in report.frames]
        assert loaded.ate_rmse == 0.0123
        assert loaded.ate_matches == 3
        assert loaded.loss_trace == 'losses.csv'
        assert loaded.notices == ['global optimization skipped']

    def test_tsv_has_no_timings(self, report, tmp_path):
        filename = tmp_path / 'report.tsv'
        report.write_tsv(str(filename))
        text = filename.read_text()
        assert 'tracking' not in text
        assert text.splitlines()[0] == 'frame\ttimestamp\tclass\tplanned\tpsnr\tssim\tpsnr_input'

    def test_invalid_file(self, tmp_path):
        filename = tmp_path / 'report.tsv'
        filename.write_text('something else\n')
        with pytest.raises(BlurSplatError) as exc_info:
            RunReport.read_tsv(str(filename))
        assert exc_info.value.error['msg_key'] == 'errorMsgInvalidReportFile'

    def test_aggregates(self, report):
        assert report.mean_psnr() == math.inf
        assert report.mean_ssim() == pytest.approx(0.95)
        assert report.mean_psnr_input() == pytest.approx(27.75)
        assert report.class_counts() == {'sharp': 1, 'deblurred': 1, 'fail': 1}
        assert report.plan_agreement() == pytest.approx(200.0 / 3)
        assert report.stage_fps('tracking') == 1.5
        assert report.stage_fps('mapping') is None

    def test_summary_locale(self, report):
        report.ate_rmse = 1234.5
        lines = report.summary_lines('de_DE')
        assert 'ATE RMSE [m]: 1.234,500000 (3 matched poses)' in lines
        assert 'mean PSNR render [dB]: inf' in lines
        assert 'tracking: 2,00 s, 1,50 frames/s' in lines
        assert lines[-1] == 'notice: global optimization skipped'
        assert 'ATE RMSE [m]: 1,234.500000 (3 matched poses)' in report.summary_lines('en_US')

    def test_summary_without_values(self):
        lines = RunReport().summary_lines()
        assert lines[0] == 'frames: 0'
        assert 'ATE RMSE [m]: n/a (0 matched poses)' in lines

    def test_exports(self, report, tmp_path):
        xlsx = tmp_path / 'report.xlsx'
        pdf = tmp_path / 'summary.pdf'
        summary = tmp_path / 'summary.txt'
        report.write_xlsx(str(xlsx))
        report.write_pdf(str(pdf))
        report.write_summary(str(summary))
        assert xlsx.read_bytes()[:2] == b'PK'
        assert pdf.read_bytes()[:5] == b'%PDF-'
        assert summary.read_text().startswith('frames: 3\n')

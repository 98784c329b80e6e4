"""Run report: per-frame classes and image metrics, trajectory error and stage timings.

report.tsv holds no timings so that identical runs produce identical files; timings
only appear in the human-readable summary, spreadsheet and pdf exports.
"""
import logging
import math

from babel.numbers import format_decimal
import fpdf
import xlsxwriter

from .enums import *
from .errors import Error, BlurSplatError

logger = logging.getLogger(__name__)

TSV_HEADER = ('frame', 'timestamp', 'class', 'planned', 'psnr', 'ssim', 'psnr_input')
DECIMAL_PATTERN = '#,##0.00'
PRECISE_PATTERN = '#,##0.000000'


def _format_value(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_float(text):
    return float(text) if text else None


class FrameReport(object):
    def __init__(self, index, timestamp, frame_class, planned_class=None, psnr=None, ssim=None, psnr_input=None):
        self.index = index
        self.timestamp = timestamp
        self.frame_class = frame_class
        self.planned_class = planned_class
        # psnr/ssim of the render at the estimated pose against the ground-truth sharp frame
        self.psnr = psnr
        self.ssim = ssim
        # psnr of the observed input frame against the same ground truth
        self.psnr_input = psnr_input

    def row(self):
        return [self.index, float(self.timestamp), self.frame_class or '', self.planned_class or '',
                self.psnr, self.ssim, self.psnr_input]


class RunReport(object):
    def __init__(self):
        self.frames = []
        self.ate_rmse = None
        self.ate_matches = 0
        self.loss_trace = None
        self.stage_seconds = dict()
        self.stage_frames = dict()
        self.notices = []

    def add_frame(self, frame_report):
        self.frames.append(frame_report)

    def add_notice(self, text):
        logger.warning(text)
        self.notices.append(text)

    def set_stage_time(self, stage, seconds, frame_count):
        self.stage_seconds[stage.name] = seconds
        self.stage_frames[stage.name] = frame_count

    def stage_fps(self, stage_name):
        seconds = self.stage_seconds.get(stage_name)
        if not seconds:
            return None
        return self.stage_frames.get(stage_name, 0) / seconds

    @staticmethod
    def _mean(values):
        values = [value for value in values if value is not None]
        if not values:
            return None
        return sum(values) / len(values)

    def mean_psnr(self):
        return self._mean([frame.psnr for frame in self.frames])

    def mean_ssim(self):
        return self._mean([frame.ssim for frame in self.frames])

    def mean_psnr_input(self):
        return self._mean([frame.psnr_input for frame in self.frames])

    def class_counts(self):
        counts = dict()
        for frame in self.frames:
            counts[frame.frame_class] = counts.get(frame.frame_class, 0) + 1
        return counts

    def plan_agreement(self):
        """Percentage of frames with a planned class whose class matches the plan."""
        planned = [frame for frame in self.frames if frame.planned_class]
        if not planned:
            return None
        return 100.0 * sum(1 for frame in planned if frame.planned_class == frame.frame_class) / len(planned)

    def aggregates(self):
        return [('ate_rmse', self.ate_rmse), ('ate_matches', self.ate_matches), ('mean_psnr', self.mean_psnr()),
                ('mean_ssim', self.mean_ssim()), ('mean_psnr_input', self.mean_psnr_input()),
                ('plan_agreement', self.plan_agreement()), ('loss_trace', self.loss_trace)]

    def write_tsv(self, filename):
        with open(filename, 'w') as f:
            f.write('\t'.join(TSV_HEADER) + '\n')
            for frame in self.frames:
                f.write('\t'.join(_format_value(value) for value in frame.row()) + '\n')
            for key, value in self.aggregates():
                f.write('# {0}\t{1}\n'.format(key, _format_value(value)))
            for notice in self.notices:
                f.write('# notice\t{0}\n'.format(notice))

    @staticmethod
    def read_tsv(filename):
        report = RunReport()
        with open(filename, 'r') as f:
            lines = [line.rstrip('\n') for line in f]
        if not lines or tuple(lines[0].split('\t')) != TSV_HEADER:
            raise BlurSplatError(Error('errorMsgInvalidReportFile', object_id=filename))
        for line in lines[1:]:
            if line.startswith('# '):
                key, _, value = line[2:].partition('\t')
                if key == 'notice':
                    report.notices.append(value)
                elif key == 'ate_rmse':
                    report.ate_rmse = _parse_float(value)
                elif key == 'ate_matches':
                    report.ate_matches = int(value)
                elif key == 'loss_trace':
                    report.loss_trace = value or None
                continue
            cells = line.split('\t')
            report.add_frame(FrameReport(int(cells[0]), float(cells[1]), cells[2] or None, cells[3] or None,
                                         _parse_float(cells[4]), _parse_float(cells[5]), _parse_float(cells[6])))
        return report

    def summary_lines(self, locale='en_US'):
        def number(value, pattern=DECIMAL_PATTERN):
            if value is None:
                return 'n/a'
            if math.isinf(value):
                return 'inf'
            return format_decimal(value, pattern, locale=locale)

        lines = ['frames: {0}'.format(len(self.frames))]
        counts = self.class_counts()
        lines.append('classes: ' + ', '.join('{0} {1}'.format(name, counts[name]) for name in sorted(counts)))
        agreement = self.plan_agreement()
        if agreement is not None:
            lines.append('classes matching plan: {0} %'.format(number(agreement)))
        lines.append('ATE RMSE [m]: {0} ({1} matched poses)'.format(number(self.ate_rmse, PRECISE_PATTERN),
                                                                  self.ate_matches))
        lines.append('mean PSNR render [dB]: {0}'.format(number(self.mean_psnr())))
        lines.append('mean PSNR input [dB]: {0}'.format(number(self.mean_psnr_input())))
        lines.append('mean SSIM render: {0}'.format(number(self.mean_ssim(), '#,##0.0000')))
        for stage in Stage:
            if stage.name in self.stage_seconds:
                fps = self.stage_fps(stage.name)
                lines.append('{0}: {1} s, {2} frames/s'.format(
                    stage.name, number(self.stage_seconds[stage.name]), number(fps)))
        for notice in self.notices:
            lines.append('notice: ' + notice)
        return lines

    def write_summary(self, filename, locale='en_US'):
        with open(filename, 'w') as f:
            f.write('\n'.join(self.summary_lines(locale)) + '\n')

    def write_xlsx(self, filename):
        workbook = xlsxwriter.Workbook(filename)
        worksheet = workbook.add_worksheet('frames')
        bold = workbook.add_format(dict(bold=True))
        number_format = workbook.add_format(dict(num_format='0.000'))
        column_widths = [len(title) for title in TSV_HEADER]
        for col, title in enumerate(TSV_HEADER):
            worksheet.write(0, col, title, bold)
        for row, frame in enumerate(self.frames, start=1):
            for col, value in enumerate(frame.row()):
                if isinstance(value, float) and math.isinf(value):
                    value = 'inf'
                if value is None:
                    continue
                worksheet.write(row, col, value, number_format if isinstance(value, float) else None)
                column_widths[col] = max(column_widths[col], len(_format_value(value)))
        for col, width in enumerate(column_widths):
            # width is the number of characters in the default font
            worksheet.set_column(col, col, min(width, 20) + 2)

        summary = workbook.add_worksheet('summary')
        row = 0
        for key, value in self.aggregates():
            summary.write(row, 0, key, bold)
            if isinstance(value, float) and math.isinf(value):
                value = 'inf'
            if value is not None:
                summary.write(row, 1, value)
            row += 1
        for stage_name, seconds in sorted(self.stage_seconds.items()):
            summary.write(row, 0, stage_name + '_seconds', bold)
            summary.write(row, 1, seconds)
            row += 1
        summary.set_column(0, 0, 20)
        workbook.close()

    def write_pdf(self, filename, title='blursplat run', locale='en_US'):
        pdf_doc = fpdf.FPDF(orientation='P', unit='pt', format='A4')
        pdf_doc.set_margins(40, 40)
        pdf_doc.add_page()
        pdf_doc.set_font('helvetica', 'B', 16)
        pdf_doc.cell(0, 24, title, 0, 1)
        pdf_doc.set_font('helvetica', '', 10)
        for line in self.summary_lines(locale):
            pdf_doc.cell(0, 14, line, 0, 1)
        pdf_doc.ln(10)
        pdf_doc.set_font('courier', 'B', 9)
        widths = (40, 70, 70, 70, 60, 60, 60)
        for title_text, width in zip(TSV_HEADER, widths):
            pdf_doc.cell(width, 12, title_text, 1, 0)
        pdf_doc.ln()
        pdf_doc.set_font('courier', '', 9)
        for frame in self.frames:
            cells = [str(frame.index), '{0:.4f}'.format(frame.timestamp), frame.frame_class or '',
                     frame.planned_class or ''] +\
                ['' if value is None else ('inf' if math.isinf(value) else '{0:.3f}'.format(value))
                 for value in (frame.psnr, frame.ssim, frame.psnr_input)]
            for text, width in zip(cells, widths):
                pdf_doc.cell(width, 12, text, 1, 0)
            pdf_doc.ln()
        pdf_doc.output(name=filename, dest='F')

import json
from pathlib import Path

from evaluation.figures import emit_curve
from skeletons.commands import PoseLiftCommand
from skeletons.exceptions import DatasetEmptyError, FormatError
from training.forms import PlotForm
from training.losses import TERMS


def read_metrics(path):
    records = []
    with Path(path).open() as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(exc.msg, path=path, line=number) from exc
    if not records:
        raise DatasetEmptyError(f'{path}: metrics log is empty')
    return records


class Command(PoseLiftCommand):
    help = 'Plot every loss term and the validation P-MPJPE of a training metrics log.'
    form_class = PlotForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--metrics', type=str, required=True, help='metrics.jsonl written by train')
        parser.add_argument('--out', type=str, required=True, help='Output directory for the images')

    def run(self, config, **options):
        out = Path(config['out'])
        records = read_metrics(config['metrics'])
        steps = [record['step'] for record in records]
        written = []
        for term in TERMS:
            values = [record.get(term) for record in records]
            written.append(emit_curve(steps, values, term.replace('_', ' '), out / f'{term}.png'))

        validated = [record for record in records if record.get('validation_p_mpjpe') is not None]
        written.append(emit_curve(
            [record['step'] for record in validated],
            [record['validation_p_mpjpe'] for record in validated],
            'validation P-MPJPE', out / 'validation_p_mpjpe.png',
        ))
        self.write_resolved_config(out, config)
        self.stdout.write(self.style.SUCCESS(f'{len(written)} plots written to {out}'))

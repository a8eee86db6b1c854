from pathlib import Path

import torch
from django.conf import settings

from evaluation.figures import emit_pose_figure
from evaluation.forms import EvalForm
from evaluation.metrics import evaluate_predictions, mean_pose_baseline, procrustes_align
from skeletons.commands import PoseLiftCommand
from skeletons.storage import write_json
from synth.dataset import load_labelled_split
from training.checkpoints import load_checkpoint
from training.trainer import predict


class Command(PoseLiftCommand):
    help = 'Evaluate a training checkpoint on a labelled split: P-MPJPE, PCK and AUC after Procrustes alignment.'
    form_class = EvalForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', type=str, required=True)
        parser.add_argument('--data', type=str, required=True, help='Dataset directory written by synth_gen')
        parser.add_argument('--out', type=str, required=True, help='Output directory for the report and figures')
        parser.add_argument('--split', type=str, help='Labelled split to score (default test)')
        parser.add_argument('--figures', type=int, help='Number of samples to draw as figures')
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--unit-scale', type=float, help='Reporting units per synthetic unit')
        parser.add_argument('--threshold', type=float, help='PCK threshold in reporting units')

    def defaults(self):
        return {
            'split': 'test',
            'figures': 0,
            'unit_scale': getattr(settings, 'EVAL_UNIT_SCALE', 500.0),
            'threshold': getattr(settings, 'EVAL_PCK_THRESHOLD', 150.0),
            'views': list(getattr(settings, 'EVAL_FIGURE_VIEWS', (0.0, 90.0))),
        }

    def run(self, config, **options):
        out = Path(config['out'])
        state = load_checkpoint(config['checkpoint'])
        split = load_labelled_split(config['data'], config['split'], state.topology)

        prediction = predict(state, split.images, config['batch_size'])
        predicted = prediction.pose3d.to(torch.float64).numpy()
        target = split.pose3d.numpy()
        report = evaluate_predictions(predicted, target, config['unit_scale'], config['threshold'])
        baseline = mean_pose_baseline(target, config['unit_scale'], config['threshold'])

        write_json(out / 'eval_report.json', {
            **report.to_dict(),
            'ids': split.ids,
            'split': config['split'],
            'checkpoint_step': state.step,
            'mean_pose_baseline_p_mpjpe': baseline.p_mpjpe,
        })
        self.write_resolved_config(out, config)

        count = min(config['figures'], len(split))
        if count:
            aligned = procrustes_align(predicted[:count], target[:count]).aligned
            for index in range(count):
                emit_pose_figure(
                    split.images[index].numpy(), aligned[index], state.topology,
                    out / 'figures' / f'{split.ids[index]}.png', target=target[index], views=config['views'],
                )
            self.stdout.write(f'{count} figures written to {out / "figures"}')

        self.stdout.write(f'P-MPJPE {report.p_mpjpe:.3f}  PCK@{report.threshold:g} {report.pck:.1f}  AUC {report.auc:.1f}')
        self.stdout.write(self.style.SUCCESS(
            f'Evaluated {report.count} {config["split"]} samples at step {state.step} '
            f'(mean-pose baseline P-MPJPE {baseline.p_mpjpe:.3f})'
        ))

from pathlib import Path

from skeletons.commands import PoseLiftCommand
from skeletons.storage import write_json
from synth.dataset import load_labelled_split
from training.ablation import ABLATIONS, run_ablation
from training.forms import AblateForm

from .train import add_training_arguments, prepare_training, training_defaults


class Command(PoseLiftCommand):
    help = 'Train each loss-term ablation over several seeds and compare test P-MPJPE.'
    form_class = AblateForm

    def add_arguments(self, parser):
        super().add_arguments(parser)
        add_training_arguments(parser)
        parser.add_argument('--seeds', type=int, nargs='+', help='Training seeds (default 0 1 2)')
        parser.add_argument('--configurations', type=str, nargs='+', choices=list(ABLATIONS),
                            help='Subset of ablations to run (default all)')

    def defaults(self):
        return {**training_defaults(), 'seeds': [0, 1, 2]}

    def run(self, config, **options):
        out = Path(config['out'])
        flow, topology, data, renderer, train_config, weights = prepare_training(config)
        test = load_labelled_split(config['data'], 'test', topology)
        self.write_resolved_config(out, config)

        self.stdout.write(
            f'Running {len(config["configurations"])} configurations x {len(config["seeds"])} seeds, '
            f'{train_config.steps} steps each'
        )
        summary = run_ablation(
            data, test, topology, renderer, flow, train_config, weights,
            config['configurations'], config['seeds'], metrics_dir=out / 'metrics',
        )
        write_json(out / 'ablation.json', summary)

        for name, entry in summary['configurations'].items():
            self.stdout.write(f'{name:<24} mean P-MPJPE {entry["mean_p_mpjpe"]:.3f}')
        trend = summary['trend']
        style = self.style.SUCCESS if trend['passed'] else self.style.NOTICE
        self.stdout.write(style(f'Trend check {"passed" if trend["passed"] else "not met"}: {trend}'))

"""Shared plumbing for the PoseLift management commands.

A command's settings defaults are overridden by an optional JSON ``--config`` file and
then by explicit flags; the merged mapping is validated by the command's form.
"""
import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from .exceptions import IO_EXIT, ConfigurationError, PoseLiftError
from .storage import write_json

logger = logging.getLogger(__name__)


class PoseLiftCommand(BaseCommand):
    form_class = None

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, help='JSON file of key-value settings for this run')
        parser.add_argument('--seed', type=int, help='Seed for every random draw of the run')

    def defaults(self):
        """Settings-derived values, overridden by the config file and flags."""
        return {}

    def run(self, config, **options):
        raise NotImplementedError('subclasses of PoseLiftCommand must provide a run() method')

    def handle(self, *args, **options):
        config_file = options.pop('config', None)
        try:
            config = self.resolve_config(options, config_file)
            return self.run(config, **options)
        except PoseLiftError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        except OSError as exc:
            raise CommandError(f'I/O error: {exc}', returncode=IO_EXIT) from exc

    def resolve_config(self, options, config_file=None):
        data = dict(self.defaults())
        if config_file:
            data.update(read_config_file(config_file))
        data.update(
            {key: value for key, value in options.items()
             if key in self.config_keys() and value is not None}
        )
        if self.form_class is None:
            return data

        form = self.form_class(data=data)
        if not form.is_valid():
            messages = '; '.join(
                f'{field}: {" ".join(errors)}' for field, errors in form.errors.items()
            )
            raise ConfigurationError(f'invalid configuration: {messages}')
        return form.cleaned_data

    def config_keys(self):
        if self.form_class is None:
            return set()
        return set(self.form_class.base_fields)

    def write_resolved_config(self, out, config):
        path = write_json(Path(out) / 'resolved_config.json', jsonable(config))
        logger.debug('resolved config written to %s', path)
        return path


def read_config_file(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f'{path}: config file is not valid JSON ({exc})') from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f'{path}: config file must hold a JSON object')
    return {key.replace('-', '_'): value for key, value in data.items()}


def jsonable(value):
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if hasattr(value, 'to_dict'):
        return jsonable(value.to_dict())
    if isinstance(value, Path):
        return str(value)
    return value

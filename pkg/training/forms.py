from django import forms

from .ablation import ABLATIONS

WEIGHT_NAMES = ('adversarial', 'omega', 'base', 'flow_nll', 'bone_length')


class LossWeightsMixin(forms.Form):
    weights = forms.JSONField(required=False)
    omega_lambda = forms.FloatField()
    bone_sigma = forms.FloatField()

    def clean_weights(self):
        weights = self.cleaned_data.get('weights') or {}
        if not isinstance(weights, dict):
            raise forms.ValidationError('Loss weights must be a JSON object of term names to numbers.')
        unknown = sorted(set(weights) - set(WEIGHT_NAMES))
        if unknown:
            raise forms.ValidationError(
                f'Unknown loss weights {", ".join(unknown)}; use {", ".join(WEIGHT_NAMES)}.'
            )
        for name, value in weights.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                raise forms.ValidationError(f'Weight {name!r} must be a non-negative number.')
        return {name: float(value) for name, value in weights.items()}

    def clean_omega_lambda(self):
        value = self.cleaned_data.get('omega_lambda')
        if value is not None and value <= 0:
            raise forms.ValidationError('The omega balancing coefficient must be positive.')
        return value

    def clean_bone_sigma(self):
        value = self.cleaned_data.get('bone_sigma')
        if value is not None and value <= 0:
            raise forms.ValidationError('The bone-length sigma must be positive.')
        return value


class TrainConfigForm(LossWeightsMixin):
    data = forms.CharField()
    flow = forms.CharField()
    out = forms.CharField()
    resume = forms.CharField(required=False)
    steps = forms.IntegerField(min_value=0)
    batch_size = forms.IntegerField(min_value=2)
    lr_generator = forms.FloatField()
    lr_discriminator = forms.FloatField()
    eval_every = forms.IntegerField(min_value=0)
    checkpoint_every = forms.IntegerField(min_value=0)
    eval_batch_size = forms.IntegerField(min_value=1)
    lifter_width = forms.IntegerField(min_value=1)
    lifter_blocks = forms.IntegerField(min_value=0)
    frame_scale = forms.FloatField(min_value=0.01, required=False)
    seed = forms.IntegerField()

    def clean(self):
        cleaned = super().clean()
        for name in ('lr_generator', 'lr_discriminator'):
            rate = cleaned.get(name)
            if rate is not None and rate <= 0:
                self.add_error(name, 'Learning rate must be positive.')
        return cleaned


class AblateForm(TrainConfigForm):
    configurations = forms.JSONField(required=False)
    seeds = forms.JSONField()
    resume = None

    def clean_seeds(self):
        seeds = self.cleaned_data.get('seeds')
        if not isinstance(seeds, list) or not seeds or not all(
            isinstance(seed, int) and not isinstance(seed, bool) for seed in seeds
        ):
            raise forms.ValidationError('Seeds must be a non-empty list of integers.')
        return seeds

    def clean_configurations(self):
        names = self.cleaned_data.get('configurations') or list(ABLATIONS)
        if not isinstance(names, list) or not set(names) <= set(ABLATIONS):
            raise forms.ValidationError(f'Ablation configurations are chosen from {", ".join(ABLATIONS)}.')
        return names


class LiftForm(forms.Form):
    checkpoint = forms.CharField()
    image = forms.CharField()
    out = forms.CharField()
    figure = forms.BooleanField(required=False)
    views = forms.JSONField()


class PlotForm(forms.Form):
    metrics = forms.CharField()
    out = forms.CharField()

from django import forms

from skeletons.forms import RendererFieldsMixin, TopologyChoiceMixin

from .kinematics import MODELS


class SynthGenForm(TopologyChoiceMixin, RendererFieldsMixin):
    out = forms.CharField()
    seed = forms.IntegerField()
    topology = forms.CharField()
    train = forms.IntegerField(min_value=0)
    prior = forms.IntegerField(min_value=0)
    val = forms.IntegerField(min_value=0)
    test = forms.IntegerField(min_value=0)
    frame_scale = forms.FloatField(min_value=0.01)
    ellipse_count = forms.IntegerField(min_value=0)
    ellipse_intensity = forms.FloatField(min_value=0.0, max_value=1.0)
    noise_amplitude = forms.FloatField(min_value=0.0)
    augment_rotations = forms.JSONField(required=False)

    def clean_topology(self):
        topology = super().clean_topology()
        if topology.name not in MODELS:
            raise forms.ValidationError(
                f'No synthetic figure for {topology.name!r}; choose one of {", ".join(MODELS)}.'
            )
        return topology

    def clean_augment_rotations(self):
        angles = self.cleaned_data.get('augment_rotations') or []
        if not isinstance(angles, list) or not all(
            isinstance(angle, (int, float)) and not isinstance(angle, bool) for angle in angles
        ):
            raise forms.ValidationError('Rotation augmentation takes a list of angles in degrees.')
        return [float(angle) for angle in angles]

    def clean(self):
        cleaned = super().clean()
        if all(cleaned.get(split) == 0 for split in ('train', 'prior', 'val', 'test')):
            raise forms.ValidationError('At least one split needs a positive count.')
        return cleaned

from django import forms

from .exceptions import TopologyError
from .topology import resolve_topology


class TopologyChoiceMixin:
    def clean_topology(self):
        value = self.cleaned_data.get('topology')
        try:
            return resolve_topology(value)
        except (TopologyError, OSError) as exc:
            raise forms.ValidationError(f'Unknown or invalid topology {value!r}: {exc}')


class RendererFieldsMixin(forms.Form):
    height = forms.IntegerField(min_value=8)
    width = forms.IntegerField(min_value=8)
    gamma = forms.FloatField()

    def clean_gamma(self):
        gamma = self.cleaned_data.get('gamma')
        if gamma is not None and gamma <= 0:
            raise forms.ValidationError('Gamma must be positive.')
        return gamma


class RenderForm(TopologyChoiceMixin, RendererFieldsMixin):
    poses = forms.CharField(required=False)
    flow = forms.CharField(required=False)
    out = forms.CharField()
    topology = forms.CharField()
    count = forms.IntegerField(min_value=1, required=False)
    limit = forms.IntegerField(min_value=1, required=False)
    frame_scale = forms.FloatField(min_value=0.0)
    seed = forms.IntegerField(required=False)

    def clean(self):
        cleaned = super().clean()
        if bool(cleaned.get('poses')) == bool(cleaned.get('flow')):
            raise forms.ValidationError('Provide exactly one of --poses or --flow.')
        if cleaned.get('flow') and not cleaned.get('count'):
            raise forms.ValidationError('Sampling from --flow needs --count.')
        return cleaned


class ImportPosesForm(TopologyChoiceMixin, forms.Form):
    input = forms.CharField()
    out = forms.CharField()
    topology = forms.CharField()
    y_down = forms.BooleanField(required=False)
    id_prefix = forms.CharField(required=False)

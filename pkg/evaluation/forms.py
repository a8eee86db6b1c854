from django import forms

from synth.dataset import LABELLED_SPLITS


class EvalForm(forms.Form):
    checkpoint = forms.CharField()
    data = forms.CharField()
    out = forms.CharField()
    split = forms.ChoiceField(choices=[(split, split) for split in LABELLED_SPLITS])
    figures = forms.IntegerField(min_value=0)
    batch_size = forms.IntegerField(min_value=1, required=False)
    unit_scale = forms.FloatField()
    threshold = forms.FloatField()
    views = forms.JSONField()

    def clean_unit_scale(self):
        value = self.cleaned_data.get('unit_scale')
        if value is not None and value <= 0:
            raise forms.ValidationError('Unit scale must be positive.')
        return value

    def clean_threshold(self):
        value = self.cleaned_data.get('threshold')
        if value is not None and value <= 0:
            raise forms.ValidationError('PCK threshold must be positive.')
        return value

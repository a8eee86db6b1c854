from django import forms

from skeletons.forms import TopologyChoiceMixin


class PretrainFlowForm(TopologyChoiceMixin, forms.Form):
    prior = forms.CharField()
    out = forms.CharField()
    topology = forms.CharField()
    components = forms.IntegerField(min_value=2, required=False)
    epochs = forms.IntegerField(min_value=1)
    batch_size = forms.IntegerField(min_value=1)
    learning_rate = forms.FloatField()
    holdout_fraction = forms.FloatField(min_value=0.0, max_value=0.9)
    layers = forms.IntegerField(min_value=1)
    hidden = forms.IntegerField(min_value=1)
    scale_limit = forms.FloatField()
    seed = forms.IntegerField()

    def clean_learning_rate(self):
        rate = self.cleaned_data.get('learning_rate')
        if rate is not None and rate <= 0:
            raise forms.ValidationError('Learning rate must be positive.')
        return rate

    def clean_scale_limit(self):
        limit = self.cleaned_data.get('scale_limit')
        if limit is not None and limit <= 0:
            raise forms.ValidationError('Scale limit must be positive.')
        return limit

    def clean(self):
        cleaned = super().clean()
        topology = cleaned.get('topology')
        components = cleaned.get('components')
        if topology is not None and components and components > 2 * topology.joint_count:
            raise forms.ValidationError(
                f'{components} components exceed the {2 * topology.joint_count} pose coordinates.'
            )
        return cleaned

from django.conf import settings
from rest_framework import serializers

from apps.common.exceptions import ConfigError


class ProblemSerializer(serializers.Serializer):
    """Serializer for the water-filling problem format"""
    cnrs = serializers.ListField(child=serializers.FloatField(), min_length=1)
    budget_mw = serializers.FloatField()

    def validate_cnrs(self, value):
        if any(c <= 0.0 for c in value):
            raise serializers.ValidationError('Every CNR must be positive')
        return value

    def validate_budget_mw(self, value):
        if value <= 0.0:
            raise serializers.ValidationError('Budget must be positive')
        return value


class ProposalSerializer(serializers.Serializer):
    powers_mw = serializers.ListField(child=serializers.FloatField(), min_length=1)
    tol = serializers.FloatField(min_value=0.0, required=False)


class ValidateRequestSerializer(ProblemSerializer, ProposalSerializer):
    """Problem fields plus a proposed allocation"""

    def validate(self, attrs):
        if len(attrs['powers_mw']) != len(attrs['cnrs']):
            raise serializers.ValidationError({'powers_mw': 'Must have one power per CNR'})
        attrs.setdefault('tol', settings.RADIOBENCH_WATERFILL_TOL)
        return attrs


def proposal_from_dict(data):
    """Powers and optional tolerance of a proposed-solution file"""
    serializer = ProposalSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError('Invalid proposed solution', serializer.errors)
    attrs = serializer.validated_data
    return attrs['powers_mw'], attrs.get('tol')

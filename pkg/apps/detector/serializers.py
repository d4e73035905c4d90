from rest_framework import serializers


class ThresholdQuerySerializer(serializers.Serializer):
    """Serializer for threshold query parameters"""
    pf_target = serializers.FloatField(min_value=0.0, max_value=1.0)
    n = serializers.IntegerField(min_value=1)
    noise_dbm = serializers.FloatField(default=-100.0)
    snr_db = serializers.FloatField(required=False)

    def validate_pf_target(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('pf_target must lie strictly between 0 and 1')
        return value

import numpy as np
from rest_framework import serializers

from apps.common import serialization
from apps.common.exceptions import ConfigError, ValidationFailure
from .services import Hypothesis, NoisePower, SnrSpec, SensingFrame, generate_frame, UINT64_MAX


class FrameSerializer(serializers.Serializer):
    """Serializer for the frame export format"""
    truth = serializers.ChoiceField(choices=[h.value for h in Hypothesis])
    noise_dbm = serializers.FloatField()
    snr_db = serializers.FloatField(allow_null=True)
    seed = serializers.IntegerField(min_value=0, max_value=UINT64_MAX)
    samples = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        min_length=1,
    )

    def validate(self, attrs):
        if attrs['truth'] == Hypothesis.H1.value and attrs['snr_db'] is None:
            raise serializers.ValidationError('snr_db is required for H1 frames')
        return attrs


def frame_to_json(frame: SensingFrame) -> str:
    """Export a frame; field order and 17-digit floats are part of the format"""
    return serialization.dumps({
        'truth': frame.truth.value,
        'noise_dbm': frame.noise.dbm,
        'snr_db': frame.snr.db if frame.snr is not None else None,
        'seed': frame.seed,
        'samples': [[float(x.real), float(x.imag)] for x in frame.samples],
    }) + '\n'


def frame_from_dict(data: dict, verify: bool = True) -> SensingFrame:
    """Rebuild a frame from its export.

    With `verify` the samples must equal, bit for bit, a regeneration from the exported
    noise_dbm, snr_db and seed; 17-digit floats make the export itself lossless.
    """
    serializer = FrameSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError('Invalid frame file', serializer.errors)
    attrs = serializer.validated_data
    truth = Hypothesis(attrs['truth'])
    noise = NoisePower.from_dbm(attrs['noise_dbm'])
    snr = SnrSpec.from_db(attrs['snr_db']) if attrs['snr_db'] is not None else None
    frame = SensingFrame(
        samples=[complex(re, im) for re, im in attrs['samples']],
        truth=truth,
        noise=noise,
        snr=snr if truth is Hypothesis.H1 else None,
        seed=attrs['seed'],
    )
    if verify:
        regenerated = generate_frame(truth, noise, snr, frame.n, frame.seed)
        if not np.array_equal(regenerated.samples, frame.samples):
            raise ValidationFailure(
                'Frame samples do not match a regeneration from their parameters',
                {'seed': frame.seed},
            )
    return frame

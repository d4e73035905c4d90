from drf_spectacular.utils import extend_schema
from rest_framework.views import APIView
from rest_framework.permissions import AllowAny

from apps.common.responses import success_response, invalid_params_response
from apps.signal.services import NoisePower, SnrSpec
from .serializers import ThresholdQuerySerializer
from .services import TargetFalseAlarm, np_threshold, theoretical_pd


class ThresholdView(APIView):
    """Neyman-Pearson threshold endpoint"""
    permission_classes = [AllowAny]

    @extend_schema(parameters=[ThresholdQuerySerializer])
    def get(self, request):
        serializer = ThresholdQuerySerializer(data=request.query_params)

        if not serializer.is_valid():
            return invalid_params_response(serializer)

        params = serializer.validated_data
        pf_target = TargetFalseAlarm(params['pf_target'])
        threshold = np_threshold(pf_target, params['n'], NoisePower.from_dbm(params['noise_dbm']))
        data = {"threshold": threshold.as_dict()}

        if 'snr_db' in params:
            data["theoretical_pd"] = theoretical_pd(SnrSpec.from_db(params['snr_db']), params['n'], pf_target)

        return success_response(data)

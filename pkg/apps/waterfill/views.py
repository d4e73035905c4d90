from drf_spectacular.utils import extend_schema
from rest_framework.views import APIView
from rest_framework.permissions import AllowAny

from apps.common.responses import success_response, invalid_params_response
from .serializers import ProblemSerializer, ValidateRequestSerializer
from .services import SubcarrierCnrs, PowerBudget, waterfill, validate_external_solution


class SolveView(APIView):
    """Water-filling solver endpoint"""
    permission_classes = [AllowAny]

    @extend_schema(request=ProblemSerializer)
    def post(self, request):
        serializer = ProblemSerializer(data=request.data)

        if not serializer.is_valid():
            return invalid_params_response(serializer, "Invalid water-filling problem")

        data = serializer.validated_data
        allocation = waterfill(SubcarrierCnrs(tuple(data['cnrs'])), PowerBudget(data['budget_mw']))
        return success_response(allocation.as_dict())


class ValidateView(APIView):
    """Grade a proposed allocation"""
    permission_classes = [AllowAny]

    @extend_schema(request=ValidateRequestSerializer)
    def post(self, request):
        serializer = ValidateRequestSerializer(data=request.data)

        if not serializer.is_valid():
            return invalid_params_response(serializer, "Invalid validation request")

        data = serializer.validated_data
        verdict = validate_external_solution(
            data['powers_mw'],
            SubcarrierCnrs(tuple(data['cnrs'])),
            PowerBudget(data['budget_mw']),
            data['tol'],
        )
        return success_response(verdict.as_dict())

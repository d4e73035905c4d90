from django.conf import settings
from django.utils import timezone
from drf_spectacular.utils import extend_schema
from rest_framework.permissions import AllowAny
from rest_framework.views import APIView

import radiobench
from apps.common.responses import success_response


class HealthCheckView(APIView):
    """Liveness plus the toolkit version and the configured defaults a run would use"""
    permission_classes = [AllowAny]

    @extend_schema(summary="Toolkit health")
    def get(self, request):
        return success_response({
            "status": "healthy",
            "timestamp": timezone.now().isoformat(),
            "version": radiobench.__version__,
            "llm_backend": settings.RADIOBENCH_LLM['BACKEND'],
            "rag_index_configured": bool(settings.RADIOBENCH_RAG['INDEX_PATH']),
        })

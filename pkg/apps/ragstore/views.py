from django.conf import settings
from drf_spectacular.utils import extend_schema
from rest_framework.views import APIView
from rest_framework.permissions import AllowAny

from apps.common.responses import success_response, invalid_params_response
from .serializers import RetrieveQuerySerializer
from .services import cached_index, retrieve


class RetrieveView(APIView):
    """Ranked chunks from the configured index"""
    permission_classes = [AllowAny]

    @extend_schema(parameters=[RetrieveQuerySerializer])
    def get(self, request):
        serializer = RetrieveQuerySerializer(data=request.query_params)

        if not serializer.is_valid():
            return invalid_params_response(serializer)

        params = serializer.validated_data
        index = cached_index(settings.RADIOBENCH_RAG['INDEX_PATH'])
        results = retrieve(index, params['q'], params.get('k'))
        return success_response({
            "results": [
                {
                    "doc_id": chunk.doc_id,
                    "source": chunk.source,
                    "span": list(chunk.span),
                    "text": chunk.text,
                    "score": score,
                }
                for chunk, score in results
            ]
        })

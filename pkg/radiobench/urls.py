"""radiobench URL Configuration"""
from django.urls import path, include
from drf_spectacular.views import SpectacularAPIView, SpectacularSwaggerView

urlpatterns = [
    # API Documentation
    path('api/schema/', SpectacularAPIView.as_view(), name='schema'),
    path('api/docs/', SpectacularSwaggerView.as_view(url_name='schema'), name='swagger-ui'),

    # API endpoints
    path('detector/', include('apps.detector.urls')),
    path('waterfill/', include('apps.waterfill.urls')),
    path('rag/', include('apps.ragstore.urls')),
    path('system/', include('apps.common.urls')),
]

from django.urls import path
from . import views

urlpatterns = [
    path('threshold', views.ThresholdView.as_view(), name='detector-threshold'),
]

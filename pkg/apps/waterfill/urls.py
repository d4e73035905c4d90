from django.urls import path
from . import views

urlpatterns = [
    path('solve', views.SolveView.as_view(), name='waterfill-solve'),
    path('validate', views.ValidateView.as_view(), name='waterfill-validate'),
]

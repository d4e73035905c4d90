from django.urls import path
from . import views

urlpatterns = [
    path('retrieve', views.RetrieveView.as_view(), name='rag-retrieve'),
]

from rest_framework import status
from rest_framework.response import Response

INVALID_PARAMS = "INVALID_PARAMS"


def success_response(data=None, message="Success", status_code=status.HTTP_200_OK):
    """Success envelope; `data` is omitted when None"""
    body = {"success": True, "message": message}
    if data is not None:
        body["data"] = data
    return Response(body, status=status_code)


def error_response(message, code, details=None, status_code=status.HTTP_400_BAD_REQUEST):
    body = {
        "success": False,
        "error": {"code": code, "message": message, "details": details or {}},
    }
    return Response(body, status=status_code)


def invalid_params_response(serializer, message="Invalid query parameters"):
    """400 envelope carrying the field errors of a failed serializer"""
    return error_response(message, INVALID_PARAMS, serializer.errors)


def toolkit_error_response(exc):
    """Envelope for a ToolkitError, using its code, details and HTTP status"""
    return error_response(exc.message, exc.code, exc.details, exc.http_status)

import socket
import tempfile
from pathlib import Path
from unittest import mock


class NetworkAccessAttempted(AssertionError):
    pass


def _refuse(*args, **kwargs):
    raise NetworkAccessAttempted(f"Network access attempted: {args!r}")


class NoNetworkMixin:
    """Fails the test on any attempt to open a network connection."""

    def setUp(self):
        super().setUp()
        for target in ('socket.socket.connect', 'socket.socket.connect_ex', 'socket.create_connection'):
            patcher = mock.patch(target, _refuse)
            patcher.start()
            self.addCleanup(patcher.stop)
        patcher = mock.patch.object(socket, 'getaddrinfo', _refuse)
        patcher.start()
        self.addCleanup(patcher.stop)


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self._tmp.cleanup)
        self.tmp = Path(self._tmp.name)

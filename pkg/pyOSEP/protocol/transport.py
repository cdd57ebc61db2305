"""Channels between the client and the worker.

   Notes:
   ------
       1- A Channel end has a role. The client end sends first and then
          waits for the reply; the worker end receives first and then
          replies. Any other order raises AlternationError.
       2- Both channels move serialized frames, so the in-process pair and
          the socket produce the same bytes. An optional 'recorder' callable
          receives every frame sent or received by the end.
       3- WorkerServer accepts any number of connections and serves each
          one on its own thread with a fresh MessageHandler.
"""
from __future__ import annotations

import logging
import queue
import socket
import socketserver
import threading
from abc import ABC, abstractmethod
from enum import Enum
from typing import Callable

from pyOSEP.core import (
    AlternationError,
    ChannelClosedError,
    ChannelTimeoutError,
    FrameError,
    MessageHandler,
    TransportError,
    safe_call,
)
from pyOSEP.protocol.messages import (
    HEADER,
    ProtocolMessage,
    deserialize,
    error_message,
    frame_length,
    serialize,
)

log = logging.getLogger(__name__)

DEFAULT_PORT = 7741
DEFAULT_TIMEOUT = 30.0


class Role(str, Enum):
    CLIENT = "client"
    WORKER = "worker"


class Channel(ABC):
    # whether the next frame can still be found after a malformed one
    survives_frame_errors = True

    def __init__(self, role: Role, recorder: Callable[[bytes], None] | None = None):
        self.role = Role(role)
        self.recorder = recorder
        self.closed = False
        self._may_send = self.role == Role.CLIENT

    @abstractmethod
    def _send_frame(self, frame: bytes) -> None:
        pass

    @abstractmethod
    def _receive_frame(self, timeout: float | None) -> bytes:
        pass

    def _close(self) -> None:
        pass

    def send(self, msg: ProtocolMessage) -> None:
        """Send one message.

        Raises
        ------
        ChannelClosedError
            This end or its peer is closed.
        AlternationError
            This end must receive before it may send again.
        """
        if self.closed:
            raise ChannelClosedError(f"The {self.role.value} end is closed.")
        if not self._may_send:
            raise AlternationError(
                f"The {self.role.value} end sent {msg!r} while a reply was outstanding.")
        frame = serialize(msg)
        self._send_frame(frame)
        self._may_send = False
        if self.recorder is not None:
            self.recorder(frame)

    def receive(self, timeout: float | None = DEFAULT_TIMEOUT) -> ProtocolMessage:
        """Wait for the next message; None waits forever.

        Raises
        ------
        ChannelTimeoutError
            Nothing arrived within 'timeout' seconds.
        ChannelClosedError
            This end or its peer is closed.
        FrameError
            The received frame is malformed.
        """
        if self.closed:
            raise ChannelClosedError(f"The {self.role.value} end is closed.")
        if self._may_send:
            raise AlternationError(
                f"The {self.role.value} end is expected to send, not to receive.")
        try:
            frame = self._receive_frame(timeout)
        except FrameError:
            self._may_send = True
            raise
        self._may_send = True
        if self.recorder is not None:
            self.recorder(frame)
        return deserialize(frame)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_CLOSED = None


class InProcessChannel(Channel):
    def __init__(self, role: Role, inbox: queue.Queue, outbox: queue.Queue, recorder=None):
        super().__init__(role, recorder)
        self._inbox = inbox
        self._outbox = outbox

    @staticmethod
    def pair(recorder=None) -> tuple[InProcessChannel, InProcessChannel]:
        """A connected (client end, worker end) pair."""
        to_worker: queue.Queue = queue.Queue()
        to_client: queue.Queue = queue.Queue()
        return (InProcessChannel(Role.CLIENT, to_client, to_worker, recorder),
                InProcessChannel(Role.WORKER, to_worker, to_client))

    def _send_frame(self, frame: bytes) -> None:
        self._outbox.put(frame)

    def _receive_frame(self, timeout: float | None) -> bytes:
        try:
            frame = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise ChannelTimeoutError(f"No message within {timeout} s.")
        if frame is _CLOSED:
            # keep the marker for any later receive
            self._inbox.put(_CLOSED)
            raise ChannelClosedError("The peer closed the channel.")
        return frame

    def _close(self) -> None:
        self._outbox.put(_CLOSED)


class SocketChannel(Channel):
    survives_frame_errors = False

    def __init__(self, sock: socket.socket, role: Role, recorder=None):
        super().__init__(role, recorder)
        self.sock = sock

    @classmethod
    def connect(cls, host: str, port: int = DEFAULT_PORT,
                timeout: float = DEFAULT_TIMEOUT, recorder=None) -> SocketChannel:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise TransportError(f"Cannot connect to the worker at {host}:{port}.", cause=e)
        log.debug(f"Connected to {host}:{port}.")
        return cls(sock, Role.CLIENT, recorder)

    def _send_frame(self, frame: bytes) -> None:
        try:
            self.sock.sendall(frame)
        except OSError as e:
            raise ChannelClosedError("The connection was lost while sending.", cause=e)

    def _read_exactly(self, size: int) -> bytes:
        chunks = []
        remaining = size
        while remaining > 0:
            chunk = self.sock.recv(min(remaining, 1 << 20))
            if not chunk:
                raise ChannelClosedError("The peer closed the connection.")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def _receive_frame(self, timeout: float | None) -> bytes:
        try:
            self.sock.settimeout(timeout)
            header = self._read_exactly(HEADER.size)
            body = self._read_exactly(frame_length(header))
        except socket.timeout:
            raise ChannelTimeoutError(f"No message within {timeout} s.")
        except OSError as e:
            raise ChannelClosedError("The connection was lost while receiving.", cause=e)
        return header + body

    def _close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def serve(channel: Channel, handler: MessageHandler, timeout: float | None = None) -> None:
    """Answer every message arriving on a worker end until the peer leaves.

    A malformed frame gets an Error reply. Socket streams are closed after
    that reply.
    """
    try:
        while True:
            try:
                message = channel.receive(timeout)
            except ChannelClosedError:
                break
            except FrameError as e:
                log.warning(f"Dropped a malformed frame: {e.message}")
                channel.send(error_message("", type(e).__name__, e.message))
                if not channel.survives_frame_errors:
                    log.warning("Closing the stream; it is out of step with the frames.")
                    break
                continue
            channel.send(handler.handle_message(message))
    finally:
        channel.close()
        handler.on_exit()


class WorkerServer(socketserver.ThreadingTCPServer):
    """TCP listener that runs one worker session per connection.

    Parameters
    ----------
    address : tuple[str, int]
        (host, port); port 0 picks a free port, see 'server_address'.
    handler_factory : Callable[[], MessageHandler]
        Builds the state of every new session.
    """
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], handler_factory: Callable[[], MessageHandler]):
        self.handler_factory = handler_factory
        super().__init__(address, _ConnectionHandler)

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, name="worker-server", daemon=True)
        thread.start()
        return thread


class _ConnectionHandler(socketserver.BaseRequestHandler):
    def handle(self):
        log.info(f"Session opened by {self.client_address}.")
        self._serve()
        log.info(f"Session of {self.client_address} closed.")

    @safe_call(log)
    def _serve(self):
        serve(SocketChannel(self.request, Role.WORKER), self.server.handler_factory())

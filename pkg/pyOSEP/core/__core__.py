"""The core module.

   Notes:
   ------

    1- Message handlers
        A MessageHandler answers one or more MessageKind. The worker
        registers its handlers in a MessageDispatcher, one per kind,
        and every received message is dispatched by its kind.

    2- Errors
        ProtocolError and its subclasses carry a 'message' and an optional
        'cause'. WorkerError subclasses are the ones that travel back to
        the client as an 'Error' message, with the class name as the code.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, Callable

log = logging.getLogger(__name__)


class ProtocolError(Exception):
    def __init__(self, message: str, cause=None) -> None:
        self.message = message
        self.__cause__ = cause
        super().__init__(self.message)


class PhaseError(ProtocolError):
    """An operation was called in the wrong session phase."""


class RoundMismatchError(ProtocolError):
    """A response answered another round (stale or replayed)."""


class AlternationError(ProtocolError):
    """A channel end sent or received out of turn."""


class TransportError(ProtocolError):
    pass


class ChannelClosedError(TransportError):
    pass


class ChannelTimeoutError(TransportError):
    pass


class FrameError(TransportError):
    pass


class TruncatedFrameError(FrameError):
    pass


class VersionMismatchError(FrameError):
    pass


class NonCanonicalIntegerError(FrameError):
    pass


class WorkerError(ProtocolError):
    @property
    def code(self) -> str:
        return type(self).__name__


class DuplicateStoreError(WorkerError):
    pass


class MalformedGridError(WorkerError):
    pass


class NoMatrixError(WorkerError):
    pass


class UnhandledMessageError(WorkerError):
    pass


class MessageKind(str, Enum):
    STORE_MATRIX = "StoreMatrix"
    MATVEC_REQUEST = "MatVecRequest"
    MATVEC_RESPONSE = "MatVecResponse"
    ACK = "Ack"
    ERROR = "Error"

    @property
    def has_round(self) -> bool:
        return self in (MessageKind.MATVEC_REQUEST, MessageKind.MATVEC_RESPONSE)

    @staticmethod
    def get_all_kinds():
        return [kind.value for kind in MessageKind]


class MessageHandler(ABC):
    """An abstract class for handling received messages.
    """

    @abstractmethod
    def handle_message(self, message) -> Any:
        """Returns the reply to the message."""
        pass

    def on_exit(self) -> None:
        """Invoked when the channel that feeds the handler is closed."""
        pass


class MessageDispatcher:
    """Routes every message to the handler registered for its kind.
    """

    def __init__(self):
        self.reset_listeners()

    def reset_listeners(self):
        self.listeners: dict[MessageKind, Callable] = {}

    def register(self, kind: MessageKind, handler: Callable):
        """Register the handler of a message kind.

        Parameters
        ----------
        kind : MessageKind
            The kind of message to handle.
        handler : function
            Called with the message, returns the reply.
        """
        if kind in self.listeners:
            log.debug(f"Handler of {kind.value} replaced.")
        self.listeners[MessageKind(kind)] = handler

    def dispatch(self, message) -> Any:
        """Dispatch a message to its registered handler.

        Raises
        ------
        UnhandledMessageError
            No handler was registered for the message kind.
        """
        handler = self.listeners.get(message.kind)
        if handler is None:
            raise UnhandledMessageError(
                f"No handler is registered for '{message.kind.value}' messages.")
        return handler(message)

import logging
import platform

import pytest

from pyOSEP.config import Configurable, Dict
from pyOSEP.core import (
    ChannelTimeoutError,
    FrameError,
    MessageDispatcher,
    MessageHandler,
    MessageKind,
    NonCanonicalIntegerError,
    ProtocolError,
    TransportError,
    UnhandledMessageError,
    WorkerError,
    chain_traceback,
    file_out_log,
    safe_call,
)
from pyOSEP.protocol import ack_message, matvec_request


class RecordingHandler(MessageHandler):
    def __init__(self):
        self.called = False
        self.exited = False

    def handle_message(self, message):
        self.called = True
        return ack_message(message.session_id)

    def on_exit(self):
        self.exited = True


@pytest.fixture
def dispatcher():
    return MessageDispatcher()


def test_dispatcher_routes_by_kind(dispatcher):
    handler = RecordingHandler()
    dispatcher.register(MessageKind.MATVEC_REQUEST, handler.handle_message)
    reply = dispatcher.dispatch(matvec_request("s1", 0, [1]))
    assert handler.called
    assert reply.kind is MessageKind.ACK


def test_dispatcher_refuses_unregistered_kinds(dispatcher):
    with pytest.raises(UnhandledMessageError) as excinfo:
        dispatcher.dispatch(ack_message("s1"))
    assert excinfo.value.code == "UnhandledMessageError"
    assert "Ack" in str(excinfo.value)


def test_dispatcher_reset(dispatcher):
    dispatcher.register(MessageKind.ACK, RecordingHandler().handle_message)
    dispatcher.reset_listeners()
    with pytest.raises(UnhandledMessageError):
        dispatcher.dispatch(ack_message("s1"))


def test_handler_on_exit_default():
    class Minimal(MessageHandler):
        def handle_message(self, message):
            return None

    assert Minimal().on_exit() is None


def test_message_kinds():
    assert MessageKind.get_all_kinds() == [
        "StoreMatrix", "MatVecRequest", "MatVecResponse", "Ack", "Error"]
    assert MessageKind("MatVecRequest").has_round
    assert not MessageKind.STORE_MATRIX.has_round


def test_error_hierarchy():
    e = NonCanonicalIntegerError("bad digits", cause=ValueError("x"))
    assert isinstance(e, FrameError)
    assert isinstance(e, TransportError)
    assert isinstance(e, ProtocolError)
    assert e.message == "bad digits"
    assert isinstance(e.__cause__, ValueError)
    assert isinstance(ChannelTimeoutError("t"), TransportError)
    assert not isinstance(WorkerError("w"), TransportError)


def test_safe_call_logs_and_returns_default(caplog):
    log = logging.getLogger("pyOSEP.tests")

    @safe_call(log, default=-1)
    def fails():
        raise ValueError("boom")

    with caplog.at_level(logging.ERROR):
        assert fails() == -1
    assert "ValueError:boom" in caplog.text


def test_safe_call_with_known_exceptions(caplog):
    log = logging.getLogger("pyOSEP.tests")

    @safe_call(log, exceptions={KeyError: "no such key"})
    def fails():
        raise KeyError("k")

    with caplog.at_level(logging.ERROR):
        assert fails() is None
    assert "no such key" in caplog.text


def test_chain_traceback():
    try:
        raise RuntimeError("x")
    except RuntimeError as e:
        assert "test_core.py" in chain_traceback(e)


def test_file_log(tmp_path):
    handler = file_out_log(tmp_path / "logs" / "osep.log", "INFO")
    try:
        logging.getLogger("pyOSEP.tests").warning("written")
        handler.flush()
        assert "written" in (tmp_path / "logs" / "osep.log").read_text()
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


class PlatformRecorder(Configurable):
    def __init__(self):
        self.common = False
        self.linux = False

    def on_common_config(self):
        self.common = True

    def on_linux_config(self):
        self.linux = True


def test_configurable():
    recorder = PlatformRecorder()
    recorder._set_config()
    assert recorder.common
    assert recorder.linux == (platform.system().lower() == "linux")


def test_dict_defaults():
    d = Dict(a=1)
    assert d.b is None
    assert d.a == 1

from .__core__ import (  # noqa
    AlternationError,
    ChannelClosedError,
    ChannelTimeoutError,
    DuplicateStoreError,
    FrameError,
    MalformedGridError,
    MessageDispatcher,
    MessageHandler,
    MessageKind,
    NoMatrixError,
    NonCanonicalIntegerError,
    PhaseError,
    ProtocolError,
    RoundMismatchError,
    TransportError,
    TruncatedFrameError,
    UnhandledMessageError,
    VersionMismatchError,
    WorkerError,
)
from .__decorators__ import processFactory, processLogic  # noqa
from .__loggers__ import OneLineExceptionFormatter, file_out_log, std_out_log  # noqa
from .__safe_calls__ import chain_traceback, safe_call  # noqa
from .pipelines import (  # noqa
    AbstractProcess,
    IncompatibleArgsException,
    Pipeline,
    ProcessLogic,
)

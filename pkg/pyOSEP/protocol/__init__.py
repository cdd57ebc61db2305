from .client import (  # noqa
    Abort,
    AbortReason,
    ClientSession,
    ConvergedWith,
    NextRequest,
    Phase,
    RoundOutcome,
    SolveOutcome,
    Verdict,
    drive,
    solve_in_process,
)
from .messages import (  # noqa
    HEADER,
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    ProtocolMessage,
    ack_message,
    deserialize,
    error_message,
    frame_length,
    matvec_request,
    matvec_response,
    serialize,
    store_matrix_message,
)
from .transport import (  # noqa
    DEFAULT_PORT,
    DEFAULT_TIMEOUT,
    Channel,
    InProcessChannel,
    Role,
    SocketChannel,
    WorkerServer,
    serve,
)
from .worker import (  # noqa
    AdversaryPolicy,
    Arbitrary,
    Honest,
    Lazy,
    PolicyFormatError,
    Tamper,
    WorkerState,
    parse_policy,
)

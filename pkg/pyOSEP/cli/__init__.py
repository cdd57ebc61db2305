from .commands import (  # noqa
    EXIT_ABORTED,
    EXIT_ACCEPTED,
    EXIT_REJECTED,
    EXIT_USAGE,
    build_parser,
    main,
)

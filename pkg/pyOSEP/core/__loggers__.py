"""Log handlers for the command line tools.

   Both helpers attach to the root logger and honour PYOSEP_LOGLEVEL
   (and PYOSEP_LOGFILE for the file handler). Records go to stderr so that
   'solve --json' keeps stdout for the outcome.
"""
import logging
import logging.handlers
import os
import sys
from pathlib import Path

root = logging.getLogger().root

STDERR_FORMAT = "%(levelname)s:%(name)s:%(message)s"
# worker connections run in their own threads
FILE_FORMAT = "%(levelname)s:%(asctime)s:%(threadName)s:%(name)s:%(message)s"


class OneLineExceptionFormatter(logging.Formatter):
    def formatException(self, ei):
        return repr(super().formatException(ei))

    def format(self, record):
        result = super().format(record)
        if record.exc_text:
            result = result.replace("\n", "")
        return result


def _attach(handler: logging.Handler, log_level: str, fmt: str) -> logging.Handler:
    handler.setFormatter(OneLineExceptionFormatter(fmt))
    root.setLevel(os.environ.get("PYOSEP_LOGLEVEL", log_level))
    root.addHandler(handler)
    return handler


def std_out_log(log_level="WARNING", fmt=STDERR_FORMAT) -> logging.Handler:
    return _attach(logging.StreamHandler(sys.stderr), log_level, fmt)


def file_out_log(path, log_level="INFO", fmt=FILE_FORMAT) -> logging.Handler:
    file_path = Path(os.environ.get("PYOSEP_LOGFILE", path))
    file_path.parent.mkdir(parents=True, exist_ok=True)
    return _attach(logging.handlers.WatchedFileHandler(file_path), log_level, fmt)

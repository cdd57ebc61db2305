import functools
import logging


def chain_traceback(e: BaseException) -> str:
    """File paths and line numbers of an exception's traceback, innermost first.

    Parameters
    ----------
    e : BaseException
        A raised exception.

    Returns
    -------
    str
        One '\\nk↦ "file", line L' entry per frame.
    """
    frames = []
    tb = e.__traceback__
    while tb is not None:
        frames.append((tb.tb_frame.f_code.co_filename, tb.tb_lineno))
        tb = tb.tb_next
    return "".join(f'\n{k}↦ "{path}", line {line}'
                   for k, (path, line) in enumerate(reversed(frames), start=1))


def _describe(e: BaseException) -> str:
    # pyOSEP errors carry a 'message'; the class name doubles as the wire error code
    return f"{type(e).__name__}:{getattr(e, 'message', e)}"


def safe_call(log: logging.Logger, exceptions: dict | None = None, default=None):
    """A decorator for safely calling a function and logging the errors.

    Used around long running loops (one worker connection) so that a single
    failure is logged instead of taking the server down.

    Parameters
    ----------
    log : logging.Logger
        A logger instance to write the errors.
    exceptions : dict, optional
        Exception classes and the messages to log for them (subclasses
        included) instead of the file and line numbers, by default None
    default : Any, optional
        The value returned when an exception was swallowed, by default None
    """
    known = dict(exceptions or {})

    def try_call(func):

        @functools.wraps(func)
        def caller(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                message = next((m for cls, m in known.items() if isinstance(e, cls)), None)
                if message is not None:
                    log.error(f"{message} ({_describe(e)})")
                else:
                    log.error(f"\n{_describe(e)}\n{chain_traceback(e)}\n")
                return default
        return caller
    return try_call

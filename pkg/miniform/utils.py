import logging


class MiniformError(Exception):
    """
    Base error of the kernel.

    Carries an optional source location. A located error renders in the
    diagnostic format used everywhere in the program output:

        <file> Line <n> --> <message>

    `listing` is the compiled form of the statement that failed, when the
    error came from executing one.
    """

    def __init__(self, message, file=None, line=None):
        super().__init__(message)
        self.message = message
        self.file = file
        self.line = line
        self.listing = None

    def located(self, file, line, listing=None):
        """Attach a location and statement listing unless already present."""
        if self.file is None:
            self.file = file
            self.line = line
        if self.listing is None:
            self.listing = listing
        return self

    def __str__(self):
        if self.file is not None and self.line is not None:
            return diagnose(self.message, self.file, self.line)
        return self.message


class PreprocessorError(MiniformError):
    pass


class CompileError(MiniformError):
    pass


class ExecutionError(MiniformError):
    pass


def diagnose(message, file, line):
    return f"{file} Line {line} --> {message}"


def throw(message, exc=MiniformError, file=None, line=None):
    """Raise `exc` with the message (and location, when known)."""
    raise exc(message, file=file, line=line)


def get_logger(name=None):
    if not name:
        return logging.getLogger("miniform")
    return logging.getLogger(f"miniform.{name}")

class CrowdEMError(Exception):
    """Base class for all crowdem errors."""
    pass


class InvariantError(CrowdEMError, ValueError):
    """Raised when an in-memory object would violate one of its invariants."""
    pass


class DataFormatError(CrowdEMError, ValueError):
    """Raised when a label, truth or checkpoint file cannot be parsed."""
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        if self.line is not None:
            return f"{type(self).__name__} at line {self.line}: {self.args[0]}"
        return f"{type(self).__name__}: {self.args[0]}"


class CheckpointError(DataFormatError):
    """Raised when a checkpoint file violates the confusion tensor invariants."""
    pass


class DegenerateWorkerError(CrowdEMError, ArithmeticError):
    """Raised when an unsmoothed M-step meets a (worker, class) row with no mass."""
    def __init__(self, message, worker=None, worker_id=None):
        super().__init__(message)
        self.worker = worker
        self.worker_id = worker_id

    def __str__(self):
        if self.worker_id is not None:
            return f"worker '{self.worker_id}': {self.args[0]}"
        if self.worker is not None:
            return f"worker #{self.worker}: {self.args[0]}"
        return self.args[0]


class ScheduleError(CrowdEMError, ValueError):
    """Raised for step-size parameters outside the accepted region."""
    pass


class OracleSizeError(CrowdEMError, ValueError):
    """Raised when a brute-force oracle is asked for an instance it cannot enumerate."""
    pass

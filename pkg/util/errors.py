"""
Exception types shared by the dataset tools and the torch sessions. Each type maps to a process exit code in main.py.
"""


class ConfigurationError(ValueError):
    """
    Invalid or unknown configuration keys / values.
    """
    exit_code = 2


class MissingArtifactError(FileNotFoundError):
    """
    A required upstream artifact (dataset, checkpoint, label set, result file) does not exist.
    """
    exit_code = 3


class DatasetIntegrityError(ValueError):
    """
    A dataset or container file is corrupted, truncated or does not match its manifest.
    """
    exit_code = 4

    def __init__(self, file_name: str, reason: str):
        super().__init__(f"{file_name}: {reason}")
        self.file_name = file_name
        self.reason = reason


class DivergenceError(RuntimeError):
    """
    A loss became non-finite during optimization.
    """
    exit_code = 4

    def __init__(self, term: str, step: int, value: float):
        super().__init__(f"Non-finite loss term '{term}' at step {step}: {value}")
        self.term = term
        self.step = step
        self.value = value


class OutputLockedError(RuntimeError):
    exit_code = 4

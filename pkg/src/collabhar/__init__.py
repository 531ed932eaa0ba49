"""Collaborative activity recognition from wrist electrostatic potential and accelerometers."""
from importlib import resources

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a file bundled in ``collabhar/data``."""
    return resources.files(__name__).joinpath("data", name)

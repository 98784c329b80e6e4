__version__ = "0.1.1"

from .errors import Error, BlurSplatError, BlurSplatErrors, BlurSplatStageError
from .config import RunConfig

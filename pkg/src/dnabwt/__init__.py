"""BWT construction for DNA string collections of highly diverse lengths."""

from .collection import IngestPolicy, ParseError, WordCollection, detect_format, parse_sequences
from .engine import BwtBuilder, Config, ConfigError, build
from .oracle import InvalidBwtError, invert, naive_bwt

__version__ = "0.1.0"

__all__ = [
    "BwtBuilder",
    "Config",
    "ConfigError",
    "IngestPolicy",
    "InvalidBwtError",
    "ParseError",
    "WordCollection",
    "build",
    "detect_format",
    "invert",
    "naive_bwt",
    "parse_sequences",
    "__version__",
]

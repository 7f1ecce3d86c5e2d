import configparser
import os
from pathlib import Path
from typing import Dict, Optional, Union

ENV_CONFIG = "HHO_AFEM_CONFIG"
ENV_LOG_LEVEL = "HHO_AFEM_LOG_LEVEL"
ENV_NUM_THREADS = "HHO_AFEM_NUM_THREADS"

_SECTION = "run"

# key -> parser; values stay strings until a run asks for them
KNOWN_KEYS = {
    "alpha": float,
    "condense": lambda v: str(v).strip().lower() in ("1", "true", "yes", "on"),
    "k": int,
    "max_iterations": int,
    "max_ndof": int,
    "mesh": str,
    "num_threads": int,
    "out": str,
    "poincare_constant": float,
    "problem": str,
    "theta": float,
    "tolerance": float,
}


class Config:
    config_path = None
    num_threads = None
    values = None

    def __init__(self, config_path: Optional[Union[str, Path]] = None) -> None:
        self.config_path = config_path or os.getenv(ENV_CONFIG)
        self.values = {}
        self.num_threads = self._read_num_threads()

        if self.config_path and Path(self.config_path).exists():
            self.values = self.read(path=self.config_path)

    @staticmethod
    def _read_num_threads() -> int:
        raw = os.getenv(ENV_NUM_THREADS, "0")
        try:
            return max(int(raw), 0)
        except ValueError:
            return 0

    @staticmethod
    def parse(text: str) -> Dict[str, object]:
        """Parses flat ``key = value`` text into typed settings.

        Parameters
        ----------
        text
            Config file contents; ``#`` starts a comment line.

        Returns
        -------
            The recognized settings converted to their types.

        Raises
        ------
        error.ConfigurationError
            Thrown on unknown keys or values that fail conversion.
        """
        from hho_afem import error

        parser = configparser.ConfigParser(
            comment_prefixes=("#", ";"), inline_comment_prefixes=("#",)
        )
        parser.read_string(f"[{_SECTION}]\n" + text)

        settings = {}
        for key, raw in parser.items(_SECTION):
            if key not in KNOWN_KEYS:
                raise error.ConfigurationError(f"Unknown config key '{key}'")
            try:
                settings[key] = KNOWN_KEYS[key](raw)
            except ValueError:
                raise error.ConfigurationError(
                    f"Invalid value '{raw}' for config key '{key}'"
                )

        return settings

    @classmethod
    def read(cls, *, path: Union[str, Path]) -> Dict[str, object]:
        return cls.parse(Path(path).read_text())

    def merged(self, *, overrides: Optional[dict] = None) -> Dict[str, object]:
        """Returns file settings updated by the non-``None`` overrides."""
        return self.merge(self.values, overrides)

    @staticmethod
    def merge(base: dict, overrides: Optional[dict] = None) -> Dict[str, object]:
        settings = dict(base)
        for key, value in (overrides or {}).items():
            if value is not None:
                settings[key] = value
        return settings

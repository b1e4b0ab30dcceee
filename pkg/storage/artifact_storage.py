import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd

from utils.errors import ConfigError, DataError
from utils.file_utils import cleanup_file, ensure_dir

logger = logging.getLogger(__name__)

FAILED_MARKER = 'FAILED'


class ArtifactStorage:
    """
    Class to handle every file a run writes into its output directory

    Each artifact carries the run header (config hash and seed) so a file can
    be traced back to the run that produced it.
    """

    def __init__(self, output_dir: Union[str, Path], config_hash: str, seed: int):
        self.output_dir = Path(output_dir)
        self.config_hash = config_hash
        self.seed = seed
        try:
            ensure_dir(self.output_dir)
        except OSError as e:
            raise ConfigError(f"cannot create output directory {self.output_dir}: {e}")

    @property
    def header(self) -> str:
        return f"config_hash={self.config_hash} seed={self.seed}"

    @property
    def run(self) -> Dict[str, Any]:
        return {'config_hash': self.config_hash, 'seed': self.seed}

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _write(self, name: str, text: str) -> Path:
        filepath = self.path(name)
        try:
            ensure_dir(filepath.parent)
            with open(filepath, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
        except OSError as e:
            raise ConfigError(f"cannot write {filepath}: {e}")
        logger.debug(f"Artifact saved: {filepath}")
        return filepath

    def save_text(self, name: str, text: str) -> Path:
        return self._write(name, text)

    def save_frame(self, name: str, frame: pd.DataFrame) -> Path:
        """
        Save a table as CSV behind a `# config_hash=... seed=...` line

        Args:
            name: File name relative to the output directory
            frame: Table to save; undefined values become empty cells

        Returns:
            Path of the written file
        """
        body = frame.to_csv(index=False, lineterminator='\n')
        return self._write(name, f"# {self.header}\n{body}")

    def save_json(self, name: str, data: Dict[str, Any]) -> Path:
        payload = dict(data)
        payload['run'] = self.run
        return self._write(name, json.dumps(payload, sort_keys=True, indent=2) + '\n')

    def save_markdown(self, name: str, text: str) -> Path:
        return self._write(name, f"<!-- {self.header} -->\n{text}")

    def load_json(self, name: str) -> Optional[Dict[str, Any]]:
        """
        Load a JSON artifact

        Returns:
            The parsed object, or None if the file does not exist
        """
        filepath = self.path(name)
        if not filepath.exists():
            logger.warning(f"Artifact not found: {filepath}")
            return None
        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"artifact {filepath} is not valid JSON: {e}")

    def load_frame(self, name: str, **kwargs) -> pd.DataFrame:
        """Load a CSV artifact, skipping its run header line"""
        return read_frame(self.path(name), **kwargs)

    def mark_failed(self, stage: str, error: BaseException) -> Path:
        text = (f"stage={stage}\n"
                f"error={type(error).__name__}\n"
                f"message={error}\n"
                f"{self.header}\n")
        logger.error(f"Run failed in stage {stage}: {error}")
        return self._write(FAILED_MARKER, text)

    def clear_failed(self) -> bool:
        return cleanup_file(self.path(FAILED_MARKER))


def read_header(filepath: Union[str, Path]) -> Dict[str, str]:
    """Parse the `# key=value ...` run header of a CSV artifact; empty if absent"""
    with open(filepath, 'r', encoding='utf-8') as f:
        first = f.readline().strip()
    if not first.startswith('#'):
        return {}
    return dict(part.split('=', 1) for part in first[1:].split() if '=' in part)


def read_frame(filepath: Union[str, Path], **kwargs) -> pd.DataFrame:
    filepath = Path(filepath)
    if not filepath.exists():
        raise DataError(f"file not found: {filepath}")
    with open(filepath, 'r', encoding='utf-8') as f:
        skip = 1 if f.readline().startswith('#') else 0
    return pd.read_csv(filepath, skiprows=skip, **kwargs)

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Iterable, Union

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def allowed_file(filename: str, allowed_extensions: Iterable[str]) -> bool:
    """
    Check if the file extension is allowed

    Args:
        filename: Name of the file
        allowed_extensions: Allowed file extensions, without the dot

    Returns:
        True if file extension is allowed, False otherwise
    """
    return '.' in filename and filename.rsplit('.', 1)[1].lower() in set(allowed_extensions)


def ensure_dir(path: PathLike) -> Path:
    """Create the directory (and parents) if missing and return it as a Path"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cleanup_file(filepath: PathLike) -> bool:
    """
    Delete a file from the filesystem

    Args:
        filepath: Path to the file to delete

    Returns:
        True if the file was deleted, False if it was not there
    """
    try:
        if os.path.exists(filepath):
            os.remove(filepath)
            logger.debug(f"File deleted: {filepath}")
            return True
        return False
    except OSError as e:
        logger.error(f"Error deleting file {filepath}: {str(e)}")
        return False


def sha256_bytes(data: bytes, length: int = 16) -> str:
    return hashlib.sha256(data).hexdigest()[:length]


def sha256_file(filepath: PathLike, length: int = 16, chunk_size: int = 1 << 16) -> str:
    """Hash a file in chunks; returns the first `length` hex characters"""
    digest = hashlib.sha256()
    with open(filepath, 'rb') as f:
        while True:
            chunk = f.read(chunk_size)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()[:length]


def stable_hash(obj: Any, length: int = 16) -> str:
    """Hash a JSON-serializable object independently of key order"""
    payload = json.dumps(obj, sort_keys=True, separators=(',', ':'), default=str)
    return sha256_bytes(payload.encode('utf-8'), length)

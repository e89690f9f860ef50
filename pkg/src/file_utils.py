from pathlib import Path
from typing import Union

PathLike = Union[str, Path]

CSV_EXTENSIONS = {".csv", ".txt"}


def is_csv_path(path: PathLike) -> bool:
    """Return True if the path should be read as CSV rather than the binary format."""
    return Path(path).suffix.lower() in CSV_EXTENSIONS


def read_bytes(path: PathLike) -> bytes:
    return Path(path).read_bytes()


def write_bytes(path: PathLike, payload: bytes) -> Path:
    """Write bytes, creating parent directories if needed."""
    dest = Path(path)
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_bytes(payload)
    return dest


def read_text(path: PathLike) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def write_text(path: PathLike, content: str) -> Path:
    """Write text, creating parent directories if needed."""
    dest = Path(path)
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", encoding="utf-8", newline="") as f:
        f.write(content)
    return dest

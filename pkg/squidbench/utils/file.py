import hashlib
import json
import logging
import os
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Union,
)

MANIFEST_NAME = "manifest.json"


def get_file_checksum(file_path: Union[str, Path], algorithm: str = "sha256") -> str:
    hash_algorithm = getattr(hashlib, algorithm)()
    with open(file_path, "rb") as file:
        while chunk := file.read(1 << 20):
            hash_algorithm.update(chunk)
    return hash_algorithm.hexdigest()


def get_human_readable_file_size(size_bytes: float) -> str:
    units = ["B", "KB", "MB", "GB", "TB", "PB"]
    unit_index = 0

    while size_bytes >= 1024 and unit_index < len(units) - 1:
        size_bytes /= 1024.0
        unit_index += 1

    return f"{size_bytes:.3f} {units[unit_index]}"


def write_json(path: Union[str, Path], payload: Any) -> None:
    # sorted keys and a trailing newline keep reruns byte-identical
    with open(path, "w", encoding="utf-8") as file:
        json.dump(payload, file, indent=2, sort_keys=True, allow_nan=False)
        file.write("\n")


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as file:
        return json.load(file)


def list_output_files(directory: Union[str, Path]) -> List[Path]:
    root = Path(directory)
    files = [path for path in root.rglob("*") if path.is_file() and path.name != MANIFEST_NAME]
    return sorted(files, key=lambda path: path.relative_to(root).as_posix())


def write_manifest(directory: Union[str, Path]) -> Dict[str, Dict[str, Any]]:
    root = Path(directory)
    manifest: Dict[str, Dict[str, Any]] = {}
    total = 0

    for path in list_output_files(root):
        size = os.path.getsize(path)
        total += size
        manifest[path.relative_to(root).as_posix()] = {
            "sha256": get_file_checksum(path),
            "size_bytes": size,
            "size": get_human_readable_file_size(size),
        }

    write_json(root / MANIFEST_NAME, manifest)
    logging.info(f"Wrote manifest of {len(manifest)} files ({get_human_readable_file_size(total)}) to {root}")
    return manifest

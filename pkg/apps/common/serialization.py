"""Canonical JSON text and digests shared by every artifact writer.

Floats are written with 17 significant digits so that they survive a text round trip
bit for bit; everything else goes through the standard encoder. Key order is the
insertion order of the mapping, which lets file formats fix their field order.
"""
import hashlib
import json
import math
from pathlib import Path

from apps.common.exceptions import ConfigError


def format_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"Cannot serialize non-finite float {value!r}")
    text = format(value, '.17g')
    if not any(ch in text for ch in '.eE'):
        text += '.0'
    return text


def dumps(obj) -> str:
    """Serialize `obj` to compact JSON with 17-digit floats"""
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(key), ensure_ascii=False)}: {dumps(value)}" for key, value in obj.items())
        return '{' + ', '.join(items) + '}'
    if isinstance(obj, (list, tuple)):
        return '[' + ', '.join(dumps(item) for item in obj) + ']'
    if hasattr(obj, 'item'):
        # numpy scalar
        return dumps(obj.item())
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def sha256_hex(data) -> str:
    if isinstance(data, str):
        data = data.encode('utf-8')
    return hashlib.sha256(data).hexdigest()


def file_digest(path) -> str:
    return sha256_hex(Path(path).read_bytes())


def write_text(path, text: str) -> str:
    """Write UTF-8 text with LF newlines and return its digest"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(text)
    return sha256_hex(text)


def read_json(path):
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}")

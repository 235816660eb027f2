"""
Run artifact export module for QhoObserver.

This module writes result tables (CSV), the key-value run summary and the
YAML manifest into a run output directory.
"""

import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
import yaml

from config import (
    CSV_ENCODING, CSV_FLOAT_FORMAT, CSV_LINE_TERMINATOR, CSV_SEPARATOR, MANIFEST_FILE, SUMMARY_FILE
)
from qho_observer import __version__


def export_to_csv(
    data: Union[pd.DataFrame, List[Dict[str, Any]]],
    output_path: str,
    index: bool = False,
    **kwargs
) -> None:
    """
    Export data to a CSV file in the run table format.

    Parameters:
    -----------
    data : Union[pd.DataFrame, List[Dict[str, Any]]]
        Table to export. Can be a pandas DataFrame or a list of row dictionaries.
    output_path : str
        Path to save the CSV file.
    index : bool, optional
        Whether to include the index in the CSV file. Default is False.
    **kwargs : dict
        Additional keyword arguments to pass to pandas.DataFrame.to_csv().

    Raises:
    -------
    TypeError
        If data is not a pandas DataFrame or a list of dictionaries.
    IOError
        If there's an error writing to the file.
    """
    if isinstance(data, list) and all(isinstance(item, dict) for item in data):
        data = pd.DataFrame(data)
    if not isinstance(data, pd.DataFrame):
        raise TypeError("Data must be a pandas DataFrame or a list of dictionaries")
    options = {
        "sep": CSV_SEPARATOR,
        "encoding": CSV_ENCODING,
        "float_format": CSV_FLOAT_FORMAT,
        "lineterminator": CSV_LINE_TERMINATOR,
    }
    options.update(kwargs)
    try:
        data.to_csv(output_path, index=index, **options)
    except Exception as e:
        raise IOError(f"Error exporting to CSV: {str(e)}")


def export_to_yaml(data: Dict[str, Any], output_path: str) -> None:
    """
    Export a dictionary to a YAML file, keeping key order.

    Raises:
    -------
    TypeError
        If data is not a dictionary.
    IOError
        If there's an error writing to the file.
    """
    if not isinstance(data, dict):
        raise TypeError(f"data must be a dictionary, got {type(data).__name__}")
    try:
        with open(output_path, "w", encoding="utf-8", newline="\n") as f:
            yaml.safe_dump(data, f, sort_keys=False, default_flow_style=None)
    except Exception as e:
        raise IOError(f"Error exporting to YAML: {str(e)}")


def prepare_output_dir(out_dir: str) -> str:
    """Create the run directory if needed and return it."""
    if not isinstance(out_dir, str) or not out_dir:
        raise ValueError("out_dir must be a nonempty string")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise IOError(f"Cannot create output directory {out_dir}: {e}")
    return out_dir


def write_table(df: pd.DataFrame, out_dir: str, file_name: str) -> str:
    """Write ``df`` as ``out_dir/file_name`` and return the path."""
    path = os.path.join(prepare_output_dir(out_dir), file_name)
    export_to_csv(df, path)
    return path


def format_value(value) -> str:
    """Render a summary value: 12 significant digits for numbers, nested lists for matrices."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return CSV_FLOAT_FORMAT % float(value)
    if isinstance(value, np.ndarray):
        if value.ndim == 0:
            return format_value(value.item())
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def write_summary(entries: Dict[str, Any], out_dir: str) -> str:
    """Write ``key = value`` lines in insertion order."""
    path = os.path.join(prepare_output_dir(out_dir), SUMMARY_FILE)
    lines = [f"{key} = {format_value(value)}" for key, value in entries.items()]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except Exception as e:
        raise IOError(f"Error writing summary: {str(e)}")
    return path


def write_manifest(out_dir: str, command: str, config_source: str, document: Dict[str, Any],
                   options: Optional[Dict[str, Any]] = None, seed: Optional[int] = None) -> str:
    """
    Write the run manifest: tool version, command, options, seed, the parsed
    input echo and a UTC timestamp, which is the only field that differs between
    identical runs.
    """
    manifest = {
        "tool": "qho_observer",
        "version": __version__,
        "command": command,
        "config": config_source,
        "options": options or {},
        "seed": seed,
        "inputs": document,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = os.path.join(prepare_output_dir(out_dir), MANIFEST_FILE)
    export_to_yaml(manifest, path)
    return path

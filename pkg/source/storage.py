"""
Хранение результатов: контейнер поля (JSON-заголовок + сырые float64),
тепловые карты PGM и итоговые файлы прогона.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from .errors import FormatError, IoError, TruncatedPayload
from .geometry import DomainSpec
from .grid import Field, PolarGrid
from .logger import logger

if TYPE_CHECKING:
    from .runner import RunManifest

FORMAT_VERSION = 1
SUMMARY_COLUMNS = [
    "run", "k", "energy", "residual", "m_full", "m_k",
    "verdict", "psi_star", "lambda1_plus", "lambda1_minus",
]

PathLike = Union[str, Path]


def _base(path: PathLike) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".f64") else path


def write_json(path: PathLike, data: Any):
    """JSON с сортированными ключами; одинаковые данные дают одинаковые байты."""
    try:
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                              encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def save_field(u: Field, path: PathLike) -> Path:
    """
    Сохраняет поле как <name>.json + <name>.f64.

    Значения пишутся little-endian float64, сначала r, затем θ.

    Returns:
        путь к заголовку
    """
    base = _base(path)
    grid = u.grid
    header = {
        "format_version": FORMAT_VERSION,
        "domain": grid.domain.to_dict(),
        "N_r": grid.n_r,
        "N_theta": grid.n_theta,
        "byte_order": "little",
        "dtype": "float64",
        "count": grid.n_nodes,
    }
    try:
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".f64").write_bytes(u.flat.astype("<f8").tobytes())
    except OSError as e:
        raise IoError(f"cannot write {base}.f64: {e}") from e
    write_json(base.with_suffix(".json"), header)
    logger.debug(f"Saved field {base.name}: {grid.n_nodes} values")
    return base.with_suffix(".json")


def _header_int(header: Dict[str, Any], key: str) -> int:
    value = header.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise FormatError(key, f"expected a positive integer, got {value!r}")
    return value


def load_field(path: PathLike, grid: Optional[PolarGrid] = None) -> Field:
    """
    Загружает поле; при заданной сетке проверяет совпадение заголовка с ней.

    Raises:
        FormatError: поле заголовка некорректно или не совпадает с сеткой
        TruncatedPayload: размер .f64 не равен 8 * count
    """
    base = _base(path)
    try:
        header = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError("header", f"{base}.json not found")
    except json.JSONDecodeError as e:
        raise FormatError("header", f"invalid JSON: {e}")
    if not isinstance(header, dict):
        raise FormatError("header", "must be a JSON object")

    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError("format_version", f"unsupported version {header.get('format_version')!r}")
    if header.get("byte_order") != "little":
        raise FormatError("byte_order", f"expected 'little', got {header.get('byte_order')!r}")
    if header.get("dtype") != "float64":
        raise FormatError("dtype", f"expected 'float64', got {header.get('dtype')!r}")
    try:
        domain = DomainSpec.from_dict(header["domain"])
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError("domain", f"invalid domain: {e}")
    n_r, n_theta = _header_int(header, "N_r"), _header_int(header, "N_theta")
    count = _header_int(header, "count")
    if count != n_r * n_theta:
        raise FormatError("count", f"{count} != N_r * N_theta = {n_r * n_theta}")

    if grid is not None:
        if grid.n_r != n_r:
            raise FormatError("N_r", f"file has {n_r}, grid has {grid.n_r}")
        if grid.n_theta != n_theta:
            raise FormatError("N_theta", f"file has {n_theta}, grid has {grid.n_theta}")
        if grid.domain != domain:
            raise FormatError("domain", f"file domain {domain} differs from {grid.domain}")
    else:
        grid = PolarGrid(domain, n_r, n_theta)

    try:
        payload = base.with_suffix(".f64").read_bytes()
    except FileNotFoundError:
        raise TruncatedPayload(f"{base}.f64 not found")
    if len(payload) != 8 * count:
        raise TruncatedPayload(f"{base}.f64 has {len(payload)} bytes, expected {8 * count}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n_r, n_theta)
    return Field(grid, values)


def write_pgm(u: Field, path: PathLike):
    """
    Тепловая карта P5: ширина N_r, высота N_θ (строки — θ), линейная шкала min–max.
    """
    v = u.values.T
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        scaled = np.rint((v - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(v)
    pixels = np.minimum(np.maximum(scaled, 0), 255).astype(np.uint8)
    header = f"P5\n{u.grid.n_r} {u.grid.n_theta}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + pixels.tobytes())
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def _write_csv(frame: pd.DataFrame, path: Path):
    try:
        frame.to_csv(path, index=False, float_format="%.12g")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def emit_outputs(manifest: "RunManifest", out_dir: PathLike) -> Dict[str, Path]:
    """
    report.json, timings.json, summary.csv и (для XiDiagnostic) h_profile.csv.

    Поля и тепловые карты пишутся раньше, в каталоги прогонов.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {out}: {e}") from e

    files = {
        "report": out / "report.json",
        "timings": out / "timings.json",
        "summary": out / "summary.csv",
    }
    write_json(files["report"], manifest.to_report())
    write_json(files["timings"], manifest.timings())

    rows = [record.summary_row() for record in manifest.records]
    _write_csv(pd.DataFrame(rows, columns=SUMMARY_COLUMNS), files["summary"])

    h_rows = manifest.h_profile_rows()
    if h_rows:
        files["h_profile"] = out / "h_profile.csv"
        _write_csv(pd.DataFrame(h_rows, columns=["run", "psi", "h"]), files["h_profile"])

    logger.info(f"Outputs written to {out}: {', '.join(p.name for p in files.values())}")
    return files

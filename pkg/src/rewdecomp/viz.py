"""Grayscale PGM rasters and plain-text grids for decompositions and policies."""

from __future__ import annotations

import string
from pathlib import Path
from typing import Sequence

import numpy as np

from .decomposition import DecompositionParams
from .mdp import TabularMdp

GLYPHS = "<>^v"
_LABELS = string.digits + string.ascii_uppercase
CELL_PX = 16


class VizError(OSError):
    pass


def _grid(mdp: TabularMdp) -> tuple[int, int]:
    if mdp.grid_shape is None:
        raise ValueError("rendering needs a gridworld MDP")
    return mdp.grid_shape


def write_pgm(path: Path, pixels: np.ndarray, cell_px: int = CELL_PX) -> None:
    """Binary PGM (P5), each grid cell blown up to ``cell_px`` square pixels."""
    img = np.kron(np.asarray(pixels, dtype=np.uint8), np.ones((cell_px, cell_px), dtype=np.uint8))
    height, width = img.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
    except OSError as exc:
        raise VizError(f"could not write {path}: {exc}") from exc


def read_pgm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    header, _, rest = data.partition(b"\n")
    dims, _, rest = rest.partition(b"\n")
    _, _, body = rest.partition(b"\n")
    if header != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    width, height = map(int, dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def _write_text(path: Path, rows: list[str]) -> None:
    try:
        Path(path).write_text("\n".join(rows) + "\n", encoding="ascii")
    except OSError as exc:
        raise VizError(f"could not write {path}: {exc}") from exc


def share_grid(params: DecompositionParams, mdp: TabularMdp, factor: int) -> np.ndarray:
    """R_i(s) / R(s) on the grid, NaN where the environment reward is zero."""
    width, height = _grid(mdp)
    shares = np.where(mdp.reward != 0, params.shares()[:, factor], np.nan)
    return shares.reshape(height, width)


def partition_grid(params: DecompositionParams, mdp: TabularMdp) -> np.ndarray:
    """Argmax factor per rewarding cell, -1 elsewhere."""
    width, height = _grid(mdp)
    owner = np.where(mdp.reward != 0, np.argmax(params.shares(), axis=1), -1)
    return owner.reshape(height, width)


def emit_heatmaps(params: DecompositionParams, mdp: TabularMdp, out_dir) -> list[Path]:
    """One share map per factor plus the argmax partition, as .pgm and .txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(params.n_factors):
        grid = share_grid(params, mdp, i)
        pixels = np.where(np.isnan(grid), 0, np.rint(255 * np.nan_to_num(grid))).astype(np.uint8)
        rows = [" ".join("  . " if np.isnan(v) else f"{v:.2f}" for v in row) for row in grid]
        write_pgm(out_dir / f"factor_{i}.pgm", pixels)
        _write_text(out_dir / f"factor_{i}.txt", rows)
        written += [out_dir / f"factor_{i}.pgm", out_dir / f"factor_{i}.txt"]

    owners = partition_grid(params, mdp)
    levels = np.where(owners < 0, 0, np.rint(255 * (owners + 1) / params.n_factors)).astype(np.uint8)
    write_pgm(out_dir / "partition.pgm", levels)
    _write_text(out_dir / "partition.txt",
                ["".join("." if k < 0 else _LABELS[k % len(_LABELS)] for k in row) for row in owners])
    written += [out_dir / "partition.pgm", out_dir / "partition.txt"]
    return written


def policy_glyphs(actions, mdp: TabularMdp) -> list[str]:
    width, height = _grid(mdp)
    actions = np.asarray(getattr(actions, "action", actions)).reshape(height, width)
    return ["".join(GLYPHS[a] if a < len(GLYPHS) else _LABELS[a % len(_LABELS)] for a in row) for row in actions]


def emit_policy_maps(policies: Sequence, mdp: TabularMdp, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, pi in enumerate(policies):
        path = out_dir / f"policy_{i}.txt"
        _write_text(path, policy_glyphs(pi, mdp))
        written.append(path)
    return written


def read_text_grid(path) -> list[str]:
    return Path(path).read_text(encoding="ascii").splitlines()

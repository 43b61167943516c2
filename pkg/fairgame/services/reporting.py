"""CSV, SVG and manifest output.

CSV floats are written with 17 significant digits so that reading a file
back yields the same doubles. SVGs are rendered by matplotlib with a fixed
hash salt and no date, so equal inputs give byte-identical files.
"""
import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .. import __version__  # noqa: E402
from ..errors import OutputError  # noqa: E402
from ..models.records import DeltaStats, RunRecord  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
NOT_REACHED = "*"
SVG_RC = {"svg.hashsalt": "fairgame", "svg.fonttype": "none", "path.simplify": False}

RUN_COLUMNS = ["iteration", "player", "m_cum", "shapley", "logdet_fisher_hat"]
SUMMARY_COLUMNS = ["pair", "lowest", "average", "stdev", "iter"]
_DELTA_COLUMN = re.compile(r"^delta_(\d+)_(\d+)$")


def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}", path) from e
    logger.debug(f"wrote {path}")
    return path


def read_frame(path: Union[str, Path], text_columns: Sequence[str] = ()) -> pd.DataFrame:
    path = Path(path)
    try:
        return pd.read_csv(
            path,
            float_precision="round_trip",
            dtype={c: str for c in text_columns},
            keep_default_na=False,
            na_values=[""],
        )
    except (OSError, pd.errors.ParserError) as e:
        raise OutputError(f"cannot read {path}: {e}", path) from e


def _optional(x) -> Optional[float]:
    return None if x is None or (isinstance(x, float) and np.isnan(x)) else float(x)


# ============ Run records ============

def records_to_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    """One row per (iteration, player).

    Two-player runs carry a single ``delta`` column; larger runs carry one
    ``delta_i_j`` column per pair. theta_bar is repeated on every row.
    """
    rows = []
    for r in records:
        for p, name in enumerate(r.players):
            row = {
                "iteration": r.iteration,
                "player": name,
                "m_cum": r.counts[p],
                "shapley": r.shapley[p],
                "logdet_fisher_hat": r.logdet_fisher[p],
            }
            if r.n == 2:
                row["delta"] = r.deltas[(0, 1)]
            else:
                for (i, j), d in sorted(r.deltas.items()):
                    row[f"delta_{i}_{j}"] = d
            for c, v in enumerate(r.theta_bar):
                row[f"theta_bar_{c}"] = v
            rows.append(row)
    frame = pd.DataFrame(rows)
    for col in frame.columns:
        if col.startswith("delta") or col == "logdet_fisher_hat":
            frame[col] = frame[col].astype(float)
    return frame


def emit_csv(records: Sequence[RunRecord], path: Union[str, Path]) -> Path:
    if not records:
        raise OutputError("no run records to write", path)
    return write_frame(records_to_frame(records), path)


def parse_run_records(path: Union[str, Path]) -> List[RunRecord]:
    frame = read_frame(path, text_columns=["player"])
    missing = [c for c in RUN_COLUMNS if c not in frame.columns]
    if missing:
        raise OutputError(f"{path} lacks run-record columns {missing}", path)
    theta_cols = sorted(
        (c for c in frame.columns if c.startswith("theta_bar_")), key=lambda c: int(c.rsplit("_", 1)[1])
    )
    pair_cols: Dict[Tuple[int, int], str] = {}
    if "delta" in frame.columns:
        pair_cols[(0, 1)] = "delta"
    for c in frame.columns:
        match = _DELTA_COLUMN.match(c)
        if match:
            pair_cols[(int(match.group(1)), int(match.group(2)))] = c

    records = []
    for iteration, group in frame.groupby("iteration", sort=False):
        first = group.iloc[0]
        records.append(
            RunRecord(
                iteration=int(iteration),
                players=tuple(group["player"]),
                counts=tuple(int(m) for m in group["m_cum"]),
                shapley=tuple(float(v) for v in group["shapley"]),
                logdet_fisher=tuple(_optional(v) for v in group["logdet_fisher_hat"]),
                theta_bar=tuple(float(first[c]) for c in theta_cols),
                deltas={pair: _optional(first[c]) for pair, c in sorted(pair_cols.items())},
            )
        )
    return records


# ============ Delta summaries ============

def summary_frame(stats: Sequence[DeltaStats]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "pair": f"{s.pair[0]}-{s.pair[1]}",
                "lowest": s.lowest,
                "average": s.average,
                "stdev": s.stdev,
                "iter": NOT_REACHED if s.iter is None else str(s.iter),
            }
            for s in stats
        ],
        columns=SUMMARY_COLUMNS,
    )


def emit_summary(stats: Sequence[DeltaStats], path: Union[str, Path]) -> Path:
    if not stats:
        raise OutputError("no delta statistics to write", path)
    return write_frame(summary_frame(stats), path)


def emit_sweep_summary(rows: Sequence[Tuple[str, DeltaStats]], path: Union[str, Path]) -> Path:
    """Summary rows of several settings, labelled in a leading ``setting`` column."""
    if not rows:
        raise OutputError("no sweep statistics to write", path)
    frame = summary_frame([s for _, s in rows])
    frame.insert(0, "setting", [label for label, _ in rows])
    return write_frame(frame, path)


def parse_summary(path: Union[str, Path]) -> List[DeltaStats]:
    frame = read_frame(path, text_columns=["pair", "iter"])
    out = []
    for row in frame.itertuples(index=False):
        a, b = row.pair.split("-", 1)
        out.append(
            DeltaStats(
                (a, b),
                float(row.lowest),
                float(row.average),
                float(row.stdev),
                None if row.iter == NOT_REACHED else int(row.iter),
            )
        )
    return out


# ============ Plots ============

def _save_svg(fig, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}", path) from e
    finally:
        plt.close(fig)
    logger.debug(f"wrote {path}")
    return path


def line_plot(
    series: Mapping[str, Tuple[Sequence[float], Sequence[float]]],
    path: Union[str, Path],
    title: str,
    xlabel: str,
    ylabel: str,
) -> Path:
    """One line per named series; each line's SVG group id is ``series-<name>``."""
    if not series:
        raise OutputError("nothing to plot", path)
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for name, (x, y) in series.items():
            (line,) = ax.plot(x, y, marker="o", markersize=3, linewidth=1.2, label=name)
            line.set_gid(f"series-{name}")
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(loc="best")
        fig.tight_layout()
        return _save_svg(fig, Path(path))


def emit_plots(records: Sequence[RunRecord], out_dir: Union[str, Path]) -> List[Path]:
    """Shapley values and cumulative counts against iterations."""
    out_dir = Path(out_dir)
    if not records:
        raise OutputError("no run records to plot", out_dir)
    iterations = [r.iteration for r in records]
    players = records[0].players
    shapley = {p: (iterations, [r.shapley[i] for r in records]) for i, p in enumerate(players)}
    counts = {p: (iterations, [r.counts[i] for r in records]) for i, p in enumerate(players)}
    return [
        line_plot(shapley, out_dir / "shapley_values.svg", "Shapley value", "iteration", "Shapley value"),
        line_plot(counts, out_dir / "cumulative_counts.svg", "Cumulative count", "iteration", "data points"),
    ]


def difference_plot(differences: pd.DataFrame, limits: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Scatter of pairwise Shapley differences against m with the limiting values dashed."""
    if differences.empty:
        raise OutputError("no Shapley differences to plot", path)
    limit_of = dict(zip(limits["pair"], limits["difference"]))
    with plt.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for c, (pair, group) in enumerate(differences.groupby("pair", sort=False)):
            color = f"C{c % 10}"
            points = ax.scatter(group["m"], group["difference"], s=8, color=color, label=pair)
            points.set_gid(f"series-{pair}")
            if pair in limit_of:
                limit = ax.axhline(limit_of[pair], linestyle="--", linewidth=1.0, color=color)
                limit.set_gid(f"limit-{pair}")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("m")
        ax.set_ylabel("Shapley difference")
        ax.legend(loc="best")
        fig.tight_layout()
        return _save_svg(fig, Path(path))


# ============ Manifest ============

def git_blob_hash(path: Union[str, Path]) -> str:
    """Content hash in git's blob format: sha1 of 'blob <size>\\0<bytes>'."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def config_hash(config) -> str:
    """sha256 of the canonical config JSON; the output directory is left out."""
    dump = config.model_dump(mode="json", exclude={"output_dir"})
    canonical = json.dumps(dump, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _output_key(path: Path, out_dir: Path) -> str:
    try:
        return path.resolve().relative_to(out_dir.resolve()).as_posix()
    except ValueError:
        return path.name


def write_manifest(
    out_dir: Union[str, Path],
    config,
    command: str,
    inputs: Iterable[Path] = (),
    outputs: Iterable[Path] = (),
) -> Path:
    """Record what is needed to rerun an experiment bit for bit. Written last."""
    out_dir = Path(out_dir)
    path = out_dir / "manifest.json"
    manifest = {
        "fairgame_version": __version__,
        "command": command,
        "seed": config.seed,
        "config_sha256": config_hash(config),
        "config": config.model_dump(mode="json"),
        "inputs": {str(p): git_blob_hash(p) for p in sorted(set(map(Path, inputs)))},
        "outputs": {_output_key(p, out_dir): git_blob_hash(p) for p in sorted(set(map(Path, outputs)))},
    }
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}", path) from e
    return path

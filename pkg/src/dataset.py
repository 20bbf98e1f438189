# src/dataset.py
"""
Tabular container for interferometer measurements.

One row per shot and channel: T_s, scan_index, repetition, channel, value.
CSV is the exchange format; floats are written with 17 significant digits
so files round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

import numpy as np
import pandas as pd

from src.errors import DatasetSchemaError, IncompleteDatasetError
from src.signal_model import sum_diff

COLUMNS = ["T_s", "scan_index", "repetition", "channel", "value"]
CHANNELS = ("plus", "minus", "zero", "all", "sum", "diff")
SUM_DIFF_TOLERANCE = 1e-12


@dataclass
class Dataset:
    frame: pd.DataFrame

    def __post_init__(self):
        missing = [c for c in COLUMNS if c not in self.frame.columns]
        if missing:
            raise DatasetSchemaError(f"missing columns: {', '.join(missing)}")
        self.frame = self.frame[COLUMNS].reset_index(drop=True)

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def from_channels(
        cls,
        T_s: float,
        channels: Mapping[str, np.ndarray],
        repetitions: int = 1,
    ) -> "Dataset":
        """Rows for one interrogation time; shot i maps to (i // R, i % R)."""
        frames = []
        for name, values in channels.items():
            values = np.asarray(values, dtype=float)
            shots = np.arange(values.size)
            frames.append(
                pd.DataFrame(
                    {
                        "T_s": float(T_s),
                        "scan_index": shots // repetitions,
                        "repetition": shots % repetitions,
                        "channel": name,
                        "value": values,
                    }
                )
            )
        return cls(pd.concat(frames, ignore_index=True))

    @classmethod
    def concat(cls, datasets: Iterable["Dataset"]) -> "Dataset":
        return cls(pd.concat([d.frame for d in datasets], ignore_index=True))

    # ------------------------------------------------------------------
    # Access
    # ------------------------------------------------------------------

    def times(self) -> np.ndarray:
        return np.sort(self.frame["T_s"].unique())

    def channel_names(self) -> set:
        return set(self.frame["channel"].unique())

    def channels_at(self, T_s: float) -> Dict[str, np.ndarray]:
        """Channel arrays at one T, shots ordered by (scan_index, repetition)."""
        rows = self.frame[self.frame["T_s"] == T_s]
        if rows.empty:
            raise IncompleteDatasetError(f"no records at T_s={T_s!r}")
        rows = rows.sort_values(["channel", "scan_index", "repetition"], kind="stable")
        return {
            name: group["value"].to_numpy(dtype=float)
            for name, group in rows.groupby("channel", sort=True)
        }

    def require_channels(self, names: Iterable[str]) -> None:
        absent = sorted(set(names) - self.channel_names())
        if absent:
            raise IncompleteDatasetError(f"missing channel(s): {', '.join(absent)}")

    def with_sum_diff(self) -> "Dataset":
        """Add sum/diff channels derived from plus/minus where absent."""
        if {"sum", "diff"} <= self.channel_names():
            return self
        self.require_channels(["plus", "minus"])
        extra = []
        for T_s in self.times():
            chans = self.channels_at(T_s)
            s_sum, s_diff = sum_diff(chans["plus"], chans["minus"])
            keys = self._shot_keys(T_s, "plus")
            for name, values in (("sum", s_sum), ("diff", s_diff)):
                frame = keys.copy()
                frame["channel"] = name
                frame["value"] = values
                extra.append(frame)
        kept = self.frame[~self.frame["channel"].isin(["sum", "diff"])]
        return Dataset(pd.concat([kept, *extra], ignore_index=True)[COLUMNS])

    def _shot_keys(self, T_s: float, channel: str) -> pd.DataFrame:
        rows = self.frame[(self.frame["T_s"] == T_s) & (self.frame["channel"] == channel)]
        rows = rows.sort_values(["scan_index", "repetition"], kind="stable")
        return rows[["T_s", "scan_index", "repetition"]].reset_index(drop=True)

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def validate(self, required: Optional[Iterable[str]] = None) -> None:
        """Check channel names, finiteness, group sizes and sum/diff consistency."""
        frame = self.frame
        bad_channel = frame.index[~frame["channel"].isin(CHANNELS)]
        if len(bad_channel):
            raise DatasetSchemaError("unknown channel name", rows=bad_channel)

        numeric = frame[["T_s", "value"]].apply(pd.to_numeric, errors="coerce")
        bad_value = frame.index[~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)]
        if len(bad_value):
            raise DatasetSchemaError("non-finite T_s or value", rows=bad_value)

        duplicated = frame.index[
            frame.duplicated(["T_s", "channel", "scan_index", "repetition"], keep="first")
        ]
        if len(duplicated):
            raise DatasetSchemaError("duplicate shot records", rows=duplicated)

        sizes = frame.groupby(["T_s", "channel"]).size()
        if sizes.nunique() > 1:
            expected = int(sizes.mode().iloc[0])
            odd = sizes[sizes != expected].index
            rows = frame.index[
                frame.set_index(["T_s", "channel"]).index.isin(odd)
            ]
            raise DatasetSchemaError(
                f"record count per (T, channel) differs from {expected}", rows=rows
            )

        if required is not None:
            self.require_channels(required)

        if {"plus", "minus", "sum", "diff"} <= self.channel_names():
            self._check_sum_diff()

    def _check_sum_diff(self) -> None:
        wide = self.frame.pivot_table(
            index=["T_s", "scan_index", "repetition"],
            columns="channel",
            values="value",
            aggfunc="first",
        )
        expected_sum, expected_diff = sum_diff(wide["plus"], wide["minus"])
        off = (np.abs(wide["sum"] - expected_sum) > SUM_DIFF_TOLERANCE) | (
            np.abs(wide["diff"] - expected_diff) > SUM_DIFF_TOLERANCE
        )
        if off.any():
            keys = wide.index[off.to_numpy()]
            indexed = self.frame.set_index(["T_s", "scan_index", "repetition"]).index
            rows = self.frame.index[
                indexed.isin(keys) & self.frame["channel"].isin(["sum", "diff"]).to_numpy()
            ]
            raise DatasetSchemaError("sum/diff inconsistent with plus/minus", rows=rows)

    # ------------------------------------------------------------------
    # CSV codec
    # ------------------------------------------------------------------

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, float_format="%.17g")
        return path

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Dataset file not found: {path}")
        try:
            frame = pd.read_csv(path, dtype={"channel": str}, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DatasetSchemaError(f"unreadable dataset {path}: {e}") from e
        missing = [c for c in COLUMNS if c not in frame.columns]
        if missing:
            raise DatasetSchemaError(f"missing columns: {', '.join(missing)}")
        for column in ("scan_index", "repetition"):
            as_int = pd.to_numeric(frame[column], errors="coerce")
            bad = frame.index[as_int.isna() | (as_int % 1 != 0)]
            if len(bad):
                raise DatasetSchemaError(f"{column} must be an integer", rows=bad)
            frame[column] = as_int.astype(int)
        return cls(frame)

"""Canonical researcher dataset: columnar container and CSV schema.

One row per researcher: id, field, M, G, D, H, F, R, EG, M_tilde_1..4,
feature_1..K.  Missing numerics are empty cells (never sentinels); the
third indifference salary is absent for researchers without duties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .core import Calibration
from .errors import ValidationError

__all__ = ["Population", "read_dataset", "write_dataset", "BASE_COLUMNS"]

BASE_COLUMNS = [
    "id",
    "field",
    "M",
    "G",
    "D",
    "H",
    "F",
    "R",
    "EG",
    "M_tilde_1",
    "M_tilde_2",
    "M_tilde_3",
    "M_tilde_4",
]


@dataclass
class Population:
    """Columnar view of the canonical dataset."""

    ids: np.ndarray
    field_label: np.ndarray
    M: np.ndarray
    G: np.ndarray
    D: np.ndarray
    H: np.ndarray
    F: np.ndarray
    R: np.ndarray
    EG: np.ndarray
    answers: np.ndarray  # (N, 4), NaN where absent
    features: np.ndarray  # (N, K), K may be 0
    T: Optional[np.ndarray] = None
    truth: Optional[dict] = None  # generator-side attributes, never serialized to CSV

    def __len__(self):
        return len(self.ids)

    def validate(self, cal: Calibration, require_answers: bool = False):
        n = len(self.ids)
        if len(set(self.ids.tolist())) != n:
            raise ValidationError("researcher ids must be unique")
        checks = [
            (np.all(self.M > 0), "M must be positive"),
            (np.all(self.G >= 0), "G must be non-negative"),
            (np.all((self.D >= 0) & (self.D < cal.h_max)), "D must satisfy 0 <= D < H_max"),
            (np.all(self.R > 0), "R must be positive"),
            (np.all(self.F >= 0), "F must be non-negative"),
            (np.all(self.EG >= 0), "EG must be non-negative"),
            (
                np.all(np.abs(self.R + self.F + self.D - self.H) <= 1e-6),
                "time identity R + F + D = H violated",
            ),
            (
                np.all((self.D < self.H) & (self.H <= cal.h_max + 1e-9)),
                "hours must satisfy D < H <= H_max",
            ),
            (np.all((self.EG == 0) | (self.F > 0)), "EG > 0 requires F > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)
        present = ~np.isnan(self.answers)
        if np.any(self.answers[present] <= 0):
            raise ValidationError("indifference salaries must be positive when present")
        if np.any(present[:, 2] & (self.D == 0)):
            raise ValidationError(
                "researchers without duties are not shown the duty-elimination offer"
            )
        if require_answers:
            need = np.ones_like(present)
            need[:, 2] = self.D > 0
            if not np.all(present == need):
                raise ValidationError("dataset is missing required indifference salaries")
        if self.features.size and not np.all(np.isfinite(self.features)):
            raise ValidationError("features must be finite")

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(
            {
                "id": self.ids,
                "field": self.field_label,
                "M": self.M,
                "G": self.G,
                "D": self.D,
                "H": self.H,
                "F": self.F,
                "R": self.R,
                "EG": self.EG,
            }
        )
        for j in range(4):
            df[f"M_tilde_{j + 1}"] = self.answers[:, j]
        for k in range(self.features.shape[1]):
            df[f"feature_{k + 1}"] = self.features[:, k]
        return df

    @staticmethod
    def from_dataframe(df: pd.DataFrame) -> "Population":
        missing = [c for c in BASE_COLUMNS if c not in df.columns]
        if missing:
            raise ValidationError(f"dataset is missing columns: {', '.join(missing)}")
        feat_cols = sorted(
            (c for c in df.columns if c.startswith("feature_")),
            key=lambda c: int(c.split("_")[1]),
        )
        n = len(df)
        answers = np.column_stack(
            [pd.to_numeric(df[f"M_tilde_{j + 1}"], errors="raise").to_numpy(dtype=float) for j in range(4)]
        ) if n else np.empty((0, 4))
        features = (
            df[feat_cols].to_numpy(dtype=float) if feat_cols and n else np.empty((n, len(feat_cols)))
        )
        return Population(
            ids=df["id"].astype(str).to_numpy(),
            field_label=df["field"].astype(str).to_numpy(),
            M=df["M"].to_numpy(dtype=float),
            G=df["G"].to_numpy(dtype=float),
            D=df["D"].to_numpy(dtype=float),
            H=df["H"].to_numpy(dtype=float),
            F=df["F"].to_numpy(dtype=float),
            R=df["R"].to_numpy(dtype=float),
            EG=df["EG"].to_numpy(dtype=float),
            answers=answers,
            features=features,
        )


def write_dataset(pop: Population, path):
    pop.to_dataframe().to_csv(path, index=False, float_format="%.17g")


def read_dataset(path, cal: Calibration, require_answers: bool = False) -> Population:
    df = pd.read_csv(path)
    pop = Population.from_dataframe(df)
    pop.validate(cal, require_answers=require_answers)
    return pop

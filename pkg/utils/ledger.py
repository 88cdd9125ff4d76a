"""
Energy ledger
Rows of functionals recorded along a run, with exact CSV round trips
"""
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from loguru import logger

from utils.errors import LedgerFormatError

# Header order is part of the file format
LEDGER_COLUMNS = [
    "t",
    "mass",
    "E0",
    "D0",
    "E1",
    "D1",
    "D1_tilde",
    "E2",
    "D2",
    "u_besov_m1_2",       # ||u|| in B^{-1/2}_{2,inf}
    "u_besov_m3_2",       # ||u|| in B^{-3/2}_{2,inf}
    "u_besov_1_2_1",      # ||u|| in B^{1/2}_{2,1}
    "w_inf",
    "grad_w_inf",
    "grad_u_inf",
    "rho_inf",
    "int_D0",
    "int_grad_u_inf",
    "int_grad_w_inf",
    # extended columns
    "u_inf",
    "sqrt_rho_w_inf",
    "grad_u_l2sq",
    "slip_l2sq",          # ||sqrt(rho)(w - u)||^2
    "sqrt_rho_wt_l2sq",
    "int_exp_u_inf",      # int_0^t e^s ||u||_inf ds
    "int_weighted_D1_tilde",
]


class EnergyLedger:
    """Append-only table of ledger rows; t strictly increasing, entries finite and >= 0"""

    def __init__(self, rows: Optional[Iterable[Dict[str, float]]] = None):
        self.rows: List[Dict[str, float]] = []
        for row in rows or []:
            self.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, index: int) -> Dict[str, float]:
        return self.rows[index]

    def append(self, row: Dict[str, float]):
        missing = [c for c in LEDGER_COLUMNS if c not in row]
        extra = [c for c in row if c not in LEDGER_COLUMNS]
        if missing or extra:
            raise LedgerFormatError(f"row keys differ from ledger columns (missing={missing}, extra={extra})")
        values = np.array([row[c] for c in LEDGER_COLUMNS], dtype=np.float64)
        if not np.all(np.isfinite(values)):
            bad = [c for c, v in zip(LEDGER_COLUMNS, values) if not np.isfinite(v)]
            raise LedgerFormatError(f"non-finite ledger entries at t={row['t']}: {bad}")
        if np.any(values < 0):
            bad = [c for c, v in zip(LEDGER_COLUMNS, values) if v < 0]
            raise LedgerFormatError(f"negative ledger entries at t={row['t']}: {bad}")
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise LedgerFormatError(f"ledger time must increase: {row['t']} after {self.rows[-1]['t']}")
        self.rows.append({c: float(v) for c, v in zip(LEDGER_COLUMNS, values)})

    def column(self, name: str) -> np.ndarray:
        if name not in LEDGER_COLUMNS:
            raise LedgerFormatError(f"unknown ledger column {name!r}")
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=LEDGER_COLUMNS, dtype=np.float64)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "EnergyLedger":
        return cls(frame.astype(np.float64).to_dict(orient="records"))


def write_ledger(ledger: EnergyLedger, path: Path):
    """Header row plus one line per row, 17 significant digits"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ledger.to_frame().to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote ledger ({len(ledger)} rows): {path}")


def read_ledger(path: Path) -> EnergyLedger:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.EmptyDataError as e:
        raise LedgerFormatError(f"{path} is empty (no header row)") from e
    if list(frame.columns) != LEDGER_COLUMNS:
        raise LedgerFormatError(
            f"{path} header does not match the ledger columns: {list(frame.columns)[:5]}..."
        )
    return EnergyLedger.from_frame(frame)

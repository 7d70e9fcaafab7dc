"""
CSV number formatting: '.' decimal separator, scientific notation below 1e-2
written like "4.06e-2" (no exponent padding or plus sign).
"""

import math
from typing import Any

import pandas as pd

SCI_THRESHOLD = 1e-2


def format_number(x: Any, digits: int = 3) -> str:
    """Render one table cell; ints and strings pass through, NaN becomes empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, str)):
        return str(x)
    if isinstance(x, int):
        return str(x)
    value = float(x)
    if math.isnan(value):
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value != 0.0 and abs(value) < SCI_THRESHOLD:
        mantissa, exponent = f"{value:.{digits - 1}e}".split("e")
        return f"{mantissa}e{int(exponent)}"
    return f"{value:.{digits + 1}g}"


def format_frame(df: pd.DataFrame) -> pd.DataFrame:
    """Copy of df with every float column rendered through format_number."""
    out = df.copy()
    for column in out.columns:
        if pd.api.types.is_float_dtype(out[column]):
            out[column] = [format_number(v) for v in out[column]]
        elif pd.api.types.is_object_dtype(out[column]):
            out[column] = [format_number(v) if isinstance(v, float) or v is None else v for v in out[column]]
    return out

import json
from pathlib import Path
from typing import Tuple, Union

import pandas as pd

from app.fields import FieldEstimate, Quantity


def field_frame(field: FieldEstimate) -> pd.DataFrame:
    """One row per grid node: coordinates, then the value (or real and imag parts)."""
    prefix = "u" if field.quantity is Quantity.CHF else "x"
    nodes = field.mesh()
    frame = pd.DataFrame(nodes, columns=[f"{prefix}{k + 1}" for k in range(field.dim)])
    values = field.values.reshape(-1)
    if field.is_complex:
        frame["real"] = values.real
        frame["imag"] = values.imag
    else:
        frame["value"] = values
    return frame


def field_header(field: FieldEstimate) -> dict:
    return {
        "axes": [
            {"lower": float(a[0]), "upper": float(a[-1]), "count": int(a.size)} for a in field.axes
        ],
        "time": float(field.time),
        "provenance": field.provenance.value,
        "quantity": field.quantity.value,
        "complex": field.is_complex,
        "label": field.label,
    }


def write_field(field: FieldEstimate, stem: Union[str, Path]) -> Tuple[Path, Path]:
    """Writes <stem>.csv and <stem>.json."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.parent / f"{stem.name}.csv"
    json_path = stem.parent / f"{stem.name}.json"
    field_frame(field).to_csv(csv_path, index=False, float_format="%.17g")
    json_path.write_text(json.dumps(field_header(field), indent=2))
    return csv_path, json_path

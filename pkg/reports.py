import logging
from io import BytesIO
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill
from openpyxl.utils import get_column_letter
from pydantic import BaseModel

logger = logging.getLogger(__name__)

HEADER_FONT = Font(bold=True, color="FFFFFF")
HEADER_FILL = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
TITLE_FONT = Font(bold=True, size=14)


def report_rows(reports: Iterable[BaseModel]) -> pd.DataFrame:
    """Una fila por informe; las listas y diccionarios se aplanan a texto."""
    rows = []
    for report in reports:
        row = {}
        for key, value in report.model_dump(mode="json").items():
            if isinstance(value, list):
                value = "; ".join(str(v) for v in value)
            elif isinstance(value, dict):
                value = "; ".join(f"{k}={v}" for k, v in value.items())
            row[key] = value
        rows.append(row)
    return pd.DataFrame(rows)


def _style_sheet(worksheet, frame: pd.DataFrame, title: str) -> None:
    """Título en la fila 1, cabecera en la 2 y anchos de columna ajustados."""
    worksheet.append([title])
    worksheet["A1"].font = TITLE_FONT
    worksheet.append([str(c) for c in frame.columns])
    for col in range(1, len(frame.columns) + 1):
        worksheet.cell(row=2, column=col).font = HEADER_FONT
        worksheet.cell(row=2, column=col).fill = HEADER_FILL
    for record in frame.itertuples(index=False):
        worksheet.append([v.item() if isinstance(v, np.generic) else v for v in record])
    for col_idx, column in enumerate(frame.columns, 1):
        width = max([len(str(column))] + [len(str(v)) for v in frame[column]])
        worksheet.column_dimensions[get_column_letter(col_idx)].width = min(max(width + 2, 12), 80)


def build_workbook(sheets: Dict[str, pd.DataFrame]) -> bytes:
    """Libro con una hoja por tabla, con el estilo de cabecera común."""
    workbook = Workbook()
    if workbook.sheetnames:
        workbook.remove(workbook.active)
    for title, frame in sheets.items():
        # Excel limita los nombres de hoja a 31 caracteres
        worksheet = workbook.create_sheet(title=title[:31])
        _style_sheet(worksheet, frame, title)
    output = BytesIO()
    workbook.save(output)
    output.seek(0)
    return output.getvalue()


def write_reports_xlsx(path: Union[str, Path], reports: Sequence[BaseModel], title: str = "Veredictos") -> Path:
    path = Path(path)
    frame = report_rows(reports)
    path.write_bytes(build_workbook({title: frame}))
    logger.info(f"📊 {len(frame)} fila(s) exportadas a {path}")
    return path


def ap_frame(points: Sequence, values: np.ndarray) -> pd.DataFrame:
    """Puntos de la rejilla como columnas y extracciones como filas."""
    values = np.atleast_2d(np.asarray(values))
    labels = [_point_label(p) for p in points]
    frame = pd.DataFrame(values, columns=labels)
    frame.index.name = "draw"
    return frame


def _point_label(point) -> str:
    return "|".join(".".join(str(c) for c in level) for level in point)


def write_ap_csv(path: Union[str, Path], points: Sequence, values: np.ndarray) -> Path:
    path = Path(path)
    ap_frame(points, values).to_csv(path)
    logger.info(f"📄 Array exportado a {path}")
    return path


def write_ap_xlsx(
    path: Union[str, Path],
    points: Sequence,
    values: np.ndarray,
    summary: Optional[BaseModel] = None,
) -> Path:
    path = Path(path)
    sheets: Dict[str, pd.DataFrame] = {"Array": ap_frame(points, values).reset_index()}
    if summary is not None:
        sheets["Invarianza"] = report_rows([summary])
    path.write_bytes(build_workbook(sheets))
    logger.info(f"📊 Array y resumen exportados a {path}")
    return path


def read_sheet(path: Union[str, Path], sheet: Optional[str] = None) -> pd.DataFrame:
    """Lee una hoja escrita por este módulo (cabecera en la fila 2)."""
    return pd.read_excel(path, sheet_name=sheet or 0, header=1, engine="openpyxl")


def sheet_names(path: Union[str, Path]) -> List[str]:
    return pd.ExcelFile(path, engine="openpyxl").sheet_names

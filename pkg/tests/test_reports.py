import numpy as np
import pandas as pd

from hierarchy import build_ap_structure, check_hierarchical_invariance, sample_ap_array
from models import CheckReport
from reports import ap_frame, read_sheet, report_rows, sheet_names, write_ap_csv, write_ap_xlsx, write_reports_xlsx


def reports():
    return [
        CheckReport(check="hereditary", class_name="equiv", bound=3, holds=True),
        CheckReport(check="amalgamation", class_name="equiv", bound=3, holds=False, witness=["a", "b"]),
    ]


def test_report_rows_flatten_lists():
    frame = report_rows(reports())
    assert list(frame.columns) == ["check", "class_name", "bound", "holds", "witness", "detail"]
    assert frame.loc[1, "witness"] == "a; b"


def test_reports_workbook(tmp_path):
    path = write_reports_xlsx(tmp_path / "veredictos.xlsx", reports())
    assert sheet_names(path) == ["Veredictos"]
    frame = read_sheet(path)
    assert list(frame["check"]) == ["hereditary", "amalgamation"]
    assert list(frame["holds"]) == [True, False]
    assert list(frame["bound"]) == [3, 3]


def test_ap_frame_labels():
    points = [((0, 1),), ((1, 0),)]
    frame = ap_frame(points, np.array([[0.5, 0.25], [0.125, 0.0]]))
    assert list(frame.columns) == ["0.1", "1.0"]
    assert frame.index.name == "draw"
    assert ap_frame([((0,), (1,), (0,))], np.array([0.5])).columns[0] == "0|1|0"


def test_ap_exports(tmp_path):
    index = build_ap_structure(2, 2)
    values = sample_ap_array(index, "leaf", seed=2, samples=3, p=8)
    summary = check_hierarchical_invariance(index, "leaf", samples=200, seed=2, permutations=1)

    csv = write_ap_csv(tmp_path / "array.csv", index.points, values)
    back = pd.read_csv(csv, index_col="draw")
    assert back.shape == (3, 4)
    assert np.allclose(back.to_numpy(), values)

    xlsx = write_ap_xlsx(tmp_path / "array.xlsx", index.points, values, summary)
    assert sheet_names(xlsx) == ["Array", "Invarianza"]
    array = read_sheet(xlsx, "Array")
    assert list(array.columns) == ["draw", "0.0", "0.1", "1.0", "1.1"]
    assert np.allclose(array.drop(columns="draw").to_numpy(), values)
    assert read_sheet(xlsx, "Invarianza").loc[0, "mix"] == "leaf"

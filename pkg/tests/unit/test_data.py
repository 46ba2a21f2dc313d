"""Unit tests for CSV ingestion, dataset loading and alignment."""
from pathlib import Path

import numpy as np
import pytest

from paeekit.data import (
    Dataset,
    LabelSeries,
    SensorLocation,
    UniformSeries,
    UniformTriaxial,
    align_overlap,
    format_acc_csv,
    format_breath_csv,
    load_dataset,
    load_subject,
    parse_acc_csv,
    parse_breath_csv,
    parse_meta_csv,
    write_subject,
)
from paeekit.errors import (
    DuplicateSubjectId,
    EmptyFile,
    InclusionCriteriaWarning,
    MalformedRow,
    MissingFile,
    NegativeGasFlow,
    NonMonotoneTimestamps,
    NoOverlap,
    ShortRest,
)
from tests.helpers import make_acc, make_breaths, make_record


def _acc_text(n: int = 31, rate: float = 30.0) -> str:
    rows = ["t_s,ax,ay,az"]
    rows += [f"{k / rate:.4f},0.1,-0.2,9.81" for k in range(n)]
    return "\n".join(rows) + "\n"


@pytest.mark.unit
def test_parse_acc_csv():
    """Test a well-formed accelerometer file."""
    series = parse_acc_csv(_acc_text())
    assert len(series) == 31
    assert series.rate == pytest.approx(30.0, rel=1e-3)
    assert series.az[0] == 9.81


@pytest.mark.unit
def test_acc_format_parse_is_exact():
    """Test emitted accelerometer CSV parses back bit-exactly."""
    series = make_acc(90, seed=3)
    parsed = parse_acc_csv(format_acc_csv(series))
    np.testing.assert_array_equal(parsed.timestamps, series.timestamps)
    np.testing.assert_array_equal(parsed.axes, series.axes)


@pytest.mark.unit
def test_malformed_row_reports_line():
    """Test a non-numeric value names its 1-based line (header is line 1)."""
    lines = _acc_text(5).splitlines()
    lines[3] = "0.0667,abc,0,9.81"
    with pytest.raises(MalformedRow) as excinfo:
        parse_acc_csv("\n".join(lines) + "\n")
    assert excinfo.value.line == 4


@pytest.mark.unit
def test_wrong_header():
    """Test a header mismatch is a malformed first line."""
    with pytest.raises(MalformedRow) as excinfo:
        parse_acc_csv("time,x,y,z\n0,0,0,0\n")
    assert excinfo.value.line == 1


@pytest.mark.unit
def test_empty_files():
    """Test empty and header-only files."""
    with pytest.raises(EmptyFile):
        parse_acc_csv("")
    with pytest.raises(EmptyFile):
        parse_breath_csv("t_s,vo2_ml_min,vco2_ml_min,label\n")


@pytest.mark.unit
def test_non_monotone_timestamps():
    """Test repeated timestamps are rejected."""
    text = "t_s,ax,ay,az\n0.0,0,0,9.8\n0.0333,0,0,9.8\n0.0333,0,0,9.8\n"
    with pytest.raises(NonMonotoneTimestamps):
        parse_acc_csv(text)


@pytest.mark.unit
def test_acc_rate_out_of_tolerance():
    """Test a 10 Hz file is not accepted as 30 Hz data."""
    with pytest.raises(MalformedRow, match="sampling rate"):
        parse_acc_csv(_acc_text(20, rate=10.0))


@pytest.mark.unit
def test_parse_breath_csv_and_negative_flow():
    """Test breath parsing keeps labels and rejects negative flows."""
    text = "t_s,vo2_ml_min,vco2_ml_min,label\n1.5,300,255,Mopping\n4.2,310.5,260,Mopping\n"
    series = parse_breath_csv(text)
    assert series.labels == ["Mopping", "Mopping"]
    assert series.vo2[1] == 310.5

    bad = "t_s,vo2_ml_min,vco2_ml_min,label\n1.5,300,255,Mopping\n4.2,-1,260,Mopping\n"
    with pytest.raises(NegativeGasFlow, match="line 3"):
        parse_breath_csv(bad)


@pytest.mark.unit
def test_breath_format_round_trip():
    """Test labels with spaces and parentheses survive emission."""
    series = make_breaths(30.0, label="Treadmill (3 km/h)")
    parsed = parse_breath_csv(format_breath_csv(series))
    assert parsed.labels == series.labels
    np.testing.assert_array_equal(parsed.vco2, series.vco2)


@pytest.mark.unit
def test_parse_meta_csv():
    """Test the single-row subject description."""
    meta = parse_meta_csv("id,sex,age,height_cm,mass_kg\nS01,F,34,168.5,61.2\n")
    assert meta.id == "S01"
    assert meta.age == 34
    assert meta.bmi == pytest.approx(61.2 / 1.685 ** 2)

    with pytest.raises(MalformedRow):
        parse_meta_csv("id,sex,age,height_cm,mass_kg\nS01,X,34,168.5,61.2\n")
    with pytest.raises(MalformedRow):
        parse_meta_csv("id,sex,age,height_cm,mass_kg\nS01,F,34.5,168.5,61.2\n")


@pytest.mark.unit
def test_write_and_load_subject(temp_dir: Path):
    """Test a subject written to disk loads back unchanged."""
    record = make_record("S07")
    subject_dir = write_subject(record, temp_dir)
    assert sorted(p.name for p in subject_dir.iterdir()) == sorted(
        ["meta.csv", "rest.csv", "adl.csv"] + [loc.filename for loc in SensorLocation]
    )
    loaded = load_subject(subject_dir)
    assert loaded.meta == record.meta
    for location in SensorLocation:
        np.testing.assert_array_equal(loaded.acc[location].axes, record.acc[location].axes)
    np.testing.assert_array_equal(loaded.rest.vo2, record.rest.vo2)


@pytest.mark.unit
def test_missing_file_names_path(temp_dir: Path):
    """Test a missing sensor file is reported with its path."""
    subject_dir = write_subject(make_record("S01"), temp_dir)
    (subject_dir / "acc_left_wrist.csv").unlink()
    with pytest.raises(MissingFile) as excinfo:
        load_subject(subject_dir)
    assert excinfo.value.path.name == "acc_left_wrist.csv"


@pytest.mark.unit
def test_inclusion_criteria_warning(temp_dir: Path):
    """Test subjects outside the BMI limit load with a warning."""
    subject_dir = write_subject(make_record("S02", mass_kg=125.0, height_cm=170.0), temp_dir)
    with pytest.warns(InclusionCriteriaWarning, match="BMI"):
        record = load_subject(subject_dir)
    assert record.meta.bmi >= 40


@pytest.mark.unit
def test_short_rest():
    """Test a rest session under 30 minutes is rejected."""
    with pytest.raises(ShortRest):
        make_record(rest_s=1200.0)


@pytest.mark.unit
def test_dataset_ids(temp_dir: Path):
    """Test dataset loading order and duplicate detection."""
    for sid in ("S03", "S01", "S02"):
        write_subject(make_record(sid), temp_dir)
    (temp_dir / "notes.txt").write_text("not a subject")
    dataset = load_dataset(temp_dir)
    assert dataset.ids == ["S01", "S02", "S03"]
    assert dataset.without("S02").ids == ["S01", "S03"]

    with pytest.raises(DuplicateSubjectId):
        Dataset([make_record("S01"), make_record("S01")])


@pytest.mark.unit
def test_load_dataset_missing_root(temp_dir: Path):
    """Test a missing dataset directory."""
    with pytest.raises(MissingFile):
        load_dataset(temp_dir / "nowhere")


@pytest.mark.unit
def test_align_overlap_crops_to_common_span():
    """Test series starting at 0 and 3 are cropped to [3, 10)."""
    a = UniformSeries(0.0, 1.0, np.arange(10.0))
    b = UniformTriaxial(3.0, 1.0, np.tile(np.arange(10.0), (3, 1)))
    c = LabelSeries(1.0, 1.0, [f"L{i}" for i in range(12)])
    out_a, out_b, out_c = align_overlap([a, b, c])
    assert out_a.start == out_b.start == out_c.start == 3.0
    assert len(out_a) == len(out_b) == len(out_c) == 7
    np.testing.assert_array_equal(out_a.values, np.arange(3.0, 10.0))
    np.testing.assert_array_equal(out_b.values[0], np.arange(7.0))
    assert out_c.values[0] == "L2"


@pytest.mark.unit
def test_align_overlap_disjoint():
    """Test disjoint spans raise NoOverlap."""
    with pytest.raises(NoOverlap):
        align_overlap([UniformSeries(0.0, 1.0, np.zeros(5)), UniformSeries(5.0, 1.0, np.zeros(5))])


@pytest.mark.unit
def test_align_overlap_requires_common_grid():
    """Test half-second offsets are not silently rounded."""
    with pytest.raises(ValueError):
        align_overlap([UniformSeries(0.0, 1.0, np.zeros(5)), UniformSeries(0.5, 1.0, np.zeros(5))])

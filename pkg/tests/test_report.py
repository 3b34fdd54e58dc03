"""Unit tests for report."""

import json

import pytest

from mimofas.campaign import CampaignResult, ResultRow
from mimofas.config import CampaignConfig, Experiment
from mimofas.report import (
    CSV_HEADER,
    CampaignReport,
    read_results,
    write_campaign_report,
)


@pytest.fixture
def result() -> CampaignResult:
    """Return a campaign result with a rare event."""
    config = CampaignConfig(
        experiment=Experiment.OUTAGE_VS_TARGET,
        sweep=[1.0, 2.0],
        trials=100,
        seed=4,
    )
    rows = [
        ResultRow(1.0, "qr.outage", 0.0, 100, 0.0, 4),
        ResultRow(2.0, "qr.outage", 0.1, 100, 0.0588, 4),
    ]
    return CampaignResult(config, rows, ["qr.outage@1.0"])


def test_csv_content(result) -> None:
    """Test the results table.

    It must start with the header and use LF line endings.
    """
    content = CampaignReport(result).csv_content()
    lines = content.split("\n")
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "1.0,qr.outage,0.0,100,0.0,4"
    assert lines[2] == "2.0,qr.outage,0.1,100,0.0588,4"
    assert lines[3] == ""
    assert "\r" not in content


def test_summary(result) -> None:
    """Test the JSON summary.

    It must echo the configuration, the totals and the rare events.
    """
    summary = json.loads(CampaignReport(result).json_content())
    assert summary["experiment"] == "outage-vs-q"
    assert summary["seed"] == 4
    assert summary["trials_per_point"] == 100
    assert summary["config"]["sweep"] == [1.0, 2.0]
    assert summary["totals"] == {
        "rows": 2,
        "metrics": 1,
        "sweep_values": 2,
        "trials": 200,
        "rare_events": 1,
    }
    assert summary["rare_events"] == ["qr.outage@1.0"]


def test_json_content_is_deterministic(result) -> None:
    """Test the JSON summary of the same result twice.

    It must be byte identical.
    """
    assert CampaignReport(result).json_content() == (
        CampaignReport(result).json_content()
    )


def test_markdown_content(result) -> None:
    """Test the Markdown summary.

    It must list the rare events and every row.
    """
    content = CampaignReport(result).markdown_content()
    assert content.startswith("# Campaign `outage-vs-q`")
    assert "## Rare events" in content
    assert "- `qr.outage@1.0`" in content
    assert "| 2.0 | qr.outage | 0.1 | 100 | 0.0588 |" in content


def test_markdown_without_rare_events(result) -> None:
    """Test the Markdown summary without rare events.

    It must not have a rare events section.
    """
    result.rare_events.clear()
    content = CampaignReport(result).markdown_content()
    assert "Rare events" not in content


def test_write_and_read_back(result, tmp_path) -> None:
    """Test the files written in a new directory.

    The results table must be read back unchanged.
    """
    output_dir = tmp_path / "campaign"
    paths = write_campaign_report(result, output_dir)
    assert [path.name for path in paths] == [
        "results.csv",
        "summary.json",
        "summary.md",
    ]
    assert all(path.is_file() for path in paths)
    assert b"\r\n" not in paths[0].read_bytes()
    assert read_results(paths[0]) == result.rows


def test_read_results_with_invalid_header(tmp_path) -> None:
    """Test a table with an unexpected header.

    It must raise an exception.
    """
    csv_file = tmp_path / "results.csv"
    csv_file.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="Unexpected results header"):
        read_results(csv_file)

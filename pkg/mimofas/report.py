"""Campaign results writing."""

import csv
import io
import json
import logging
from pathlib import Path

from jinja2 import Environment, PackageLoader

from .campaign import CampaignResult, ResultRow

#: Create logger for this file.
logger = logging.getLogger()

#: Header of the results table.
CSV_HEADER: tuple[str, ...] = (
    "sweep",
    "metric",
    "value",
    "trials",
    "ci95",
    "seed",
)


def _format_number(value: float) -> str:
    """Return the shortest text giving back `value` exactly.

    This method is also used to format numbers inside templates.
    """
    return repr(value)


def _row_fields(row: ResultRow) -> list[str]:
    """Return the CSV fields of `row`."""
    return [
        _format_number(row.sweep),
        row.metric,
        _format_number(row.value),
        str(row.trials),
        _format_number(row.ci95),
        str(row.seed),
    ]


class CampaignReport:
    """Write the results and summaries of a campaign."""

    #: Results table file name
    __CSV_FILE: str = "results.csv"

    #: JSON summary file name
    __JSON_FILE: str = "summary.json"

    #: Markdown summary file name
    __MARKDOWN_FILE: str = "summary.md"

    #: Markdown summary template
    __MARKDOWN_TEMPLATE: str = "summary.md.jinja2"

    def __init__(self, result: CampaignResult) -> None:
        """Construct the report of `result`.

        :param result: Rows produced by a campaign.
        """
        logger.debug("Create campaign report")

        #: Campaign result
        self._result: CampaignResult = result
        #: Object to manipulate the templates.
        self._templates: Environment = Environment(
            loader=PackageLoader("mimofas"),
            keep_trailing_newline=True,
            autoescape=True,
        )

        # Add custom filter to format numbers in the templates
        self._templates.filters["format_number"] = _format_number

        logger.debug("Campaign report created")

    def summary(self) -> dict:
        """Return the summary: configuration echo, totals and rare events."""
        config = self._result.config
        return {
            "config": config.model_dump(mode="json"),
            "experiment": config.experiment.value,
            "seed": config.seed,
            "trials_per_point": config.resolved_trials(),
            "totals": self._result.totals(),
            "rare_events": list(self._result.rare_events),
        }

    def csv_content(self) -> str:
        """Return the results table."""
        content = io.StringIO()
        writer = csv.writer(content, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(_row_fields(row) for row in self._result.rows)
        return content.getvalue()

    def json_content(self) -> str:
        """Return the JSON summary."""
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def markdown_content(self) -> str:
        """Return the Markdown summary."""
        logger.debug("Generate content from %s", self.__MARKDOWN_TEMPLATE)
        template = self._templates.get_template(self.__MARKDOWN_TEMPLATE)
        return template.render(
            summary=self.summary(),
            rows=self._result.rows,
        )

    def write(self, output_dir: Path) -> list[Path]:
        """Write every output file in `output_dir`.

        :param output_dir: Directory created if missing.
        :return: Paths written.
        """
        logger.info("Write campaign results in %s", output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        contents = {
            self.__CSV_FILE: self.csv_content(),
            self.__JSON_FILE: self.json_content(),
            self.__MARKDOWN_FILE: self.markdown_content(),
        }
        paths = []
        for name, content in contents.items():
            path = output_dir / name
            with path.open("w", encoding="utf-8", newline="\n") as output:
                output.write(content)
            logger.debug("%s written", path)
            paths.append(path)
        return paths


def read_results(csv_file: Path) -> list[ResultRow]:
    """Read back a results table.

    :param csv_file: Table written by `CampaignReport.write`.
    :return: Rows in file order.
    :raises ValueError: If the header is not the expected one.
    """
    with csv_file.open(encoding="utf-8", newline="") as table:
        reader = csv.reader(table)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            msg = f"Unexpected results header {header}"
            raise ValueError(msg)
        return [
            ResultRow(
                float(sweep),
                metric,
                float(value),
                int(trials),
                float(ci95),
                int(seed),
            )
            for sweep, metric, value, trials, ci95, seed in reader
        ]


def write_campaign_report(
    result: CampaignResult,
    output_dir: Path,
) -> list[Path]:
    """Write the results of a campaign.

    :param result: Rows produced by a campaign.
    :param output_dir: Output directory.
    :return: Paths written.
    """
    return CampaignReport(result).write(output_dir)

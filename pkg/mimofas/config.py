"""Manage campaign configuration file."""

import json
import logging
import math
from enum import Enum, unique
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .channel import MAX_SEED
from .coupling import Coupling
from .geometry import (
    DEFAULT_KERNEL,
    SurfaceGeometry,
    correlation_eigen,
    estimate_rank,
    kernel_names,
)
from .metrics import LinkScenario, db_to_linear, half_wavelength_count
from .selection import (
    DEFAULT_COMBO_LIMIT,
    Strategy,
    SwapCriterion,
    separated_port_count,
)

#: Create logger for this file.
logger = logging.getLogger()

#: Default number of trials of rate experiments.
DEFAULT_RATE_TRIALS: int = 10_000

#: Default number of trials of outage experiments.
DEFAULT_OUTAGE_TRIALS: int = 100_000


class Settings(BaseSettings):
    """Store all settings from environment variables."""

    #: Specific configuration
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    #: Default output directory of campaigns
    output_dir: Path | None = Field(default=None, alias="MIMOFAS_OUTPUT_DIR")


class ImmutableModel(BaseModel):
    """Provide immutable model. It is used as base model."""

    #: Specific configuration
    model_config = ConfigDict(frozen=True, extra="forbid")


@unique
class Experiment(Enum):
    """Enumerate all experiments a campaign can run."""

    #: Mean rate versus number of active ports
    RATE_VS_ACTIVE_PORTS = "rate-vs-ns"
    #: Mean rate versus number of ports
    RATE_VS_PORTS = "rate-vs-Ns"
    #: Outage probability versus SNR
    OUTAGE_VS_SNR = "outage-vs-snr"
    #: Outage probability versus target rate
    OUTAGE_VS_TARGET = "outage-vs-q"
    #: Diversity multiplexing tradeoff curves
    DMT = "dmt"
    #: q-outage capacity and gain
    Q_OUTAGE = "q-outage"
    #: Effective rank of the correlation versus aperture
    TABLE1 = "table1"
    #: Empirical against analytic channel covariance
    COVARIANCE_CHECK = "covariance-check"


#: Experiments whose trials default to the outage budget.
OUTAGE_EXPERIMENTS: frozenset[Experiment] = frozenset(
    {
        Experiment.OUTAGE_VS_SNR,
        Experiment.OUTAGE_VS_TARGET,
        Experiment.Q_OUTAGE,
    },
)

#: Experiments that need no Monte Carlo trials.
ANALYTIC_EXPERIMENTS: frozenset[Experiment] = frozenset(
    {Experiment.DMT, Experiment.TABLE1},
)


class SurfaceConfig(ImmutableModel):
    """Store the port grid of one side."""

    #: Ports along dimension 1
    n1: int = Field(default=10, ge=1)
    #: Ports along dimension 2
    n2: int = Field(default=10, ge=1)
    #: Aperture along dimension 1 in wavelengths
    w1: float = Field(default=1.0, ge=0)
    #: Aperture along dimension 2 in wavelengths
    w2: float = Field(default=1.0, ge=0)

    def geometry(self) -> SurfaceGeometry:
        """Return the port geometry."""
        return SurfaceGeometry(self.n1, self.n2, self.w1, self.w2)


class ScenarioConfig(ImmutableModel):
    """Store the link shared by all schemes."""

    #: Receive surface
    rx: SurfaceConfig = SurfaceConfig()
    #: Transmit surface
    tx: SurfaceConfig = SurfaceConfig()
    #: Active receive ports
    n_rx: int = Field(default=4, ge=1)
    #: Active transmit ports
    n_tx: int = Field(default=4, ge=1)
    #: Transmit SNR in dB
    snr_db: float = 30.0
    #: Path loss amplitude
    path_loss: float = Field(default=1.0, gt=0)
    #: Correlation kernel name
    kernel: str = DEFAULT_KERNEL
    #: Port selection strategy
    strategy: Strategy = Strategy.QR
    #: Swap formula of the rank revealing QR
    criterion: SwapCriterion = SwapCriterion.DET_RATIO
    #: Minimum distance between greedily selected ports
    separation: float = Field(default=0.5, ge=0)
    #: Largest number of combinations searched exhaustively
    combo_limit: int = Field(default=DEFAULT_COMBO_LIMIT, ge=1)


class Scheme(ImmutableModel):
    """Store one scheme compared in a campaign."""

    #: Name used in metric names
    name: str
    #: Strategy, the scenario one by default
    strategy: Strategy | None = None
    #: Receive surface override
    rx: SurfaceConfig | None = None
    #: Transmit surface override
    tx: SurfaceConfig | None = None
    #: Coupling override
    coupling: Coupling | None = None


class DmtConfig(ImmutableModel):
    """Store the inputs of the tradeoff curves."""

    #: Effective receive rank, estimated from the scenario if missing
    rank_rx: int | None = Field(default=None, ge=1)
    #: Effective transmit rank, estimated from the scenario if missing
    rank_tx: int | None = Field(default=None, ge=1)


class CampaignConfig(ImmutableModel):
    """Store a whole campaign."""

    #: Schema version
    version: Literal[1] = 1
    #: Experiment to run
    experiment: Experiment
    #: Link shared by all schemes
    scenario: ScenarioConfig = ScenarioConfig()
    #: Compared schemes, the scenario strategy alone by default
    schemes: list[Scheme] = []
    #: Number of trials per point
    trials: int | None = Field(default=None, ge=1)
    #: Campaign seed
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    #: Worker threads, all cores by default
    threads: int | None = Field(default=None, ge=1)
    #: Values of the swept parameter
    sweep: list[float] = []
    #: Mutual coupling model
    coupling: Coupling = Coupling.NONE
    #: Target rate in bits/s/Hz
    q: float | None = Field(default=None, ge=0)
    #: Eigenvalue threshold of the rank estimation
    xi: float = Field(default=1e-3, gt=0)
    #: Tradeoff curve inputs
    dmt: DmtConfig = DmtConfig()
    #: Output directory
    output: Path | None = None

    def resolved_trials(self) -> int:
        """Return the number of trials, defaulted by experiment kind."""
        if self.trials is not None:
            return self.trials
        if self.experiment in OUTAGE_EXPERIMENTS:
            return DEFAULT_OUTAGE_TRIALS
        if self.experiment in ANALYTIC_EXPERIMENTS:
            return 0
        return DEFAULT_RATE_TRIALS

    def resolved_schemes(self) -> list[Scheme]:
        """Return the schemes, the scenario strategy alone by default."""
        if self.schemes:
            return self.schemes
        return [Scheme(name=self.scenario.strategy.value)]

    def link_scenario(
        self,
        scheme: Scheme,
        **overrides: object,
    ) -> LinkScenario:
        """Return the link simulated by `scheme`.

        :param scheme: Compared scheme.
        :param overrides: Values replacing the scenario ones, among
        `n_rx`, `n_tx`, `snr_db`, `rx` and `tx`.
        :return: Link scenario.
        """
        scenario = self.scenario.model_copy(update=overrides)
        rx = scheme.rx or scenario.rx
        tx = scheme.tx or scenario.tx
        if "rx" in overrides:
            rx = scenario.rx
        if "tx" in overrides:
            tx = scenario.tx
        return LinkScenario(
            geom_tx=tx.geometry(),
            geom_rx=rx.geometry(),
            n_tx=scenario.n_tx,
            n_rx=scenario.n_rx,
            snr=db_to_linear(scenario.snr_db),
            strategy=scheme.strategy or scenario.strategy,
            path_loss=scenario.path_loss,
            kernel=scenario.kernel,
            criterion=scenario.criterion,
            separation=scenario.separation,
            coupling=scheme.coupling or self.coupling,
            combo_limit=scenario.combo_limit,
        )

    def diagnostics(self) -> list[str]:
        """Return the semantic problems of the configuration."""
        return _Diagnostics(self).run()


class _Diagnostics:
    """Collect semantic problems of a campaign configuration."""

    def __init__(self, config: CampaignConfig) -> None:
        """Create the collector for `config`."""
        self._config = config
        self._messages: list[str] = []

    def run(self) -> list[str]:
        """Return every problem found."""
        config = self._config
        if config.scenario.kernel not in kernel_names():
            self._add(
                "scenario.kernel",
                f"must be one of {', '.join(kernel_names())}",
            )
        names = [scheme.name for scheme in config.resolved_schemes()]
        if len(set(names)) != len(names):
            self._add("schemes", "names must be unique")
        self._check_sweep()
        for scheme in config.resolved_schemes():
            for rx, tx, n_rx, n_tx in self._links(scheme):
                self._check_link(scheme, rx, tx, n_rx, n_tx)
        return self._messages

    def _add(self, field: str, constraint: str) -> None:
        """Record one problem."""
        self._messages.append(f"{field}: {constraint}")

    def _check_sweep(self) -> None:
        """Check the sweep and the target rate of the experiment."""
        config = self._config
        experiment = config.experiment
        if experiment in (Experiment.OUTAGE_VS_TARGET, Experiment.Q_OUTAGE):
            if not config.sweep:
                self._add("sweep", "target rates are required")
            elif min(config.sweep) < 0:
                self._add("sweep", "target rates must be nonnegative")
        if experiment is Experiment.OUTAGE_VS_SNR and config.q is None:
            self._add("q", "a target rate is required for outage-vs-snr")
        if experiment is Experiment.RATE_VS_ACTIVE_PORTS and any(
            value < 1 or value != int(value) for value in config.sweep
        ):
            self._add("sweep", "active port counts must be integers >= 1")
        if experiment is Experiment.RATE_VS_PORTS:
            n1 = config.scenario.rx.n1
            if any(
                value < n1 or value % n1 or value != int(value)
                for value in config.sweep
            ):
                self._add(
                    "sweep",
                    f"port counts must be multiples of N1={n1}",
                )
        if experiment is Experiment.TABLE1 and any(
            value < 0 for value in config.sweep
        ):
            self._add("sweep", "apertures must be nonnegative")
        if experiment is Experiment.DMT:
            self._check_dmt()

    def _check_dmt(self) -> None:
        """Check the given or estimated ranks against the stream count."""
        config = self._config
        scenario = config.scenario
        n_min = min(scenario.n_rx, scenario.n_tx)
        surfaces = (("rank_rx", scenario.rx), ("rank_tx", scenario.tx))
        for name, surface in surfaces:
            rank = getattr(config.dmt, name)
            if rank is not None:
                if rank < n_min:
                    self._add(
                        f"dmt.{name}",
                        f"must be at least n_min={n_min}",
                    )
                continue
            if scenario.kernel not in kernel_names():
                continue
            eig = correlation_eigen(surface.geometry(), scenario.kernel)
            estimated = estimate_rank(eig, config.xi).rank
            if estimated < n_min:
                self._add(
                    f"dmt.{name}",
                    f"estimated effective rank {estimated} is below "
                    f"n_min={n_min}, set it or use fewer streams",
                )
        sweep = config.sweep
        if sweep and (min(sweep) < 0 or max(sweep) > n_min):
            self._add("sweep", f"multiplexing gains must be in [0, {n_min}]")

    def _links(self, scheme: Scheme) -> list[tuple]:
        """Return every (rx, tx, n_rx, n_tx) simulated for `scheme`."""
        config = self._config
        if config.experiment in (
            Experiment.TABLE1,
            Experiment.DMT,
            Experiment.COVARIANCE_CHECK,
        ):
            return []
        scenario = config.scenario
        rx = scheme.rx or scenario.rx
        tx = scheme.tx or scenario.tx
        if config.experiment is Experiment.RATE_VS_ACTIVE_PORTS and (
            config.sweep
        ):
            return [
                (rx, tx, int(value), int(value))
                for value in config.sweep
                if value >= 1
            ]
        if config.experiment is Experiment.RATE_VS_PORTS and config.sweep:
            return [
                (
                    rx.model_copy(update={"n2": int(value) // rx.n1}),
                    tx.model_copy(update={"n2": int(value) // tx.n1}),
                    scenario.n_rx,
                    scenario.n_tx,
                )
                for value in config.sweep
                if value >= max(rx.n1, tx.n1)
            ]
        return [(rx, tx, scenario.n_rx, scenario.n_tx)]

    def _check_link(
        self,
        scheme: Scheme,
        rx: SurfaceConfig,
        tx: SurfaceConfig,
        n_rx: int,
        n_tx: int,
    ) -> None:
        """Check one simulated link of `scheme`."""
        config = self._config
        strategy = scheme.strategy or config.scenario.strategy
        coupling = scheme.coupling or config.coupling
        available_rx = rx.n1 * rx.n2
        available_tx = tx.n1 * tx.n2
        if strategy is Strategy.MIMO_AS:
            available_rx = half_wavelength_count(
                rx.w1,
            ) * half_wavelength_count(rx.w2)
            available_tx = half_wavelength_count(
                tx.w1,
            ) * half_wavelength_count(tx.w2)
        if strategy is not Strategy.MIMO:
            if n_rx > available_rx:
                self._add(
                    "scenario.n_rx",
                    f"{n_rx} active ports exceed N_rx={available_rx} "
                    f"for scheme {scheme.name}",
                )
            if n_tx > available_tx:
                self._add(
                    "scenario.n_tx",
                    f"{n_tx} active ports exceed N_tx={available_tx} "
                    f"for scheme {scheme.name}",
                )
        if (
            strategy is Strategy.OPTIMAL
            and n_rx <= available_rx
            and n_tx <= available_tx
        ):
            count = math.comb(available_tx, n_tx) * math.comb(
                available_rx,
                n_rx,
            )
            if count > config.scenario.combo_limit:
                self._add(
                    "scenario.combo_limit",
                    f"{count} port combinations exceed the limit of "
                    f"{config.scenario.combo_limit} for scheme {scheme.name}",
                )
        if strategy is Strategy.GREEDY:
            self._check_separation(scheme, rx, n_rx, "n_rx")
            self._check_separation(scheme, tx, n_tx, "n_tx")
        if coupling is Coupling.LIQUID:
            for side, surface in (("rx", rx), ("tx", tx)):
                expected = half_wavelength_count(surface.w1)
                if surface.n1 != expected:
                    self._add(
                        "coupling",
                        f"liquid coupling requires N1 = floor(W1/0.5)+1 = "
                        f"{expected} on {side}, dipole length constraint",
                    )

    def _check_separation(
        self,
        scheme: Scheme,
        surface: SurfaceConfig,
        count: int,
        field: str,
    ) -> None:
        """Check that `count` ports fit the greedy separation."""
        if count > surface.n1 * surface.n2:
            return
        separation = self._config.scenario.separation
        fitting = separated_port_count(surface.geometry(), separation)
        if fitting < count:
            self._add(
                f"scenario.{field}",
                f"only {fitting} ports are {separation} wavelengths apart "
                f"for scheme {scheme.name}, lower scenario.separation",
            )


def _parse_yaml_config(yaml_config_file: Path) -> dict:
    """Construct the configuration from YAML file.

    :param yaml_config_file: YAML configuration file to parse.
    :raises Exception: If configuration file is invalid.
    """
    logger.info("Parse YAML configuration from %s", yaml_config_file)

    try:
        with yaml_config_file.open(encoding="utf-8") as yaml_config:
            return yaml.safe_load(yaml_config)
    except yaml.YAMLError as error:
        msg = "Failed to parse YAML configuration"
        raise ValueError(msg) from error


def _parse_json_config(json_config_file: Path) -> dict:
    """Construct the configuration from JSON file.

    :param json_config_file: JSON configuration file to parse.
    :raises Exception: If configuration file is invalid.
    """
    logger.info("Parse JSON configuration from %s", json_config_file)

    try:
        with json_config_file.open(encoding="utf-8") as json_config:
            return json.load(json_config)
    except json.JSONDecodeError as error:
        msg = "Failed to parse JSON configuration"
        raise ValueError(msg) from error


def load_raw_config(config_file: str | Path) -> dict:
    """Load the configuration file (JSON or YAML) without validating it.

    :param config_file: Configuration file to parse.
    :return: Raw configuration.
    :raises ValueError: If configuration extension file is unknown (.json,
    .yaml, .yml).
    """
    config_file_path = Path(str(config_file))
    if config_file_path.suffix in [".yaml", ".yml"]:
        return _parse_yaml_config(config_file_path)
    if config_file_path.suffix == ".json":
        return _parse_json_config(config_file_path)
    msg = "Unknown file extension for configuration"
    raise ValueError(msg)


def load_campaign_config(config_file: str | Path) -> CampaignConfig:
    """Load and validate the campaign configuration file.

    :param config_file: Configuration file to parse.
    :return: Configuration parsed.
    :raises ValueError: If configuration extension file is unknown.
    :raises ValidationError: If configuration is invalid.
    """
    return CampaignConfig.model_validate(load_raw_config(config_file))


def validate_config(raw: dict) -> list[str]:
    """Return the diagnostics of a raw configuration.

    Each diagnostic names the field and the constraint it breaks.

    :param raw: Raw configuration.
    :return: Empty list if the campaign can run.
    """
    try:
        config = CampaignConfig.model_validate(raw)
    except ValidationError as error:
        return [
            f"{'.'.join(str(part) for part in detail['loc']) or 'config'}: "
            f"{detail['msg']}"
            for detail in error.errors()
        ]
    return config.diagnostics()

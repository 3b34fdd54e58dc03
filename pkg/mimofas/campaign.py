"""Run the experiments of a simulation campaign."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelModel, empirical_vec_covariance
from .config import CampaignConfig, Experiment, Scheme, SurfaceConfig
from .geometry import correlation_eigen, estimate_rank
from .metrics import (
    DmtCurve,
    OutageEstimate,
    RateEstimate,
    dmt_antenna_selection,
    dmt_eval,
    dmt_mimo_fas,
    dmt_traditional,
    optimal_q,
    outage_fixed_rate,
    sample_rates,
)

#: Create logger for this file.
logger = logging.getLogger()

#: Apertures in wavelengths swept by default by the rank table.
DEFAULT_TABLE1_APERTURES: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

#: Step of the default multiplexing gain sweep of tradeoff curves.
DMT_SWEEP_STEP: float = 0.5


@dataclass(frozen=True)
class ResultRow:
    """Store one metric value at one sweep value."""

    #: Value of the swept parameter
    sweep: float
    #: Metric name, prefixed by the scheme name
    metric: str
    #: Metric value
    value: float
    #: Number of Monte Carlo trials, 0 for analytic values
    trials: int
    #: Half width of the 95 % confidence interval
    ci95: float
    #: Campaign seed
    seed: int


@dataclass
class CampaignResult:
    """Store the rows produced by a campaign."""

    #: Configuration that produced the rows
    config: CampaignConfig
    #: Rows ordered by sweep value
    rows: list[ResultRow] = field(default_factory=list)
    #: Metrics whose outage estimate is below the rare event probability
    rare_events: list[str] = field(default_factory=list)

    def totals(self) -> dict:
        """Return the totals echoed in the summary."""
        return {
            "rows": len(self.rows),
            "metrics": len({row.metric for row in self.rows}),
            "sweep_values": len({row.sweep for row in self.rows}),
            "trials": sum(row.trials for row in self.rows),
            "rare_events": len(self.rare_events),
        }


class ExperimentRunner:
    """Run one experiment of a campaign."""

    def __init__(self, config: CampaignConfig) -> None:
        """Construct the runner of `config`.

        :param config: Validated campaign configuration.
        """
        logger.debug("Create experiment runner")

        #: Campaign configuration
        self._config: CampaignConfig = config
        #: Trials per point
        self._trials: int = config.resolved_trials()
        #: Rows produced
        self._result: CampaignResult = CampaignResult(config)

        logger.debug("Experiment runner created")

    def run(self) -> CampaignResult:
        """Run the experiment and return its rows."""
        logger.info(
            "Run %s with %d trials per point",
            self._config.experiment.value,
            self._trials,
        )
        self._run()
        # Stable, the rows of one sweep value keep their order.
        self._result.rows.sort(key=lambda row: row.sweep)
        logger.info("%d rows produced", len(self._result.rows))
        return self._result

    def _run(self) -> None:
        """Fill the result rows."""

    def _sweep(self, default: list[float]) -> list[float]:
        """Return the configured sweep or `default`."""
        return [float(value) for value in self._config.sweep or default]

    def _add(
        self,
        sweep: float,
        metric: str,
        value: float,
        trials: int = 0,
        ci95: float = 0.0,
    ) -> None:
        """Append one row."""
        self._result.rows.append(
            ResultRow(
                float(sweep),
                metric,
                float(value),
                trials,
                float(ci95),
                self._config.seed,
            ),
        )

    def _add_rate(
        self,
        sweep: float,
        scheme: Scheme,
        estimate: RateEstimate,
    ) -> None:
        """Append the row of a mean rate."""
        self._add(
            sweep,
            f"{scheme.name}.rate",
            estimate.mean,
            estimate.trials,
            estimate.half_width_95,
        )

    def _add_outage(
        self,
        sweep: float,
        scheme: Scheme,
        estimate: OutageEstimate,
    ) -> None:
        """Append the row of an outage probability and flag rare events."""
        metric = f"{scheme.name}.outage"
        self._add(
            sweep,
            metric,
            estimate.probability,
            estimate.trials,
            estimate.half_width_95,
        )
        if estimate.is_rare:
            logger.warning(
                "Outage of %s at %s is a rare event, interval unreliable",
                scheme.name,
                sweep,
            )
            self._result.rare_events.append(f"{metric}@{float(sweep)!r}")

    def _rates(self, scheme: Scheme, **overrides: object) -> np.ndarray:
        """Sample the rates of `scheme` with the campaign seed."""
        scenario = self._config.link_scenario(scheme, **overrides)
        return sample_rates(
            scenario,
            self._trials,
            self._config.seed,
            self._config.threads,
        )


class Table1Runner(ExperimentRunner):
    """Estimate the effective rank of the correlation versus aperture."""

    def _run(self) -> None:
        """Fill the rank and truncation error rows."""
        rx = self._config.scenario.rx
        for aperture in self._sweep(list(DEFAULT_TABLE1_APERTURES)):
            geometry = rx.model_copy(
                update={"w1": aperture, "w2": aperture},
            ).geometry()
            eig = correlation_eigen(geometry, self._config.scenario.kernel)
            estimate = estimate_rank(eig, self._config.xi)
            logger.debug("Rank at %s: %d", aperture, estimate.rank)
            self._add(aperture, "rank", estimate.rank)
            self._add(aperture, "truncation_error", estimate.truncation_error)


class DmtRunner(ExperimentRunner):
    """Evaluate the tradeoff curves of MIMO-FAS and its baselines."""

    def _rank(self, surface: SurfaceConfig, rank: int | None) -> int:
        """Return `rank`, estimated from `surface` if missing."""
        if rank is not None:
            return rank
        eig = correlation_eigen(
            surface.geometry(),
            self._config.scenario.kernel,
        )
        return estimate_rank(eig, self._config.xi).rank

    @staticmethod
    def _diversity(curve: DmtCurve, r: float) -> float:
        """Return the diversity gain, 0 beyond the curve."""
        if r >= curve.max_multiplexing:
            return 0.0
        return dmt_eval(curve, r)

    def _run(self) -> None:
        """Fill the diversity rows of every curve."""
        scenario = self._config.scenario
        n_min = min(scenario.n_rx, scenario.n_tx)
        rank_rx = self._rank(scenario.rx, self._config.dmt.rank_rx)
        rank_tx = self._rank(scenario.tx, self._config.dmt.rank_tx)
        logger.info("Effective ranks %d x %d", rank_rx, rank_tx)
        curves = {
            "mimo-fas": dmt_mimo_fas(rank_rx, rank_tx, n_min),
            "mimo-as": dmt_antenna_selection(
                scenario.rx.w1,
                scenario.rx.w2,
                n_min,
                scenario.tx.w1,
                scenario.tx.w2,
            ),
            "mimo": dmt_traditional(scenario.n_rx, scenario.n_tx),
        }
        steps = int(round(n_min / DMT_SWEEP_STEP))
        default = [step * DMT_SWEEP_STEP for step in range(steps + 1)]
        for r in self._sweep(default):
            for name, curve in curves.items():
                self._add(r, f"{name}.diversity", self._diversity(curve, r))


class RateVsActivePortsRunner(ExperimentRunner):
    """Estimate the mean rate versus the number of active ports."""

    def _run(self) -> None:
        """Fill the rate rows of every scheme."""
        scenario = self._config.scenario
        default = list(range(1, min(scenario.n_rx, scenario.n_tx) + 1))
        for count in self._sweep(default):
            for scheme in self._config.resolved_schemes():
                rates = self._rates(
                    scheme,
                    n_rx=int(count),
                    n_tx=int(count),
                )
                self._add_rate(count, scheme, RateEstimate.from_rates(rates))


class RateVsPortsRunner(ExperimentRunner):
    """Estimate the mean rate versus the number of ports per side."""

    @staticmethod
    def _resize(surface: SurfaceConfig, ports: int) -> SurfaceConfig:
        """Return `surface` with `ports` ports on the same aperture."""
        return surface.model_copy(update={"n2": ports // surface.n1})

    def _run(self) -> None:
        """Fill the rate rows of every scheme."""
        default = self._config.scenario.rx.geometry().n_ports
        for ports in self._sweep([default]):
            for scheme in self._config.resolved_schemes():
                rx = scheme.rx or self._config.scenario.rx
                tx = scheme.tx or self._config.scenario.tx
                rates = self._rates(
                    scheme,
                    rx=self._resize(rx, int(ports)),
                    tx=self._resize(tx, int(ports)),
                )
                self._add_rate(ports, scheme, RateEstimate.from_rates(rates))


class OutageVsSnrRunner(ExperimentRunner):
    """Estimate the outage probability at a target rate versus SNR."""

    def _run(self) -> None:
        """Fill the outage rows of every scheme."""
        q = self._config.q or 0.0
        for snr_db in self._sweep([self._config.scenario.snr_db]):
            for scheme in self._config.resolved_schemes():
                scenario = self._config.link_scenario(scheme, snr_db=snr_db)
                estimate = outage_fixed_rate(
                    scenario,
                    q,
                    self._trials,
                    self._config.seed,
                    self._config.threads,
                )
                self._add_outage(snr_db, scheme, estimate)


class OutageVsTargetRunner(ExperimentRunner):
    """Estimate the outage probability versus the target rate."""

    def _run(self) -> None:
        """Fill the outage rows of every scheme."""
        schemes = self._config.resolved_schemes()
        rates = {scheme.name: self._rates(scheme) for scheme in schemes}
        for q in self._sweep([]):
            for scheme in schemes:
                estimate = OutageEstimate.from_rates(rates[scheme.name], q)
                self._add_outage(q, scheme, estimate)


class QOutageRunner(ExperimentRunner):
    """Estimate the q-outage capacity, its optimum and the gains."""

    def _run(self) -> None:
        """Fill the capacity, gain and optimum rows of every scheme.

        Gains are measured against the first scheme.
        """
        schemes = self._config.resolved_schemes()
        rates = {scheme.name: self._rates(scheme) for scheme in schemes}
        reference = schemes[0]
        curves: dict[str, list[tuple[float, float]]] = {
            scheme.name: [] for scheme in schemes
        }
        for q in self._sweep([]):
            outages = {
                name: OutageEstimate.from_rates(values, q)
                for name, values in rates.items()
            }
            for scheme in schemes:
                outage = outages[scheme.name]
                capacity = q * (1 - outage.probability)
                curves[scheme.name].append((q, capacity))
                self._add(
                    q,
                    f"{scheme.name}.capacity",
                    capacity,
                    outage.trials,
                    q * outage.half_width_95,
                )
                if scheme is not reference:
                    gain = q * (
                        outages[reference.name].probability
                        - outage.probability
                    )
                    self._add(
                        q,
                        f"{scheme.name}.gain",
                        gain,
                        outage.trials,
                    )
        for scheme in schemes:
            best_q, best_capacity = optimal_q(curves[scheme.name])
            logger.info(
                "Optimal q of %s: %s (%s bits/s/Hz)",
                scheme.name,
                best_q,
                best_capacity,
            )
            self._add(
                best_q,
                f"{scheme.name}.optimal_capacity",
                best_capacity,
                self._trials,
            )


class CovarianceCheckRunner(ExperimentRunner):
    """Compare the empirical channel covariance with the analytic one."""

    def _run(self) -> None:
        """Fill the relative error row."""
        scenario = self._config.scenario
        model = ChannelModel.from_geometry(
            scenario.rx.geometry(),
            scenario.tx.geometry(),
            scenario.path_loss,
            scenario.kernel,
        )
        analytic = model.covariance()
        empirical = empirical_vec_covariance(
            model,
            self._trials,
            self._config.seed,
        )
        error = np.linalg.norm(empirical - analytic) / np.linalg.norm(
            analytic,
        )
        logger.info("Relative covariance error %s", error)
        self._add(0.0, "covariance.relative_error", error, self._trials)


def _create_experiment_runner(config: CampaignConfig) -> ExperimentRunner:
    """Create the runner of the configured experiment.

    :param config: Campaign configuration.
    :return: Experiment runner.
    :raises ValueError: If the experiment is not supported.
    """
    experiment = config.experiment
    if experiment == Experiment.TABLE1:
        return Table1Runner(config)
    if experiment == Experiment.DMT:
        return DmtRunner(config)
    if experiment == Experiment.RATE_VS_ACTIVE_PORTS:
        return RateVsActivePortsRunner(config)
    if experiment == Experiment.RATE_VS_PORTS:
        return RateVsPortsRunner(config)
    if experiment == Experiment.OUTAGE_VS_SNR:
        return OutageVsSnrRunner(config)
    if experiment == Experiment.OUTAGE_VS_TARGET:
        return OutageVsTargetRunner(config)
    if experiment == Experiment.Q_OUTAGE:
        return QOutageRunner(config)
    if experiment == Experiment.COVARIANCE_CHECK:
        return CovarianceCheckRunner(config)
    msg = "Invalid experiment"
    raise ValueError(msg)


def run_campaign(config: CampaignConfig) -> CampaignResult:
    """Run the experiment of a validated campaign.

    :param config: Campaign configuration.
    :return: Rows ordered by sweep value.
    :raises ValueError: If the configuration is not runnable.
    """
    diagnostics = config.diagnostics()
    if diagnostics:
        msg = "; ".join(diagnostics)
        raise ValueError(msg)
    logger.info("Run campaign %s", config.experiment.value)
    return _create_experiment_runner(config).run()

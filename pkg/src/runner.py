"""Execute configured scenarios and assemble the report bundle."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
import logging
import time
from typing import Any, Callable, Dict, List, Optional

from .config import RunConfig, ScenarioConfig, config_to_dict
from .errors import ErrorHandler
from .report import ReportBundle, criterion_passed
from .sim.anticonc import (
    SUBSET_CAP,
    bound_report,
    estimate_sup_interval_prob,
    estimate_w_min_var,
    subset_count,
    theorem1_margin,
)
from .sim.bounds import nazarov_bound, theorem1_bound
from .sim.diagnostics import density_mills_check, dkw_max_check, gtilde_monotonicity_check, reduction_chain_check
from .sim.gauss_core import Family, make_sampler
from .sim.kfwer import KfwerScenario, estimate_bound_inputs, level_tolerance, simulate_kfwer
from .sim.order_stats import coupling_rate
from .sim.streams import GENERATOR_NAME, RandomStreams
from .utils import NumberUtils

logger = logging.getLogger(__name__)

DKW_DRAWS = 100_000


@dataclass
class ScenarioOutcome:
    """Rows and summary produced by one scenario"""
    scenario_id: str
    kind: str
    seed: int
    passed: Optional[bool] = None
    summary: Dict[str, Any] = field(default_factory=dict)
    anticonc_rows: List[Dict[str, Any]] = field(default_factory=list)
    kfwer_rows: List[Dict[str, Any]] = field(default_factory=list)
    diagnostics_rows: List[Dict[str, Any]] = field(default_factory=list)
    error: Optional[Dict[str, Any]] = None
    runtime: float = 0.0


class ScenarioRunner:
    """Dispatch a scenario to the estimators of its kind"""

    def __init__(self, config: RunConfig, workers: Optional[int] = None):
        self.config = config
        self.workers = workers or config.workers
        self.root = RandomStreams(config.seed)
        self.handlers: Dict[str, Callable[[ScenarioConfig, ScenarioOutcome], None]] = {
            "anticonc": self._run_anticonc,
            "coupling": self._run_coupling,
            "density": self._run_density,
            "nazarov": self._run_nazarov,
            "kfwer": self._run_kfwer,
        }

    def scenario_seed(self, scenario: ScenarioConfig) -> int:
        """Seed fixed by (run seed, scenario id) alone"""
        return self.root.derive_seed("scenario", scenario.id)

    def run_scenario(self, scenario: ScenarioConfig) -> ScenarioOutcome:
        """Run one scenario; failures are recorded on the outcome, never raised"""
        outcome = ScenarioOutcome(scenario_id=scenario.id, kind=scenario.kind, seed=self.scenario_seed(scenario))
        logger.info("scenario %s (%s) started", scenario.id, scenario.kind)
        start = time.perf_counter()

        _, error = ErrorHandler.capture(f"in scenario '{scenario.id}'")(self.handlers[scenario.kind])(
            scenario, outcome
        )
        outcome.runtime = time.perf_counter() - start
        if error is not None:
            outcome.error = error
            outcome.passed = False
        else:
            outcome.passed = all(_row_passed(row) for row in self._rows(outcome))
        logger.info("scenario %s finished in %.2fs: %s", scenario.id, outcome.runtime,
                    "pass" if outcome.passed else "FAIL")
        return outcome

    @staticmethod
    def _rows(outcome: ScenarioOutcome) -> List[Dict[str, Any]]:
        return outcome.anticonc_rows + outcome.kfwer_rows + outcome.diagnostics_rows

    def _streams(self, outcome: ScenarioOutcome, purpose: str) -> RandomStreams:
        return RandomStreams(outcome.seed).child(purpose)

    def _diagnostic_row(self, scenario: ScenarioConfig, outcome: ScenarioOutcome, check: str, value: float,
                        criterion: str, n_draws: int, se: Optional[float] = None,
                        reference: Optional[float] = None) -> Dict[str, Any]:
        row = {
            "scenario_id": scenario.id,
            "kind": scenario.kind,
            "check": check,
            "family": scenario.family,
            "params": _params_label(scenario),
            "p": scenario.p,
            "k": scenario.k,
            "n_draws": n_draws,
            "value": value,
            "se": se,
            "reference": reference,
            "criterion": criterion,
            "seed": outcome.seed,
            "generator": GENERATOR_NAME,
        }
        row["pass"] = criterion_passed(criterion, value, se, reference)
        outcome.diagnostics_rows.append(row)
        return row

    def _run_anticonc(self, scenario: ScenarioConfig, outcome: ScenarioOutcome) -> None:
        sampler = make_sampler(scenario.build_model(), outcome.seed)
        grid = scenario.build_grid()
        rng = self._streams(outcome, "anticonc")

        report = bound_report(sampler, scenario.k, scenario.epsilon, scenario.n, rng, self.workers)
        estimate = estimate_sup_interval_prob(sampler, scenario.k, scenario.epsilon, grid, scenario.n, rng,
                                              statistic="kmax", workers=self.workers)
        margin = theorem1_margin(estimate, report)
        outcome.anticonc_rows.append({
            "scenario_id": scenario.id,
            "family": scenario.family,
            "params": _params_label(scenario),
            "p": scenario.p,
            "k": scenario.k,
            "epsilon": scenario.epsilon,
            "n_draws": scenario.n,
            "sup_hat": estimate.sup_hat,
            "sup_se": estimate.se,
            "argmax_y": estimate.argmax_y,
            "e_max_norm_hat": report.e_max_norm.mean,
            "e_max_norm_se": report.e_max_norm.se,
            "bound_theorem1": report.theorem1,
            "bound_nazarov": report.nazarov,
            "min_var_w_hat": report.min_var_w.mean if report.min_var_w else None,
            "pass": margin >= 0,
            "seed": outcome.seed,
            "generator": GENERATOR_NAME,
        })

        # The randomized statistic satisfies the bound without the factor k
        tilde = estimate_sup_interval_prob(sampler, scenario.k, scenario.epsilon, grid, scenario.n, rng,
                                           statistic="ktilde", workers=self.workers)
        tilde_bound = theorem1_bound(scenario.epsilon, 1, report.e_max_norm.mean)
        self._diagnostic_row(scenario, outcome, "ktilde_theorem1_margin", tilde_bound - tilde.sup_hat,
                             "at_least_minus_3se", scenario.n,
                             se=tilde.se + 2.0 * scenario.epsilon * report.e_max_norm.se, reference=0.0)

        chain = reduction_chain_check(sampler, scenario.k, scenario.epsilon, scenario.n, rng, grid, self.workers)
        self._diagnostic_row(scenario, outcome, "reduction_chain", chain.statistic, "nonpositive", scenario.n)

        if report.e_max_norm.exceeds_ceiling:
            logger.warning("scenario %s: E||X||_inf above its maximal-inequality ceiling", scenario.id)
        if scenario.reference is not None:
            self._diagnostic_row(scenario, outcome, "sup_hat_reference", estimate.sup_hat, "abs_within_3se",
                                 scenario.n, se=estimate.se, reference=scenario.reference)

        outcome.summary = {
            "estimate": {"sup_hat": estimate.sup_hat, "se": estimate.se, "argmax_y": estimate.argmax_y,
                         "grid": estimate.grid.to_dict()},
            "ktilde": {"sup_hat": tilde.sup_hat, "se": tilde.se, "bound": tilde_bound},
            "bounds": {"theorem1": report.theorem1, "nazarov": report.nazarov,
                       "e_max_norm": report.e_max_norm.to_dict(),
                       "min_var_w": report.min_var_w.to_dict() if report.min_var_w else None},
            "theorem1_margin": margin,
        }

    def _run_coupling(self, scenario: ScenarioConfig, outcome: ScenarioOutcome) -> None:
        model = scenario.build_model()
        sampler = make_sampler(model, outcome.seed)
        rate = coupling_rate(sampler, scenario.k, scenario.n, self._streams(outcome, "coupling"), self.workers)

        # Exact ties between components allow the rate to exceed 1/k
        criterion = "at_least_minus_3se" if model.has_exact_duplicates else "abs_within_3se"
        if scenario.k == 1:
            self._diagnostic_row(scenario, outcome, "coupling_rate_k1", 1.0 - rate.estimate, "zero", scenario.n)
        else:
            self._diagnostic_row(scenario, outcome, "coupling_rate", rate.estimate, criterion, scenario.n,
                                 se=rate.se, reference=1.0 / scenario.k)
        outcome.summary = {"coupling_rate": rate.to_dict(), "reference": 1.0 / scenario.k, "criterion": criterion}

    def _run_density(self, scenario: ScenarioConfig, outcome: ScenarioOutcome) -> None:
        model = scenario.build_model()
        sampler = make_sampler(model, outcome.seed)
        rng = self._streams(outcome, "density")

        reports = [
            gtilde_monotonicity_check(sampler, scenario.k, scenario.n, rng, scenario.bins, self.workers),
            density_mills_check(sampler, scenario.k, scenario.n, rng, scenario.bins, self.workers),
        ]
        if model.family is Family.IDENTITY:
            reports.append(dkw_max_check(sampler, min(scenario.n, DKW_DRAWS), rng, self.workers))

        for report in reports:
            self._diagnostic_row(scenario, outcome, report.name, report.statistic, "nonpositive", report.n_draws)
            for issue in report.issues:
                logger.warning("scenario %s %s: %s", scenario.id, report.name, issue["message"])
        outcome.summary = {"diagnostics": {r.name: {"passed": r.passed, "statistic": r.statistic, **r.details}
                                           for r in reports}}

    def _run_nazarov(self, scenario: ScenarioConfig, outcome: ScenarioOutcome) -> None:
        sampler = make_sampler(scenario.build_model(), outcome.seed)
        min_var = estimate_w_min_var(sampler, scenario.k, scenario.n, self._streams(outcome, "nazarov"),
                                     self.workers)
        if scenario.reference is not None:
            self._diagnostic_row(scenario, outcome, "min_var_w", min_var.mean, "abs_within_3se", scenario.n,
                                 se=min_var.se, reference=scenario.reference)
        else:
            self._diagnostic_row(scenario, outcome, "min_var_w", min_var.mean, "report", scenario.n, se=min_var.se)

        bound = nazarov_bound(scenario.epsilon, scenario.p, scenario.k, min_var.mean) if min_var.mean > 0 else None
        self._diagnostic_row(scenario, outcome, "nazarov_bound", bound, "report", scenario.n)
        outcome.summary = {"min_var_w": min_var.to_dict(), "nazarov": bound,
                           "subsets": subset_count(scenario.p, scenario.k), "subset_cap": SUBSET_CAP}

    def _run_kfwer(self, scenario: ScenarioConfig, outcome: ScenarioOutcome) -> None:
        kfwer = KfwerScenario(mu=scenario.mu, model=scenario.build_model(), n=scenario.n, k=scenario.k,
                              alpha=scenario.alpha, b=scenario.b, n_sim=scenario.n_sim, seed=outcome.seed)
        result = simulate_kfwer(kfwer, self._streams(outcome, "kfwer"), self.workers)

        inputs = None
        if scenario.estimate_bound:
            inputs = estimate_bound_inputs(kfwer, result, self._streams(outcome, "kfwer_bound"),
                                           scenario.n_direct, scenario.gamma_level, self.workers)

        outcome.kfwer_rows.append({
            "scenario_id": scenario.id,
            "n": scenario.n,
            "p": scenario.p,
            "k": scenario.k,
            "alpha": scenario.alpha,
            "b": scenario.b,
            "n_sim": scenario.n_sim,
            "rho_or_params": _params_label(scenario),
            "kfwer_hat": result.kfwer_hat,
            "kfwer_se": result.se,
            "mean_rejections": result.mean_rejections,
            "mean_false_rejections": result.mean_false_rejections,
            "bound_formula_value": inputs.bound if inputs else None,
            "pass": result.kfwer_hat <= level_tolerance(scenario.alpha, scenario.n_sim),
            "seed": outcome.seed,
            "generator": GENERATOR_NAME,
        })

        self._diagnostic_row(scenario, outcome, "critical_value_monotonicity",
                             float(result.audit["violations"]), "zero", result.audit["pairs"])
        if inputs is not None:
            self._diagnostic_row(scenario, outcome, "kfwer_upper_bound", inputs.bound, "at_least_minus_3se",
                                 scenario.n_sim, se=result.se, reference=result.kfwer_hat)
        outcome.summary = {
            "kfwer": result.kfwer.to_dict(),
            "mean_rejections": result.mean_rejections,
            "mean_false_rejections": result.mean_false_rejections,
            "true_nulls": list(kfwer.true_nulls),
            "monotonicity_audit": result.audit,
            "bound_inputs": inputs.to_dict() if inputs else None,
        }


def _row_passed(row: Dict[str, Any]) -> bool:
    return bool(row["pass"])


def _params_label(scenario: ScenarioConfig) -> str:
    params = {}
    if scenario.rho is not None:
        params["rho"] = scenario.rho
    if scenario.block_size is not None:
        params["block_size"] = scenario.block_size
    if scenario.entries is not None:
        params["entries"] = scenario.entries
    return NumberUtils.params_label(params)


def run(config: RunConfig, workers: Optional[int] = None, write: bool = True) -> ReportBundle:
    """Run every scenario, scenarios in parallel, and write the bundle to ``config.out``"""
    runner = ScenarioRunner(config, workers)
    started = datetime.now(timezone.utc)
    logger.info("running %d scenario(s) with seed %d and %d worker(s)",
                len(config.scenarios), config.seed, runner.workers)

    if runner.workers <= 1 or len(config.scenarios) == 1:
        outcomes = [runner.run_scenario(s) for s in config.scenarios]
    else:
        with ThreadPoolExecutor(max_workers=min(runner.workers, len(config.scenarios))) as pool:
            outcomes = list(pool.map(runner.run_scenario, config.scenarios))

    bundle = ReportBundle.from_outcomes(
        outcomes,
        config=config_to_dict(config),
        timing={
            "started": started.isoformat(),
            "finished": datetime.now(timezone.utc).isoformat(),
            "scenarios": {o.scenario_id: o.runtime for o in outcomes},
        },
    )
    if write:
        bundle.write(config.out)
    return bundle

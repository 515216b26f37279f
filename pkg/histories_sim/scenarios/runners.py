"""
Scenario runners: one per kind, each turning validated parameters into a
ResultBundle.
"""
import math
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from histories_sim.arrival import (
    CrossingSchedule,
    LatticeRegion,
    crossing_class_operators,
    crossing_decoherence,
    langevin_crossing_probability,
)
from histories_sim.config import config
from histories_sim.hilbert.lattice import (
    LatticeModel,
    gaussian_wavepacket,
    lattice_eigenstate,
    reflect,
    superpose,
)
from histories_sim.hilbert.operators import ProjectorFamily, StateVector, as_density
from histories_sim.histories import (
    RESIDUAL,
    HistorySchedule,
    approx_decoherence_epsilon,
    construct_records,
    decoherence_functional,
    is_consistent,
    is_decoherent,
    records_imply_decoherence,
    retrodict,
    shannon_information,
    sum_rule_violation,
)
from histories_sim.open_systems import (
    HybridState,
    LindbladModel,
    QbmLatticeModel,
    hybrid_ensemble,
    lindblad_evolve,
    qsd_ensemble,
    screen_decoherence_functional,
    trace_distance,
)
from histories_sim.qbm import (
    GaussianWigner,
    QbmParams,
    classical_path,
    decoherence_functional_estimate,
    decoherence_length,
    fluctuation_width,
    path_log_weight_exact,
    path_probability,
    suppression_exponent,
    thermal_dominates,
)
from histories_sim.qbm.gaussian import residual_matrix
from histories_sim.scenarios.results import ResultBundle
from histories_sim.scenarios.schema import Scenario
from histories_sim.timeless import (
    Region,
    TrajectorySolver,
    gaussian,
    make_potential,
    microcanonical_shell,
    region_entry_probability,
    semiclassical_probability,
    thermal_harmonic,
)
from histories_sim.utils.errors import ValidationError, ZeroProbabilityError
from histories_sim.utils.logger import LoggerMixin, scenario_context


# ==================== PARAMETER DECODING ====================

def parse_complex(value: Any) -> complex:
    """A JSON number or a string such as "0.5-1j"."""
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(value)


def parse_matrix(rows: Sequence[Sequence[Any]]) -> np.ndarray:
    return np.array([[parse_complex(v) for v in row] for row in rows], dtype=complex)


def parse_vector(values: Sequence[Any]) -> np.ndarray:
    return np.array([parse_complex(v) for v in values], dtype=complex)


def parse_family(definition: Any, dim: int, path: str) -> ProjectorFamily:
    """
    Projector family from its scenario spelling.

    Accepted forms: "computational", "trivial", {"eigenbasis_of": matrix},
    {"vectors": [...], "labels": [...]} and {"projectors": [...], "labels": [...]}.
    """
    if definition == "computational":
        return ProjectorFamily.computational(dim)
    if definition == "trivial":
        return ProjectorFamily.trivial(dim)
    if isinstance(definition, dict):
        labels = tuple(definition.get("labels") or ())
        if "eigenbasis_of" in definition:
            return ProjectorFamily.from_hermitian(parse_matrix(definition["eigenbasis_of"]), labels)
        if "vectors" in definition:
            return ProjectorFamily.from_vectors([parse_vector(v) for v in definition["vectors"]], labels)
        if "projectors" in definition:
            return ProjectorFamily(tuple(parse_matrix(p) for p in definition["projectors"]), labels)
    raise ValidationError(
        "unrecognised projector family",
        [(path, "expected 'computational', 'trivial' or a mapping with eigenbasis_of, vectors or projectors")],
    )


def build_lattice(block: Dict[str, Any]) -> LatticeModel:
    mass = block["mass"]
    potential = make_potential(block["potential"], mass)
    return LatticeModel.symmetric(
        block["n_sites"], block["dx"], mass, lambda x: potential.value(x[:, None]), block["hbar"]
    )


def build_lattice_state(lattice: LatticeModel, definition: Dict[str, Any]) -> StateVector:
    """Gaussian packet, its (anti)symmetrized parity pair, or a lattice eigenstate."""
    kind = definition["kind"]
    if kind == "eigenstate":
        return lattice_eigenstate(lattice, definition["level"])
    packet = gaussian_wavepacket(lattice, definition["x0"], definition["p0"], definition["width"])
    if kind == "gaussian":
        return packet
    sign = -1.0 if kind == "antisymmetric" else 1.0
    return superpose(packet, reflect(lattice, packet), coefficients=(1.0, sign))


def _epsilon_or_zero(matrix) -> float:
    try:
        return approx_decoherence_epsilon(matrix).epsilon
    except ValidationError:
        return 0.0


def _stderr(values: np.ndarray) -> np.ndarray:
    """Standard error of the mean along the first axis (zero for one sample)."""
    n = values.shape[0]
    if n < 2:
        return np.zeros(values.shape[1:])
    return np.std(values, axis=0, ddof=1) / math.sqrt(n)


def _window_visibility(values: np.ndarray) -> float:
    top, bottom = float(np.max(values)), float(np.min(values))
    return (top - bottom) / (top + bottom) if top + bottom > 0 else 0.0


# ==================== RUNNER ====================

class ScenarioRunner(LoggerMixin):
    """
    Dispatches a validated scenario to the runner of its kind.

    Example:
        >>> runner = ScenarioRunner(threads=4)
        >>> bundle = runner.run(load_scenario("histories_sim/scenarios/data/arrival-antisymmetric.json"))
        >>> bundle.summary["p_enter"] <= 1e-8
        True
    """

    def __init__(self, threads: Optional[int] = None):
        self.threads = config.THREADS if threads is None else threads
        self._runners: Dict[str, Callable[[Dict[str, Any], int, ResultBundle], None]] = {
            "histories": self._run_histories,
            "records": self._run_records,
            "lindblad": self._run_lindblad,
            "qsd": self._run_qsd,
            "qbm": self._run_qbm,
            "hybrid": self._run_hybrid,
            "timeless": self._run_timeless,
            "arrival": self._run_arrival,
            "double-slit": self._run_double_slit,
        }

    @property
    def kinds(self) -> List[str]:
        return list(self._runners)

    def run(self, scenario: Scenario) -> ResultBundle:
        """Run ``scenario`` and return its bundle (nothing is written here)."""
        bundle = ResultBundle(scenario)
        with scenario_context(self.logger, scenario.name, scenario.kind, scenario.seed):
            self._runners[scenario.kind](scenario.parameters, scenario.seed, bundle)
        return bundle

    # ==================== CLOSED HISTORIES ====================

    def _schedule(self, params: Dict[str, Any]) -> HistorySchedule:
        hamiltonian = parse_matrix(params["hamiltonian"])
        dim = hamiltonian.shape[0]
        families = [parse_family(f, dim, f"parameters.families[{i}]") for i, f in enumerate(params["families"])]
        return HistorySchedule(tuple(params["times"]), tuple(families), hamiltonian, 0.0, params["hbar"])

    def _run_histories(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        schedule = self._schedule(params)
        psi = StateVector.normalized(parse_vector(params["initial_state"]))
        tol = params["tolerance"]
        matrix = decoherence_functional(schedule, psi)
        consistency = is_consistent(matrix, tol)
        decoherence = is_decoherent(matrix, tol)
        self.logger.info(str(consistency))
        self.logger.info(str(decoherence))

        bundle.summary.update(
            {
                "n_histories": len(matrix),
                "tolerance": tol,
                "normalization_error": abs(matrix.total() - 1.0),
                "consistent": consistency.holds,
                "consistency_worst": consistency.worst,
                "decoherent": decoherence.holds,
                "decoherence_worst": decoherence.worst,
                "epsilon": _epsilon_or_zero(matrix),
                "sum_rule_violation": sum_rule_violation(matrix),
                "information": shannon_information(matrix.probabilities),
            }
        )
        entries = bundle.table("decoherence_matrix", ["row", "column", "real", "imag"])
        for i, a in enumerate(matrix.strings):
            for j, b in enumerate(matrix.strings):
                entries.append(str(a), str(b), matrix.entries[i, j].real, matrix.entries[i, j].imag)
        probabilities = bundle.table("probabilities", ["history", "probability"])
        probabilities.extend((str(s), p) for s, p in matrix.probability_map().items())

        if consistency.holds and schedule.n_slots > 1:
            table = bundle.table("retrodiction", ["present", "past", "probability"])
            for label in schedule.families[-1].labels:
                try:
                    result = retrodict(matrix, label, tol)
                except ZeroProbabilityError:
                    continue
                table.extend((str(label), str(past), p) for past, p in result.conditional.items())

    def _run_records(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        schedule = self._schedule(params)
        psi = StateVector.normalized(parse_vector(params["initial_state"]))
        tol = params["tolerance"]
        matrix = decoherence_functional(schedule, psi)
        records = construct_records(schedule, psi, tol)
        report = records_imply_decoherence(schedule, psi, records, params["record_tolerance"])
        self.logger.info(report.summary())

        named = [s for s, owner in zip(records.strings, records.assignment) if owner != RESIDUAL]
        swapped_passes = None
        if len(named) >= 2:
            swapped = records.swapped(named[0], named[1])
            swapped_passes = records_imply_decoherence(schedule, psi, swapped, params["record_tolerance"]).passed

        bundle.summary.update(
            {
                "tolerance": tol,
                "record_tolerance": params["record_tolerance"],
                "decoherent": is_decoherent(matrix, tol).holds,
                "records_pass": report.passed,
                "correlation_failures": len(report.correlation_failures),
                "max_offdiagonal": report.max_offdiagonal,
                "final_time_mismatch": report.final_time_mismatch,
                "n_records": len(named),
                "swapped_records_pass": "n/a" if swapped_passes is None else swapped_passes,
            }
        )
        table = bundle.table("records", ["history", "record", "probability"])
        for string, owner in zip(records.strings, records.assignment):
            table.append(str(string), str(owner), matrix.entry(string, string).real)

    # ==================== OPEN SYSTEMS ====================

    def _lindblad_model(self, params: Dict[str, Any]) -> LindbladModel:
        lindblads = tuple(parse_matrix(op) for op in params["lindblads"])
        return LindbladModel(parse_matrix(params["hamiltonian"]), lindblads, params["hbar"])

    def _run_lindblad(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        model = self._lindblad_model(params)
        psi = StateVector.normalized(parse_vector(params["initial_state"]))
        trajectory = lindblad_evolve(model, psi, params["dt"], params["steps"], params["record_every"])
        final = trajectory.final
        bundle.summary.update(
            {
                "dt": params["dt"],
                "steps": params["steps"],
                "max_trace_drift": trajectory.max_trace_drift,
                "min_eigenvalue": trajectory.min_eigenvalue,
                "final_purity": float(np.real(np.trace(final @ final))),
                **{f"final_population_{k}": float(np.real(final[k, k])) for k in range(model.dim)},
            }
        )
        populations = bundle.table("populations", ["t", "level", "population"])
        for t, rho in zip(trajectory.times, trajectory.states):
            populations.extend((t, k, float(np.real(rho[k, k]))) for k in range(model.dim))
        if params["observables"]:
            table = bundle.table("expectations", ["t", "observable", "value"])
            for name, rows in params["observables"].items():
                values = trajectory.expectation(parse_matrix(rows))
                table.extend((t, name, v) for t, v in zip(trajectory.times, values))

    def _run_qsd(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        model = self._lindblad_model(params)
        psi = StateVector.normalized(parse_vector(params["initial_state"]))
        observables = {name: parse_matrix(rows) for name, rows in params["observables"].items()}
        ensemble = qsd_ensemble(
            model,
            psi,
            params["dt"],
            params["steps"],
            params["n_traj"],
            seed,
            observables,
            params["record_every"],
            self.threads,
            params["chunk"],
        )
        reference = lindblad_evolve(model, psi, params["dt"], params["steps"], params["record_every"])
        distances = np.array([trace_distance(a, b) for a, b in zip(ensemble.mean_rho, reference.states)])

        bundle.summary.update(
            {
                "n_traj": ensemble.n_traj,
                "dt": params["dt"],
                "steps": params["steps"],
                "max_trace_distance": float(np.max(distances)),
                "final_trace_distance": float(distances[-1]),
                "lindblad_max_trace_drift": reference.max_trace_drift,
            }
        )
        for name, values in ensemble.observables.items():
            final = values[:, -1]
            bundle.summary[f"{name}_final_mean"] = float(np.mean(final))
            bundle.summary[f"{name}_final_stderr"] = float(_stderr(final))
            bundle.summary[f"{name}_final_mean_variance"] = float(np.mean(ensemble.variances[name][:, -1]))
        table = bundle.table("trace_distance", ["t", "trace_distance"])
        table.extend(zip(ensemble.times, distances))
        if ensemble.observables:
            means = bundle.table("observables", ["t", "observable", "mean", "stderr", "mean_variance"])
            for name, values in ensemble.observables.items():
                spread = _stderr(values)
                variance = np.mean(ensemble.variances[name], axis=0)
                means.extend(zip(ensemble.times, [name] * len(ensemble.times), np.mean(values, axis=0), spread, variance))

    def _run_hybrid(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        amplitude = params["amplitude"]
        position = amplitude * np.diag([1.0, -1.0]).astype(complex)
        lindblads = (math.sqrt(params["kappa"]) * position,) if params["kappa"] > 0 else ()
        model = LindbladModel(np.zeros((2, 2), dtype=complex), lindblads)
        hybrid = HybridState(
            params["X0"],
            params["V0"],
            StateVector.normalized([1.0, 1.0]),
            params["coupling"],
            params["mass"],
            params["gamma"],
            params["spring"],
        )
        finals = bundle.table("final_positions", ["mode", "run", "X_final"])
        moments = bundle.table("mean_trajectory", ["mode", "t", "mean_X", "std_X"])
        bundle.summary.update({"n_runs": params["n_runs"], "dt": params["dt"], "steps": params["steps"]})
        for mode in params["modes"]:
            ensemble = hybrid_ensemble(
                hybrid, model, position, params["dt"], params["steps"], params["n_runs"], seed, mode, threads=self.threads
            )
            final = ensemble.final_positions()
            key = mode.replace("-", "_")
            stats = bimodality(final)
            bundle.summary.update({f"{key}_{name}": value for name, value in stats.items()})
            finals.extend((mode, run, x) for run, x in enumerate(final))
            moments.extend(zip([mode] * len(ensemble.times), ensemble.times, ensemble.X.mean(axis=0), ensemble.X.std(axis=0)))

    # ==================== QBM PATHS ====================

    def _run_qbm(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        cgs = QbmParams.cgs(**params["cgs"])
        bundle.summary.update(
            {
                "cgs_suppression_exponent": suppression_exponent(cgs),
                "cgs_fluctuation_width": fluctuation_width(cgs),
                "cgs_decoherence_length": decoherence_length(cgs),
                "cgs_thermal_dominates": thermal_dominates(cgs),
            }
        )
        qbm = QbmParams(
            params["mass"],
            params["gamma"],
            params["temperature"],
            params["sigma"],
            params["hbar"],
            potential=params["potential"],
            omega=params["omega"],
        )
        wigner = GaussianWigner.minimum_uncertainty(params["x0"], params["p0"], params["width"], params["hbar"])
        times = np.linspace(0.0, params["duration"], params["n_intervals"] + 1)
        base = classical_path(qbm, wigner, times)
        shape = 0.5 * times ** 2
        n_mc = params["n_mc"]

        displacements = np.array(sorted(params["displacements"]), dtype=float)
        exact, sampled, errors = [], [], []
        table = bundle.table(
            "displacement_sweep", ["displacement", "log_weight_exact", "log_weight_mc", "relative_error", "effective_samples"]
        )
        for d in displacements:
            path = base.with_values(base.values + d * shape)
            weight = path_probability(path, qbm, wigner, n_mc, seed)
            exact.append(path_log_weight_exact(path, qbm, wigner))
            sampled.append(weight.log_weight)
            errors.append(weight.relative_error)
            table.append(d, exact[-1], weight.log_weight, weight.relative_error, weight.effective_samples)

        forced = residual_matrix(base, qbm) @ shape
        curvature_exact = 2.0 * float(np.polyfit(displacements, exact, 2)[0])
        curvature_mc = 2.0 * float(np.polyfit(displacements, sampled, 2)[0])
        curvature_force = -base.dt * float(np.sum(forced ** 2)) / fluctuation_width(qbm)
        bundle.summary.update(
            {
                "suppression_exponent": suppression_exponent(qbm),
                "fluctuation_width": fluctuation_width(qbm),
                "decoherence_length": decoherence_length(qbm),
                "thermal_dominates": thermal_dominates(qbm),
                "n_mc": n_mc,
                "argmax_displacement_exact": float(displacements[int(np.argmax(exact))]),
                "argmax_displacement_mc": float(displacements[int(np.argmax(sampled))]),
                "max_relative_error": float(np.max(errors)),
                "curvature_exact": curvature_exact,
                "curvature_mc": curvature_mc,
                "curvature_force_only": curvature_force,
                "curvature_relative_difference": abs(curvature_mc - curvature_exact) / abs(curvature_exact),
            }
        )
        if params["separation"]:
            other = base.with_values(base.values + params["separation"])
            estimate = decoherence_functional_estimate(base, other, qbm, wigner, n_mc, seed)
            bundle.summary.update({f"offdiagonal_{k}": v for k, v in estimate.to_dict().items()})
            bundle.summary["separation"] = params["separation"]

    # ==================== TIMELESS ====================

    def _run_timeless(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        mass = params["mass"]
        solver = TrajectorySolver(mass, make_potential(params["potential"], mass), params["step"], params["horizon"])
        regions = [Region.interval(r["lower"], r["upper"]) for r in params["regions"]]
        epsilon = params["epsilon"]
        bundle.summary.update({"step": params["step"], "horizon": params["horizon"]})

        definition = params["ensemble"]
        if definition is not None:
            ensemble = self._ensemble(definition, params["potential"], mass, seed)
            bundle.summary["n_samples"] = len(ensemble)
            table = bundle.table(
                "regions",
                ["region", "lower", "upper", "probability", "stderr", "epsilon", "p_half_epsilon", "p_double_epsilon", "analytic"],
            )
            for i, (region, raw) in enumerate(zip(regions, params["regions"])):
                result = region_entry_probability(ensemble, solver, region, epsilon, self.threads)
                analytic = thermal_entry_probability(definition, params["potential"], mass, raw["lower"], raw["upper"])
                data = result.to_dict()
                table.append(
                    i, raw["lower"], raw["upper"], data["probability"], data["stderr"], data["epsilon"],
                    data["p_half_epsilon"], data["p_double_epsilon"], "" if analytic is None else analytic,
                )
                bundle.summary.update({f"region_{i}_{k}": v for k, v in data.items() if k != "n_samples"})
                if analytic is not None:
                    bundle.summary[f"region_{i}_analytic"] = analytic
                if i == 0:
                    bundle.table("dwell", ["sample", "dwell", "weight", "entered"]).extend(result.rows())

        block = params["semiclassical"]
        if block is not None:
            lattice = build_lattice(block["lattice"])
            rho = as_density(build_lattice_state(lattice, block["state"]))
            quantum = TrajectorySolver(
                lattice.mass, make_potential(block["lattice"]["potential"], lattice.mass), params["step"], params["horizon"]
            )
            table = bundle.table("semiclassical", ["region", "probability", "stderr", "negative_fraction", "reliable"])
            for i, region in enumerate(regions):
                result = semiclassical_probability(
                    rho, lattice, quantum, region, epsilon, block["n_samples"], seed, threads=self.threads
                )
                table.append(i, result.probability, result.stderr, result.negative_fraction, result.reliable)
                bundle.summary.update({f"semiclassical_{i}_{k}": v for k, v in result.to_dict().items()})

    def _ensemble(self, definition: Dict[str, Any], potential: Dict[str, Any], mass: float, seed: int):
        kind, n = definition["kind"], definition["n_samples"]
        if kind == "thermal":
            return thermal_harmonic(potential["omega"], mass, definition["temperature"], n, seed)
        if kind == "shell":
            return microcanonical_shell(potential["omega"], mass, definition["amplitude"], n, seed)
        return gaussian(definition["mean_x"], definition["mean_p"], definition["sigma_x"], definition["sigma_p"], n, seed)

    # ==================== LATTICE HISTORIES ====================

    def _run_arrival(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        lattice = build_lattice(params["lattice"])
        region = LatticeRegion(params["region"]["lower"], params["region"]["upper"])
        schedule = CrossingSchedule(
            lattice, region, params["tau"], params["n_steps"], params["method"], params["alternatives"]
        )
        psi = build_lattice_state(lattice, params["state"])
        operators = crossing_class_operators(schedule)
        closed = crossing_decoherence(schedule, psi)
        bundle.summary.update(
            {
                "labels": list(schedule.labels),
                "method": schedule.method,
                "tau": schedule.tau,
                "n_steps": schedule.n_steps,
                "exhaustiveness_defect": operators.exhaustiveness_defect(),
                "p_enter": closed.p_enter,
                "p_not_enter": closed.p_not_enter,
                "epsilon": closed.epsilon,
                "re_interference": closed.interference.real,
                "normalization_error": abs(closed.matrix.total() - 1.0),
            }
        )

        environments = sorted(params["environments"], key=lambda env: env["D_loc"])
        if environments:
            sweep = bundle.table("environment_sweep", ["D_loc", "gamma", "epsilon", "p_enter", "re_interference"])
            sweep.append(0.0, 0.0, closed.epsilon, closed.p_enter, closed.interference.real)
            results = []
            for env in environments:
                model = QbmLatticeModel(lattice, env["D_loc"], env["gamma"], env["temperature"])
                result = crossing_decoherence(schedule, psi, model, env["dt"])
                results.append(result)
                sweep.append(env["D_loc"], env["gamma"], result.epsilon, result.p_enter, result.interference.real)
            epsilons = [closed.epsilon] + [r.epsilon for r in results]
            bundle.summary.update(
                {
                    "environment_D_loc": environments[-1]["D_loc"],
                    # D_loc (packet width)^2 tau: suppression of coherence across the packet
                    "environment_suppression_exponent": self._packet_exponent(
                        params["state"], environments[-1]["D_loc"], schedule.tau
                    ),
                    "environment_epsilon": results[-1].epsilon,
                    "environment_p_enter": results[-1].p_enter,
                    "environment_normalization_error": abs(results[-1].matrix.total() - 1.0),
                    "epsilon_monotone": all(b <= a for a, b in zip(epsilons, epsilons[1:])),
                }
            )

        if params["langevin"] is not None:
            state, env = params["state"], (environments[-1] if environments else {"D_loc": 0.0, "gamma": 0.0})
            oracle = langevin_crossing_probability(
                schedule,
                state["x0"],
                state["p0"],
                state["width"],
                env["D_loc"],
                env["gamma"],
                params["langevin"]["n_samples"],
                seed,
                params["langevin"]["substeps"],
                self.threads,
            )
            quantum = bundle.summary.get("environment_p_enter", closed.p_enter)
            bundle.summary.update({f"langevin_{k}": v for k, v in oracle.to_dict().items()})
            if oracle.probability > 0:
                bundle.summary["langevin_relative_difference"] = abs(quantum - oracle.probability) / oracle.probability

    @staticmethod
    def _packet_exponent(state: Dict[str, Any], d_loc: float, tau: float) -> Optional[float]:
        width = state.get("width")
        return None if width is None else d_loc * width ** 2 * tau

    def _run_double_slit(self, params: Dict[str, Any], seed: int, bundle: ResultBundle) -> None:
        lattice = build_lattice(params["lattice"])
        a, width = params["slit_position"], params["width"]
        psi = superpose(gaussian_wavepacket(lattice, -a, 0.0, width), gaussian_wavepacket(lattice, a, 0.0, width))
        rho = as_density(psi).matrix

        x, dx = lattice.x, lattice.dx
        window = x[np.abs(x) <= params["window"]]
        screen_edges = [float(window[0] - 0.5 * dx)] + [float(v + 0.5 * dx) for v in window]
        matrices = {}
        for label, d_loc in (("no_env", 0.0), ("env", params["D_loc"])):
            model = QbmLatticeModel(lattice, D_loc=d_loc)
            matrices[label] = screen_decoherence_functional(model, rho, [0.0], screen_edges, params["duration"], params["dt"])

        n_screen = len(screen_edges) + 1
        centres = [""] + [float(v) for v in window] + [""]
        screen = bundle.table(
            "screen", ["bin", "x", "p_no_env", "p_env", "interference_no_env", "interference_env"]
        )
        pattern = {label: np.zeros(n_screen) for label in matrices}
        for s in range(n_screen):
            row: List[Any] = [s, centres[s]]
            cross = []
            for label, matrix in matrices.items():
                pattern[label][s] = sum(matrix.entry((i, s), (j, s)).real for i in range(2) for j in range(2))
                row.append(pattern[label][s])
                cross.append(2.0 * matrix.entry((0, s), (1, s)).real)
            screen.append(*row, *cross)

        inside = slice(1, n_screen - 1)
        bundle.summary.update(
            {
                "D_loc": params["D_loc"],
                "duration": params["duration"],
                "screen_bins": n_screen,
                "epsilon_no_env": _epsilon_or_zero(matrices["no_env"]),
                "epsilon_env": _epsilon_or_zero(matrices["env"]),
                "kinetic_free_factor": math.exp(-params["D_loc"] * (2.0 * a) ** 2 * params["duration"]),
                "visibility_no_env": _window_visibility(pattern["no_env"][inside]),
                "visibility_env": _window_visibility(pattern["env"][inside]),
                "normalization_error_no_env": abs(matrices["no_env"].total() - 1.0),
                "normalization_error_env": abs(matrices["env"].total() - 1.0),
            }
        )


# ==================== DIAGNOSTICS ====================

def bimodality(values: np.ndarray) -> Dict[str, float]:
    """
    Two-cluster summary of a sample split at its mean: cluster means,
    pooled within-cluster width and separation / width.
    """
    values = np.asarray(values, dtype=float)
    stats = {
        "mean": float(np.mean(values)),
        "std": float(np.std(values)),
        "stderr": float(_stderr(values)),
    }
    upper = values > stats["mean"]
    if upper.all() or not upper.any():
        stats.update({"fraction_upper": float(np.mean(upper)), "separation_ratio": 0.0})
        return stats
    high, low = values[upper], values[~upper]
    width = math.sqrt(0.5 * (np.var(high) + np.var(low)))
    separation = float(np.mean(high) - np.mean(low))
    stats.update(
        {
            "fraction_upper": float(np.mean(upper)),
            "upper_mode": float(np.mean(high)),
            "lower_mode": float(np.mean(low)),
            "mode_width": width,
            "separation_ratio": separation / width if width > 0 else math.inf,
        }
    )
    return stats


def thermal_entry_probability(
    ensemble: Dict[str, Any], potential: Dict[str, Any], mass: float, lower: float, upper: float
) -> Optional[float]:
    """
    exp(-M omega^2 d^2 / 2kT) for a thermal harmonic ensemble, where d is
    the distance from the origin to the interval; None otherwise.
    """
    if ensemble.get("kind") != "thermal" or potential.get("kind") != "harmonic":
        return None
    if lower <= 0.0 <= upper:
        return 1.0
    distance = min(abs(lower), abs(upper))
    return math.exp(-mass * potential["omega"] ** 2 * distance ** 2 / (2.0 * ensemble["temperature"]))


def run_scenario(scenario: Scenario, threads: Optional[int] = None) -> ResultBundle:
    return ScenarioRunner(threads).run(scenario)

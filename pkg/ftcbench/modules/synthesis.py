"""
Synthesis Module
Mixed-sensitivity weighting functions, cascaded P-PID loop assembly, the
stacked H-infinity cost, multi-start gain tuning and the LQR baseline.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from ftcbench.config.settings import worker_count
from ftcbench.core.errors import (
    AlgebraicLoop,
    ConfigError,
    FTCBenchError,
    ImproperLoop,
    NoStabilizingGains,
    NotStabilizable,
)
from ftcbench.core.linsys import (
    STABILITY_MARGIN,
    FrequencyGrid,
    RationalTF,
    default_grid,
    evaluate,
    is_stable,
    minreal,
    peak,
)
from ftcbench.core.models import (
    AeroCoefficientTable,
    AircraftParameters,
    Axis,
    DesignPoint,
    design_points,
    plant_tf,
)
from ftcbench.core.parser import read_json, require
from ftcbench.modules.uncertainty import uncertainty_weight

logger = logging.getLogger(__name__)

DEFAULT_TAU_F = 0.05
DEFAULT_OMEGA_A = 5.0
DEFAULT_A = 1e-4
UNSTABLE_PENALTY = 1e6
FAILED_PENALTY = 1e12
INTEGRATOR = RationalTF((1.0,), (1.0, 0.0))
GAIN_NAMES = ("kp_outer", "kp", "ki", "kd", "tau_f")


@dataclass(frozen=True)
class SensitivityWeightParams:
    M: float
    omega_b: float
    A: float = DEFAULT_A

    def __post_init__(self):
        if self.M < 1.0:
            raise ValueError(f"peak bound M={self.M} must be >= 1")
        if not 0.0 < self.A < 1.0:
            raise ValueError(f"steady-state bound A={self.A} must lie in (0, 1)")
        if self.omega_b <= 0.0:
            raise ValueError("bandwidth omega_b must be positive")


@dataclass(frozen=True)
class ControlWeightParams:
    r_max: float
    u_max: float
    omega_a: float = DEFAULT_OMEGA_A

    def __post_init__(self):
        if min(self.r_max, self.u_max, self.omega_a) <= 0.0:
            raise ValueError("r_max, u_max and omega_a must be positive")


@dataclass(frozen=True)
class CascadedGains:
    """Outer angle P gain and inner rate PID with filtered derivative"""
    kp_outer: float
    kp: float
    ki: float
    kd: float
    tau_f: float = DEFAULT_TAU_F

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("gains must be finite")
        if self.tau_f <= 0.0:
            raise ValueError("derivative filter constant tau_f must be positive")

    def as_vector(self) -> np.ndarray:
        return np.array([self.kp_outer, self.kp, self.ki, self.kd, self.tau_f], dtype=float)

    @classmethod
    def from_vector(cls, values) -> "CascadedGains":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class MixedSensitivityWeights:
    W_s: RationalTF
    W_t: RationalTF
    W_r: RationalTF


@dataclass(frozen=True)
class SynthesisResult:
    gains: CascadedGains
    gamma_achieved: float
    iterations: int
    stable: bool

    def to_dict(self) -> Dict[str, Any]:
        entry = self.gains.to_dict()
        entry.update(gamma_achieved=self.gamma_achieved, iterations=self.iterations, stable=self.stable)
        return entry

    @classmethod
    def from_dict(cls, entry: Dict[str, Any]) -> "SynthesisResult":
        gains = CascadedGains(*(float(entry[name]) for name in GAIN_NAMES))
        return cls(gains, float(entry["gamma_achieved"]), int(entry["iterations"]), bool(entry["stable"]))


class ClosedLoop(NamedTuple):
    """Angle-loop sensitivity S, complementary sensitivity T and control sensitivity R"""
    S: RationalTF
    T: RationalTF
    R: RationalTF

    @property
    def characteristic(self) -> np.ndarray:
        return self.S.denominator


@dataclass(frozen=True)
class WeightTable:
    """Weighting-function parameters for every (axis, design point)"""
    sensitivity: Dict[Axis, Dict[int, Tuple[float, float]]]
    control: Dict[Axis, Tuple[float, float]]
    A: float = DEFAULT_A
    omega_a: float = DEFAULT_OMEGA_A
    tau_f: float = DEFAULT_TAU_F
    lqr_Q: Tuple[float, float, float] = (1.0, 4.0, 0.5)
    lqr_R: float = 0.5
    altitude_bandwidth: float = 1.0

    def sensitivity_params(self, axis: Axis, point: int) -> SensitivityWeightParams:
        try:
            M, omega_b = self.sensitivity[axis][point]
        except KeyError as e:
            raise ConfigError(f"no sensitivity weight for {axis.value} point {point}") from e
        return SensitivityWeightParams(M, omega_b, self.A)

    def control_params(self, axis: Axis) -> ControlWeightParams:
        r_max, u_max = self.control[axis]
        return ControlWeightParams(r_max, u_max, self.omega_a)


def load_weights(file_path: Union[str, Path]) -> WeightTable:
    """
    Parse the weight-parameter file
    Keys: sensitivity.<axis>.<point>.{M, omega_b}, control.<axis>.{r_max, u_max},
    A, omega_a, tau_f, lqr.{Q, R}, altitude.bandwidth
    """
    document = read_json(file_path)
    sensitivity = {}
    control = {}
    for axis in Axis:
        rows = require(document, f"sensitivity.{axis.value}")
        sensitivity[axis] = {int(k): (float(v["M"]), float(v["omega_b"])) for k, v in rows.items()}
        limits = require(document, f"control.{axis.value}")
        control[axis] = (float(limits["r_max"]), float(limits["u_max"]))
    return WeightTable(
        sensitivity=sensitivity,
        control=control,
        A=float(document.get("A", DEFAULT_A)),
        omega_a=float(document.get("omega_a", DEFAULT_OMEGA_A)),
        tau_f=float(document.get("tau_f", DEFAULT_TAU_F)),
        lqr_Q=tuple(float(q) for q in require(document, "lqr.Q")),
        lqr_R=float(require(document, "lqr.R")),
        altitude_bandwidth=float(require(document, "altitude.bandwidth")),
    )


def make_ws(p: SensitivityWeightParams) -> RationalTF:
    """W_s(s) = (s/M + omega_b) / (s + A omega_b)"""
    return RationalTF((1.0 / p.M, p.omega_b), (1.0, p.A * p.omega_b))


def make_wr(p: ControlWeightParams) -> RationalTF:
    """W_r(s) = ((r_max/u_max) s + omega_a 1e-3) / (s + omega_a)"""
    return RationalTF((p.r_max / p.u_max, p.omega_a * 1e-3), (1.0, p.omega_a))


def actuator_tf(omega_a: float = DEFAULT_OMEGA_A) -> RationalTF:
    """First-order actuator lag omega_a / (s + omega_a)"""
    return RationalTF((omega_a,), (1.0, omega_a))


def design_plant(axis: Axis, p: AircraftParameters, a: AeroCoefficientTable, V: float,
                 omega_a: float = DEFAULT_OMEGA_A, gamma: float = 0.0) -> RationalTF:
    """Rate plant in series with the actuator lag, the loop every gain set is tuned and analyzed on"""
    return plant_tf(axis, p, a, V, gamma) * actuator_tf(omega_a)


def pid_tf(gains: CascadedGains) -> RationalTF:
    """kp + ki/s + kd s/(tau_f s + 1) over the common denominator s(tau_f s + 1)"""
    kp, ki, kd, tau = gains.kp, gains.ki, gains.kd, gains.tau_f
    return RationalTF((kp * tau + kd, kp + ki * tau, ki), (tau, 1.0, 0.0))


def _strip_origin(*polys: np.ndarray) -> List[np.ndarray]:
    """Divide out the largest power of s shared by every polynomial"""
    polys = [np.asarray(c, dtype=float) for c in polys]
    power = 0
    while all(c.size > 1 and c[-1] == 0.0 for c in polys):
        polys = [c[:-1] for c in polys]
        power += 1
    if power:
        logger.debug("cancelled s^%d shared by the closed-loop polynomials", power)
    return polys


def closed_loop(plant: RationalTF, gains: CascadedGains, kinematics: RationalTF = INTEGRATOR) -> ClosedLoop:
    """
    Assemble S, T and R of the cascaded P-PID attitude loop

    The inner PID closes the rate loop around the plant; kinematics maps rate
    to angle and the outer P gain closes the angle loop. All three transfer
    functions share the characteristic polynomial, so S + T == 1 exactly.
    """
    controller = minreal(pid_tf(gains))
    nc, dc = controller.numerator, controller.denominator
    np_, dp = plant.numerator, plant.denominator
    nk, dk = kinematics.numerator, kinematics.denominator
    k = gains.kp_outer

    inner = np.polyadd(np.polymul(dc, dp), np.polymul(nc, np_))
    num_s = np.polymul(dk, inner)
    num_t = k * np.polymul(nk, np.polymul(nc, np_))
    num_r = k * np.polymul(np.polymul(nc, dk), dp)
    delta = np.polyadd(num_s, num_t)
    if not np.any(delta):
        raise AlgebraicLoop("closed-loop characteristic polynomial vanishes")
    num_s, num_t, num_r, delta = _strip_origin(num_s, num_t, num_r, delta)

    loops = ClosedLoop(RationalTF(num_s, delta), RationalTF(num_t, delta), RationalTF(num_r, delta))
    for name, tf in zip(ClosedLoop._fields, loops):
        if not tf.is_proper:
            raise ImproperLoop(f"{name} is improper: {tf}")
    return loops


def _stacked(loop: ClosedLoop, w: MixedSensitivityWeights):
    def column_norm(omegas):
        return np.sqrt(np.abs(evaluate(w.W_s, omegas) * evaluate(loop.S, omegas)) ** 2
                       + np.abs(evaluate(w.W_t, omegas) * evaluate(loop.T, omegas)) ** 2
                       + np.abs(evaluate(w.W_r, omegas) * evaluate(loop.R, omegas)) ** 2)
    return column_norm


def mixed_cost(S: RationalTF, T: RationalTF, R: RationalTF, W_s: RationalTF, W_t: RationalTF,
               W_r: RationalTF, grid: Optional[FrequencyGrid] = None) -> float:
    """Peak over frequency of sqrt(|W_s S|^2 + |W_t T|^2 + |W_r R|^2), grid max refined locally"""
    grid = grid or default_grid()
    return peak(_stacked(ClosedLoop(S, T, R), MixedSensitivityWeights(W_s, W_t, W_r)), grid).value


def loop_cost(plant: RationalTF, gains: CascadedGains, weights: MixedSensitivityWeights,
              grid: Optional[FrequencyGrid] = None) -> float:
    loop = closed_loop(plant, gains)
    return mixed_cost(loop.S, loop.T, loop.R, weights.W_s, weights.W_t, weights.W_r, grid)


class _SearchCost:
    """Grid-only stacked cost in log-gain coordinates with an instability penalty"""

    def __init__(self, plant: RationalTF, weights: MixedSensitivityWeights, grid: FrequencyGrid, tau_f: float):
        self.plant = plant
        self.tau_f = tau_f
        self.s = 1j * grid.omegas
        omegas = grid.omegas
        self.ws = np.abs(evaluate(weights.W_s, omegas))
        self.wt = np.abs(evaluate(weights.W_t, omegas))
        self.wr = np.abs(evaluate(weights.W_r, omegas))
        self.evaluations = 0

    def gains(self, x: np.ndarray) -> CascadedGains:
        kp_outer, kp, ki, kd = np.exp(x)
        return CascadedGains(kp_outer, kp, ki, kd, self.tau_f)

    def __call__(self, x: np.ndarray) -> float:
        self.evaluations += 1
        try:
            loop = closed_loop(self.plant, self.gains(x))
        except (FTCBenchError, ValueError, FloatingPointError):
            return FAILED_PENALTY
        delta = loop.characteristic
        if delta.size > 1:
            worst = float(np.max(np.roots(delta).real))
            if worst >= -STABILITY_MARGIN:
                return UNSTABLE_PENALTY + worst
        d = np.polyval(delta, self.s)
        cost = (np.abs(self.ws * np.polyval(loop.S.num, self.s) / d) ** 2
                + np.abs(self.wt * np.polyval(loop.T.num, self.s) / d) ** 2
                + np.abs(self.wr * np.polyval(loop.R.num, self.s) / d) ** 2)
        value = float(np.sqrt(np.max(cost)))
        return value if np.isfinite(value) else FAILED_PENALTY


def stabilizing_seed(plant: RationalTF, inner_bandwidth: float = 3.0, tau_f: float = DEFAULT_TAU_F) -> CascadedGains:
    """
    Starting gains from an integrator approximation 1/(J s) of the rate plant
    at the inner-loop bandwidth: critically damped rate PI, outer loop a
    quarter of the inner bandwidth
    """
    w = inner_bandwidth
    inertia = 1.0 / (w * abs(complex(evaluate(plant, w))))
    return CascadedGains(kp_outer=w / 4.0, kp=2.0 * inertia * w, ki=inertia * w * w,
                         kd=0.05 * inertia, tau_f=tau_f)


def _start_points(initial: CascadedGains, starts: int, seed: int) -> List[np.ndarray]:
    """The initial gains, then seeded jittered scalings of them over one decade"""
    rng = np.random.default_rng(seed)
    base = np.log(initial.as_vector()[:4])
    points = [base]
    offsets = np.linspace(-0.5, 0.5, max(starts - 1, 1)) * np.log(10.0)
    for offset in offsets[:max(starts - 1, 0)]:
        points.append(base + offset + rng.uniform(-0.2, 0.2, size=4) * np.log(10.0))
    return points


def tune(plant: RationalTF, weights: MixedSensitivityWeights, initial: Optional[CascadedGains] = None,
         budget: int = 2000, grid: Optional[FrequencyGrid] = None, starts: int = 8,
         seed: int = 0) -> SynthesisResult:
    """
    Minimize the stacked mixed-sensitivity cost over (kp_outer, kp, ki, kd)

    Multi-start Nelder-Mead in log coordinates over the four gains only.
    tau_f is not a decision variable: every candidate keeps initial.tau_f
    (the weight table value when called from synthesize_all). Unstable loops
    cost UNSTABLE_PENALTY plus the largest pole real part. The reported gamma is mixed_cost of the returned gains.
    """
    grid = grid or default_grid()
    initial = initial or stabilizing_seed(plant)
    if np.any(initial.as_vector()[:4] <= 0.0):
        raise ValueError("tuning starts need strictly positive gains")
    cost = _SearchCost(plant, weights, grid, initial.tau_f)

    best_x, best_cost = None, np.inf
    for k, x0 in enumerate(_start_points(initial, starts, seed)):
        res = optimize.minimize(cost, x0, method="Nelder-Mead",
                                options={"maxfev": budget, "xatol": 1e-6, "fatol": 1e-9})
        logger.debug("tune start %d: cost %.6g after %d evaluations", k, res.fun, res.nfev)
        if res.fun < best_cost:
            best_x, best_cost = res.x, float(res.fun)

    if best_x is None or best_cost >= UNSTABLE_PENALTY:
        raise NoStabilizingGains(f"no stabilizing gains after {cost.evaluations} evaluations")

    gains = cost.gains(best_x)
    gamma = loop_cost(plant, gains, weights, grid)
    if cost(np.log(initial.as_vector()[:4])) < UNSTABLE_PENALTY:
        initial_gamma = loop_cost(plant, initial, weights, grid)
        if initial_gamma < gamma:
            gains, gamma = initial, initial_gamma
    stable = is_stable(closed_loop(plant, gains).S)
    return SynthesisResult(gains, gamma, cost.evaluations, stable)


def design_weights(axis: Axis, point: DesignPoint, table: WeightTable, p: AircraftParameters,
                   a: AeroCoefficientTable, grid: FrequencyGrid) -> MixedSensitivityWeights:
    """W_s and W_r from the weight table, W_t fitted to the perturbed family"""
    _, weight = uncertainty_weight(axis, point, p, a, grid)
    return MixedSensitivityWeights(
        W_s=make_ws(table.sensitivity_params(axis, point.index)),
        W_t=weight.W_t,
        W_r=make_wr(table.control_params(axis)),
    )


def care(A_mat, B_mat, Q, R) -> np.ndarray:
    """Stabilizing solution P of A'P + PA - P B R^-1 B'P + Q = 0"""
    A_mat, B_mat = np.atleast_2d(A_mat).astype(float), np.atleast_2d(B_mat).astype(float)
    Q, R = np.atleast_2d(Q).astype(float), np.atleast_2d(R).astype(float)
    try:
        P = linalg.solve_continuous_are(A_mat, B_mat, Q, R)
    except (linalg.LinAlgError, ValueError) as e:
        raise NotStabilizable(f"Riccati equation has no stabilizing solution: {e}") from e
    residual = A_mat.T @ P + P @ A_mat - P @ B_mat @ np.linalg.solve(R, B_mat.T @ P) + Q
    if np.linalg.norm(residual, "fro") > 1e-8 * (1.0 + np.linalg.norm(P, "fro")):
        raise NotStabilizable("Riccati residual exceeds tolerance")
    return P


def lqr_design(A_mat, B_mat, Q, R) -> np.ndarray:
    """State-feedback gain K = R^-1 B'P (u = -K x)"""
    A_mat, B_mat = np.atleast_2d(A_mat).astype(float), np.atleast_2d(B_mat).astype(float)
    R = np.atleast_2d(R).astype(float)
    P = care(A_mat, B_mat, Q, R)
    K = np.linalg.solve(R, B_mat.T @ P)
    if np.max(np.linalg.eigvals(A_mat - B_mat @ K).real) >= -STABILITY_MARGIN:
        raise NotStabilizable("closed loop A - BK is not Hurwitz")
    return K


def attitude_model(inertia: float) -> Tuple[np.ndarray, np.ndarray]:
    """Integral-augmented hover attitude model, state [int e, e, rate]"""
    A_mat = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    B_mat = np.array([[0.0], [0.0], [1.0 / inertia]])
    return A_mat, B_mat


def lqr_attitude_design(inertia: float, q_diag: Iterable[float], r: float) -> np.ndarray:
    A_mat, B_mat = attitude_model(inertia)
    return lqr_design(A_mat, B_mat, np.diag(list(q_diag)), np.array([[r]]))[0]


def _tune_problem(job):
    axis, point, table, p, a, grid, budget, starts, seed = job
    plant = design_plant(axis, p, a, point.V_bar, table.omega_a)
    weights = design_weights(axis, point, table, p, a, grid)
    initial = stabilizing_seed(plant, tau_f=table.tau_f)
    try:
        return axis.value, point.index, tune(plant, weights, initial, budget=budget, grid=grid,
                                             starts=starts, seed=seed)
    except NoStabilizingGains as e:
        return axis.value, point.index, str(e)


def synthesize_all(p: AircraftParameters, a: AeroCoefficientTable, table: WeightTable,
                   grid: Optional[FrequencyGrid] = None, points: Optional[Iterable[int]] = None,
                   budget: int = 2000, starts: int = 8, seed: int = 0,
                   workers: Optional[int] = None) -> Dict[Tuple[Axis, int], SynthesisResult]:
    """Tune every (axis, design point) problem; independent problems run in parallel"""
    grid = grid or default_grid()
    wanted = set(points) if points is not None else None
    selected = [pt for pt in design_points() if wanted is None or pt.index in wanted]
    jobs = [(axis, pt, table, p, a, grid, budget, starts, seed) for axis in Axis for pt in selected]
    workers = worker_count() if workers is None else workers

    if workers <= 1 or len(jobs) == 1:
        outcomes = [_tune_problem(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
            outcomes = list(executor.map(_tune_problem, jobs))

    results: Dict[Tuple[Axis, int], SynthesisResult] = {}
    failures = []
    for axis_name, index, outcome in outcomes:
        if isinstance(outcome, str):
            logger.error("%s point %d: %s", axis_name, index, outcome)
            failures.append(f"{axis_name} point {index}")
            continue
        logger.info("synthesized %s point %d: gamma=%.4f stable=%s (%d evaluations)",
                    axis_name, index, outcome.gamma_achieved, outcome.stable, outcome.iterations)
        results[(Axis(axis_name), index)] = outcome
    if failures:
        raise NoStabilizingGains("no stabilizing gains for " + ", ".join(failures))
    return results


def lqr_baseline(p: AircraftParameters, table: WeightTable) -> Dict[Axis, np.ndarray]:
    """Hover-model LQR gains per axis, shared by every airspeed"""
    return {axis: lqr_attitude_design(p.inertia(axis), table.lqr_Q, table.lqr_R) for axis in Axis}


def export_document(results: Dict[Tuple[Axis, int], SynthesisResult],
                    lqr: Optional[Dict[Axis, np.ndarray]] = None) -> Dict[str, Any]:
    """Synthesis export: results.<axis>.<point> -> gains + gamma, lqr.<axis> -> K"""
    document: Dict[str, Any] = {"results": {}}
    for (axis, index), result in sorted(results.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        document["results"].setdefault(axis.value, {})[str(index)] = result.to_dict()
    if lqr is not None:
        document["lqr"] = {axis.value: [float(v) for v in K] for axis, K in lqr.items()}
    return document


def import_document(document: Dict[str, Any]) -> Tuple[Dict[Tuple[Axis, int], SynthesisResult],
                                                        Dict[Axis, np.ndarray]]:
    try:
        results = {
            (Axis(axis_name), int(index)): SynthesisResult.from_dict(entry)
            for axis_name, rows in document["results"].items()
            for index, entry in rows.items()
        }
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"malformed synthesis export: {e}") from e
    lqr = {Axis(name): np.asarray(K, dtype=float) for name, K in document.get("lqr", {}).items()}
    return results, lqr

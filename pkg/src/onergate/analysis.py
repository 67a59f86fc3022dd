"""Period scans, multi-photon peak bookkeeping, stability matrices and noise estimates."""
import itertools
import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks

from .atom import excited_eigenstates
from .drive import labelled_excited_energy
from .dynamics import DEFAULT_HORIZON, DEFAULT_SAMPLE_DT, evolve
from .parallel import parallel_map

logger = logging.getLogger(__name__)

PEAK_HEIGHT = 0.5
PEAK_PROMINENCE = 0.2
#: coarse-scan candidates worth refining (well below the final peak threshold)
CANDIDATE_HEIGHT = 0.05
CANDIDATE_PROMINENCE = 0.02
FULL_T_RANGE = (0.01, 5.0)
FULL_T_STEP = 0.005
FULL_B_GRID = (200.0, 300.0, 500.0, 1000.0)
FULL_RABI_GRID_MHZ = (20.0, 30.0, 40.0, 50.0, 60.0, 80.0)
STABILITY_PARAMETERS = ("T", "B", "omega_e", "theta", "detuning")


@dataclass(frozen=True)
class ScanPoint:
    period: float
    flip_prob: float
    flip_time: float
    omega_n: float
    max_excited: float
    rabi_consistent: bool

    @property
    def resolved(self):
        return np.isfinite(self.omega_n)


def evaluate_period(period, spec, config, horizon=DEFAULT_HORIZON, sample_dt=DEFAULT_SAMPLE_DT):
    """Flip metrics of a single evolution from |S,0,−9/2> at modulation period ``period``."""
    traj = evolve(spec, config.with_(period=float(period)), horizon=horizon, sample_dt=sample_dt)
    rabi = traj.rabi
    return ScanPoint(
        period=float(period),
        flip_prob=traj.flip_probability,
        flip_time=traj.flip_time,
        omega_n=rabi.omega_n if rabi.resolved else np.nan,
        max_excited=traj.max_excited,
        rabi_consistent=rabi.consistent,
    )


@dataclass(frozen=True)
class Peak:
    order: int
    period: float
    flip_prob: float
    omega_n: float
    max_excited: float
    n_sc: float


@dataclass(frozen=True)
class LadderStats:
    """Spacing statistics of the detected resonances.

    ``photon_number`` n_k is the integer nearest T_k / ΔT, and
    ``delta_e_eff`` = 2π n_k / T_k is the implied effective splitting.
    """

    periods: np.ndarray
    spacing_T: np.ndarray
    spacing_inv_T: np.ndarray
    photon_number: np.ndarray
    delta_e_eff: np.ndarray

    @staticmethod
    def _dispersion(x):
        if len(x) < 2:
            return 0.0 if len(x) else np.nan
        return float(np.std(x) / abs(np.mean(x)))

    @property
    def dispersion_T(self):
        return self._dispersion(self.spacing_T)

    @property
    def dispersion_inv_T(self):
        return self._dispersion(self.spacing_inv_T)

    @property
    def dispersion_delta_e(self):
        if len(self.delta_e_eff) == 0:
            return np.nan
        return float(np.ptp(self.delta_e_eff) / np.mean(self.delta_e_eff))


def ladder_stats(periods):
    periods = np.sort(np.asarray(periods, dtype=float))
    sp = np.diff(periods)
    sp_inv = -np.diff(1.0 / periods)
    if len(periods) == 0:
        n = np.array([], dtype=int)
    else:
        unit = periods[0] if len(sp) == 0 else min(periods[0], np.median(sp))
        n = np.maximum(np.rint(periods / unit).astype(int), 1)
    return LadderStats(periods, sp, sp_inv, n, 2 * np.pi * n / periods if len(periods) else np.array([]))


@dataclass(eq=False)
class PeriodScanResult:
    spec: object
    config: object
    points: list
    peaks: list = field(default_factory=list)

    @property
    def periods(self):
        return np.array([p.period for p in self.points])

    @property
    def flip_prob(self):
        return np.array([p.flip_prob for p in self.points])

    @property
    def omega_n(self):
        return np.array([p.omega_n for p in self.points])

    @property
    def max_excited(self):
        return np.array([p.max_excited for p in self.points])

    def ladder(self):
        return ladder_stats([p.period for p in self.peaks])

    def rows(self):
        for p in self.points:
            yield {
                "T": p.period,
                "flip_prob": p.flip_prob,
                "flip_time": p.flip_time,
                "omega_n_kHz": p.omega_n / (2 * np.pi) * 1e3 if p.resolved else float("nan"),
                "max_P3P1": p.max_excited,
            }

    def peak_rows(self):
        for p in self.peaks:
            yield {
                "order": p.order,
                "T": p.period,
                "flip_prob": p.flip_prob,
                "omega_n_kHz": p.omega_n / (2 * np.pi) * 1e3,
                "max_P3P1": p.max_excited,
                "N_sc": p.n_sc,
            }


def detect_peaks(points, spec, height=PEAK_HEIGHT, prominence=PEAK_PROMINENCE):
    """Local maxima of the flip probability (ordered in T) above ``height`` with ``prominence``."""
    pts = sorted(points, key=lambda p: p.period)
    if len(pts) == 0:
        return []
    # pad with zeros so that maxima at the grid edges are still detected
    y = np.concatenate([[0.0], [p.flip_prob for p in pts], [0.0]])
    idx, _ = find_peaks(y, height=height, prominence=prominence)
    peaks = []
    for order, i in enumerate(idx - 1, start=1):
        p = pts[i]
        n_sc = p.max_excited * spec.gamma / p.omega_n if p.resolved else np.nan
        peaks.append(Peak(order, p.period, p.flip_prob, p.omega_n, p.max_excited, n_sc))
    return peaks


def _dedupe(points, tol=1e-9):
    out = {}
    for p in points:
        out.setdefault(round(p.period / tol), p)
    return sorted(out.values(), key=lambda p: p.period)


def period_scan(spec, config, periods, horizon=DEFAULT_HORIZON, sample_dt=DEFAULT_SAMPLE_DT, threads=1):
    """Evaluate the flip probability on an explicit grid of modulation periods."""
    periods = np.asarray(periods, dtype=float)
    if periods.ndim != 1 or np.any(periods <= 0):
        raise ValueError("periods must be a 1-D array of positive values")
    cfg = config.resolved(spec)
    fn = partial(evaluate_period, spec=spec, config=cfg, horizon=horizon, sample_dt=sample_dt)
    points = _dedupe(parallel_map(fn, periods, threads))
    return PeriodScanResult(spec, cfg, points, detect_peaks(points, spec))


def uniform_grid(t_range, step):
    lo, hi = t_range
    if not (0 < lo < hi) or not step > 0:
        raise ValueError("require 0 < T_min < T_max and step > 0")
    n = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def windowed_period_scan(
    spec,
    config,
    t_range=FULL_T_RANGE,
    coarse_step=0.025,
    refine_steps=(0.005, 0.001),
    polish=True,
    horizon=DEFAULT_HORIZON,
    sample_dt=DEFAULT_SAMPLE_DT,
    threads=1,
    full_fidelity=False,
):
    """Coarse scan followed by successively finer windows around candidate peaks.

    Every refinement level scans ±(previous step) around the current best point
    of each candidate. ``polish`` finishes with a bounded scalar maximisation
    within ±(finest step). ``full_fidelity`` replaces all of this by a uniform
    5 ns grid over ``t_range``.
    """
    cfg = config.resolved(spec)
    if full_fidelity:
        return period_scan(spec, cfg, uniform_grid(t_range, FULL_T_STEP), horizon, sample_dt, threads)
    fn = partial(evaluate_period, spec=spec, config=cfg, horizon=horizon, sample_dt=sample_dt)
    points = _dedupe(parallel_map(fn, uniform_grid(t_range, coarse_step), threads))
    y = np.concatenate([[0.0], [p.flip_prob for p in points], [0.0]])
    idx, _ = find_peaks(y, height=CANDIDATE_HEIGHT, prominence=CANDIDATE_PROMINENCE)
    centers = [points[i - 1].period for i in idx]
    logger.info("coarse scan: %d candidates %s", len(centers), centers)
    prev = coarse_step
    for step in refine_steps:
        grid = []
        for c in centers:
            grid.extend(c + step * np.arange(-round(prev / step), round(prev / step) + 1))
        grid = [t for t in np.unique(np.round(grid, 12)) if t > 0]
        points = _dedupe(points + parallel_map(fn, grid, threads))
        centers = [_best_near(points, c, prev) for c in centers]
        prev = step
    if polish and centers:
        polished = parallel_map(partial(_polish, fn=fn, half_width=prev), centers, threads)
        points = _dedupe(points + [p for group in polished for p in group])
    return PeriodScanResult(spec, cfg, points, detect_peaks(points, spec))


def _best_near(points, center, half_width):
    near = [p for p in points if abs(p.period - center) <= half_width + 1e-12]
    return max(near, key=lambda p: p.flip_prob).period


def _polish(center, fn, half_width, xatol=2e-5):
    seen = []

    def objective(t):
        p = fn(t)
        seen.append(p)
        return -p.flip_prob

    minimize_scalar(objective, bounds=(center - half_width, center + half_width), method="bounded",
                    options={"xatol": xatol, "maxiter": 12})
    return seen


@dataclass(eq=False)
class GridScanResult:
    cells: dict

    def items(self):
        return self.cells.items()

    def peak_counts(self):
        return {k: len(v.peaks) for k, v in self.cells.items()}


def grid_scan(spec, config, b_list=FULL_B_GRID, omega_list=None, threads=1, **scan_kw):
    """Windowed (or full-fidelity) period scans over the outer product of B and Ω_E."""
    if omega_list is None:
        omega_list = [2 * np.pi * w for w in FULL_RABI_GRID_MHZ]
    cells = {}
    for b in b_list:
        for om in omega_list:
            cell_cfg = config.with_(b_field=float(b), omega_e=float(om), detuning=None)
            logger.info("grid cell B=%s G, Omega_E/2pi=%.1f MHz", b, om / (2 * np.pi))
            cells[(float(b), float(om))] = windowed_period_scan(spec, cell_cfg, threads=threads, **scan_kw)
    return GridScanResult(cells)


# --- stability ---------------------------------------------------------------------


def perturbed_config(config, parameter, delta):
    """Apply an absolute perturbation; the laser frequency stays fixed when B changes."""
    if parameter == "T":
        return config.with_(period=config.period + delta)
    if parameter == "B":
        return config.with_(b_field=config.b_field + delta)
    if parameter == "omega_e":
        return config.with_(omega_e=config.omega_e + delta)
    if parameter == "theta":
        return config.with_(theta=config.theta + delta)
    if parameter == "detuning":
        return config.with_(detuning=config.detuning + delta)
    raise ValueError(f"unknown parameter {parameter!r}; expected one of {STABILITY_PARAMETERS}")


def log_infidelity(p):
    return float(np.log10(max(1.0 - p, 1e-16)))


def _evaluate_perturbation(key, spec, config, horizon, sample_dt):
    cfg = config
    for name, delta in key:
        cfg = perturbed_config(cfg, name, delta)
    return evaluate_period(cfg.period, spec, cfg, horizon, sample_dt)


@dataclass(eq=False)
class StabilityMatrix:
    """log₁₀(1 − P) on 1-D slices and 2-D planes around a base point.

    ``axes[name]`` are the absolute perturbations, ``slices[name]`` the 1-D
    values and ``planes[(a, b)][i, j]`` the value at (axes[a][i], axes[b][j]).
    """

    parameters: tuple
    axes: dict
    slices: dict
    planes: dict
    flip_prob: dict
    base_flip_prob: float

    def plane(self, a, b):
        if (a, b) in self.planes:
            return self.planes[(a, b)]
        return self.planes[(b, a)].T

    def slice_prob(self, name):
        return self.flip_prob[name]

    def rows(self):
        for name in self.parameters:
            for d, v, p in zip(self.axes[name], self.slices[name], self.flip_prob[name]):
                yield {"parameter_x": name, "delta_x": d, "parameter_y": "", "delta_y": 0.0, "log10_1mP": v, "flip_prob": p}
        for (a, b), grid in self.planes.items():
            for i, da in enumerate(self.axes[a]):
                for j, db in enumerate(self.axes[b]):
                    yield {"parameter_x": a, "delta_x": da, "parameter_y": b, "delta_y": db,
                           "log10_1mP": grid[i, j], "flip_prob": 1 - 10 ** grid[i, j]}


def stability_matrix(
    spec,
    config,
    grids,
    pairs=True,
    horizon=DEFAULT_HORIZON,
    sample_dt=DEFAULT_SAMPLE_DT,
    threads=1,
):
    """Flip-probability sensitivity to perturbations of T, B, Ω_E, θ and Δ.

    ``grids`` maps parameter names to absolute perturbation offsets (0 is
    added if missing). ``pairs`` is ``True`` for all parameter pairs, ``False``
    for 1-D slices only, or an explicit list of (a, b) pairs.
    """
    cfg = config.resolved(spec)
    names = tuple(grids)
    for n in names:
        if n not in STABILITY_PARAMETERS:
            raise ValueError(f"unknown parameter {n!r}")
    axes = {n: np.unique(np.append(np.asarray(grids[n], dtype=float), 0.0)) for n in names}
    if pairs is True:
        pair_list = list(itertools.combinations(names, 2))
    elif pairs is False or pairs is None:
        pair_list = []
    else:
        pair_list = [tuple(p) for p in pairs]
    keys = {(): None}
    for n in names:
        for d in axes[n]:
            if d != 0:
                keys[((n, d),)] = None
    for a, b in pair_list:
        for da in axes[a]:
            for db in axes[b]:
                key = tuple((n, d) for n, d in ((a, da), (b, db)) if d != 0)
                keys[key] = None
    key_list = list(keys)
    fn = partial(_evaluate_perturbation, spec=spec, config=cfg, horizon=horizon, sample_dt=sample_dt)
    results = dict(zip(key_list, parallel_map(fn, key_list, threads)))

    def lookup(*pairs_):
        return results[tuple((n, d) for n, d in pairs_ if d != 0)].flip_prob

    flip = {n: np.array([lookup((n, d)) for d in axes[n]]) for n in names}
    slices = {n: np.array([log_infidelity(p) for p in flip[n]]) for n in names}
    planes = {}
    for a, b in pair_list:
        planes[(a, b)] = np.array([[log_infidelity(lookup((a, da), (b, db))) for db in axes[b]] for da in axes[a]])
    return StabilityMatrix(names, axes, slices, planes, flip, lookup())


# --- noise and effective two-level model ---------------------------------------------


@dataclass(frozen=True)
class NoiseEstimate:
    parameter: str
    psd: float
    slope_sq: float
    gamma1: float


def slope_squared(delta_x, p_delta_x, omega_n):
    """(∂Δ_eff/∂x)² ≈ (1 − P_δx)/P_δx · Ω_N²/δx²."""
    if delta_x == 0:
        raise ValueError("perturbation delta_x must be non-zero")
    if not 0 < p_delta_x <= 1:
        raise ValueError("P_delta_x must lie in (0, 1]")
    return (1.0 - p_delta_x) / p_delta_x * omega_n**2 / delta_x**2


def gamma1_estimate(parameter, delta_x=None, p_delta_x=None, omega_n=None, psd=0.0, slope_sq=None):
    """Transverse relaxation rate Γ₁ = (∂_x Δ_eff)² · S_x(Ω_N).

    The slope is estimated from a stability-matrix fidelity ``p_delta_x`` at
    perturbation ``delta_x`` unless ``slope_sq`` is given directly. Units are
    those of the inputs: with Ω_N in s⁻¹ and S_x in [x]²/Hz the rate is in s⁻¹.
    """
    if psd < 0:
        raise ValueError("power spectral density must be non-negative")
    if slope_sq is None:
        slope_sq = slope_squared(delta_x, p_delta_x, omega_n)
    if slope_sq < 0:
        raise ValueError("slope_sq must be non-negative")
    return NoiseEstimate(parameter, float(psd), float(slope_sq), float(slope_sq * psd))


def effective_detuning(max_transfer, omega_n):
    """Δ_eff from P = Ω_N²/(Ω_N² + Δ_eff²)."""
    if max_transfer > 1 + 1e-9:
        raise ValueError("transfer amplitude exceeds 1")
    if not max_transfer > 0:
        raise ValueError("transfer amplitude must be positive")
    return float(abs(omega_n) * np.sqrt(max(1.0 / min(max_transfer, 1.0) - 1.0, 0.0)))


def effective_two_level_fit(traj, omega_n=None):
    """(Ω_N, Δ_eff) of the effective two-level description of a trajectory."""
    if omega_n is None:
        if not traj.rabi.resolved:
            raise ValueError("nuclear Rabi frequency is unresolved")
        omega_n = traj.nuclear_rabi
    return float(omega_n), effective_detuning(traj.flip_probability, omega_n)


def gamma_eff(spec, b_field, omega_e):
    """Reporting formula Γ_eff ≈ (Ω_E/δ)² Γ with δ half the m_I = −9/2 / −5/2 splitting in ³P₁."""
    eig = excited_eigenstates(spec, b_field)
    e1 = labelled_excited_energy(spec, b_field, -1, -4.5, eig)
    e2 = labelled_excited_energy(spec, b_field, -1, -2.5, eig)
    delta = 0.5 * abs(e1 - e2)
    return (omega_e / delta) ** 2 * spec.gamma

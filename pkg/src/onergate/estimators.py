"""scikit-learn style wrappers around the simulation pipeline.

Inputs ``X`` are modulation periods in µs (1-D or a single column). All
physical parameters are constructor arguments so that ``get_params`` /
``set_params`` / ``clone`` work as usual.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .analysis import effective_two_level_fit, period_scan, windowed_period_scan
from .atom import AtomSpec
from .drive import DriveConfig
from .dynamics import DEFAULT_HORIZON, DEFAULT_SAMPLE_DT
from .floquet import floquet_scan
from .validation import check_angle, check_nonnegative, check_periods, check_positive


class _DriveParamsMixin:
    def _drive(self, period=1.0):
        check_nonnegative(self.b_field, "b_field")
        check_nonnegative(self.omega_e, "omega_e")
        check_angle(self.theta)
        return DriveConfig(float(self.b_field), float(self.omega_e), period, float(self.theta), self.detuning)

    def _resolve(self):
        self.atom_ = self.atom if self.atom is not None else AtomSpec()
        self.config_ = self._drive().resolved(self.atom_)
        self.detuning_ = self.config_.detuning
        return self


class FlipProbabilityModel(_DriveParamsMixin, BaseEstimator):
    """Maximum transferred m_I = −5/2 population as a function of the period.

    ``fit`` resolves the laser detuning; ``predict(X)`` runs one master-equation
    evolution per period.
    """

    def __init__(self, b_field=500.0, omega_e=2 * np.pi * 20.0, theta=np.pi / 2, detuning=None,
                 horizon=DEFAULT_HORIZON, sample_dt=DEFAULT_SAMPLE_DT, atom=None, threads=1):
        self.b_field = b_field
        self.omega_e = omega_e
        self.theta = theta
        self.detuning = detuning
        self.horizon = horizon
        self.sample_dt = sample_dt
        self.atom = atom
        self.threads = threads

    def fit(self, X=None, y=None):
        check_positive(self.horizon, "horizon")
        check_positive(self.sample_dt, "sample_dt")
        return self._resolve()

    def predict(self, X):
        check_is_fitted(self, "detuning_")
        periods = check_periods(X)
        scan = period_scan(self.atom_, self.config_, periods, self.horizon, self.sample_dt, self.threads)
        by_t = {p.period: p.flip_prob for p in scan.points}
        return np.array([by_t[float(t)] for t in periods])


class PeriodScanner(_DriveParamsMixin, BaseEstimator):
    """Locate multi-photon resonances in the flip probability.

    ``fit(X)`` scans the given periods; with ``X=None`` it runs the windowed
    coarse-then-refine scan over ``t_range``.
    """

    def __init__(self, b_field=500.0, omega_e=2 * np.pi * 20.0, theta=np.pi / 2, detuning=None,
                 t_range=(0.01, 5.0), coarse_step=0.025, refine_steps=(0.005, 0.001), polish=True,
                 horizon=DEFAULT_HORIZON, sample_dt=DEFAULT_SAMPLE_DT, atom=None, threads=1):
        self.b_field = b_field
        self.omega_e = omega_e
        self.theta = theta
        self.detuning = detuning
        self.t_range = t_range
        self.coarse_step = coarse_step
        self.refine_steps = refine_steps
        self.polish = polish
        self.horizon = horizon
        self.sample_dt = sample_dt
        self.atom = atom
        self.threads = threads

    def fit(self, X=None, y=None):
        self._resolve()
        if X is None:
            result = windowed_period_scan(
                self.atom_, self.config_, tuple(self.t_range), self.coarse_step, tuple(self.refine_steps),
                self.polish, self.horizon, self.sample_dt, self.threads,
            )
        else:
            result = period_scan(self.atom_, self.config_, check_periods(X), self.horizon, self.sample_dt, self.threads)
        self.result_ = result
        self.periods_ = result.periods
        self.flip_prob_ = result.flip_prob
        self.peaks_ = result.peaks
        return self

    def predict(self, X):
        """Flip probability interpolated from the fitted scan."""
        check_is_fitted(self, "result_")
        return np.interp(check_periods(X), self.periods_, self.flip_prob_)


class FloquetMixture(_DriveParamsMixin, TransformerMixin, BaseEstimator):
    """Map modulation periods to the Floquet mixture measure M(T)."""

    def __init__(self, b_field=500.0, omega_e=2 * np.pi * 20.0, theta=np.pi / 2, detuning=None, atom=None, threads=1):
        self.b_field = b_field
        self.omega_e = omega_e
        self.theta = theta
        self.detuning = detuning
        self.atom = atom
        self.threads = threads

    def fit(self, X=None, y=None):
        return self._resolve()

    def transform(self, X):
        check_is_fitted(self, "detuning_")
        periods = check_periods(X)
        self.scan_ = floquet_scan(self.atom_, self.config_, periods, self.threads)
        return self.scan_.mixture.reshape(-1, 1)


class EffectiveTwoLevel(BaseEstimator):
    """Effective two-level description (Ω_N, Δ_eff) of a trajectory."""

    def __init__(self, omega_n=None):
        self.omega_n = omega_n

    def fit(self, traj, y=None):
        self.omega_n_, self.delta_eff_ = effective_two_level_fit(traj, self.omega_n)
        self.max_transfer_ = traj.flip_probability
        return self

    def predict(self, X):
        """Two-level transfer probability at times ``X`` (µs)."""
        check_is_fitted(self, "delta_eff_")
        t = np.asarray(X, dtype=float).ravel()
        w = np.hypot(self.omega_n_, self.delta_eff_)
        return self.omega_n_**2 / w**2 * np.sin(0.5 * w * t) ** 2

"""Built-in generators and transforms for the bundled case studies.

Includes a fixed-step RK4 pendulum (optionally damped), an overdamped
Langevin walker on a periodic triple-well potential used as a desk-scale
stand-in for conformational dynamics, a per-frame local reference frame
that removes global rigid motion from atom trajectories, and a
quasi-periodic phase estimator based on smoothed extrema.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrameError, ValidationError


# ---------------------------------------------------------------------------
# Pendulum
# ---------------------------------------------------------------------------

@dataclass
class PendulumConfig:
    gravity: float = 9.81
    length: float = 1.0
    mass: float = 1.0
    drag: float = 0.0
    theta0: float = 0.5
    omega0: float = 0.0
    dt: float = 0.01
    n_steps: int = 1000

    def __post_init__(self):
        if self.length <= 0 or self.mass <= 0 or self.dt <= 0:
            raise ValidationError("length, mass and dt must be positive")
        if self.drag < 0:
            raise ValidationError("drag must be >= 0")
        if self.n_steps < 2:
            raise ValidationError("n_steps must be >= 2")


class PendulumTrajectory:
    """Angle/velocity history plus derived observables.

    q1 = L sin(theta) and q2 = L (1 - cos(theta)) are the bob coordinates
    relative to the rest position. The (quasi-)period is the mean spacing
    of same-direction zero crossings of the wrapped angle.
    """

    def __init__(self, config: PendulumConfig, theta: np.ndarray, omega: np.ndarray):
        self.config = config
        self.theta = theta
        self.omega = omega
        self.times = np.arange(len(theta)) * config.dt

    @property
    def q1(self) -> np.ndarray:
        return self.config.length * np.sin(self.theta)

    @property
    def q2(self) -> np.ndarray:
        return self.config.length * (1.0 - np.cos(self.theta))

    def energy(self) -> np.ndarray:
        c = self.config
        return (0.5 * c.mass * c.length**2 * self.omega**2
                + c.mass * c.gravity * c.length * (1.0 - np.cos(self.theta)))

    def separatrix_energy(self) -> float:
        c = self.config
        return 2.0 * c.mass * c.gravity * c.length

    def _crossing_times(self, upward: bool) -> np.ndarray:
        phi = np.mod(self.theta + np.pi, 2.0 * np.pi) - np.pi
        a, b = phi[:-1], phi[1:]
        if upward:
            hit = (a < 0) & (b >= 0)
        else:
            hit = (a > 0) & (b <= 0)
        hit &= np.abs(b - a) < np.pi  # reject wrap jumps
        idx = np.nonzero(hit)[0]
        frac = np.where(b[idx] != a[idx], -a[idx] / (b[idx] - a[idx]), 0.0)
        return (idx + frac) * self.config.dt

    def period(self) -> float:
        """Mean spacing of zero crossings of the wrapped angle, in time units.

        For a damped run this is the average quasi-period over the whole
        trajectory.
        """
        up = self._crossing_times(upward=True)
        down = self._crossing_times(upward=False)
        times = up if len(up) >= max(2, len(down)) else down
        if len(times) < 2:
            raise ValidationError("trajectory too short to estimate a period")
        return float(np.mean(np.diff(times)))

    def period_samples(self) -> int:
        return max(1, int(round(self.period() / self.config.dt)))

    def phase_angle(self) -> np.ndarray:
        """Position along the energy contour, in [0, 2 pi).

        Below the separatrix this is the angle from the positive horizontal
        axis in the (theta, omega / sqrt(g/L)) plane; above it is the
        wrapped angle itself.
        """
        c = self.config
        if np.all(self.energy() < self.separatrix_energy()):
            scale = np.sqrt(c.gravity / c.length)
            return np.mod(np.arctan2(self.omega / scale, self.theta), 2.0 * np.pi)
        return np.mod(self.theta, 2.0 * np.pi)


def _pendulum_rhs(state, g_over_l, drag_over_m):
    theta, omega = state
    return np.array([omega, -drag_over_m * omega - g_over_l * np.sin(theta)])


def simulate_pendulum(config: PendulumConfig) -> PendulumTrajectory:
    """Classic fixed-step fourth-order Runge-Kutta integration."""
    g_over_l = config.gravity / config.length
    drag_over_m = config.drag / config.mass
    dt = config.dt
    state = np.array([config.theta0, config.omega0], dtype=float)
    out = np.empty((config.n_steps, 2))
    out[0] = state
    for n in range(1, config.n_steps):
        k1 = _pendulum_rhs(state, g_over_l, drag_over_m)
        k2 = _pendulum_rhs(state + 0.5 * dt * k1, g_over_l, drag_over_m)
        k3 = _pendulum_rhs(state + 0.5 * dt * k2, g_over_l, drag_over_m)
        k4 = _pendulum_rhs(state + dt * k3, g_over_l, drag_over_m)
        state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[n] = state
    return PendulumTrajectory(config, out[:, 0], out[:, 1])


# ---------------------------------------------------------------------------
# Triple-well Langevin surrogate
# ---------------------------------------------------------------------------

@dataclass
class ThreeWellConfig:
    """Overdamped Langevin walker on U(x) = (barrier/2) (1 + cos(3x)).

    The angle x lives on [0, 2 pi) with equal-depth wells at pi/3, pi and
    5 pi/3 and barriers of the given height between them. `stride` emits
    every stride-th sample, which decorrelates the intra-well jitter the
    same way downsampled trajectories do.
    """

    barrier: float = 1.0
    temperature: float = 0.25
    dt: float = 0.002
    n_steps: int = 2000
    stride: int = 1
    x0: float = np.pi
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0 or self.barrier <= 0:
            raise ValidationError("dt and barrier must be positive")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.n_steps < 1 or self.stride < 1:
            raise ValidationError("n_steps and stride must be >= 1")


WELL_CENTERS = np.array([np.pi / 3.0, np.pi, 5.0 * np.pi / 3.0])


@dataclass
class ThreeWellTrajectory:
    angle: np.ndarray
    labels: np.ndarray
    config: ThreeWellConfig


def three_well_potential(x, barrier):
    return 0.5 * barrier * (1.0 + np.cos(3.0 * x))


def _three_well_force(x, barrier):
    # -dU/dx
    return 1.5 * barrier * np.sin(3.0 * x)


def well_label(x) -> np.ndarray:
    """Ground-truth well index; barriers at 0, 2 pi / 3 and 4 pi / 3 partition the circle."""
    return (np.mod(np.asarray(x), 2.0 * np.pi) // (2.0 * np.pi / 3.0)).astype(int) % 3


def simulate_three_well(config: ThreeWellConfig) -> ThreeWellTrajectory:
    """Euler-Maruyama integration, reproducible under a fixed seed."""
    import math

    rng = np.random.default_rng(config.seed)
    total = config.n_steps * config.stride
    noise_scale = math.sqrt(2.0 * config.temperature * config.dt)
    force_scale = 1.5 * config.barrier * config.dt
    x = float(config.x0)
    out = np.empty(config.n_steps)
    kicks = rng.standard_normal(total)
    j = 0
    for n in range(total):
        x += force_scale * math.sin(3.0 * x) + noise_scale * kicks[n]
        if (n + 1) % config.stride == 0:
            out[j] = x % (2.0 * math.pi)
            j += 1
    return ThreeWellTrajectory(angle=out, labels=well_label(out), config=config)


# ---------------------------------------------------------------------------
# Local reference frame
# ---------------------------------------------------------------------------

def local_frame_transform(positions: np.ndarray, middle_bond: tuple[int, int],
                          second_bond: tuple[int, int]) -> np.ndarray:
    """Express atom positions in a per-frame orthonormal molecular basis.

    positions has shape (n_frames, n_atoms, 3). The first basis vector is
    the unit middle-bond vector, the second the normalized cross product of
    the first with the second bond, the third the cross product of the
    first two. The origin sits on the first middle-bond atom, so the output
    is invariant under global rotations and translations.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 3 or pos.shape[2] != 3:
        raise ValidationError("positions must have shape (n_frames, n_atoms, 3)")
    i0, i1 = middle_bond
    j0, j1 = second_bond
    n_atoms = pos.shape[1]
    for a in (i0, i1, j0, j1):
        if not 0 <= a < n_atoms:
            raise ValidationError(f"bond atom index {a} outside 0..{n_atoms - 1}")

    b1 = pos[:, i1] - pos[:, i0]
    n1 = np.linalg.norm(b1, axis=1)
    b2 = pos[:, j1] - pos[:, j0]
    if np.any(n1 == 0):
        raise DegenerateFrameError(
            f"zero-length middle bond at frame {int(np.nonzero(n1 == 0)[0][0])}"
        )
    e1 = b1 / n1[:, None]
    v2 = np.cross(e1, b2)
    n2 = np.linalg.norm(v2, axis=1)
    bad = n2 <= 1e-10 * np.linalg.norm(b2, axis=1)
    if np.any(bad):
        raise DegenerateFrameError(
            f"collinear bond vectors at frame {int(np.nonzero(bad)[0][0])}"
        )
    e2 = v2 / n2[:, None]
    e3 = np.cross(e1, e2)

    basis = np.stack([e1, e2, e3], axis=2)  # columns are the frame axes
    rel = pos - pos[:, i0][:, None, :]
    return np.einsum("fac,fck->fak", rel, basis)


# ---------------------------------------------------------------------------
# Quasi-periodic phase
# ---------------------------------------------------------------------------

def _alternating_extrema(smoothed: np.ndarray):
    """Indices of local minima and maxima, forced to alternate strictly."""
    d = np.diff(smoothed)
    trend = np.sign(d)
    for i in range(1, len(trend)):  # a zero diff continues the running trend
        if trend[i] == 0:
            trend[i] = trend[i - 1]
    idx, kind = [], []  # kind: -1 minimum, +1 maximum
    for i in range(1, len(trend)):
        if trend[i - 1] < 0 and trend[i] > 0:
            idx.append(i), kind.append(-1)
        elif trend[i - 1] > 0 and trend[i] < 0:
            idx.append(i), kind.append(1)
    # merge runs of same-type extrema, keeping the most extreme one
    out_i, out_k = [], []
    for i, k in zip(idx, kind):
        if out_k and out_k[-1] == k:
            better = smoothed[i] < smoothed[out_i[-1]] if k < 0 else smoothed[i] > smoothed[out_i[-1]]
            if better:
                out_i[-1] = i
        else:
            out_i.append(i)
            out_k.append(k)
    return np.array(out_i, int), np.array(out_k, int)


def _prune_shallow_extrema(idx, kind, smoothed, min_prominence):
    """Drop adjacent extremum pairs whose height difference is noise-scale."""
    idx, kind = list(idx), list(kind)
    while len(idx) > 2:
        heights = [abs(smoothed[idx[i + 1]] - smoothed[idx[i]]) for i in range(len(idx) - 1)]
        i = int(np.argmin(heights))
        if heights[i] >= min_prominence:
            break
        del idx[i : i + 2]
        del kind[i : i + 2]
        # deleting a pair can leave same-type neighbours; keep the extremer one
        j = 1
        while j < len(idx):
            if kind[j] == kind[j - 1]:
                better = smoothed[idx[j]] < smoothed[idx[j - 1]] if kind[j] < 0 \
                    else smoothed[idx[j]] > smoothed[idx[j - 1]]
                del idx[j if not better else j - 1]
                del kind[j if not better else j - 1]
            else:
                j += 1
    return np.array(idx, int), np.array(kind, int)


def mean_cycle_amplitude(series: np.ndarray, smoothing_window: int) -> float:
    """Mean peak-to-trough swing of the smoothed series.

    A natural kernel bandwidth for strongly cyclic data: the scale of one
    full cycle rather than the pointwise standard deviation.
    """
    x = np.asarray(series, dtype=float)
    from scipy.ndimage import uniform_filter1d

    smoothed = uniform_filter1d(x, size=smoothing_window, mode="nearest")
    idx, kind = _alternating_extrema(smoothed)
    if len(idx) >= 2:
        swing = float(smoothed.max() - smoothed.min())
        idx, kind = _prune_shallow_extrema(idx, kind, smoothed, 0.1 * swing)
    if len(idx) < 2:
        raise ValidationError("too few extrema after smoothing to measure an amplitude")
    return float(np.mean(np.abs(np.diff(smoothed[idx]))))


def cycle_phase(series: np.ndarray, smoothing_window: int) -> np.ndarray:
    """Phase in [0, 1) per sample of a quasi-periodic scalar series.

    The series is low-pass filtered with a centered moving average, the
    extrema of the smoothed series are located, and the phase is anchored
    at 0 on minima and 0.5 on maxima with linear interpolation in between.
    Samples outside the first/last extremum continue the adjacent slope.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValidationError("series must be 1-D")
    if smoothing_window < 1:
        raise ValidationError("smoothing window must be >= 1")
    from scipy.ndimage import uniform_filter1d

    smoothed = uniform_filter1d(x, size=smoothing_window, mode="nearest")
    idx, kind = _alternating_extrema(smoothed)
    if len(idx) >= 2:
        swing = float(smoothed.max() - smoothed.min())
        idx, kind = _prune_shallow_extrema(idx, kind, smoothed, 0.1 * swing)
    if len(idx) < 2:
        raise ValidationError("too few extrema after smoothing to define a phase")

    # unwrapped phase: each half cycle advances by 0.5
    anchor_phase = np.empty(len(idx))
    anchor_phase[0] = 0.0 if kind[0] == -1 else 0.5
    for i in range(1, len(idx)):
        anchor_phase[i] = anchor_phase[i - 1] + 0.5
    t = np.arange(len(x), dtype=float)
    left_slope = 0.5 / (idx[1] - idx[0])
    right_slope = 0.5 / (idx[-1] - idx[-2])
    phase = np.interp(t, idx.astype(float), anchor_phase)
    before, after = t < idx[0], t > idx[-1]
    phase[before] = anchor_phase[0] + (t[before] - idx[0]) * left_slope
    phase[after] = anchor_phase[-1] + (t[after] - idx[-1]) * right_slope
    return np.mod(phase, 1.0)

"""Exact simulation under dwell-constrained switching and Lyapunov monitoring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadHorizon, DimensionMismatch, ScheduleError, ShapeMismatch
from .linalg import expm
from .system import SwitchedSystem

MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class SwitchingSchedule:
    """Piecewise-constant mode signal: ``modes[k]`` is active on ``[instants[k], instants[k+1])``.

    ``instants[0]`` is 0 and the last interval runs to ``horizon``.
    """

    instants: tuple
    modes: tuple
    horizon: float

    def __post_init__(self):
        inst = tuple(float(t) for t in self.instants)
        modes = tuple(int(i) for i in self.modes)
        if not inst or inst[0] != 0.0:
            raise ScheduleError("the first switching instant must be 0")
        if len(inst) != len(modes):
            raise ScheduleError("need exactly one mode per interval")
        if any(b <= a for a, b in zip(inst, inst[1:])):
            raise ScheduleError("switching instants must be strictly increasing")
        if self.horizon < inst[-1]:
            raise BadHorizon("horizon precedes the last switching instant")
        object.__setattr__(self, "instants", inst)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def switch_times(self) -> tuple:
        return self.instants[1:]

    def min_dwell(self) -> float:
        """Smallest interval between consecutive switching instants (inf without switches)."""
        gaps = np.diff(self.instants)
        return float(gaps.min()) if len(gaps) else float("inf")

    def is_admissible(self, tau: float) -> bool:
        # Relative slack absorbs rounding in instants built as k * tau.
        return self.min_dwell() >= tau * (1.0 - 1e-12)

    def mode_at(self, t: float) -> int:
        k = int(np.searchsorted(self.instants, t, side="right")) - 1
        return self.modes[max(k, 0)]


def periodic_schedule(tau: float, order, horizon: float) -> SwitchingSchedule:
    """Cycle through ``order`` (0-based mode indices) switching every ``tau``."""
    order = tuple(order)
    if tau <= 0:
        raise ScheduleError("tau must be positive")
    if not order:
        raise ScheduleError("order must be non-empty")
    if horizon < 0:
        raise BadHorizon("horizon must be non-negative")
    if len(order) == 1:
        return SwitchingSchedule((0.0,), order, horizon)
    if horizon < tau:
        raise BadHorizon(f"horizon {horizon} is shorter than the dwell time {tau}")
    count = int(np.floor(horizon / tau + 1e-12))
    instants = [k * tau for k in range(count + 1) if k * tau <= horizon]
    if instants[-1] == horizon and len(instants) > 1:
        instants.pop()  # a switch exactly at the horizon starts no interval
    modes = [order[k % len(order)] for k in range(len(instants))]
    return SwitchingSchedule(tuple(instants), tuple(modes), horizon)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), n)
    modes: np.ndarray  # active mode at each sample (new mode at a switch)
    switch_indices: np.ndarray  # sample positions of t_k, k >= 0
    schedule: SwitchingSchedule

    def __len__(self) -> int:
        return len(self.times)


def simulate(sys: SwitchedSystem, sched: SwitchingSchedule, x0, dt: float,
             tau: float | None = None) -> Trajectory:
    """Sample the exact flow ``x(t) = exp(A_i (t - t_k)) x(t_k)``.

    Samples lie at multiples of ``dt`` plus every switching instant and the
    horizon. If ``tau`` is given the schedule must respect that dwell time.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, expected ({sys.n},)")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if any(not 0 <= i < sys.N for i in sched.modes):
        raise ScheduleError("schedule references an unknown mode")
    if tau is not None and not sched.is_admissible(tau):
        raise ScheduleError(f"schedule has dwell {sched.min_dwell():.6g} < tau = {tau:.6g}")
    bounds = list(sched.instants) + [sched.horizon]
    times, states, modes, switch_idx = [], [], [], []
    x_k = x0.copy()
    for k, mode in enumerate(sched.modes):
        t_k, t_next = bounds[k], bounds[k + 1]
        a = sys.modes[mode]
        grid = np.arange(np.ceil(t_k / dt), np.floor(t_next / dt) + 1) * dt
        local = [t_k] + [t for t in grid if t_k < t < t_next]
        switch_idx.append(len(times))
        for t in local:
            times.append(t)
            states.append(expm(a, t - t_k) @ x_k)
            modes.append(mode)
        x_k = expm(a, t_next - t_k) @ x_k
    if sched.horizon > bounds[-2] or len(times) == 0:
        times.append(sched.horizon)
        states.append(x_k)
        modes.append(sched.modes[-1])
    return Trajectory(np.array(times), np.array(states).reshape(-1, sys.n), np.array(modes),
                      np.array(switch_idx), sched)


@dataclass
class MonitorReport:
    trace: np.ndarray  # V of the active mode at each sample
    interval_monotone: bool
    worst_interval_increase: float
    switch_values: np.ndarray  # V_sigma(t_k)(x(t_k)), k = 0, 1, ...
    strictly_decreasing: bool
    max_jump: float  # largest V_new - V_old at a switch (may be positive)

    def longest_decreasing_run(self) -> int:
        """Largest number of consecutive switches with strictly decreasing values."""
        best = run = 0
        for a, b in zip(self.switch_values, self.switch_values[1:]):
            run = run + 1 if b < a else 0
            best = max(best, run)
        return best


def _vmax(pieces: np.ndarray, x: np.ndarray) -> float:
    return float(np.max(np.einsum("i,rij,j->r", x, pieces, x)))


def monitor_lyapunov(cert, traj: Trajectory) -> MonitorReport:
    """Evaluate ``V_sigma(t)(x(t))`` along a trajectory.

    Within each interval the trace must not increase (up to a relative slack
    of 1e-9); the values at switching instants use the newly active mode.
    Upward jumps at switches are allowed and reported.
    """
    if cert.n != traj.states.shape[1] or cert.N <= int(traj.modes.max(initial=0)):
        raise ShapeMismatch("certificate does not match the trajectory")
    pieces = cert.pieces
    trace = np.array([_vmax(pieces[m], x) for m, x in zip(traj.modes, traj.states)])
    starts = list(traj.switch_indices) + [len(traj)]
    worst = -np.inf
    jumps = []
    for k in range(len(traj.switch_indices)):
        lo, hi = starts[k], starts[k + 1]
        mode = traj.modes[lo]
        seg = list(trace[lo:hi])
        if k + 1 < len(traj.switch_indices):
            # value of the outgoing mode's function at the next switching instant
            end = _vmax(pieces[mode], traj.states[hi])
            seg.append(end)
            jumps.append(trace[hi] - end)
        for a, b in zip(seg, seg[1:]):
            worst = max(worst, (b - a) / max(1e-300, abs(a)))
    switch_values = trace[traj.switch_indices]
    return MonitorReport(
        trace=trace,
        interval_monotone=bool(worst <= MONOTONE_SLACK),
        worst_interval_increase=float(worst) if np.isfinite(worst) else 0.0,
        switch_values=switch_values,
        strictly_decreasing=bool(np.all(np.diff(switch_values) < 0)),
        max_jump=float(max(jumps)) if jumps else 0.0,
    )

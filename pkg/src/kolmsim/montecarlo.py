"""Euler-Maruyama Monte Carlo oracle for the underlying SDE.

Each sample owns a counter-based random stream keyed by (seed, sample
index), so estimates are bit-identical on one platform regardless of how
samples are chunked across worker threads.  Trajectories that leave the
guard radius are frozen and counted; more than 0.1% of them fails the run,
since a dissipative, divergence-free system should never blow up.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

CHUNK_SIZE = 8192       # fixed: part of the bit-reproducibility contract
TIME_BLOCK = 1000       # noise generation granularity (memory/speed tradeoff)
BLOWUP_THRESHOLD = 1e6
BLOWUP_FRACTION = 1e-3


@dataclass
class SDERun:
    """Per-grid-time estimates of E u0(X(t)) with standard errors."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_samples: int
    n_blowups: int
    dt: float
    seed: int

    def as_rows(self):
        for k in range(self.times.size):
            yield self.times[k], self.mean[k], self.se[k]


def _sample_rng(seed: int, sample: int) -> np.random.Generator:
    # Philox is counter-based: the (seed, sample) key fully determines the
    # stream, independent of scheduling.
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) + sample))


def _march_chunk(spec, x0, observable, grid_steps, n_steps, dt, seed,
                 start, count, initial_noise):
    n_vars = spec.n_vars
    rates = spec.rates
    sqrt_qdt = math.sqrt(spec.noise * dt)
    init_std = np.sqrt(spec.noise / (2.0 * rates))
    decay = 1.0 - dt * rates  # Euler step of the pure dissipation part

    rngs = [_sample_rng(seed, s) for s in range(start, start + count)]
    x = np.tile(np.asarray(x0, dtype=float), (count, 1))
    if initial_noise:
        for row, rng in enumerate(rngs):
            x[row] += rng.standard_normal(n_vars) * init_std
    alive = np.ones(count, dtype=bool)

    grid_lookup = {step: k for k, step in enumerate(grid_steps)}
    sums = np.zeros(len(grid_steps))
    sq_sums = np.zeros(len(grid_steps))
    counts = np.zeros(len(grid_steps), dtype=np.int64)

    def sweep_escaped():
        # nan-safe: comparisons with nan are False, so ~(... <= thr) catches it
        escaped = alive & ~(np.abs(x).max(axis=1) <= BLOWUP_THRESHOLD)
        if escaped.any():
            alive[escaped] = False
            x[escaped] = 0.0  # frozen; excluded from every later average

    def record(k):
        sweep_escaped()
        vals = observable(x[alive])
        sums[k] += vals.sum()
        sq_sums[k] += (vals ** 2).sum()
        counts[k] += int(alive.sum())

    if 0 in grid_lookup:
        record(grid_lookup[0])

    step = 0
    noise = np.empty((count, TIME_BLOCK, n_vars))
    # escaping samples may overflow between guard sweeps; they are frozen
    # before any recording, so estimates never see them
    with np.errstate(over="ignore", invalid="ignore"):
        while step < n_steps:
            block = min(TIME_BLOCK, n_steps - step)
            for row, rng in enumerate(rngs):
                noise[row, :block] = rng.standard_normal((block, n_vars))
            for b in range(block):
                c = spec.drift_value(x)
                x *= decay
                c *= dt
                x += c
                x += sqrt_qdt * noise[:, b]
                step += 1
                if step % 64 == 0:
                    sweep_escaped()
                if step in grid_lookup:
                    record(grid_lookup[step])
    return sums, sq_sums, counts, int(count - alive.sum())


def simulate(spec, x0, observable, times, n_samples: int, dt: float,
             seed: int = 0, initial_noise: bool = True,
             n_threads: int = 1) -> SDERun:
    """Euler-Maruyama estimate of E u0(X(t)) on a time grid.

    X(0) = x0 (+ Gaussian noise with variance q/(2 lambda_i) per variable
    unless disabled); each grid time must sit on the step lattice.
    """
    if n_samples < 100:
        raise NumericalError("need at least 100 samples")
    if dt <= 0:
        raise NumericalError("time step must be positive")
    stiffest = float(spec.rates[-1])
    if spec.linear_strength > 0:
        stiffest = max(stiffest, float(spec.linear_strength))
    if dt > 0.1 / stiffest * (1 + 1e-12):
        raise NumericalError(
            f"time step {dt} exceeds the stability guard 0.1/max(lambda_N, J1) "
            f"= {0.1 / stiffest:.3g}")
    times = np.asarray(times, dtype=float)
    grid_steps = []
    for t in times:
        step = round(t / dt)
        if abs(step * dt - t) > 1e-9 * max(dt, abs(t)):
            raise NumericalError(f"grid time {t} is not a multiple of dt = {dt}")
        grid_steps.append(int(step))
    n_steps = max(grid_steps)

    chunks = [(start, min(CHUNK_SIZE, n_samples - start))
              for start in range(0, n_samples, CHUNK_SIZE)]

    def work(args):
        start, count = args
        return _march_chunk(spec, x0, observable, grid_steps, n_steps, dt,
                            seed, start, count, initial_noise)

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            partials = list(pool.map(work, chunks))
    else:
        partials = [work(c) for c in chunks]

    # fixed chunk layout + in-order reduction keeps results bit-stable
    sums = np.zeros(len(grid_steps))
    sq_sums = np.zeros(len(grid_steps))
    counts = np.zeros(len(grid_steps), dtype=np.int64)
    blowups = 0
    for s, ss, c, nb in partials:
        sums += s
        sq_sums += ss
        counts += c
        blowups += nb

    if blowups > BLOWUP_FRACTION * n_samples:
        raise NumericalError(
            f"{blowups} of {n_samples} trajectories left the guard radius "
            f"{BLOWUP_THRESHOLD:g}; the configuration is not dissipative")
    if np.any(counts < 2):
        raise NumericalError("too few surviving samples to form estimates")

    mean = sums / counts
    var = np.maximum(sq_sums / counts - mean ** 2, 0.0) * counts / (counts - 1)
    se = np.sqrt(var / counts)
    return SDERun(times=times, mean=mean, se=se, n_samples=n_samples,
                  n_blowups=blowups, dt=dt, seed=seed)


@dataclass
class ComparisonReport:
    """Pointwise gap between a Monte Carlo run and a deterministic curve."""

    times: np.ndarray
    gap: np.ndarray
    gap_over_se: np.ndarray
    max_gap: float
    max_se: float

    @property
    def noise_floor(self) -> float:
        return 3.0 * self.max_se


def compare(run: SDERun, values) -> ComparisonReport:
    """Per-time |curve - MC mean| and its ratio to the standard error."""
    values = np.asarray(values, dtype=float)
    if values.shape != run.times.shape:
        raise NumericalError("curve and Monte Carlo run use different grids")
    gap = np.abs(values - run.mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gap == 0.0, 0.0, gap / np.where(run.se > 0, run.se, np.inf))
    return ComparisonReport(times=run.times, gap=gap, gap_over_se=ratio,
                            max_gap=float(gap.max()), max_se=float(run.se.max()))

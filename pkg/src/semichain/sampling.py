"""Metropolis machinery for drawing small-increment chains from a
phase-space weight.

The target weight is w(alpha) = e^{-|alpha|^2} ||phi(alpha*)||^2, known
up to normalization through a ``log_weight`` callable. The chain the
rest of the package needs has two properties in tension: its empirical
distribution must converge to w at close to iid rate (the estimator
tolerances assume ~4/sqrt(N)), while consecutive points must sit within
``step_cap`` of each other so the finite-difference derivative along
the chain is accurate. A single random-walk trace with capped proposals
cannot do both (its autocorrelation time grows like 1/step_cap^2), so
sampling is split in two phases:

  phase A: an uncapped Metropolis walk, proposal scale adapted toward
    ~50% acceptance during burn-in, thinned to give near-independent
    segment seeds;
  phase B: from each seed, a short capped Metropolis walk (truncated
    Gaussian proposals, symmetric, so stationarity is exact) fills in
    the remaining points of the segment.

The result is a chain of contiguous short segments: every point is
exactly w-distributed, within-segment increments never exceed the cap,
and the effective sample size is ~N / segment_len. Derivatives are
taken within segments only, so the large seed-to-seed jumps at segment
boundaries never enter a difference quotient.

Metropolis rejections duplicate the previous point. Duplicates carry
the repeat multiplicity the Metropolis measure requires and are handled
downstream by a neighbor-skip rule, but a segment consisting entirely
of one duplicated point would have no usable increment at all, so such
segments are re-walked from the same seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SamplerStuck

_SIGMA_MIN = 1e-4
_SIGMA_MAX = 20.0


@dataclass(frozen=True)
class SamplerParams:
    """Knobs for the two-phase chain sampler."""

    step_cap: float = 0.45
    segment_len: int = 6
    burn_in: int | None = None     # None -> 10 * n_points proposals
    seed_stride: int = 8           # phase-A proposals between segment seeds
    walk_sigma0: float = 1.0       # initial phase-A proposal scale
    seg_sigma_frac: float = 0.5    # phase-B proposal scale / step_cap
    accept_target: float = 0.5
    accept_floor: float = 0.02
    max_segment_retries: int = 50

    def __post_init__(self):
        if self.step_cap <= 0:
            raise ValueError("step_cap must be positive")
        if self.segment_len < 2:
            raise ValueError("segment_len must be at least 2")
        if not 0.0 < self.seg_sigma_frac <= 1.0:
            raise ValueError("seg_sigma_frac must be in (0, 1]")


class _BufferedDraws:
    """Blocked RNG draws so the tight loops avoid per-call overhead."""

    def __init__(self, rng, n_modes, block=8192):
        self.rng = rng
        self.n_modes = n_modes
        self.block = block
        self._refill()

    def _refill(self):
        g = self.rng.standard_normal((self.block, 2 * self.n_modes))
        self.normals = (g[:, : self.n_modes] + 1j * g[:, self.n_modes:]) / np.sqrt(2.0)
        self.logu = np.log(self.rng.random(self.block))
        self.pos = 0

    def next(self):
        if self.pos >= self.block:
            self._refill()
        i = self.pos
        self.pos += 1
        return self.normals[i], self.logu[i]


class _Walker:
    """Current state of a Metropolis walk on log weights."""

    def __init__(self, log_weight, x0, draws):
        self.log_weight = log_weight
        self.x = np.array(x0, dtype=complex)
        self.logw = float(log_weight(self.x))
        if not np.isfinite(self.logw):
            raise SamplerStuck("walk started at a zero-weight point")
        self.draws = draws
        self.accepted = 0
        self.proposed = 0

    def step(self, sigma, cap=None):
        """One Metropolis proposal; returns True if accepted.

        With ``cap`` set, proposal components are redrawn until every
        mode moves by at most the cap (truncated Gaussian, symmetric).
        """
        noise, logu = self.draws.next()
        dx = sigma * noise
        if cap is not None:
            for _ in range(100):
                if np.all(np.abs(dx) <= cap):
                    break
                noise, logu = self.draws.next()
                dx = sigma * noise
        y = self.x + dx
        logw_y = float(self.log_weight(y))
        self.proposed += 1
        if logu < logw_y - self.logw:
            self.x = y
            self.logw = logw_y
            self.accepted += 1
            return True
        return False


def log_weight_from_phi(phi, n_modes):
    """Default weight: log of e^{-|alpha|^2} ||phi(alpha*)||^2."""

    def logw(alpha):
        v = phi(np.conj(alpha))
        n2 = float(np.real(np.vdot(v, v)))
        if n2 <= 0.0 or not np.isfinite(n2):
            return -np.inf
        return float(-np.sum(np.abs(alpha) ** 2) + np.log(n2))

    return logw


def _segment_lengths(n_points, segment_len):
    """Split n_points into contiguous segments of >= 2 points each."""
    n_segments = max(1, n_points // segment_len)
    base = n_points // n_segments
    extra = n_points % n_segments
    lengths = [base + 1] * extra + [base] * (n_segments - extra)
    if lengths and lengths[-1] < 2:
        # only possible for tiny n_points; collapse to one segment
        return [n_points]
    return lengths


def sample_positions(log_weight, n_modes, n_points, params: SamplerParams,
                     rng, start=None):
    """Draw chain positions from the weight.

    Returns ``(alphas, segment_starts)`` where ``alphas`` has shape
    ``(n_points, n_modes)`` and ``segment_starts`` lists the first index
    of each small-increment segment.

    Raises SamplerStuck if the phase-A acceptance rate cannot be pulled
    above the floor, or a segment cannot acquire a usable increment.
    """
    if n_points < 2:
        raise ValueError("a chain needs at least 2 points")
    draws = _BufferedDraws(rng, n_modes)
    x0 = np.zeros(n_modes, dtype=complex) if start is None else np.asarray(start, dtype=complex)
    walker = _Walker(log_weight, x0, draws)

    burn_in = params.burn_in if params.burn_in is not None else 10 * n_points
    burn_in = max(burn_in, 500)
    sigma = params.walk_sigma0

    # Robbins-Monro adaptation of the phase-A proposal scale.
    window_acc = 0
    window_len = 0
    for i in range(burn_in):
        acc = walker.step(sigma)
        gain = 4.0 / np.sqrt(i + 10.0)
        sigma = float(np.clip(
            sigma * np.exp(gain * ((1.0 if acc else 0.0) - params.accept_target)),
            _SIGMA_MIN, _SIGMA_MAX))
        if i >= burn_in - min(500, burn_in // 2):
            window_acc += 1 if acc else 0
            window_len += 1
    if window_len and window_acc / window_len < params.accept_floor:
        raise SamplerStuck(
            f"phase-A acceptance {window_acc / window_len:.3f} below floor "
            f"{params.accept_floor} after adaptation")

    lengths = _segment_lengths(n_points, params.segment_len)
    seg_sigma = params.seg_sigma_frac * params.step_cap
    alphas = np.empty((n_points, n_modes), dtype=complex)
    segment_starts = []
    pos = 0
    for seg_len in lengths:
        # decorrelate, then take the current walk state as the seed
        for _ in range(params.seed_stride):
            acc = walker.step(sigma)
        seed = walker.x.copy()
        seed_logw = walker.logw
        for attempt in range(params.max_segment_retries):
            seg = _walk_segment(log_weight, seed, seed_logw, seg_len,
                                seg_sigma, params.step_cap, draws)
            if seg is not None:
                break
        else:
            raise SamplerStuck(
                f"segment at point {pos} never accepted a move in "
                f"{params.max_segment_retries} re-walks")
        alphas[pos: pos + seg_len] = seg
        segment_starts.append(pos)
        pos += seg_len
    return alphas, np.asarray(segment_starts, dtype=int)


def _walk_segment(log_weight, seed, seed_logw, seg_len, sigma, cap, draws):
    """Short capped walk from a seed; None if every move was rejected."""
    seg = np.empty((seg_len, seed.shape[0]), dtype=complex)
    seg[0] = seed
    w = _Walker(log_weight, seed, draws)
    w.logw = seed_logw  # avoid depending on re-evaluation rounding
    for i in range(1, seg_len):
        w.step(sigma, cap=cap)
        seg[i] = w.x
    if w.accepted == 0 and seg_len > 1:
        return None
    return seg

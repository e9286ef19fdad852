"""ASK constellations, shaped symbol distributions, bit-metric LLRs and
per-bit-level channel models (empirical and surrogate).

Everything downstream (density evolution, decoding, simulation) consumes the
bit channels defined here: the distribution of the symmetrized LLR
L~ = l_k(Y) * (1 - 2*B_k) for each bit level k of the labeling.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr

LLR_CLAMP = 300.0  # nats; saturation guard for downstream exponentials

_MAGIC = b"MPDLLR01"


@dataclass(frozen=True)
class AskConstellation:
    """Amplitude-shift-keying constellation with a binary labeling.

    points are the ordered odd integers -(M-1), ..., -1, +1, ..., M-1 and
    labels[i] is the m-bit label of points[i]. Bit level 1 (labels[:, 0])
    carries the sign with 0 on the positive half; the remaining levels
    Gray-code the magnitude, so the labeling is PAS compatible: labels of
    x and -x differ only in bit 1.
    """

    m: int
    points: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return 1 << self.m


def make_ask(m: int) -> AskConstellation:
    """Build the 2^m-ASK constellation with a binary reflected Gray labeling."""
    if not (1 <= m <= 8):
        raise ValueError(f"bits per symbol must be in 1..8, got {m}")
    M = 1 << m
    points = np.arange(-(M - 1), M, 2, dtype=float)
    # Gray code walked from the largest point down, so bit 1 is 0 for x > 0
    # and flipping the sign of a point flips bit 1 only.
    idx = M - 1 - np.arange(M)
    gray = idx ^ (idx >> 1)
    labels = (gray[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1
    return AskConstellation(m=m, points=points, labels=labels.astype(np.uint8))


def entropy(probs: np.ndarray) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def mb_dist(points: np.ndarray, nu: float) -> np.ndarray:
    """Maxwell-Boltzmann distribution P(x) proportional to exp(-nu x^2)."""
    w = np.exp(-nu * np.asarray(points, dtype=float) ** 2)
    return w / w.sum()


def mb_fit(const: AskConstellation, target_entropy: float) -> np.ndarray:
    """Fit the Maxwell-Boltzmann parameter so that H(X) hits the target.

    Solves for nu >= 0 with H(P_X) = target_entropy to within 1e-8 bits.
    Feasible targets lie in (1, m]: the sign bit is always uniform (1 bit)
    and the amplitude entropy cannot exceed log2(M/2).
    """
    m = const.m
    if not (1.0 < target_entropy <= m + 1e-12):
        raise ValueError(
            f"target entropy {target_entropy} outside feasible range (1, {m}]")
    if abs(target_entropy - m) <= 1e-12:
        return np.full(const.size, 1.0 / const.size)

    def gap(nu):
        return entropy(mb_dist(const.points, nu)) - target_entropy

    hi = 1.0
    while gap(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError(f"target entropy {target_entropy} unreachable")
    nu = brentq(gap, 0.0, hi, xtol=1e-14, rtol=8.9e-16)
    probs = mb_dist(const.points, nu)
    assert abs(entropy(probs) - target_entropy) < 1e-8
    return probs


def pas_rates(rtx: float, rc: float, m: int) -> float:
    """Distribution matcher rate implied by a PAS transmission rate.

    R_dm = R_tx - 1 + (1 - R_c) * m. The target symbol entropy for the
    shaped constellation is R_dm + 1 (uniform sign bit on top of the
    amplitude entropy).
    """
    if not (0.0 < rc <= 1.0):
        raise ValueError(f"code rate must be in (0, 1], got {rc}")
    dm_rate = rtx - 1.0 + (1.0 - rc) * m
    if not (0.0 < dm_rate <= m - 1 + 1e-12):
        raise ValueError(
            f"infeasible mode: dm rate {dm_rate:.4f} outside (0, {m - 1}]")
    return dm_rate


@dataclass(frozen=True)
class SignalingMode:
    """Constellation + symbol distribution + code rate: one operating mode.

    sigma2 is the AWGN noise variance of the current operating point; use
    at_snr() to derive a mode pinned to a specific SNR.
    """

    name: str
    const: AskConstellation
    probs: np.ndarray
    rc: float
    rtx: float
    sigma2: float | None = None

    @property
    def m(self) -> int:
        return self.const.m

    @property
    def symbol_energy(self) -> float:
        return float((self.probs * self.const.points**2).sum())

    def noise_variance(self, snr_db: float) -> float:
        return self.symbol_energy / 10.0 ** (snr_db / 10.0)

    def at_snr(self, snr_db: float) -> "SignalingMode":
        return replace(self, sigma2=self.noise_variance(snr_db))


def make_mode(name, m, shaping, rc, rtx, target_entropy=None) -> SignalingMode:
    const = make_ask(m)
    if shaping == "uniform":
        probs = np.full(const.size, 1.0 / const.size)
    elif shaping == "mb":
        if target_entropy is None:
            target_entropy = pas_rates(rtx, rc, m) + 1.0
        probs = mb_fit(const, target_entropy)
    else:
        raise ValueError(f"unknown shaping {shaping!r}")
    return SignalingMode(name=name, const=const, probs=probs, rc=rc, rtx=rtx)


# The operating modes used throughout: 2^m-ASK at spectral efficiencies of
# 1.0 and 1.5 bpcu. Shaped modes derive their symbol entropy from the
# transmission rate and code rate (dm rate + 1 sign bit).
_PRESETS = {
    "4U-0.50": dict(m=2, shaping="uniform", rc=1 / 2, rtx=1.0),
    "4U-0.75": dict(m=2, shaping="uniform", rc=3 / 4, rtx=1.5),
    "8PS-0.67": dict(m=3, shaping="mb", rc=2 / 3, rtx=1.5),
    "8PS-0.83": dict(m=3, shaping="mb", rc=5 / 6, rtx=1.5),
}


def preset_names():
    return sorted(_PRESETS)


def preset_mode(name: str) -> SignalingMode:
    if name not in _PRESETS:
        raise ValueError(f"unknown mode {name!r}; presets: {preset_names()}")
    return make_mode(name, **_PRESETS[name])


def mode_to_dict(mode: SignalingMode) -> dict:
    d = {"name": mode.name, "m": mode.m, "Rc": mode.rc, "Rtx": mode.rtx}
    if np.allclose(mode.probs, 1.0 / mode.const.size):
        d["shaping"] = "uniform"
    else:
        d["shaping"] = "mb"
        # rounded so that save -> load -> refit reproduces the same dict
        # (the fit hits the target within 1e-8 bits)
        d["targetEntropy"] = round(entropy(mode.probs), 6)
    return d


def save_mode(mode: SignalingMode, path) -> None:
    with open(path, "w") as f:
        json.dump(mode_to_dict(mode), f, indent=1)
        f.write("\n")


def load_mode(path) -> SignalingMode:
    with open(path) as f:
        d = json.load(f)
    for key in ("name", "m", "shaping", "Rc", "Rtx"):
        if key not in d:
            raise ValueError(f"mode file missing field {key!r}")
    return make_mode(d["name"], d["m"], d["shaping"], d["Rc"], d["Rtx"],
                     d.get("targetEntropy"))


def mode_hash(mode: SignalingMode) -> str:
    """Stable identity of a mode (independent of the operating SNR)."""
    d = mode_to_dict(mode)
    blob = json.dumps(d, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# bit-metric LLRs


def bit_llr(y, mode: SignalingMode):
    """Per-bit-level LLRs l_k(y) = ln P(y, B_k=0) / P(y, B_k=1).

    Computed with max-subtracted log-sum-exp over the constellation and
    clamped to +-LLR_CLAMP nats (|y| far outside the constellation saturates
    the exact value anyway). Accepts a scalar or an array of channel
    outputs; returns shape (m,) or (n, m).
    """
    if mode.sigma2 is None:
        raise ValueError("mode has no operating point; use mode.at_snr(snrDb)")
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    # log p(y|x) + log P(x), shape (n, M)
    lp = (-(y_arr[:, None] - mode.const.points) ** 2 / (2.0 * mode.sigma2)
          + np.log(mode.probs))
    out = np.empty((y_arr.size, mode.m))
    for k in range(mode.m):
        mask0 = mode.const.labels[:, k] == 0
        out[:, k] = _logsumexp_rows(lp[:, mask0]) - _logsumexp_rows(lp[:, ~mask0])
    out = np.clip(out, -LLR_CLAMP, LLR_CLAMP)
    return out[0] if np.isscalar(y) or np.ndim(y) == 0 else out


def _logsumexp_rows(a):
    mx = a.max(axis=1)
    return mx + np.log(np.exp(a - mx[:, None]).sum(axis=1))


def bit_llr_level(y: np.ndarray, mode: SignalingMode, k: int) -> np.ndarray:
    """Single-level fast path of bit_llr for large sample arrays."""
    if mode.sigma2 is None:
        raise ValueError("mode has no operating point; use mode.at_snr(snrDb)")
    y = np.asarray(y, dtype=float)
    lp = (-(y[:, None] - mode.const.points) ** 2 / (2.0 * mode.sigma2)
          + np.log(mode.probs))
    mask0 = mode.const.labels[:, k - 1] == 0
    l = _logsumexp_rows(lp[:, mask0]) - _logsumexp_rows(lp[:, ~mask0])
    return np.clip(l, -LLR_CLAMP, LLR_CLAMP)


def symmetrize(l, b):
    """Channel adapter: flip the LLR sign wherever the transmitted bit is 1."""
    # cast before scaling: raw labels arrive as unsigned bytes
    return l * (1.0 - 2.0 * np.asarray(b, dtype=float))


# ---------------------------------------------------------------------------
# bit-channel models


class SurrogateBitChannel:
    """Binary-input AWGN stand-in for one bit level.

    The symmetrized LLR of a biAWGN channel with noise std sbreve is
    N(2/sbreve^2, 4/sbreve^2); mu and sigma here are that mean and std,
    so sigma^2 = 2 mu always holds.
    """

    kind = "surrogate"

    def __init__(self, sbreve: float):
        self.sbreve = float(sbreve)
        self.mu = 2.0 / self.sbreve**2
        self.sigma = 2.0 / self.sbreve

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def __repr__(self):
        return f"SurrogateBitChannel(sbreve={self.sbreve:.6g})"


class EmpiricalBitChannel:
    """Sorted Monte Carlo sample of the symmetrized LLR of one bit level."""

    kind = "empirical"

    def __init__(self, samples: np.ndarray, meta: dict):
        self.samples = np.ascontiguousarray(np.sort(samples), dtype=float)
        self.meta = dict(meta)
        n = self.samples.size
        # midpoint empirical CDF levels; interp clamps outside the range
        self._levels = (np.arange(1, n + 1) - 0.5) / n

    def cdf(self, x):
        return np.interp(np.asarray(x, dtype=float), self.samples,
                         self._levels, left=0.0, right=1.0)

    def save(self, path) -> None:
        header = json.dumps(self.meta, sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            f.write(self.samples.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "EmpiricalBitChannel":
        with open(path, "rb") as f:
            if f.read(len(_MAGIC)) != _MAGIC:
                raise ValueError(f"{path} is not an LLR cache file")
            (hlen,) = struct.unpack("<I", f.read(4))
            meta = json.loads(f.read(hlen).decode())
            samples = np.frombuffer(f.read(), dtype="<f8")
        if samples.size != meta.get("count"):
            raise ValueError(f"{path}: truncated sample payload")
        return cls(samples, meta)


def sample_llr_cdf(mode: SignalingMode, snr_db: float, k: int, n: int,
                   seed) -> EmpiricalBitChannel:
    """Monte Carlo model of the symmetrized LLR distribution of level k.

    Draws n i.i.d. uses of the channel, computes l_k(Y) and symmetrizes with
    the transmitted bit. k is 1-based. Sample counts below 1e5 are flagged
    in the metadata but still returned.
    """
    if not (1 <= k <= mode.m):
        raise ValueError(f"bit level {k} outside 1..{mode.m}")
    at = mode.at_snr(snr_db)
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(at.sigma2)
    samples = np.empty(n)
    labels_k = mode.const.labels[:, k - 1].astype(np.int64)
    for lo in range(0, n, 1 << 20):  # chunked to bound peak memory
        hi = min(lo + (1 << 20), n)
        idx = rng.choice(mode.const.size, size=hi - lo, p=mode.probs)
        y = mode.const.points[idx] + sigma * rng.standard_normal(hi - lo)
        l = bit_llr_level(y, at, k)
        samples[lo:hi] = symmetrize(l, labels_k[idx])
    meta = {"mode": mode_hash(mode), "snrDb": snr_db, "bitLevel": k,
            "count": n, "seed": int(seed)}
    if n < 10**5:
        meta["warning"] = f"sample count {n} below recommended 1e5"
    return EmpiricalBitChannel(samples, meta)


# ---------------------------------------------------------------------------
# rates


def cond_bit_entropy(mode: SignalingMode, snr_db: float, k: int) -> float:
    """H(B_k | Y) by adaptive quadrature over the channel output.

    Absolute integration error <= 1e-6 bits over
    y in [min point - 10 sigma, max point + 10 sigma].
    """
    at = mode.at_snr(snr_db)
    sigma2 = at.sigma2
    sigma = np.sqrt(sigma2)
    pts = mode.const.points
    probs = mode.probs
    mask0 = mode.const.labels[:, k - 1] == 0
    norm = 1.0 / np.sqrt(2.0 * np.pi * sigma2)

    def integrand(y):
        pyx = probs * np.exp(-((y - pts) ** 2) / (2.0 * sigma2))
        py = pyx.sum()
        if py <= 0.0:
            return 0.0
        p0 = pyx[mask0].sum() / py
        h = 0.0
        for pb in (p0, 1.0 - p0):
            if pb > 0.0:
                h -= pb * np.log2(pb)
        return h * py * norm

    val, err = quad(integrand, pts.min() - 10 * sigma, pts.max() + 10 * sigma,
                    limit=500, epsabs=1e-9, epsrel=1e-9)
    if err > 1e-6:
        raise RuntimeError(
            f"H(B_{k}|Y) integration error {err:.2e} exceeds 1e-6 bits")
    return float(min(max(val, 0.0), 1.0))


def rbmd(mode: SignalingMode, snr_db: float) -> float:
    """Achievable rate of bit-metric decoding, [H(B) - sum_k H(B_k|Y)]+."""
    hx = entropy(mode.probs)
    hcond = sum(cond_bit_entropy(mode, snr_db, k) for k in range(1, mode.m + 1))
    return max(hx - hcond, 0.0)


def rbmd_inv(mode: SignalingMode, rate: float, lo: float = -10.0,
             hi: float = 30.0) -> float:
    """SNR in dB at which rbmd reaches the given rate (bisection)."""
    f = lambda s: rbmd(mode, s) - rate
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise ValueError(
            f"rate {rate} not bracketed by rbmd on [{lo}, {hi}] dB")
    return float(brentq(f, lo, hi, xtol=1e-4))


# ---------------------------------------------------------------------------
# surrogate channels


def h_binary_awgn(sbreve: float) -> float:
    """H(B|Y) of a binary-input AWGN channel with inputs +-1, noise std sbreve."""
    mu = 2.0 / sbreve**2
    sd = 2.0 / sbreve
    norm = 1.0 / (np.sqrt(2.0 * np.pi) * sd)

    def integrand(l):
        return norm * np.exp(-((l - mu) ** 2) / (2.0 * sd * sd)) \
            * np.log2(1.0 + np.exp(-l))

    val, _ = quad(integrand, mu - 12 * sd, mu + 12 * sd, limit=400,
                  epsabs=1e-12, epsrel=1e-12)
    return float(val)


def surrogate_sigma(mode: SignalingMode, snr_db: float,
                    k: int) -> SurrogateBitChannel:
    """Entropy-matched biAWGN surrogate for bit level k at the given SNR.

    Solves H(B|Y) of the surrogate = H(B_k|Y) of the true bit channel by
    bisection to 1e-9 in the surrogate noise std.
    """
    h = cond_bit_entropy(mode, snr_db, k)
    if h <= 1e-12 or h >= 1.0 - 1e-12:
        raise ValueError(f"degenerate bit channel: H(B_{k}|Y) = {h}")
    lo, hi = 1e-3, 1.0
    while h_binary_awgn(hi) < h:
        hi *= 2.0
    while h_binary_awgn(lo) > h:
        lo /= 2.0
    sbreve = brentq(lambda s: h_binary_awgn(s) - h, lo, hi, xtol=1e-9)
    return SurrogateBitChannel(sbreve)


def surrogate_channels(mode: SignalingMode, snr_db: float):
    """Surrogate bit channels for all m levels (DE initialization input)."""
    return [surrogate_sigma(mode, snr_db, k) for k in range(1, mode.m + 1)]


def empirical_channels(mode: SignalingMode, snr_db: float, n: int, seed):
    """Empirical bit channels for all m levels, one RNG stream per level."""
    ss = np.random.SeedSequence(seed)
    seeds = ss.generate_state(mode.m)
    return [sample_llr_cdf(mode, snr_db, k, n, int(seeds[k - 1]))
            for k in range(1, mode.m + 1)]

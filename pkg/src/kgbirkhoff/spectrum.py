"""Spectral clusters, sphere frequencies, and small-divisor scans.

On the d-sphere with zero potential the square root of the Laplacian has
eigenvalues ``lambda_n = sqrt(n(n+d-1))`` with the n-th eigenspace forming
cluster ``n``; the Klein-Gordon frequencies are
``omega_n = sqrt(lambda_n^2 + m^2)``.  Cluster indexing starts at ``n = 1``
(the constant mode is dropped at truncation).  A small divisor is a signed
frequency combination ``omega_{n_1} + ... + omega_{n_l} - omega_{n_{l+1}}
- ... - omega_{n_{k+1}}``; the scans in this module measure its lower bound
against the combinatorial weight ``mu^(-nu_bar)`` over a finite truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .polyalg import mu_S

# |divisor| below NEAR_ZERO_REL * max(omega) is reported as numerically
# resonant by the scans.  True resonance is decided combinatorially (equal
# cluster multisets), never by this threshold.
NEAR_ZERO_REL = 1e-12


@dataclass(frozen=True)
class SphereParams:
    """Sphere dimension and Klein-Gordon mass."""

    d: int
    m: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension d must be >= 1")
        if not self.m > 0:
            raise ValueError("mass m must be > 0")


@dataclass(frozen=True)
class Mode:
    mode_id: int
    cluster: int
    intra_label: int


@dataclass(frozen=True)
class ClusterParams:
    """Fitted diagnostics of the cluster-interval structure.

    ``lambda_n`` lies in ``[2 pi n / tau + alpha - c0 / n^delta, ... + c0 /
    n^delta]`` for all ``n >= n0``, and cluster cardinality is bounded by
    ``C0 * n^D``.  These are measured on the truncation, not asserted.
    """

    tau: float
    alpha: float
    c0: float
    delta: float
    C0: float
    D: float
    n0: int


class Spectrum:
    """Immutable truncated spectrum: modes, clusters, frequencies.

    Build with :func:`build_sphere_spectrum`.  Mode ids on the circle are
    the signed Fourier indices ``+-n``; for ``d >= 2`` they are sequential
    integers with ``intra_label`` enumerating each cluster's eigenspace.
    """

    def __init__(self, params, n_max, modes, omega, cluster_params):
        self.params = params
        self.n_max = int(n_max)
        self.modes = tuple(modes)
        self.omega = dict(omega)
        self.cluster_params = cluster_params
        self._cluster_of = {md.mode_id: md.cluster for md in self.modes}
        self._by_cluster = {}
        for md in self.modes:
            self._by_cluster.setdefault(md.cluster, []).append(md.mode_id)
        self.mode_ids = tuple(md.mode_id for md in self.modes)
        self._mode_pos = {mid: i for i, mid in enumerate(self.mode_ids)}
        self.omega_by_mode = np.array(
            [self.omega[md.cluster] for md in self.modes])
        self.max_omega = self.omega[self.n_max]

    # -- lookups ---------------------------------------------------------
    def cluster_of(self, mode_id):
        return self._cluster_of[mode_id]

    def modes_in_cluster(self, n):
        return tuple(self._by_cluster[n])

    def clusters(self):
        return range(1, self.n_max + 1)

    def conj_partner(self, mode_id):
        """Mode id carrying the conjugate amplitude of a real function."""
        return -mode_id if self.params.d == 1 else mode_id

    def mode_position(self, mode_id):
        return self._mode_pos[mode_id]

    # -- array helpers ----------------------------------------------------
    def state_to_array(self, state):
        arr = np.zeros(len(self.modes), dtype=complex)
        for mid, c in state.amplitudes.items():
            arr[self._mode_pos[mid]] = c
        return arr

    def array_to_state(self, arr):
        from .polyalg import State
        return State({mid: complex(arr[i])
                      for i, mid in enumerate(self.mode_ids)
                      if arr[i] != 0})

    def __repr__(self):
        return (f"Spectrum(d={self.params.d}, m={self.params.m}, "
                f"n_max={self.n_max}, n_modes={len(self.modes)})")


@dataclass(frozen=True)
class DivisorQuery:
    """Cluster tuple and sign split for a small divisor.

    ``ell`` of the ``k+1`` clusters enter with a plus sign, the rest with a
    minus sign.
    """

    clusters: tuple
    ell: int

    def __post_init__(self):
        if len(self.clusters) < 2:
            raise ValueError("divisor needs at least 2 clusters")
        if not 0 <= self.ell <= len(self.clusters):
            raise ValueError("ell out of range")
        if any(n < 1 for n in self.clusters):
            raise ValueError("cluster indices start at 1")


def _multiplicity(d, n):
    """Dimension of the degree-n eigenspace on the d-sphere."""
    if d == 1:
        return 2
    return math.comb(n + d, d) - math.comb(n + d - 2, d)


def build_sphere_spectrum(params, n_max):
    """Construct the truncated sphere spectrum.

    Parameters
    ----------
    params : SphereParams
    n_max : int
        Largest cluster index retained.

    Returns
    -------
    Spectrum
        Frequencies ``omega_n = sqrt(n(n+d-1) + m^2)`` computed in double
        precision from the exact integer ``lambda_n^2``; clusters 1..n_max.
    """
    if not isinstance(params, SphereParams):
        params = SphereParams(*params)
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    d, m = params.d, params.m
    omega = {n: math.sqrt(n * (n + d - 1) + m * m)
             for n in range(1, n_max + 1)}
    modes = []
    next_id = 1
    for n in range(1, n_max + 1):
        if d == 1:
            modes.append(Mode(mode_id=n, cluster=n, intra_label=+1))
            modes.append(Mode(mode_id=-n, cluster=n, intra_label=-1))
        else:
            for j in range(_multiplicity(d, n)):
                modes.append(Mode(mode_id=next_id, cluster=n, intra_label=j))
                next_id += 1

    # Fitted interval diagnostics: lambda_n = n + alpha - O(1/n) with
    # alpha = (d-1)/2 and tau = 2 pi.
    alpha = (d - 1) / 2.0
    devs = [abs(math.sqrt(n * (n + d - 1)) - (n + alpha)) * n
            for n in range(1, n_max + 1)]
    c0 = max(devs)
    C0 = max(_multiplicity(d, n) / n ** (d - 1) for n in range(1, n_max + 1))
    cp = ClusterParams(tau=2 * math.pi, alpha=alpha, c0=c0, delta=1.0,
                       C0=C0, D=float(d - 1), n0=1)
    return Spectrum(params, n_max, modes, omega, cp)


def small_divisor(spec, query):
    """Signed frequency sum of a :class:`DivisorQuery`.

    The first ``ell`` clusters contribute ``+omega``, the remaining ones
    ``-omega``.  Clusters outside the truncation raise ``ValueError``.
    """
    for n in query.clusters:
        if n > spec.n_max:
            raise ValueError(f"cluster {n} exceeds n_max={spec.n_max}")
    total = 0.0
    for i, n in enumerate(query.clusters):
        total += spec.omega[n] if i < query.ell else -spec.omega[n]
    return total


# ----------------------------------------------------------------------
# divisor scans
# ----------------------------------------------------------------------

@dataclass
class ScanReport:
    """Result of a small-divisor scan at fixed (k, ell)."""

    k: int
    ell: int
    nu_bar: float
    n_max: int
    n_tuples: int
    min_weighted: float          # empirical c = min |Omega| * mu^nu_bar
    argmin: tuple | None         # (plus clusters, minus clusters)
    argmin_divisor: float
    argmin_mu: float
    histogram: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)


def _side_tables(spec, size):
    """Sorted multisets of `size` clusters with precomputed scan data.

    Returns (tuples, omega sums, top-3 cluster values padded with 0).
    """
    clusters = list(spec.clusters())
    tuples = list(combinations_with_replacement(clusters, size))
    if size == 0:
        return [()], np.zeros(1), np.zeros((1, 3))
    arr = np.array(tuples)
    sums = np.array([[spec.omega[n] for n in t] for t in tuples]).sum(axis=1)
    top3 = np.zeros((len(tuples), 3))
    width = min(3, size)
    top3[:, :width] = -np.sort(-arr, axis=1)[:, :width]
    return tuples, sums, top3


def divisor_bound_scan(spec, k, ell, nu_bar, histogram_bins=24,
                       block=512):
    """Scan all non-resonant cluster tuples for the smallest weighted divisor.

    Enumerates tuples ``(n_1, ..., n_{k+1})`` over ``1..n_max`` whose plus
    and minus sides differ as multisets, and minimizes
    ``|Omega| * mu^nu_bar``.  Divisors below ``NEAR_ZERO_REL * max(omega)``
    are reported in ``flagged`` (the mass sits at or near an exceptional
    value); they are excluded from the minimum.

    Parameters
    ----------
    spec : Spectrum
    k : int
        Tuple length is ``k + 1 >= 2``.
    ell : int
        Number of plus signs, ``0 <= ell <= k + 1``.
    nu_bar : float
        Weight exponent on ``mu``.

    Returns
    -------
    ScanReport
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    total_slots = k + 1
    if not 0 <= ell <= total_slots:
        raise ValueError("ell out of range")
    t1, s1, top1 = _side_tables(spec, ell)
    t2, s2, top2 = _side_tables(spec, total_slots - ell)
    check_equal = (2 * ell == total_slots)
    sig2 = {t: j for j, t in enumerate(t2)} if check_equal else {}
    near_zero = NEAR_ZERO_REL * spec.max_omega
    # cap the (rows x len(t2) x 6) scratch array at ~200 MB
    block = max(1, min(block, int(4e6 // max(len(t2), 1)) + 1))

    best = math.inf
    best_idx = None
    flagged = []
    n_tuples = 0
    all_vals = []

    for lo in range(0, len(t1), block):
        hi = min(lo + block, len(t1))
        div = np.abs(s1[lo:hi, None] - s2[None, :])
        if total_slots == 2:
            mu = np.ones_like(div)
        else:
            both = np.concatenate(
                [np.broadcast_to(top1[lo:hi, None, :], div.shape + (3,)),
                 np.broadcast_to(top2[None, :, :], div.shape + (3,))],
                axis=2)
            mu = np.sort(both, axis=2)[:, :, -3]
        valid = np.ones(div.shape, dtype=bool)
        if check_equal:
            for i in range(lo, hi):
                j = sig2.get(t1[i])
                if j is not None:
                    valid[i - lo, j] = False
        n_tuples += int(valid.sum())
        near = valid & (div < near_zero)
        if near.any():
            for i, j in zip(*np.nonzero(near)):
                flagged.append({"plus": t1[lo + i], "minus": t2[j],
                                "divisor": float(div[i, j]),
                                "mu": float(mu[i, j])})
            valid &= ~near
        weighted = div * mu ** nu_bar
        vals = weighted[valid]
        if vals.size:
            all_vals.append(vals)
            masked = np.where(valid, weighted, np.inf)
            i, j = divmod(int(np.argmin(masked)), masked.shape[1])
            if masked[i, j] < best:
                best = float(masked[i, j])
                best_idx = (lo + i, j, float(div[i, j]), float(mu[i, j]))

    hist = {}
    if all_vals:
        vals = np.concatenate(all_vals)
        logs = np.log10(vals)
        counts, edges = np.histogram(logs, bins=histogram_bins)
        hist = {"log10_bin_edges": edges.tolist(),
                "counts": counts.tolist()}
    if best_idx is None:
        return ScanReport(k=k, ell=ell, nu_bar=nu_bar, n_max=spec.n_max,
                          n_tuples=n_tuples, min_weighted=math.inf,
                          argmin=None, argmin_divisor=math.inf,
                          argmin_mu=0.0, histogram=hist, flagged=flagged)
    i, j, div_ij, mu_ij = best_idx
    return ScanReport(k=k, ell=ell, nu_bar=nu_bar, n_max=spec.n_max,
                      n_tuples=n_tuples, min_weighted=best,
                      argmin=(t1[i], t2[j]), argmin_divisor=div_ij,
                      argmin_mu=mu_ij, histogram=hist, flagged=flagged)


def divisor_scan_rows(spec, k, ell, nu_bar, max_rows=10000, block=512):
    """Smallest ``max_rows`` weighted-divisor rows for CSV emission.

    Returns ``(plus, minus, divisor, mu, weighted)`` tuples sorted by the
    weighted value, restricted to non-resonant tuples.
    """
    import heapq

    total_slots = k + 1
    t1, s1, top1 = _side_tables(spec, ell)
    t2, s2, top2 = _side_tables(spec, total_slots - ell)
    check_equal = (2 * ell == total_slots)
    sig2 = {t: j for j, t in enumerate(t2)} if check_equal else {}
    block = max(1, min(block, int(4e6 // max(len(t2), 1)) + 1))
    heap = []   # max-heap via negated weight, capped at max_rows
    for lo in range(0, len(t1), block):
        hi = min(lo + block, len(t1))
        div = np.abs(s1[lo:hi, None] - s2[None, :])
        if total_slots == 2:
            mu = np.ones_like(div)
        else:
            both = np.concatenate(
                [np.broadcast_to(top1[lo:hi, None, :], div.shape + (3,)),
                 np.broadcast_to(top2[None, :, :], div.shape + (3,))],
                axis=2)
            mu = np.sort(both, axis=2)[:, :, -3]
        weighted = div * mu ** nu_bar
        if check_equal:
            for i in range(lo, hi):
                j = sig2.get(t1[i])
                if j is not None:
                    weighted[i - lo, j] = np.inf
        flat = weighted.ravel()
        take = min(max_rows, flat.size)
        for c in np.argpartition(flat, take - 1)[:take]:
            w = float(flat[c])
            if not math.isfinite(w):
                continue
            i, j = divmod(int(c), len(t2))
            entry = (-w, t1[lo + i], t2[j], float(div[i, j]),
                     float(mu[i, j]))
            if len(heap) < max_rows:
                heapq.heappush(heap, entry)
            elif entry > heap[0]:
                heapq.heapreplace(heap, entry)
    # descending in -w puts the smallest weighted values first
    return [(plus, minus, d, m, -negw)
            for negw, plus, minus, d, m in sorted(heap, reverse=True)]


def mass_scan(d, k, m_grid, n_max, nu_bar=None):
    """Empirical divisor-bound constant per mass.

    For each mass the minimum of ``|Omega| * mu^nu_bar`` is taken over all
    sign splits ``ell = 0..k+1`` and all non-resonant tuples.  Flagged
    (numerically resonant) tuples are collected per mass.

    Parameters
    ----------
    d, k, n_max : int
    m_grid : sequence of float, nonempty, entries > 0
    nu_bar : float, optional
        Defaults to ``k + 2``.

    Returns
    -------
    list of dict
        One row per mass: ``{m, c, argmin, ell, divisor, mu, flagged}``.
    """
    m_grid = list(m_grid)
    if not m_grid:
        raise ValueError("mass grid must be nonempty")
    if any(not m > 0 for m in m_grid):
        raise ValueError("mass grid entries must be > 0")
    if nu_bar is None:
        nu_bar = k + 2
    rows = []
    for m in m_grid:
        spec = build_sphere_spectrum(SphereParams(d=d, m=m), n_max)
        best = None
        flagged = []
        # |Omega| is symmetric under ell -> k+1-ell with the tuple reversed,
        # so scanning ell <= (k+1)/2 covers every pattern.
        for ell in range(0, (k + 1) // 2 + 1):
            rep = divisor_bound_scan(spec, k, ell, nu_bar)
            flagged.extend({**f, "ell": ell} for f in rep.flagged)
            if rep.argmin is None:
                continue
            if best is None or rep.min_weighted < best["c"]:
                best = {"m": m, "c": rep.min_weighted, "argmin": rep.argmin,
                        "ell": ell, "divisor": rep.argmin_divisor,
                        "mu": rep.argmin_mu}
        best = best or {"m": m, "c": math.inf, "argmin": None, "ell": None,
                        "divisor": math.inf, "mu": 0.0}
        best["flagged"] = flagged
        rows.append(best)
    return rows

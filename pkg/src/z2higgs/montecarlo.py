"""Single-edge heat-bath / Metropolis sampling of the unitary-gauge measure.

Uniform variates come from numpy's Philox (counter based) generator, one
stream per chain, drawn one sweep at a time; the update kernel is numba
compiled. Chains are reproducible bit for bit from their seed.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .lattice import dist

HEATBATH = "heatbath"
METROPOLIS = "metropolis"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    sweeps: int = 10000
    burn_in: int = None
    measure_every: int = 1
    bins: int = 50
    seed: int = 0
    update: str = HEATBATH
    chains: int = 1
    start: str = "cold"
    gauge_moves: bool = True

    def __post_init__(self):
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.sweeps // 10)
        if self.update not in (HEATBATH, METROPOLIS):
            raise ConfigError(f"unknown update {self.update!r}")
        if self.start not in ("cold", "hot"):
            raise ConfigError(f"unknown start {self.start!r}")
        if self.sweeps <= self.burn_in:
            raise ConfigError("sweeps must exceed burn_in")
        if self.measure_every < 1 or self.chains < 1:
            raise ConfigError("measure_every and chains must be >= 1")
        if self.bins < 10:
            raise ConfigError("need at least 10 jackknife bins")
        if self.n_measurements < self.bins_per_chain:
            raise ConfigError("fewer measurements than bins")

    @property
    def n_measurements(self):
        """Measurements per chain."""
        return (self.sweeps - self.burn_in) // self.measure_every

    @property
    def bins_per_chain(self):
        return max(1, -(-self.bins // self.chains))


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    stderr: float
    n_samples: int
    n_bins: int
    autocorr_hint: float = float("nan")


@dataclass(frozen=True)
class MFRatioResult:
    rho: EstimatorResult
    log_rho: EstimatorResult
    flag: str = ""
    denominator: EstimatorResult = None


@numba.njit(cache=True)
def _sweep_kernel(sigma, edge_plaq, plaq_edges, n_plaq, prob1, u, metropolis, boltz):
    E = sigma.shape[0]
    for e in range(E):
        n = n_plaq[e]
        odd = 0
        for a in range(n):
            pl = edge_plaq[e, a]
            s = 0
            for b in range(4):
                s += sigma[plaq_edges[pl, b]]
            s -= sigma[e]
            odd += s & 1
        if metropolis:
            # energy change of flipping sigma(e), in units read from boltz
            cur = sigma[e]
            if cur == 0:
                acc = boltz[n, odd]
            else:
                acc = 1.0 / boltz[n, odd]
            if u[e] < acc:
                sigma[e] = 1 - cur
        else:
            sigma[e] = 1 if u[e] < prob1[n, odd] else 0


@numba.njit(cache=True)
def _vertex_kernel(sigma, vert_edges, n_vedge, vprob, u):
    """Heat bath on the gauge orbit: flip every edge at vertex x at once.

    Plaquette terms are unchanged (d of a coboundary vanishes), so only the
    number of excited incident edges enters.
    """
    V = vert_edges.shape[0]
    for x in range(V):
        n = n_vedge[x]
        occ = 0
        for a in range(n):
            occ += sigma[vert_edges[x, a]]
        # flipped configuration has n - occ excited incident edges
        if u[x] < vprob[n, occ]:
            for a in range(n):
                e = vert_edges[x, a]
                sigma[e] = 1 - sigma[e]


@numba.njit(cache=True)
def _measure(sigma, obs_edges, obs_ptr, out, row):
    for k in range(obs_ptr.shape[0] - 1):
        par = 0
        for i in range(obs_ptr[k], obs_ptr[k + 1]):
            par ^= sigma[obs_edges[i]]
        out[row, k] = 1 - 2 * par


def _tables(geom, p):
    pe = geom.edge_plaquettes
    n_plaq = (pe >= 0).sum(1).astype(np.int64)
    nmax = pe.shape[1]
    prob1 = np.zeros((nmax + 1, nmax + 1))
    boltz = np.zeros((nmax + 1, nmax + 1))
    for n in range(nmax + 1):
        for odd in range(n + 1):
            # sigma(e)=0 breaks the odd plaquettes, sigma(e)=1 the even ones
            d = -4 * p.beta * ((n - odd) - odd) - 4 * p.kappa  # log w1 - log w0
            prob1[n, odd] = 1.0 / (1.0 + math.exp(-d)) if d > -700 else 0.0
            boltz[n, odd] = math.exp(min(d, 700.0))
    return np.ascontiguousarray(pe), n_plaq, prob1, boltz


def _vertex_tables(geom, p):
    ve = geom.cofaces(0)
    n_ve = (ve >= 0).sum(1).astype(np.int64)
    nmax = ve.shape[1]
    vprob = np.zeros((nmax + 1, nmax + 1))
    for n in range(nmax + 1):
        for occ in range(n + 1):
            d = -4 * p.kappa * ((n - occ) - occ)  # log w(flip) - log w(stay)
            vprob[n, occ] = 1.0 / (1.0 + math.exp(-d)) if d > -700 else 0.0
    return np.ascontiguousarray(ve), n_ve, vprob


def _pack_observables(observables, geom):
    idx = [g.to_vector(geom, mod2=True).nonzero()[0] if g.coeffs else np.zeros(0, np.int64)
           for g in observables]
    ptr = np.zeros(len(idx) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(i) for i in idx])
    flat = np.concatenate(idx).astype(np.int64) if idx else np.zeros(0, np.int64)
    return flat, ptr


class ChainState:
    """Gauge field, sweep counter and random stream of one Markov chain."""

    def __init__(self, geom, params, seed=0, update=HEATBATH, start="cold", gauge_moves=True):
        self.geom = geom
        self.params = params
        self.update = update
        self.gauge_moves = gauge_moves
        self.rng = np.random.Generator(np.random.Philox(seed))
        E = geom.n_cells(1)
        if start == "hot":
            self.sigma = self.rng.integers(0, 2, E).astype(np.int64)
        else:
            self.sigma = np.zeros(E, dtype=np.int64)
        self.sweeps = 0
        self._tabs = _tables(geom, params)
        self._vtabs = _vertex_tables(geom, params) if gauge_moves else None

    def sweep(self, n=1):
        pe, n_plaq, prob1, boltz = self._tabs
        pl = self.geom.plaquette_edges
        met = self.update == METROPOLIS
        for _ in range(n):
            u = self.rng.random(len(self.sigma))
            _sweep_kernel(self.sigma, pe, pl, n_plaq, prob1, u, met, boltz)
            if self._vtabs is not None:
                ve, n_ve, vprob = self._vtabs
                _vertex_kernel(self.sigma, ve, n_ve, vprob, self.rng.random(len(ve)))
            self.sweeps += 1
        return self

    def run(self, n_meas, observables, measure_every=1):
        """Record W_g for each observable after every measure_every sweeps."""
        flat, ptr = _pack_observables(observables, self.geom)
        out = np.zeros((n_meas, len(observables)), dtype=np.int8)
        for r in range(n_meas):
            self.sweep(measure_every)
            _measure(self.sigma, flat, ptr, out, r)
        return out


def sweep(state, p=None, geom=None):
    return state.sweep()


# ---- estimators -------------------------------------------------------------

def bin_means(series, n_bins):
    """Split a (n, k) series into n_bins consecutive blocks and average each."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    size = len(series) // n_bins
    if size < 1:
        raise ConfigError("fewer samples than bins")
    return series[: size * n_bins].reshape(n_bins, size, -1).mean(1)


def jackknife(bins, func=None):
    """Jackknife mean and error of func(column means) over bin means.

    func maps a (..., k) array of means to (...) values; default is the
    first column.
    """
    bins = np.asarray(bins, dtype=np.float64)
    if bins.ndim == 1:
        bins = bins[:, None]
    if func is None:
        def func(x):
            return x[..., 0]
    n = len(bins)
    total = bins.sum(0)
    loo = (total[None, :] - bins) / (n - 1)
    full = func(total / n)
    vals = func(loo)
    mean_loo = vals.mean()
    var = (n - 1) / n * ((vals - mean_loo) ** 2).sum()
    # bias-corrected estimate
    est = n * full - (n - 1) * mean_loo
    if not np.isfinite(var):
        var = np.nan
    return float(est), float(np.sqrt(var)) if np.isfinite(var) else float("nan")


def _autocorr_hint(series, bins):
    """Ratio of binned to naive variance, halved: a rough tau_int."""
    naive = series.var(0)
    if len(series) < 2:
        return float("nan")
    nb = len(bins)
    size = len(series) // nb
    binned = bins.var(0) * size
    with np.errstate(invalid="ignore", divide="ignore"):
        return float(np.nanmax(0.5 * binned / naive)) if np.any(naive > 0) else 0.0


def _run_one(args):
    geom, p, observables, cfg, seed = args
    st = ChainState(geom, p, seed=seed, update=cfg.update, start=cfg.start,
                    gauge_moves=cfg.gauge_moves)
    st.sweep(cfg.burn_in)
    return st.run(cfg.n_measurements, observables, cfg.measure_every)


def chain_seeds(seed, n):
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n)]


def sample(geom, p, observables, cfg, threads=1):
    """Per-chain measurement arrays, in seed order."""
    seeds = chain_seeds(cfg.seed, cfg.chains) if cfg.chains > 1 else [cfg.seed]
    jobs = [(geom, p, observables, cfg, s) for s in seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def pooled_bins(series_list, cfg):
    return np.concatenate([bin_means(s, cfg.bins_per_chain) for s in series_list])


def estimate(geom, p, observables, cfg, threads=1, series=None):
    """Jackknife means of W_g for each observable, on one shared trajectory."""
    series = series if series is not None else sample(geom, p, observables, cfg, threads)
    bins = pooled_bins(series, cfg)
    if len(bins) < 10:
        raise ConfigError("fewer than 10 bins after thinning")
    allser = np.concatenate(series).astype(np.float64)
    out = []
    for k in range(len(observables)):
        m, s = jackknife(bins[:, [k]])
        out.append(EstimatorResult(m, s, len(allser), len(bins),
                                   _autocorr_hint(allser[:, [k]], bins[:, [k]])))
    return out


def estimate_series(series, n_bins):
    """Estimate from an injected stream (for testing)."""
    series = np.asarray(series, dtype=np.float64)
    bins = bin_means(series, n_bins)
    m, s = jackknife(bins)
    return EstimatorResult(m, s, len(series), n_bins, _autocorr_hint(series.reshape(len(series), -1), bins))


def mf_ratio_from_bins(bins):
    """rho and log rho from bin means of (W1, W2, W12)."""
    def ratio(x):
        return x[..., 0] * x[..., 1] / x[..., 2]

    def logratio(x):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.log(x[..., 0]) + np.log(x[..., 1]) - np.log(x[..., 2])

    den_m, den_s = jackknife(bins[:, [2]])
    n = len(bins)
    den = EstimatorResult(den_m, den_s, 0, n)
    flag = ""
    if not abs(den_m) >= 2 * den_s or den_m == 0:
        flag = "Unresolved"
    with np.errstate(invalid="ignore", divide="ignore"):
        r_m, r_s = jackknife(bins, ratio)
        lr_m, lr_s = jackknife(bins, logratio)
    if flag or not np.isfinite(lr_m):
        if not flag and not np.isfinite(lr_m):
            flag = "Unresolved"
        lr_m, lr_s = float("nan"), float("nan")
    if flag:
        r_m = r_m if np.isfinite(r_m) else float("nan")
    return MFRatioResult(EstimatorResult(r_m, r_s, 0, n), EstimatorResult(lr_m, lr_s, 0, n), flag, den)


def estimate_mf_ratio(geom, p, g1, g2, cfg, threads=1):
    series = sample(geom, p, [g1, g2, g1 + g2], cfg, threads)
    bins = pooled_bins(series, cfg)
    res = mf_ratio_from_bins(bins)
    n = sum(len(s) for s in series)
    return replace(res, rho=replace(res.rho, n_samples=n), log_rho=replace(res.log_rho, n_samples=n),
                   denominator=replace(res.denominator, n_samples=n))


def estimate_mf_ratios(geom, p, pairs, cfg, threads=1):
    """MF ratios for several (g1, g2) pairs measured on the same chains.

    Returns the per-pair results and the pooled bins, whose columns are
    (W1, W2, W12) for each pair in turn.
    """
    obs = []
    for g1, g2 in pairs:
        obs += [g1, g2, g1 + g2]
    series = sample(geom, p, obs, cfg, threads)
    bins = pooled_bins(series, cfg)
    n = sum(len(s) for s in series)
    out = []
    for i in range(len(pairs)):
        res = mf_ratio_from_bins(bins[:, 3 * i:3 * i + 3])
        out.append(replace(res, rho=replace(res.rho, n_samples=n), log_rho=replace(res.log_rho, n_samples=n),
                           denominator=replace(res.denominator, n_samples=n)))
    return out, bins


def ratio_difference(bins, i, j):
    """Jackknife mean and error of rho_i - rho_j from shared bins."""
    def diff(x):
        a = x[..., 3 * i] * x[..., 3 * i + 1] / x[..., 3 * i + 2]
        b = x[..., 3 * j] * x[..., 3 * j + 1] / x[..., 3 * j + 2]
        return a - b
    with np.errstate(invalid="ignore", divide="ignore"):
        return jackknife(bins, diff)


# ---- correlation decay ------------------------------------------------------

@dataclass
class DecayTable:
    rows: list = field(default_factory=list)  # (separation, distance, cov, stderr, resolved)
    rate: float = None
    intercept: float = None

    @property
    def resolved(self):
        return [r for r in self.rows if r[4]]


def correlation_decay(geom, p, template, separations, cfg, axis=2, threads=1, sigma_cut=3.0):
    """cov(W_g1, W_g2) for copies of template shifted along axis."""
    copies = []
    for s in separations:
        off = [0] * geom.m
        off[axis] = s
        copies.append(template.shifted(off))
    observables = [template] + copies
    # W_{g1 + g2} = W_g1 * W_g2 pointwise, so products are taken from the series
    series = sample(geom, p, observables, cfg, threads)
    prods = []
    for s in series:
        s = s.astype(np.int64)
        prods.append(np.column_stack([s[:, 0]] + [np.column_stack([s[:, j], s[:, 0] * s[:, j]])
                                                  for j in range(1, s.shape[1])]))
    bins = pooled_bins(prods, cfg)
    table = DecayTable()
    for j, (sep, g2) in enumerate(zip(separations, copies)):
        cols = bins[:, [0, 1 + 2 * j, 2 + 2 * j]]

        def cov(x):
            return x[..., 2] - x[..., 0] * x[..., 1]
        c, e = jackknife(cols, cov)
        d = dist(template, g2)
        ok = bool(abs(c) > sigma_cut * e and e > 0) or (e == 0 and c != 0)
        table.rows.append((sep, d, c, e, ok))
    pts = [(d, math.log(abs(c))) for _, d, c, _, ok in table.rows if ok and c != 0]
    if len({d for d, _ in pts}) >= 2:
        x, y = np.array(pts).T
        slope, icpt = np.polyfit(x, y, 1)
        table.rate, table.intercept = float(-slope), float(icpt)
    return table


# ---- scans ------------------------------------------------------------------

CSV_COLUMNS = ["beta", "kappa", "m", "N", "R", "T", "rho", "rho_stderr",
               "log_rho", "log_rho_stderr", "flag", "sweeps", "seed"]


def scan(geom, grid, sizes, cfg, threads=1):
    """One MF-ratio estimate per (params, (R, T)); rows follow CSV_COLUMNS.

    All sizes at one parameter point share the same chains.
    """
    from .lattice import build_line_pair
    rows = []
    for p in grid:
        pairs = [build_line_pair(R, T, geom) for R, T in sizes]
        try:
            results, _ = estimate_mf_ratios(geom, p, pairs, cfg, threads)
        except (ValueError, FloatingPointError) as exc:
            results = [exc] * len(sizes)
        for (R, T), res in zip(sizes, results):
            if isinstance(res, Exception):
                rows.append([p.beta, p.kappa, geom.m, geom.N, R, T, float("nan"), float("nan"),
                             float("nan"), float("nan"), f"Error:{type(res).__name__}", cfg.sweeps, cfg.seed])
                continue
            rows.append([p.beta, p.kappa, geom.m, geom.N, R, T, res.rho.mean, res.rho.stderr,
                         res.log_rho.mean, res.log_rho.stderr, res.flag, cfg.sweeps, cfg.seed])
    return rows

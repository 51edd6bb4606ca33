"""Mean-field epidemics and their reference diffusions.

Reed-Frost (SIR) and its SIS analogue on a complete graph of N individuals
with per-pair infection probability 1/N, plus Euler-Maruyama simulation of
the square-root (Feller) diffusion and Wiener first-passage times that
describe their critical threshold laws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import KeyedStreams


@dataclass
class MeanFieldRun:
    j_series: list[int]
    total_infected: int      # U = sum of J_n (everyone ever infected, SIR)
    duration: int            # number of generations carrying infection


def _duration(series: list[int]) -> int:
    return sum(1 for j in series if j > 0)


def reedfrost_run(N: int, J0: int, rng: np.random.Generator,
                  max_gens: int | None = None) -> MeanFieldRun:
    """Reed-Frost chain: J_{n+1} ~ Binomial(S_n, 1 - (1-1/N)^{J_n})."""
    if not 1 <= J0 <= N:
        raise ValueError("need 1 <= J0 <= N")
    q = np.log1p(-1.0 / N)
    J, S = J0, N - J0
    series = [J]
    while J > 0 and (max_gens is None or len(series) <= max_gens):
        J = int(rng.binomial(S, -np.expm1(J * q))) if S else 0
        S -= J
        series.append(J)
    return MeanFieldRun(series, sum(series), _duration(series))


def reedfrost_batch(N: int, J0: int, reps: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Total sizes U of `reps` independent Reed-Frost epidemics."""
    q = np.log1p(-1.0 / N)
    J = np.full(reps, J0, dtype=np.int64)
    S = np.full(reps, N - J0, dtype=np.int64)
    U = J.copy()
    while True:
        act = J > 0
        if not act.any():
            return U
        prob = -np.expm1(J[act] * q)
        Jn = rng.binomial(S[act], prob)
        S[act] -= Jn
        U[act] += Jn
        J[act] = Jn


def sis_meanfield_run(N: int, J0: int, rng: np.random.Generator,
                      max_gens: int = 10_000) -> MeanFieldRun:
    """SIS analogue: recovered return to the susceptible pool each generation,
    so J_{n+1} ~ Binomial(N - J_n, 1 - (1-1/N)^{J_n})."""
    if not 0 <= J0 <= N:
        raise ValueError("need 0 <= J0 <= N")
    q = np.log1p(-1.0 / N)
    J = J0
    series = [J]
    for _ in range(max_gens):
        if J == 0:
            break
        J = int(rng.binomial(N - J, -np.expm1(J * q)))
        series.append(J)
    return MeanFieldRun(series, sum(series), _duration(series))


def sis_meanfield_batch(N: int, J0: int, reps: int, steps: int,
                        rng: np.random.Generator,
                        checkpoints: tuple[int, ...] = ()) -> dict[int, np.ndarray]:
    """J_n over `reps` chains at the requested checkpoint generations."""
    q = np.log1p(-1.0 / N)
    J = np.full(reps, J0, dtype=np.int64)
    out = {0: J.copy()} if 0 in checkpoints else {}
    for n in range(1, steps + 1):
        act = J > 0
        if act.any():
            Jn = rng.binomial(N - J[act], -np.expm1(J[act] * q))
            J[act] = Jn
        if n in checkpoints:
            out[n] = J.copy()
    return out


def sis_drift(N: int, j: int) -> float:
    """Exact one-step conditional drift E[J_{n+1} - J_n | J_n = j]."""
    return (N - j) * -np.expm1(j * np.log1p(-1.0 / N)) - j


@dataclass
class DiffusionPath:
    dt: float
    values: np.ndarray
    absorbed: bool


def feller_em(b: float, drift: str, dt: float, horizon: float,
              rng: np.random.Generator) -> DiffusionPath:
    """Euler-Maruyama for dY = drift(Y) dt + sqrt(Y) dW with full truncation at 0.

    drift: "none" or "minus_square" (-Y^2 dt).  Absorption at 0 is permanent.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if drift not in ("none", "minus_square"):
        raise ValueError("drift must be 'none' or 'minus_square'")
    n = int(round(horizon / dt))
    vals = np.empty(n + 1)
    vals[0] = y = max(0.0, b)
    for i in range(1, n + 1):
        if y == 0.0:
            vals[i:] = 0.0
            return DiffusionPath(dt, vals, True)
        mu = -y * y if drift == "minus_square" else 0.0
        y = max(0.0, y + mu * dt + np.sqrt(y * dt) * rng.standard_normal())
        vals[i] = y
    return DiffusionPath(dt, vals, y == 0.0)


def feller_em_batch(b: float, drift: str, dt: float, horizon: float, reps: int,
                    rng: np.random.Generator,
                    checkpoints: tuple[float, ...] = ()) -> dict:
    """Vectorized Euler-Maruyama; returns values at checkpoints and extinction flags."""
    if drift not in ("none", "minus_square"):
        raise ValueError("drift must be 'none' or 'minus_square'")
    n = int(round(horizon / dt))
    idx_cp = {int(round(t / dt)): t for t in checkpoints}
    Y = np.full(reps, max(0.0, b))
    out = {"at": {}, "extinct": None}
    if 0 in idx_cp:
        out["at"][idx_cp[0]] = Y.copy()
    for i in range(1, n + 1):
        act = Y > 0
        if act.any():
            ya = Y[act]
            mu = -ya * ya if drift == "minus_square" else 0.0
            ya = ya + mu * dt + np.sqrt(ya * dt) * rng.standard_normal(ya.size)
            Y[act] = np.maximum(ya, 0.0)
        if i in idx_cp:
            out["at"][idx_cp[i]] = Y.copy()
    out["extinct"] = Y == 0.0
    return out


@dataclass
class PassageSample:
    tau: float
    censored: bool


def wiener_passage(b: float, drift: str, dt: float, rng: np.random.Generator,
                   horizon: float = 100.0) -> PassageSample:
    """First time B_t (+ integral of t dt when drift='linear_t') reaches level b."""
    if drift not in ("none", "linear_t"):
        raise ValueError("drift must be 'none' or 'linear_t'")
    if b < 0:
        raise ValueError("level must be nonnegative")
    if b == 0.0:
        return PassageSample(0.0, False)
    n = int(round(horizon / dt))
    x, t = 0.0, 0.0
    sq = np.sqrt(dt)
    for i in range(1, n + 1):
        mu = t if drift == "linear_t" else 0.0
        x += mu * dt + sq * rng.standard_normal()
        t = i * dt
        if x >= b:
            return PassageSample(t, False)
    return PassageSample(horizon, True)


def wiener_passage_batch(b: float, drift: str, dt: float, reps: int,
                         rng: np.random.Generator, horizon: float,
                         block: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """(tau, censored) over `reps` paths; increments drawn in step blocks."""
    if drift not in ("none", "linear_t"):
        raise ValueError("drift must be 'none' or 'linear_t'")
    n = int(round(horizon / dt))
    tau = np.full(reps, horizon)
    hit = np.zeros(reps, dtype=bool)
    x = np.zeros(reps)
    sq = np.sqrt(dt)
    step = 0
    while step < n:
        m = min(block, n - step)
        act = ~hit
        if not act.any():
            break
        xi = rng.standard_normal((int(act.sum()), m)) * sq
        if drift == "linear_t":
            tgrid = (step + np.arange(m)) * dt
            xi = xi + tgrid * dt
        path = x[act, None] + np.cumsum(xi, axis=1)
        crossed = path >= b
        first = crossed.argmax(axis=1)
        any_cross = crossed.any(axis=1)
        ids = np.where(act)[0]
        tau[ids[any_cross]] = (step + first[any_cross] + 1) * dt
        hit[ids[any_cross]] = True
        x[ids[~any_cross]] = path[~any_cross, -1]
        step += m
    return tau, ~hit


def wiener_passage_pair_batch(b: float, dt: float, reps: int,
                              rng: np.random.Generator, horizon: float,
                              block: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """(tau_driftless, tau_drift_t) from shared noise: the added positive drift
    makes the second coordinate hit no later, pathwise."""
    n = int(round(horizon / dt))
    tau0 = np.full(reps, horizon)
    tau1 = np.full(reps, horizon)
    hit0 = np.zeros(reps, dtype=bool)
    hit1 = np.zeros(reps, dtype=bool)
    x0 = np.zeros(reps)
    x1 = np.zeros(reps)
    sq = np.sqrt(dt)
    step = 0
    while step < n:
        m = min(block, n - step)
        act = ~(hit0 & hit1)
        if not act.any():
            break
        ids = np.where(act)[0]
        xi = rng.standard_normal((ids.size, m)) * sq
        tgrid = (step + np.arange(m)) * dt
        p0 = x0[ids, None] + np.cumsum(xi, axis=1)
        p1 = x1[ids, None] + np.cumsum(xi + tgrid * dt, axis=1)
        for (p, tau, hitv) in ((p0, tau0, hit0), (p1, tau1, hit1)):
            crossed = p >= b
            anyc = crossed.any(axis=1) & ~hitv[ids]
            first = crossed.argmax(axis=1)
            tau[ids[anyc]] = (step + first[anyc] + 1) * dt
            hitv[ids[anyc]] = True
        x0[ids] = p0[:, -1]
        x1[ids] = p1[:, -1]
        step += m
    return tau0, tau1


def driftless_passage_cdf(b: float, t: np.ndarray | float) -> np.ndarray | float:
    """Exact CDF of the driftless passage time: 2 (1 - Phi(b / sqrt(t)))."""
    from scipy.stats import norm
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = 2.0 * (1.0 - norm.cdf(b / np.sqrt(t[pos])))
    return out


def reedfrost_run_pairwise(N: int, initial: set[int], streams: KeyedStreams,
                           max_gens: int = 10_000) -> list[set[int]]:
    """Labeled Reed-Frost with keyed per-pair coins (p = 1/N) on vertex set
    {(0, i)}: the generation sets match BFS layers of the complete-graph
    percolation built from the same streams."""
    p = 1.0 / N
    gens = [set(initial)]
    ever = set(initial)
    cur = set(initial)
    for _ in range(max_gens):
        if not cur:
            break
        nxt: set[int] = set()
        for i in cur:
            for j in range(N):
                if j == i or j in ever or j in nxt:
                    continue
                if streams.pair_coin(p, (0, i), (0, j)):
                    nxt.add(j)
        gens.append(nxt)
        ever |= nxt
        cur = nxt
    return gens

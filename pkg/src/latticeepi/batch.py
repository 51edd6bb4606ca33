"""Vectorized replicate batches for the lattice processes.

The single-trajectory operations in `envelope`, `epidemic`, `coupling` and
`likelihood` define the semantics; this module re-implements the same
transitions as numpy array sweeps over many replicates at once so that the
acceptance checks (1e4..1e6 replicates) run in seconds.  Aggregation per site
is exact: sums of the per-offset offspring laws stay in-family, and the
escape-product Binomial is the law of per-pair coins given the neighbor count.

Replicates are processed in fixed-size chunks, each driven by a generator
keyed on (seed, purpose, chunk index): results are independent of thread
count and execution order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fields import ParticleField
from .offspring import Kind, OffspringLaw
from .rng import keyed_generator

DEFAULT_CHUNK = 16384
_GROW = 24  # columns added when support reaches the window edge


@dataclass
class BatchResult:
    """Per-replicate outcome arrays (concatenated over chunks, replicate order)."""

    duration: np.ndarray
    total_progeny: np.ndarray
    min_site: np.ndarray
    max_site: np.ndarray
    max_site_count: np.ndarray
    truncated: np.ndarray
    z_at: dict[int, np.ndarray] = field(default_factory=dict)
    loglik: np.ndarray | None = None
    lik_flagged: np.ndarray | None = None
    clamp_events: np.ndarray | None = None
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    attrition_total: np.ndarray | None = None
    exited: np.ndarray | None = None

    @property
    def extent(self) -> np.ndarray:
        ext = np.maximum(np.abs(self.min_site), np.abs(self.max_site))
        return np.where(self.total_progeny > 0, ext, 0)


def _init_window(init: ParticleField, nb: int, pad: int) -> tuple[np.ndarray, int]:
    lo, hi = init.support
    off = lo - pad
    W = hi - lo + 1 + 2 * pad
    Y = np.zeros((nb, W), dtype=np.int64)
    for x, c in init.counts.items():
        Y[:, x - off] = c
    return Y, off


def _neighbor_sum(Y: np.ndarray) -> np.ndarray:
    P = np.zeros((Y.shape[0], Y.shape[1] + 2), dtype=Y.dtype)
    P[:, 1:-1] = Y
    return P[:, :-2] + P[:, 1:-1] + P[:, 2:]


def run_envelope_batch(
    init: ParticleField,
    law: OffspringLaw,
    reps: int,
    seed: int,
    *,
    purpose: str = "envelope",
    cap: int,
    z_checkpoints: tuple[int, ...] = (),
    likelihood: str | None = None,     # None | "sis" | "sir"
    village_N: int | None = None,      # N for the likelihood / modified kappas
    q_process: str | None = None,      # None | "sis" | "sir": run the modified red process
    exit_bounds: tuple[int, int] | None = None,  # absorb when a site <= lo or >= hi is hit
    chunk_size: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> BatchResult:
    """Envelope (or modified-epidemic) replicates with per-replicate statistics.

    With ``q_process`` set, each generation's red-parent offspring draw is
    followed by the at-most-one-blue thinning with probability kappa, and the
    realized counts are the modified epidemic; ``likelihood`` accumulates the
    log likelihood ratio of the modified law against the Poisson envelope along
    whichever path is being generated.
    """
    if init.is_empty():
        raise ValueError("empty initial condition")
    if (likelihood or q_process) and not village_N:
        raise ValueError("village_N required for likelihood / modified process")
    if (likelihood or q_process) and law.kind is not Kind.POISSON_LIMIT:
        raise ValueError("likelihood and modified process are defined over the Poisson envelope")

    n_chunks = (reps + chunk_size - 1) // chunk_size
    sizes = [min(chunk_size, reps - i * chunk_size) for i in range(n_chunks)]

    def one_chunk(ci: int) -> BatchResult:
        rng = keyed_generator(seed, "chunk", purpose, ci)
        return _envelope_chunk(init, law, sizes[ci], rng, cap, z_checkpoints,
                               likelihood, village_N, q_process, exit_bounds)

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(one_chunk, range(n_chunks)))
    else:
        parts = [one_chunk(ci) for ci in range(n_chunks)]
    return _concat_results(parts)


def _envelope_chunk(init, law, nb, rng, cap, z_checkpoints, likelihood,
                    village_N, q_process, exit_bounds) -> BatchResult:
    if exit_bounds is not None:
        lo_b, hi_b = exit_bounds
        off = lo_b
        W = hi_b - lo_b + 1
        Y = np.zeros((nb, W), dtype=np.int64)
        for x, c in init.counts.items():
            if not (lo_b < x < hi_b):
                raise ValueError(f"initial site {x} outside the open interval")
            Y[:, x - off] = c
    else:
        Y, off = _init_window(init, nb, pad=2)

    track_lik = likelihood is not None
    need_R = likelihood == "sir" or q_process == "sir"
    N = village_N

    duration = np.zeros(nb, dtype=np.int64)
    total = np.full(nb, init.total, dtype=np.int64)
    mn = np.full(nb, init.support[0], dtype=np.int64)
    mx = np.full(nb, init.support[1], dtype=np.int64)
    mxc = np.full(nb, max(init.counts.values()), dtype=np.int64)
    truncated = np.zeros(nb, dtype=bool)
    exited = np.zeros(nb, dtype=bool) if exit_bounds is not None else None
    z_at = {n: np.zeros(nb, dtype=np.int64) for n in z_checkpoints}
    if 0 in z_at:
        z_at[0][:] = init.total
    logL = np.zeros(nb) if track_lik else None
    clamps = np.zeros(nb, dtype=np.int64) if track_lik or q_process else None
    attr = np.zeros(nb, dtype=np.int64) if q_process else None
    diag_keys = (("a_sum", "b_sum", "c_sum") if likelihood == "sis"
                 else ("delta_rho_sum", "quad_sum") if likelihood == "sir" else ())
    diags = {k: np.zeros(nb) for k in diag_keys}

    Rcum = Y.copy() if need_R else None
    active = np.arange(nb)

    for t in range(1, cap + 1):
        if active.size == 0:
            break
        if exit_bounds is None:
            # grow the window before sampling if support touches the edge
            if Y[:, 0].any() or Y[:, 1].any():
                Y = np.pad(Y, ((0, 0), (_GROW, 0)))
                off -= _GROW
                if Rcum is not None:
                    Rcum = np.pad(Rcum, ((0, 0), (_GROW, 0)))
            if Y[:, -1].any() or Y[:, -2].any():
                Y = np.pad(Y, ((0, 0), (0, _GROW)))
                if Rcum is not None:
                    Rcum = np.pad(Rcum, ((0, 0), (0, _GROW)))

        M = _neighbor_sum(Y)
        if law.kind is Kind.POISSON_LIMIT:
            lam = M / 3.0
            Ynew = rng.poisson(lam)
        else:
            lam = M / 3.0
            Ynew = rng.binomial(M * law.N, 1.0 / (3 * law.N))

        if q_process is not None:
            if q_process == "sis":
                kraw = Ynew * (Ynew - 1) / (2.0 * N)
            else:
                kraw = Ynew * Rcum / float(N)
            kap = np.minimum(kraw, 1.0)
            clamps[active] += (kraw > 1.0).sum(axis=1)
            flips = (rng.random(Ynew.shape) < kap) & (Ynew > 0)
            attr[active] += flips.sum(axis=1)
            Ynew = Ynew - flips

        if track_lik:
            y = Ynew
            if likelihood == "sis":
                ky_raw = y * (y - 1) / (2.0 * N)
                ky1_raw = (y + 1) * y / (2.0 * N)
            else:
                ky_raw = y * Rcum / float(N)
                ky1_raw = (y + 1) * Rcum / float(N)
            if q_process is None:  # not already counted by the flip stage
                clamps[active] += ((ky_raw > 1.0) | (ky1_raw > 1.0)).sum(axis=1)
            ky = np.minimum(ky_raw, 1.0)
            ky1 = np.minimum(ky1_raw, 1.0)
            factor = (1.0 - ky) + lam / (y + 1.0) * ky1
            logL[active] += np.log(np.where(lam > 0, factor, 1.0)).sum(axis=1)
            ylam = y - lam
            if likelihood == "sis":
                diags["a_sum"][active] += np.where(lam > 0, lam * ylam, 0.0).sum(axis=1) / (2.0 * N)
                diags["b_sum"][active] += np.where(lam > 0, lam**2 * ylam**2, 0.0).sum(axis=1) / (8.0 * N**2)
                diags["c_sum"][active] += np.where(lam > 0, ylam**2 - y, 0.0).sum(axis=1) / N
            else:
                diags["delta_rho_sum"][active] += np.where(lam > 0, ylam * Rcum, 0.0).sum(axis=1) / N
                diags["quad_sum"][active] += np.where(lam > 0, (ylam * Rcum) ** 2, 0.0).sum(axis=1) / N**2

        if need_R:
            Rcum = Rcum + Ynew

        if exit_bounds is not None:
            hit = (Ynew[:, 0] > 0) | (Ynew[:, -1] > 0)
            exited[active[hit]] = True
            Ynew[hit] = 0

        z = Ynew.sum(axis=1)
        occ = Ynew > 0
        has = z > 0
        total[active] += z
        if t in z_at:
            z_at[t][active] = z
        if has.any():
            first = occ.argmax(axis=1)
            last = occ.shape[1] - 1 - occ[:, ::-1].argmax(axis=1)
            mn[active] = np.where(has, np.minimum(mn[active], off + first), mn[active])
            mx[active] = np.where(has, np.maximum(mx[active], off + last), mx[active])
            mxc[active] = np.maximum(mxc[active], Ynew.max(axis=1))
            duration[active[has]] = t

        if t == cap:
            truncated[active[has]] = True
        keep = has
        if not keep.all():
            active = active[keep]
            Y = Ynew[keep]
            if Rcum is not None:
                Rcum = Rcum[keep]
        else:
            Y = Ynew

    res = BatchResult(duration, total, mn, mx, mxc, truncated, z_at,
                      logL, None, clamps, diags, attr, exited)
    if track_lik:
        res.lik_flagged = np.zeros(nb, dtype=bool)
    return res


def _concat_results(parts: list[BatchResult]) -> BatchResult:
    def cat(getter):
        vals = [getter(p) for p in parts]
        return None if vals[0] is None else np.concatenate(vals)

    return BatchResult(
        duration=cat(lambda p: p.duration),
        total_progeny=cat(lambda p: p.total_progeny),
        min_site=cat(lambda p: p.min_site),
        max_site=cat(lambda p: p.max_site),
        max_site_count=cat(lambda p: p.max_site_count),
        truncated=cat(lambda p: p.truncated),
        z_at={n: np.concatenate([p.z_at[n] for p in parts]) for n in parts[0].z_at},
        loglik=cat(lambda p: p.loglik),
        lik_flagged=cat(lambda p: p.lik_flagged),
        clamp_events=cat(lambda p: p.clamp_events),
        diagnostics={k: np.concatenate([p.diagnostics[k] for p in parts])
                     for k in parts[0].diagnostics},
        attrition_total=cat(lambda p: p.attrition_total),
        exited=cat(lambda p: p.exited),
    )


# -- direct epidemics ---------------------------------------------------------

def run_epidemic_batch(
    init: ParticleField,
    N: int,
    variant: str,
    reps: int,
    seed: int,
    *,
    purpose: str = "epidemic",
    cap: int,
    chunk_size: int = DEFAULT_CHUNK,
    threads: int = 1,
) -> BatchResult:
    """SIS/SIR epidemic replicates via per-site escape-product Binomials."""
    if variant not in ("sis", "sir"):
        raise ValueError("variant must be 'sis' or 'sir'")
    if any(c > N for c in init.counts.values()):
        raise ValueError("initial infected exceed village capacity")
    n_chunks = (reps + chunk_size - 1) // chunk_size
    sizes = [min(chunk_size, reps - i * chunk_size) for i in range(n_chunks)]

    def one_chunk(ci: int) -> BatchResult:
        rng = keyed_generator(seed, "chunk", purpose, ci)
        return _epidemic_chunk(init, N, variant, sizes[ci], rng, cap)

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(one_chunk, range(n_chunks)))
    else:
        parts = [one_chunk(ci) for ci in range(n_chunks)]
    return _concat_results(parts)


def _epidemic_chunk(init, N, variant, nb, rng, cap) -> BatchResult:
    p = 1.0 / (3 * N)
    I, off = _init_window(init, nb, pad=2)
    R = np.zeros_like(I) if variant == "sir" else None

    duration = np.zeros(nb, dtype=np.int64)
    total = np.full(nb, init.total, dtype=np.int64)
    mn = np.full(nb, init.support[0], dtype=np.int64)
    mx = np.full(nb, init.support[1], dtype=np.int64)
    mxc = np.full(nb, max(init.counts.values()), dtype=np.int64)
    truncated = np.zeros(nb, dtype=bool)
    active = np.arange(nb)

    for t in range(1, cap + 1):
        if active.size == 0:
            break
        if I[:, 0].any() or I[:, 1].any():
            I = np.pad(I, ((0, 0), (_GROW, 0)))
            off -= _GROW
            if R is not None:
                R = np.pad(R, ((0, 0), (_GROW, 0)))
        if I[:, -1].any() or I[:, -2].any():
            I = np.pad(I, ((0, 0), (0, _GROW)))
            if R is not None:
                R = np.pad(R, ((0, 0), (0, _GROW)))

        M = _neighbor_sum(I)
        if R is not None:
            R = R + I          # current infected recover and become immune
            S = N - R
        else:
            S = N - I          # current infected recover back to susceptible
        prob = -np.expm1(M * np.log1p(-p))   # 1 - (1-p)^M; exact in the exponent
        Inew = rng.binomial(np.where(M > 0, S, 0), prob)

        z = Inew.sum(axis=1)
        occ = Inew > 0
        has = z > 0
        total[active] += z
        if has.any():
            first = occ.argmax(axis=1)
            last = occ.shape[1] - 1 - occ[:, ::-1].argmax(axis=1)
            mn[active] = np.where(has, np.minimum(mn[active], off + first), mn[active])
            mx[active] = np.where(has, np.maximum(mx[active], off + last), mx[active])
            mxc[active] = np.maximum(mxc[active], Inew.max(axis=1))
            duration[active[has]] = t
        if t == cap:
            truncated[active[has]] = True
        keep = has
        if not keep.all():
            active = active[keep]
            I = Inew[keep]
            if R is not None:
                R = R[keep]
        else:
            I = Inew

    return BatchResult(duration, total, mn, mx, mxc, truncated, {})


# -- standard coupling, SIS, label collisions via sort-unique ------------------

def run_standard_sis_batch(
    init: ParticleField,
    N: int,
    law: OffspringLaw,
    reps: int,
    seed: int,
    *,
    purpose: str = "standard-sis",
    cap: int,
    chunk_size: int = 4096,
    track_envelope: bool = False,
) -> dict[str, np.ndarray]:
    """Red/blue standard coupling (SIS): red-parent offspring draw uniform labels
    in [N]; one survivor per label stays red, the rest turn blue.

    Returns red total size, red duration, and total attrition per replicate;
    with ``track_envelope`` replicates run until red+blue extinction and the
    envelope (red+blue) total size is returned as well.
    """
    n_chunks = (reps + chunk_size - 1) // chunk_size
    red_tot, red_dur, attr_tot, env_tot = [], [], [], []
    for ci in range(n_chunks):
        nb = min(chunk_size, reps - ci * chunk_size)
        rng = keyed_generator(seed, "chunk", purpose, ci)
        RED, off = _init_window(init, nb, pad=2)
        BLUE = np.zeros_like(RED)
        tot = np.full(nb, init.total, dtype=np.int64)
        etot = np.full(nb, init.total, dtype=np.int64)
        dur = np.zeros(nb, dtype=np.int64)
        att = np.zeros(nb, dtype=np.int64)
        active = np.arange(nb)
        for t in range(1, cap + 1):
            if active.size == 0:
                break
            if RED[:, 0].any() or BLUE[:, 0].any() or RED[:, 1].any() or BLUE[:, 1].any():
                RED = np.pad(RED, ((0, 0), (_GROW, 0)))
                BLUE = np.pad(BLUE, ((0, 0), (_GROW, 0)))
                off -= _GROW
            if RED[:, -1].any() or BLUE[:, -1].any() or RED[:, -2].any() or BLUE[:, -2].any():
                RED = np.pad(RED, ((0, 0), (0, _GROW)))
                BLUE = np.pad(BLUE, ((0, 0), (0, _GROW)))

            Mr = _neighbor_sum(RED)
            Mb = _neighbor_sum(BLUE)
            if law.kind is Kind.POISSON_LIMIT:
                Wr = rng.poisson(Mr / 3.0)
                Wb = rng.poisson(Mb / 3.0)
            else:
                pr = 1.0 / (3 * law.N)
                Wr = rng.binomial(Mr * law.N, pr)
                Wb = rng.binomial(Mb * law.N, pr)

            flat = Wr.ravel()
            ndraw = int(flat.sum())
            if ndraw:
                cell = np.repeat(np.arange(flat.size, dtype=np.int64), flat)
                labels = rng.integers(0, N, ndraw)
                distinct = np.bincount(np.unique(cell * N + labels) // N,
                                       minlength=flat.size)
                red_new = distinct.reshape(Wr.shape).astype(np.int64)
            else:
                red_new = np.zeros_like(Wr)
            blue_from_red = Wr - red_new
            att[active] += blue_from_red.sum(axis=1)
            BLUE = Wb + blue_from_red
            RED = red_new

            z = RED.sum(axis=1)
            zb = BLUE.sum(axis=1)
            tot[active] += z
            etot[active] += z + zb
            dur[active[z > 0]] = t
            # red extinct => red stats final; envelope tracking keeps blue going
            keep = (z > 0) | (zb > 0) if track_envelope else z > 0
            if not keep.all():
                active = active[keep]
                RED = RED[keep]
                BLUE = BLUE[keep]
        red_tot.append(tot)
        red_dur.append(dur)
        attr_tot.append(att)
        env_tot.append(etot)
    return {
        "red_total": np.concatenate(red_tot),
        "red_duration": np.concatenate(red_dur),
        "attrition_total": np.concatenate(attr_tot),
        "envelope_total": np.concatenate(env_tot),
    }

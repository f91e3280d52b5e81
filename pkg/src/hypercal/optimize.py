"""Vectorized derivative-free optimizers.

Both routines advance many independent problems in lockstep. Every
problem's trajectory depends only on its own inputs, so results do not
change with how problems are batched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SimplexResult:
    x: np.ndarray          # (P, d) best vertex per problem
    fun: np.ndarray        # (P,)
    converged: np.ndarray  # (P,) bool
    iterations: np.ndarray # (P,) int


def nelder_mead_batch(func, x0, step, *, xatol=1e-6, fatol=1e-9, max_iter=2000, spread=None):
    """Minimize ``P`` independent ``d``-dimensional problems by Nelder-Mead.

    Parameters
    ----------
    func : callable
        ``func(X, idx)`` with ``X`` of shape ``(k, d)`` and ``idx`` the
        problem indices those rows belong to; returns ``(k,)`` values.
    x0 : ndarray, shape (P, d)
    step : array_like, shape (d,) or (P, d)
        Initial simplex edge along each axis.
    xatol, fatol : float
        A problem converges once all vertices lie within ``xatol`` of the best
        (per coordinate) and their values within ``fatol``.
    spread : callable, optional
        Maps vertex coordinates ``(k, d+1, d)`` to the space in which ``xatol``
        is measured (e.g. undoing a bounded reparametrization).
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    P, d = x0.shape
    step = np.broadcast_to(np.asarray(step, dtype=float), (P, d))

    sim = np.repeat(x0[:, None, :], d + 1, axis=1)
    for j in range(d):
        sim[:, j + 1, j] += step[:, j]
    idx_all = np.arange(P)
    fs = np.empty((P, d + 1))
    for v in range(d + 1):
        fs[:, v] = func(sim[:, v, :], idx_all)

    active = np.ones(P, dtype=bool)
    converged = np.zeros(P, dtype=bool)
    iters = np.zeros(P, dtype=int)
    rng_d = np.arange(d + 1)

    for _ in range(max_iter):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        order = np.argsort(fs[act], axis=1, kind="stable")
        s = np.take_along_axis(sim[act], order[:, :, None], axis=1)
        f = np.take_along_axis(fs[act], order, axis=1)

        coords = s if spread is None else spread(s)
        xdone = np.max(np.abs(coords[:, 1:, :] - coords[:, :1, :]), axis=(1, 2)) <= xatol
        fdone = np.max(np.abs(f[:, 1:] - f[:, :1]), axis=1) <= fatol
        done = xdone & fdone
        sim[act], fs[act] = s, f
        if done.any():
            converged[act[done]] = True
            active[act[done]] = False
            keep = ~done
            act, s, f = act[keep], s[keep], f[keep]
            if act.size == 0:
                break
        iters[act] += 1

        centroid = s[:, :-1, :].mean(axis=1)
        worst = s[:, -1, :]
        xr = centroid + (centroid - worst)
        fr = func(xr, act)

        new_x = worst.copy()
        new_f = f[:, -1].copy()
        shrink = np.zeros(act.size, dtype=bool)

        # reflection accepted
        acc = (fr >= f[:, 0]) & (fr < f[:, -2])
        new_x[acc], new_f[acc] = xr[acc], fr[acc]

        # expansion
        exp = fr < f[:, 0]
        if exp.any():
            xe = centroid[exp] + 2.0 * (centroid[exp] - worst[exp])
            fe = func(xe, act[exp])
            better = fe < fr[exp]
            sel = np.flatnonzero(exp)
            new_x[sel] = np.where(better[:, None], xe, xr[exp])
            new_f[sel] = np.where(better, fe, fr[exp])

        # contraction (outside when reflection beat the worst, inside otherwise)
        con = fr >= f[:, -2]
        if con.any():
            sel = np.flatnonzero(con)
            outside = fr[con] < f[con, -1]
            xc = np.where(
                outside[:, None],
                centroid[con] + 0.5 * (xr[con] - centroid[con]),
                centroid[con] + 0.5 * (worst[con] - centroid[con]),
            )
            fc = func(xc, act[con])
            ok = np.where(outside, fc <= fr[con], fc < f[con, -1])
            new_x[sel[ok]], new_f[sel[ok]] = xc[ok], fc[ok]
            shrink[sel[~ok]] = True

        s[:, -1, :], f[:, -1] = new_x, new_f
        if shrink.any():
            sel = np.flatnonzero(shrink)
            best = s[sel, :1, :]
            s[sel, 1:, :] = best + 0.5 * (s[sel, 1:, :] - best)
            for v in range(1, d + 1):
                f[sel, v] = func(s[sel, v, :], act[sel])
        sim[act], fs[act] = s, f

    best = np.argmin(fs, axis=1)
    x = sim[idx_all, best, :]
    return SimplexResult(x=x, fun=fs[idx_all, best], converged=converged, iterations=iters)


def golden_max_batch(func, lo, hi, tol, max_iter=200):
    """Maximize unimodal functions on ``[lo, hi]`` by golden-section search.

    ``func(x, idx)`` evaluates problems ``idx`` at points ``x``. Each problem
    stops once its bracket is narrower than its own ``tol``.
    """
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), a.shape)
    idx = np.arange(a.size)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = func(c, idx)
    fd = func(d, idx)
    for _ in range(max_iter):
        act = np.flatnonzero((b - a) > tol)
        if act.size == 0:
            break
        left = fc[act] > fd[act]
        # maximum lies in [a, d]: shift the upper end down
        li, ri = act[left], act[~left]
        b[li] = d[li]
        d[li], fd[li] = c[li], fc[li]
        c[li] = b[li] - _GOLDEN * (b[li] - a[li])
        a[ri] = c[ri]
        c[ri], fc[ri] = d[ri], fd[ri]
        d[ri] = a[ri] + _GOLDEN * (b[ri] - a[ri])
        if li.size:
            fc[li] = func(c[li], li)
        if ri.size:
            fd[ri] = func(d[ri], ri)
    return 0.5 * (a + b)

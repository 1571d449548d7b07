"""Numba kernels for the minimum-cost flow problem on a lattice graph.

Edges join cell ``t = i*ny + j`` to ``t + a*ny + b`` for each stencil
direction ``(a, b)`` with ``a >= 0``. Flows are stored per direction as
``f[k, t]`` at the tail cell; slots without a valid head stay zero.

The solver is a restarted primal-dual hybrid gradient method with an adaptive
primal weight, applied to

    min sum_e w_e |f_e|   subject to   B f = d,

where ``(B f)_t`` is the net outflow of cell ``t``.
"""
import math

import numba
import numpy as np


@numba.njit(cache=True)
def apply_b(nx, ny, da, db, f, out):
    out[:] = 0.0
    for k in range(da.size):
        a = da[k]
        b = db[k]
        j0 = max(0, -b)
        j1 = min(ny, ny - b)
        off = a * ny + b
        fk = f[k]
        for i in range(nx - a):
            base = i * ny
            for j in range(j0, j1):
                t = base + j
                v = fk[t]
                out[t] += v
                out[t + off] -= v


@numba.njit(cache=True)
def kkt(nx, ny, da, db, w, d, f, phi, omega, scratch):
    """Weighted KKT error, primal objective and primal residual norm."""
    apply_b(nx, ny, da, db, f, scratch)
    pres = 0.0
    dobj = 0.0
    for t in range(d.size):
        r = scratch[t] - d[t]
        pres += r * r
        dobj += d[t] * phi[t]
    dres = 0.0
    pobj = 0.0
    for k in range(da.size):
        a = da[k]
        b = db[k]
        j0 = max(0, -b)
        j1 = min(ny, ny - b)
        off = a * ny + b
        fk = f[k]
        for i in range(nx - a):
            base = i * ny
            for j in range(j0, j1):
                t = base + j
                pobj += w[k] * abs(fk[t])
                v = abs(phi[t] - phi[t + off]) - w[k]
                if v > 0.0:
                    dres += v * v
    gap = pobj - dobj
    return math.sqrt(omega * pres + dres / omega + gap * gap), pobj, math.sqrt(pres)


@numba.njit(cache=True)
def solve(nx, ny, da, db, w, d, f, phi, eta, omega, max_iter, tol, check):
    """Iterate in place on ``f`` and ``phi``.

    Every ``check`` iterations the running average and the current iterate
    are compared by KKT error; the better one is the restart candidate.
    Stops once the constraint residual is below ``tol`` and the objective
    moved by less than ``tol`` (relative) since the previous check.

    Returns ``(objective, iterations, residual, converged, omega)``.
    """
    K = da.size
    N = d.size
    bf = np.zeros(N)
    bfn = np.zeros(N)
    scratch = np.zeros(N)
    apply_b(nx, ny, da, db, f, bf)
    fa = np.zeros_like(f)
    pa = np.zeros(N)
    na = 0
    f0 = f.copy()
    p0 = phi.copy()
    klast = kkt(nx, ny, da, db, w, d, f, phi, omega, scratch)[0]
    kprev = np.inf
    obj_prev = np.inf
    converged = False
    it = 0
    while it < max_iter:
        mu = eta / omega
        tau = eta * omega
        for k in range(K):
            a = da[k]
            b = db[k]
            thr = mu * w[k]
            j0 = max(0, -b)
            j1 = min(ny, ny - b)
            off = a * ny + b
            fk = f[k]
            fak = fa[k]
            for i in range(nx - a):
                base = i * ny
                for j in range(j0, j1):
                    t = base + j
                    g = fk[t] + mu * (phi[t] - phi[t + off])
                    v = max(g - thr, 0.0) + min(g + thr, 0.0)
                    fk[t] = v
                    fak[t] += v
        apply_b(nx, ny, da, db, f, bfn)
        for t in range(N):
            phi[t] += tau * (d[t] - 2.0 * bfn[t] + bf[t])
            bf[t] = bfn[t]
            pa[t] += phi[t]
        na += 1
        it += 1
        if it % check != 0:
            continue
        kc, oc, rc = kkt(nx, ny, da, db, w, d, f, phi, omega, scratch)
        fa /= na
        pa /= na
        ka, oa, ra = kkt(nx, ny, da, db, w, d, fa, pa, omega, scratch)
        use_avg = ka < kc
        kk = ka if use_avg else kc
        obj = oa if use_avg else oc
        res = ra if use_avg else rc
        if res < tol and abs(obj - obj_prev) <= tol * abs(obj):
            if use_avg:
                f[:] = fa
                phi[:] = pa
            converged = True
            break
        obj_prev = obj
        if kk < 0.2 * klast or (kk < 0.8 * klast and kk > kprev) or na >= 0.36 * it:
            if use_avg:
                f[:] = fa
                phi[:] = pa
            df = 0.0
            for k in range(K):
                for t in range(N):
                    x = f[k, t] - f0[k, t]
                    df += x * x
            dp = 0.0
            for t in range(N):
                x = phi[t] - p0[t]
                dp += x * x
            if df > 1e-28 and dp > 1e-28:
                omega = math.exp(0.25 * math.log(dp / df) + 0.5 * math.log(omega))
            apply_b(nx, ny, da, db, f, bf)
            f0[:] = f
            p0[:] = phi
            klast = kk
            kprev = np.inf
            fa[:] = 0.0
            pa[:] = 0.0
            na = 0
        else:
            kprev = kk
            fa *= na
            pa *= na
    kc, oc, rc = kkt(nx, ny, da, db, w, d, f, phi, omega, scratch)
    return oc, it, rc, converged, omega


@numba.njit(cache=True)
def prolong_flow(nxc, nyc, da, db, fc, f):
    """Spread coarse edge flows over two fine hops from each of the 4 sub-cells."""
    ny = 2 * nyc
    for k in range(da.size):
        a = da[k]
        b = db[k]
        j0 = max(0, -b)
        j1 = min(nyc, nyc - b)
        for ic in range(nxc - a):
            for jc in range(j0, j1):
                q = 0.25 * fc[k, ic * nyc + jc]
                if q == 0.0:
                    continue
                for p in range(2):
                    for r in range(2):
                        i = 2 * ic + p
                        j = 2 * jc + r
                        f[k, i * ny + j] += q
                        f[k, (i + a) * ny + j + b] += q

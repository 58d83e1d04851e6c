"""Hot numerical kernels, each in a numba and a pure-numpy flavour.

Arrays are indexed ``[i, j(, k)]`` with axis 0 = x (or rho on a meridian
grid).  Out-of-range neighbours are replaced by the edge value, i.e. a
homogeneous Neumann condition; on a meridian grid whose first cell centre
sits at rho = h/2 this is exactly the even reflection across the axis.

Public entry points dispatch on :func:`mcflab._accel.use_numba`.
"""

import numpy as np

from ._accel import njit, use_numba

# ---------------------------------------------------------------------------
# level-set mean curvature step
# ---------------------------------------------------------------------------


@njit
def _mcf_update2_nb(phi, out, h, dt, eps2, clamp, m_rot, rho0):
    nx, ny = phi.shape
    ih = 1.0 / h
    ih2 = ih * ih
    for i in range(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            c = phi[i, j]
            px = (phi[ip, j] - phi[im, j]) * 0.5 * ih
            py = (phi[i, jp] - phi[i, jm]) * 0.5 * ih
            pxx = (phi[ip, j] - 2.0 * c + phi[im, j]) * ih2
            pyy = (phi[i, jp] - 2.0 * c + phi[i, jm]) * ih2
            pxy = (phi[ip, jp] - phi[ip, jm] - phi[im, jp] + phi[im, jm]) * 0.25 * ih2
            g2 = px * px + py * py
            rate = (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2 + eps2)
            if m_rot > 0:
                rate += m_rot * px / (rho0 + i * h)
            v = c + dt * rate
            if v > clamp:
                v = clamp
            elif v < -clamp:
                v = -clamp
            out[i, j] = v


@njit
def _mcf_update3_nb(phi, out, h, dt, eps2, clamp):
    nx, ny, nz = phi.shape
    ih = 1.0 / h
    ih2 = ih * ih
    for i in range(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            for k in range(nz):
                km = k - 1 if k > 0 else 0
                kp = k + 1 if k < nz - 1 else nz - 1
                c = phi[i, j, k]
                px = (phi[ip, j, k] - phi[im, j, k]) * 0.5 * ih
                py = (phi[i, jp, k] - phi[i, jm, k]) * 0.5 * ih
                pz = (phi[i, j, kp] - phi[i, j, km]) * 0.5 * ih
                pxx = (phi[ip, j, k] - 2.0 * c + phi[im, j, k]) * ih2
                pyy = (phi[i, jp, k] - 2.0 * c + phi[i, jm, k]) * ih2
                pzz = (phi[i, j, kp] - 2.0 * c + phi[i, j, km]) * ih2
                pxy = (phi[ip, jp, k] - phi[ip, jm, k] - phi[im, jp, k] + phi[im, jm, k]) * 0.25 * ih2
                pxz = (phi[ip, j, kp] - phi[ip, j, km] - phi[im, j, kp] + phi[im, j, km]) * 0.25 * ih2
                pyz = (phi[i, jp, kp] - phi[i, jp, km] - phi[i, jm, kp] + phi[i, jm, km]) * 0.25 * ih2
                num = ((pyy + pzz) * px * px + (pxx + pzz) * py * py + (pxx + pyy) * pz * pz
                       - 2.0 * (px * py * pxy + px * pz * pxz + py * pz * pyz))
                v = c + dt * num / (px * px + py * py + pz * pz + eps2)
                if v > clamp:
                    v = clamp
                elif v < -clamp:
                    v = -clamp
                out[i, j, k] = v


def _mcf_update_np(phi, h, dt, eps2, clamp, m_rot=0.0, rho0=0.0):
    nd = phi.ndim
    p = np.pad(phi, 1, mode="edge")
    core = (slice(1, -1),) * nd

    def shifted(offsets):
        return p[tuple(slice(1 + o, p.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    grads, seconds = [], {}
    for a in range(nd):
        e = [0] * nd
        e[a] = 1
        fp = shifted(e)
        e[a] = -1
        fm = shifted(e)
        grads.append((fp - fm) / (2.0 * h))
        seconds[a, a] = (fp - 2.0 * p[core] + fm) / (h * h)
    for a in range(nd):
        for b in range(a + 1, nd):
            def sh(sa, sb):
                e = [0] * nd
                e[a], e[b] = sa, sb
                return shifted(e)
            seconds[a, b] = (sh(1, 1) - sh(1, -1) - sh(-1, 1) + sh(-1, -1)) / (4.0 * h * h)
    g2 = sum(g * g for g in grads)
    lap = sum(seconds[a, a] for a in range(nd))
    gHg = sum(grads[a] * grads[a] * seconds[a, a] for a in range(nd))
    for a in range(nd):
        for b in range(a + 1, nd):
            gHg = gHg + 2.0 * grads[a] * grads[b] * seconds[a, b]
    rate = (g2 * lap - gHg) / (g2 + eps2)
    if m_rot > 0:
        rho = rho0 + h * np.arange(phi.shape[0], dtype=float)
        rate = rate + m_rot * grads[0] / rho.reshape((-1,) + (1,) * (nd - 1))
    return np.clip(phi + dt * rate, -clamp, clamp)


def mcf_update(phi, h, dt, eps2, clamp, m_rot=0.0, rho0=0.0):
    """One explicit Euler step of ``phi_t = |grad phi| div(grad phi/|grad phi|)``."""
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    if not use_numba():
        return _mcf_update_np(phi, h, dt, eps2, clamp, m_rot, rho0)
    out = np.empty_like(phi)
    if phi.ndim == 2:
        _mcf_update2_nb(phi, out, h, dt, eps2, clamp, float(m_rot), rho0)
    elif m_rot > 0:
        raise ValueError("rotational term only exists on 2-D meridian grids")
    else:
        _mcf_update3_nb(phi, out, h, dt, eps2, clamp)
    return out


# ---------------------------------------------------------------------------
# crossing-time bookkeeping
# ---------------------------------------------------------------------------


@njit
def _record_nb(phi_old, phi_new, u, reached, inside0, t, dt):
    n = phi_new.size
    count = 0
    for idx in range(n):
        if inside0[idx] and not reached[idx] and phi_new[idx] >= 0.0:
            po = phi_old[idx]
            frac = 0.0
            if po < 0.0:
                frac = -po / (phi_new[idx] - po)
            u[idx] = t + frac * dt
            reached[idx] = True
            count += 1
    return count


def _record_np(phi_old, phi_new, u, reached, inside0, t, dt):
    new = inside0 & ~reached & (phi_new >= 0.0)
    po = phi_old[new]
    pn = phi_new[new]
    frac = np.where(po < 0.0, -po / np.where(po < 0.0, pn - po, 1.0), 0.0)
    u[new] = t + frac * dt
    reached |= new
    return int(new.sum())


def record_crossings(phi_old, phi_new, u, reached, inside0, t, dt):
    """Stamp cells whose value turned non-negative during ``[t, t+dt]``.

    All arrays are flat views.  Arrival time is linear in time between the two
    snapshots.  Returns the number of newly reached cells.
    """
    if use_numba():
        return _record_nb(phi_old, phi_new, u, reached, inside0, t, dt)
    return _record_np(phi_old, phi_new, u, reached, inside0, t, dt)


@njit
def _advance2_nb(phi, work, u, reached, inside0, t, dt, nsteps, h, eps2, clamp, m_rot, rho0):
    a = phi
    b = work
    for _ in range(nsteps):
        _mcf_update2_nb(a, b, h, dt, eps2, clamp, m_rot, rho0)
        _record_nb(a.ravel(), b.ravel(), u, reached, inside0, t, dt)
        t += dt
        a, b = b, a
    return a, t


@njit
def _advance3_nb(phi, work, u, reached, inside0, t, dt, nsteps, h, eps2, clamp):
    a = phi
    b = work
    for _ in range(nsteps):
        _mcf_update3_nb(a, b, h, dt, eps2, clamp)
        _record_nb(a.ravel(), b.ravel(), u, reached, inside0, t, dt)
        t += dt
        a, b = b, a
    return a, t


def advance(phi, u, reached, inside0, t, dt, nsteps, h, eps2, clamp, m_rot=0.0, rho0=0.0):
    """Take ``nsteps`` steps, recording crossings into the flat ``u``/``reached``.

    Returns ``(phi_new, t_new)``; ``phi`` itself may be overwritten.
    """
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    if use_numba():
        work = np.empty_like(phi)
        if phi.ndim == 2:
            out, t = _advance2_nb(phi, work, u, reached, inside0, t, dt, nsteps, h, eps2,
                                  clamp, float(m_rot), rho0)
        else:
            if m_rot > 0:
                raise ValueError("rotational term only exists on 2-D meridian grids")
            out, t = _advance3_nb(phi, work, u, reached, inside0, t, dt, nsteps, h, eps2, clamp)
        return out, t
    for _ in range(nsteps):
        new = _mcf_update_np(phi, h, dt, eps2, clamp, m_rot, rho0)
        _record_np(phi.ravel(), new.ravel(), u, reached, inside0, t, dt)
        t += dt
        phi = new
    return phi, t


# ---------------------------------------------------------------------------
# closest-point redistancing
# ---------------------------------------------------------------------------


# 2-D arrays are handled as 3-D arrays with a single layer along z.


@njit
def _seeds_nb(phi, h):
    nx, ny, nz = phi.shape
    flag = np.zeros(phi.shape, dtype=np.bool_)
    ns = 0
    for i in range(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            for k in range(nz):
                km = k - 1 if k > 0 else 0
                kp = k + 1 if k < nz - 1 else nz - 1
                s = phi[i, j, k] < 0.0
                if ((phi[im, j, k] < 0.0) != s or (phi[ip, j, k] < 0.0) != s
                        or (phi[i, jm, k] < 0.0) != s or (phi[i, jp, k] < 0.0) != s
                        or (phi[i, j, km] < 0.0) != s or (phi[i, j, kp] < 0.0) != s):
                    flag[i, j, k] = True
                    ns += 1
    sidx = np.empty((ns, 3), dtype=np.int64)
    cp = np.empty((ns, 3))
    nrm = np.empty((ns, 3))
    shape_op = np.zeros((ns, 3, 3))
    d0 = np.empty(ns)
    g = np.empty(3)
    H = np.empty((3, 3))
    P = np.empty((3, 3))
    lo = np.empty(3, dtype=np.int64)
    hi = np.empty(3, dtype=np.int64)
    s = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not flag[i, j, k]:
                    continue
                idx = (i, j, k)
                dims = (nx, ny, nz)
                c = phi[i, j, k]
                for a in range(3):
                    lo[a] = idx[a] - 1 if idx[a] > 0 else 0
                    hi[a] = idx[a] + 1 if idx[a] < dims[a] - 1 else dims[a] - 1
                # first and second differences with clamped neighbours
                g[0] = (phi[hi[0], j, k] - phi[lo[0], j, k]) / (max(hi[0] - lo[0], 1) * h)
                g[1] = (phi[i, hi[1], k] - phi[i, lo[1], k]) / (max(hi[1] - lo[1], 1) * h)
                g[2] = (phi[i, j, hi[2]] - phi[i, j, lo[2]]) / (max(hi[2] - lo[2], 1) * h)
                H[0, 0] = (phi[hi[0], j, k] - 2.0 * c + phi[lo[0], j, k]) / (h * h)
                H[1, 1] = (phi[i, hi[1], k] - 2.0 * c + phi[i, lo[1], k]) / (h * h)
                H[2, 2] = (phi[i, j, hi[2]] - 2.0 * c + phi[i, j, lo[2]]) / (h * h)
                H[0, 1] = (phi[hi[0], hi[1], k] - phi[hi[0], lo[1], k]
                           - phi[lo[0], hi[1], k] + phi[lo[0], lo[1], k]) / (4.0 * h * h)
                H[0, 2] = (phi[hi[0], j, hi[2]] - phi[hi[0], j, lo[2]]
                           - phi[lo[0], j, hi[2]] + phi[lo[0], j, lo[2]]) / (4.0 * h * h)
                H[1, 2] = (phi[i, hi[1], hi[2]] - phi[i, hi[1], lo[2]]
                           - phi[i, lo[1], hi[2]] + phi[i, lo[1], lo[2]]) / (4.0 * h * h)
                H[1, 0] = H[0, 1]
                H[2, 0] = H[0, 2]
                H[2, 1] = H[1, 2]
                g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
                if g2 == 0.0:
                    g2 = 1e-300
                gn = np.sqrt(g2)
                for a in range(3):
                    sidx[s, a] = idx[a]
                    cp[s, a] = idx[a] * h - c * g[a] / g2
                    nrm[s, a] = g[a] / gn
                d0[s] = abs(c) / gn
                for a in range(3):
                    for b in range(3):
                        P[a, b] = (1.0 if a == b else 0.0) - nrm[s, a] * nrm[s, b]
                for a in range(3):
                    for b in range(3):
                        acc = 0.0
                        for p in range(3):
                            for q in range(3):
                                acc += P[a, p] * H[p, q] * P[q, b]
                        shape_op[s, a, b] = acc / gn
                s += 1
    return sidx, cp, nrm, shape_op, d0


@njit
def _local_nb(h, sidx, cp, owner, d2, cap):
    # exact nearest foot point among all seeds within ``cap``
    nx, ny, nz = d2.shape
    r = int(np.ceil(cap / h))
    cap2 = cap * cap
    for s in range(sidx.shape[0]):
        i0 = sidx[s, 0]
        j0 = sidx[s, 1]
        k0 = sidx[s, 2]
        cx = cp[s, 0]
        cy = cp[s, 1]
        cz = cp[s, 2]
        for i in range(max(i0 - r, 0), min(i0 + r + 1, nx)):
            dx = i * h - cx
            for j in range(max(j0 - r, 0), min(j0 + r + 1, ny)):
                dy = j * h - cy
                for k in range(max(k0 - r, 0), min(k0 + r + 1, nz)):
                    dz = k * h - cz
                    d = dx * dx + dy * dy + dz * dz
                    if d < d2[i, j, k] and d <= cap2:
                        d2[i, j, k] = d
                        owner[i, j, k] = s


@njit
def _sweep_nb(h, cp, owner, d2, is_seed, cap, tol, max_iter):
    # Gauss-Seidel passes handing foot points between axis neighbours
    nx, ny, nz = d2.shape
    cap2 = cap * cap
    di = (-1, 1, 0, 0, 0, 0)
    dj = (0, 0, -1, 1, 0, 0)
    dk = (0, 0, 0, 0, -1, 1)
    for it in range(max_iter):
        change = 0.0
        for order in range(8):
            if nz == 1 and order >= 4:
                break
            for ii in range(nx):
                i = ii if order & 1 == 0 else nx - 1 - ii
                for jj in range(ny):
                    j = jj if order & 2 == 0 else ny - 1 - jj
                    for kk in range(nz):
                        k = kk if order & 4 == 0 else nz - 1 - kk
                        if is_seed[i, j, k]:
                            continue
                        best = d2[i, j, k]
                        bo = -1
                        for q in range(6):
                            a = i + di[q]
                            b = j + dj[q]
                            c = k + dk[q]
                            if a < 0 or a >= nx or b < 0 or b >= ny or c < 0 or c >= nz:
                                continue
                            o = owner[a, b, c]
                            if o < 0 or o == owner[i, j, k]:
                                continue
                            dx = i * h - cp[o, 0]
                            dy = j * h - cp[o, 1]
                            dz = k * h - cp[o, 2]
                            d = dx * dx + dy * dy + dz * dz
                            if d < best and d <= cap2:
                                best = d
                                bo = o
                        if bo >= 0:
                            old = d2[i, j, k]
                            ch = cap if old == np.inf else np.sqrt(old) - np.sqrt(best)
                            if ch > change:
                                change = ch
                            d2[i, j, k] = best
                            owner[i, j, k] = bo
        if change < tol:
            break


@njit
def _finish_nb(h, cp, nrm, shape_op, d0, owner, is_seed, dist):
    # distance to the osculating quadric at the chosen foot point:
    # s + t.A.t / 2 with s the normal and t the tangential offset
    nx, ny, nz = dist.shape
    x = np.empty(3)
    t = np.empty(3)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                o = owner[i, j, k]
                if o < 0:
                    dist[i, j, k] = np.inf
                    continue
                if is_seed[i, j, k]:
                    dist[i, j, k] = d0[o]
                    continue
                x[0] = i * h - cp[o, 0]
                x[1] = j * h - cp[o, 1]
                x[2] = k * h - cp[o, 2]
                sn = x[0] * nrm[o, 0] + x[1] * nrm[o, 1] + x[2] * nrm[o, 2]
                for a in range(3):
                    t[a] = x[a] - sn * nrm[o, a]
                q = 0.0
                for a in range(3):
                    for b in range(3):
                        q += t[a] * shape_op[o, a, b] * t[b]
                dist[i, j, k] = abs(sn + 0.5 * q)


LOCAL_BAND_CELLS = 12


def _seeds_np(phi, h):
    nd = phi.ndim
    shape = phi.shape
    neg = phi < 0.0
    p = np.pad(phi, 1, mode="edge")
    pn = np.pad(neg, 1, mode="edge")
    flag = np.zeros(shape, dtype=bool)

    def shifted(arr, offsets):
        return arr[tuple(slice(1 + o, arr.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    grads = []
    hess = np.empty(shape + (nd, nd))
    for a in range(nd):
        e = [0] * nd
        e[a] = 1
        fp, bp = shifted(p, e), shifted(pn, e)
        e[a] = -1
        fm, bm = shifted(p, e), shifted(pn, e)
        flag |= (bp != neg) | (bm != neg)
        span = np.full(shape[a], 2.0)
        span[0] = span[-1] = 1.0
        span = span.reshape([-1 if b == a else 1 for b in range(nd)])
        grads.append((fp - fm) / (span * h))
        hess[..., a, a] = (fp - 2.0 * phi + fm) / (h * h)
        for b in range(a + 1, nd):
            acc = 0.0
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                e = [0] * nd
                e[a], e[b] = sa, sb
                acc = acc + sa * sb * shifted(p, e)
            hess[..., a, b] = hess[..., b, a] = acc / (4.0 * h * h)
    sidx = np.argwhere(flag)
    sel = tuple(sidx.T)
    g = np.stack([gr[sel] for gr in grads], axis=1)
    g2 = np.maximum(np.sum(g * g, axis=1), 1e-300)
    gn = np.sqrt(g2)
    c = phi[sel]
    cp = sidx * h - (c / g2)[:, None] * g
    nrm = g / gn[:, None]
    P = np.eye(nd)[None] - nrm[:, :, None] * nrm[:, None, :]
    shape_op = P @ hess[sel] @ P / gn[:, None, None]
    return flag, sidx, cp, nrm, shape_op, np.abs(c) / gn


def _redistance_np(phi, h, cap, tol, max_iter):
    nd = phi.ndim
    shape = phi.shape
    is_seed, sidx, cp, nrm, shape_op, d0 = _seeds_np(phi, h)
    coords = np.stack(np.meshgrid(*[h * np.arange(s) for s in shape], indexing="ij"), axis=-1)
    owner = np.full(shape, -1, dtype=np.int64)
    owner[tuple(sidx.T)] = np.arange(len(sidx))
    seed_owner = owner.copy()
    d2 = np.where(is_seed, 0.0, np.inf)
    cap2 = cap * cap
    # exact search: every offset inside the local box, shifted over the grid
    r = int(np.ceil(min(cap, LOCAL_BAND_CELLS * h) / h))
    local2 = min(cap, LOCAL_BAND_CELLS * h) ** 2
    for off in np.ndindex(*(2 * r + 1,) * nd):
        off = np.array(off) - r
        if not off.any():
            continue
        src = tuple(slice(max(-o, 0), n - max(o, 0)) for o, n in zip(off, shape))
        dst = tuple(slice(max(o, 0), n - max(-o, 0)) for o, n in zip(off, shape))
        o = seed_owner[src]
        has = o >= 0
        if not has.any():
            continue
        d = np.where(has, np.sum((coords[dst] - cp[np.where(has, o, 0)]) ** 2, axis=-1), np.inf)
        better = (d < d2[dst]) & ~is_seed[dst] & (d <= local2)
        d2[dst] = np.where(better, d, d2[dst])
        owner[dst] = np.where(better, o, owner[dst])
    # Jacobi passes along each axis direction for the far field
    for _it in range(max_iter if cap > LOCAL_BAND_CELLS * h else 0):
        change = 0.0
        for a in range(nd):
            for step in (1, -1):
                src = [slice(None)] * nd
                dst = [slice(None)] * nd
                if step == 1:
                    src[a], dst[a] = slice(0, -1), slice(1, None)
                else:
                    src[a], dst[a] = slice(1, None), slice(0, -1)
                src, dst = tuple(src), tuple(dst)
                o = owner[src]
                has = o >= 0
                cand = cp[np.where(has, o, 0)]
                d = np.where(has, np.sum((coords[dst] - cand) ** 2, axis=-1), np.inf)
                better = (d < d2[dst]) & ~is_seed[dst] & (d <= cap2)
                if better.any():
                    old = d2[dst][better]
                    delta = np.where(np.isinf(old), cap, np.sqrt(old) - np.sqrt(d[better]))
                    change = max(change, float(delta.max()))
                    d2[dst] = np.where(better, d, d2[dst])
                    owner[dst] = np.where(better, o, owner[dst])
        if change < tol:
            break
    dist = np.full(shape, np.inf)
    own = owner >= 0
    o = owner[own]
    x = coords[own] - cp[o]
    sn = np.sum(x * nrm[o], axis=1)
    t = x - sn[:, None] * nrm[o]
    q = np.einsum("ia,iab,ib->i", t, shape_op[o], t)
    dist[own] = np.abs(sn + 0.5 * q)
    dist[is_seed] = d0[owner[is_seed]]
    return dist, is_seed


def redistance(phi, h, cap, tol, max_iter=200):
    """Closest-point transform of the zero set of ``phi``.

    Interface cells (sign change towards an axis neighbour) are projected onto
    the zero set with ``x - phi grad(phi)/|grad(phi)|^2`` and keep
    ``|phi|/|grad(phi)|``, which leaves the zero set in place.  Every other
    cell within ``cap`` takes the nearest foot point (exact search over the
    seeds within ``LOCAL_BAND_CELLS`` cells, then Gauss-Seidel sweeps passing
    foot points between axis neighbours further out) and measures its
    distance to the osculating quadric there.  Returns ``(dist, seeded)``;
    ``dist`` is ``inf`` beyond ``cap``.
    """
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    if not use_numba():
        return _redistance_np(phi, h, cap, tol, max_iter)
    shape = phi.shape
    p3 = phi.reshape(shape + (1,) * (3 - phi.ndim))
    sidx, cp, nrm, shape_op, d0 = _seeds_nb(p3, h)
    owner = np.full(p3.shape, -1, dtype=np.int64)
    is_seed = np.zeros(p3.shape, dtype=np.bool_)
    d2 = np.full(p3.shape, np.inf)
    if len(sidx):
        sel = (sidx[:, 0], sidx[:, 1], sidx[:, 2])
        owner[sel] = np.arange(len(sidx))
        is_seed[sel] = True
        d2[sel] = 0.0
        _local_nb(h, sidx, cp, owner, d2, min(cap, LOCAL_BAND_CELLS * h))
        if cap > LOCAL_BAND_CELLS * h:
            _sweep_nb(h, cp, owner, d2, is_seed, cap, tol, max_iter)
    dist = np.empty(p3.shape)
    _finish_nb(h, cp, nrm, shape_op, d0, owner, is_seed, dist)
    return dist.reshape(shape), is_seed.reshape(shape)


# ---------------------------------------------------------------------------
# Gaussian-weighted area
# ---------------------------------------------------------------------------


@njit
def _tree_sum(buf, n):
    while n > 1:
        half = n // 2
        for i in range(half):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if n & 1:
            buf[half] = buf[n - 1]
            n = half + 1
        else:
            n = half
    return buf[0] if n == 1 else 0.0


@njit
def _gaussian_batch_nb(cent, area, centers, lams, dim_surf):
    m = centers.shape[0]
    ne = cent.shape[0]
    nd = cent.shape[1]
    out = np.empty(m)
    buf = np.empty(max(ne, 1))
    for c in range(m):
        lam = lams[c]
        cut = 64.0 * lam
        norm = (4.0 * np.pi * lam) ** (0.5 * dim_surf)
        for e in range(ne):
            d2 = 0.0
            for a in range(nd):
                dx = cent[e, a] - centers[c, a]
                d2 += dx * dx
            if d2 > cut:
                buf[e] = 0.0
            else:
                buf[e] = area[e] * np.exp(-d2 / (4.0 * lam))
        out[c] = _tree_sum(buf, ne) / norm
    return out


def _gaussian_batch_np(cent, area, centers, lams, dim_surf):
    out = np.empty(len(centers))
    for c, (p, lam) in enumerate(zip(centers, lams)):
        d2 = np.sum((cent - p) ** 2, axis=1)
        w = np.where(d2 > 64.0 * lam, 0.0, area * np.exp(-d2 / (4.0 * lam)))
        out[c] = np.sum(w) / (4.0 * np.pi * lam) ** (0.5 * dim_surf)
    return out


def gaussian_batch(centroids, areas, centers, lams, dim_surf):
    """Centroid-rule Gaussian areas for many ``(p, Lambda)`` pairs at once."""
    cent = np.ascontiguousarray(centroids, dtype=np.float64)
    area = np.ascontiguousarray(areas, dtype=np.float64)
    centers = np.ascontiguousarray(np.atleast_2d(centers), dtype=np.float64)
    lams = np.ascontiguousarray(np.broadcast_to(lams, (len(centers),)), dtype=np.float64)
    if use_numba():
        return _gaussian_batch_nb(cent, area, centers, lams, float(dim_surf))
    return _gaussian_batch_np(cent, area, centers, lams, float(dim_surf))

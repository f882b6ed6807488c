"""Compiled inner loops for the acoustic propagator.

Arrays carry ``GHOST`` mirror layers on every side.  ``u`` arrays have shape
``(nz + 2G, nx + 2G)`` where ``nz, nx`` is the computational grid (physical
domain plus PML pads).
"""

from numba import njit

GHOST = 3
C1 = 9.0 / 8.0
C2 = -1.0 / 24.0


@njit(cache=True, nogil=True)
def mirror_ghosts(u):
    G = GHOST
    NZe, NXe = u.shape
    NZ = NZe - 2 * G
    NX = NXe - 2 * G
    for j in range(G, G + NZ):
        for m in range(1, G + 1):
            u[j, G - m] = u[j, G + m]
            u[j, G + NX - 1 + m] = u[j, G + NX - 1 - m]
    for m in range(1, G + 1):
        for i in range(NXe):
            u[G - m, i] = u[G + m, i]
            u[G + NZ - 1 + m, i] = u[G + NZ - 1 - m, i]


@njit(cache=True, nogil=True)
def leapfrog_step(u0, u1, u2, c2x, c2z, idx, idz, dt2,
                  psix, zetax, psiz, zetaz,
                  axh, bxh, axn, bxn, azh, bzh, azn, bzn, fx, fz):
    """``u2 = 2 u1 - u0 + dt^2 div(c^2 grad u1)`` with CPML memory updates.

    Fluxes live on half nodes; ``fx``/``fz`` are scratch buffers.  A zero
    ``a`` coefficient marks a half node or node outside every PML.
    """
    G = GHOST
    NZe, NXe = u1.shape
    NZ = NZe - 2 * G
    NX = NXe - 2 * G
    mirror_ghosts(u1)

    for j in range(NZ):
        je = j + G
        for k in range(1, NXe - 2):
            d = (C1 * (u1[je, k + 1] - u1[je, k])
                 + C2 * (u1[je, k + 2] - u1[je, k - 1])) * idx
            if axh[k] != 0.0:
                psix[j, k] = bxh[k] * psix[j, k] + axh[k] * d
                d += psix[j, k]
            fx[j, k] = c2x[j, k] * d

    for k in range(1, NZe - 2):
        for i in range(NX):
            ie = i + G
            d = (C1 * (u1[k + 1, ie] - u1[k, ie])
                 + C2 * (u1[k + 2, ie] - u1[k - 1, ie])) * idz
            if azh[k] != 0.0:
                psiz[k, i] = bzh[k] * psiz[k, i] + azh[k] * d
                d += psiz[k, i]
            fz[k, i] = c2z[k, i] * d

    for j in range(NZ):
        je = j + G
        for i in range(NX):
            ie = i + G
            dvx = (C1 * (fx[j, ie] - fx[j, ie - 1])
                   + C2 * (fx[j, ie + 1] - fx[j, ie - 2])) * idx
            if axn[i] != 0.0:
                zetax[j, i] = bxn[i] * zetax[j, i] + axn[i] * dvx
                dvx += zetax[j, i]
            dvz = (C1 * (fz[je, i] - fz[je - 1, i])
                   + C2 * (fz[je + 1, i] - fz[je - 2, i])) * idz
            if azn[j] != 0.0:
                zetaz[j, i] = bzn[j] * zetaz[j, i] + azn[j] * dvz
                dvz += zetaz[j, i]
            u2[je, ie] = 2.0 * u1[je, ie] - u0[je, ie] + dt2 * (dvx + dvz)


@njit(cache=True, nogil=True)
def inject(u, flat_idx, weights, scale):
    uf = u.ravel()
    for p in range(flat_idx.size):
        uf[flat_idx[p]] += scale * weights[p]


@njit(cache=True, nogil=True)
def gather_csr(u, ptr, flat_idx, weights, out, col):
    uf = u.ravel()
    for r in range(ptr.size - 1):
        acc = 0.0
        for p in range(ptr[r], ptr[r + 1]):
            acc += weights[p] * uf[flat_idx[p]]
        out[r, col] = acc


"""Compiled numerical core.

Everything on the hot path lives here as ``numba.njit`` functions working on
plain float64 arrays; the public modules wrap them with the dataclass API.

Conventions
-----------
* a coefficient vector has length C(M+3,3) and is ordered graded-
  lexicographically (see :mod:`momentmg.indexing`);
* a field is the triple ``coeffs (N, n)``, ``us (N, 3)``, ``ths (N,)`` where
  the anchors of compliant cells equal their macroscopic velocity and
  temperature;
* ``tab`` is the tuple ``(alphas, degree, factorial, up, down, parity, axis1,
  canon, special)`` taken from :class:`momentmg.indexing.IndexTables`;
* ``phys`` is ``(pr, kn, law, w, f1, f2, f3, cmax)`` with ``law`` 0 for the
  power-law collision frequency and 1 for hard spheres, ``(f1,f2,f3)`` the
  body acceleration and ``cmax`` the spectral radius factor of the truncated
  transport operator;
* ``walls`` is the length-10 array ``[thW_L, uL1, uL2, uL3, chiL,
  thW_R, uR1, uR2, uR3, chiR]``;
* ``ncfg`` is ``(reg_weight, tol, max_steps, halving, fd_floor, rho_floor,
  theta_floor)``.

Status codes returned by the stateful kernels: 0 = ok, 1 = nonpositive
density/temperature encountered, 2 = non-finite residual.
"""

import math

import numpy as np
from numba import njit

JIT = {"cache": True, "nogil": True}

SQRT_EPS = math.sqrt(np.finfo(np.float64).eps)
INV_SQRT_TWO_PI = 1.0 / math.sqrt(2.0 * math.pi)
SQRT_HALF_PI = math.sqrt(0.5 * math.pi)


# ---------------------------------------------------------------------------
# anchor-change transform: Hermite coefficients <-> raw polynomial moments
# ---------------------------------------------------------------------------

@njit(**JIT)
def pmat_1d(u, th, kmax, mmax):
    """One-dimensional moment matrix ``P[k, m] = moment_k(basis function m)``
    for ``k <= kmax``, ``m <= mmax``.

    Lower triangular with ``P[k, k] = k!``; entries above the diagonal are
    left at zero so products over dimensions need no bounds checks.
    """
    p = np.zeros((kmax + 1, mmax + 1))
    fact = np.empty(kmax + 1)
    fact[0] = 1.0
    for k in range(1, kmax + 1):
        fact[k] = fact[k - 1] * k
    for k in range(kmax + 1):
        mtop = k if k <= mmax else mmax
        for m2 in range(mtop + 1):
            acc = 0.0
            smax = (k - m2) // 2
            for s in range(smax + 1):
                rem = k - m2 - 2 * s
                acc += (
                    fact[k] / (fact[rem] * fact[s])
                    * (0.5 * th) ** s * u ** rem
                )
            p[k, m2] = acc
    return p


@njit(**JIT)
def half_pmat_1d(u, th, kmax, mmax):
    """Half-space moment matrix ``P+[k, m] = int_{xi>0} xi^k h_m(xi) dxi``
    of the one-dimensional basis anchored at ``(u, th)``."""
    sq = math.sqrt(th)
    a = -u / sq
    ntop = kmax + mmax + 1
    he = np.empty(ntop + 1)
    he[0] = 1.0
    if ntop >= 1:
        he[1] = a
    for k in range(2, ntop + 1):
        he[k] = a * he[k - 1] - (k - 1) * he[k - 2]
    expa = math.exp(-0.5 * a * a)
    # iv[j, m] = int_a^inf w^j He_m(w) exp(-w^2/2) dw
    iv = np.zeros((kmax + 1, ntop + 1))
    iv[0, 0] = SQRT_HALF_PI * math.erfc(a / math.sqrt(2.0))
    for m in range(1, ntop + 1):
        iv[0, m] = he[m - 1] * expa
    for j in range(1, kmax + 1):
        for m in range(ntop + 1 - j):
            acc = iv[j - 1, m + 1]
            if m > 0:
                acc += m * iv[j - 1, m - 1]
            iv[j, m] = acc
    fact = np.empty(kmax + 1)
    fact[0] = 1.0
    for k in range(1, kmax + 1):
        fact[k] = fact[k - 1] * k
    p = np.empty((kmax + 1, mmax + 1))
    for k in range(kmax + 1):
        for m in range(mmax + 1):
            acc = 0.0
            for j in range(k + 1):
                binom = fact[k] / (fact[j] * fact[k - j])
                acc += binom * u ** (k - j) * sq ** j * iv[j, m]
            p[k, m] = acc * th ** (-0.5 * m) * INV_SQRT_TWO_PI
    return p


@njit(**JIT)
def wall_flux_moments(c_up, uu1, uu2, uu3, thu, c_dn, ud1, ud2, ud3, thd,
                      order, alphas):
    """Raw moments (degree <= order) of the half-space upwind wall flux
    ``chi_{xi1>0} xi1 f_up + chi_{xi1<0} xi1 f_dn``.

    Molecules leaving the wall come from the upwind state, incoming ones from
    the downwind state; the mass row therefore matches the exact half-space
    budget the ghost construction balances.
    """
    n = alphas.shape[0]
    pp_u = half_pmat_1d(uu1, thu, order + 1, order)
    p2_u = pmat_1d(uu2, thu, order, order)
    p3_u = pmat_1d(uu3, thu, order, order)
    pf_d = pmat_1d(ud1, thd, order + 1, order)
    pp_d = half_pmat_1d(ud1, thd, order + 1, order)
    p2_d = pmat_1d(ud2, thd, order, order)
    p3_d = pmat_1d(ud3, thd, order, order)
    m = np.zeros(n)
    for b in range(n):
        b1 = alphas[b, 0]
        b2 = alphas[b, 1]
        b3 = alphas[b, 2]
        acc = 0.0
        for aa in range(n):
            a1 = alphas[aa, 0]
            a2 = alphas[aa, 1]
            a3 = alphas[aa, 2]
            acc += c_up[aa] * pp_u[b1 + 1, a1] * p2_u[b2, a2] * p3_u[b3, a3]
            acc += c_dn[aa] * (pf_d[b1 + 1, a1] - pp_d[b1 + 1, a1]) \
                * p2_d[b2, a2] * p3_d[b3, a3]
        m[b] = acc
    return m


@njit(**JIT)
def moment_matrix(u1, u2, u3, th, order, alphas):
    """Map from coefficients to raw moments; lower triangular in graded order."""
    n = alphas.shape[0]
    p1 = pmat_1d(u1, th, order, order)
    p2 = pmat_1d(u2, th, order, order)
    p3 = pmat_1d(u3, th, order, order)
    t = np.empty((n, n))
    for b in range(n):
        b1 = alphas[b, 0]
        b2 = alphas[b, 1]
        b3 = alphas[b, 2]
        for a in range(n):
            # entries vanish unless alpha <= beta componentwise
            if alphas[a, 0] > b1 or alphas[a, 1] > b2 or alphas[a, 2] > b3:
                t[b, a] = 0.0
            else:
                t[b, a] = (
                    p1[b1, alphas[a, 0]]
                    * p2[b2, alphas[a, 1]]
                    * p3[b3, alphas[a, 2]]
                )
    return t


@njit(**JIT)
def forward_sub(t, rhs):
    """Solve ``t x = rhs`` for lower-triangular ``t`` (diagonal is alpha!)."""
    n = rhs.shape[0]
    x = np.empty(n)
    for k in range(n):
        acc = rhs[k]
        for j in range(k):
            acc -= t[k, j] * x[j]
        x[k] = acc / t[k, k]
    return x


@njit(**JIT)
def project_coeffs(f, u1, u2, u3, th, v1, v2, v3, thn, order, alphas):
    """Re-expand ``f`` from anchor ``(u, th)`` in anchor ``(v, thn)``.

    Matches every polynomial moment of degree <= order; identical anchors
    short-circuit to a copy so equilibria stay bitwise exact.
    """
    if u1 == v1 and u2 == v2 and u3 == v3 and th == thn:
        return f.copy()
    tfrom = moment_matrix(u1, u2, u3, th, order, alphas)
    tto = moment_matrix(v1, v2, v3, thn, order, alphas)
    return forward_sub(tto, np.dot(tfrom, f))


# ---------------------------------------------------------------------------
# macroscopic state of a (possibly raw) coefficient vector
# ---------------------------------------------------------------------------

@njit(**JIT)
def raw_macro(g, ua1, ua2, ua3, tha, special):
    """Density, velocity and temperature of coefficients in anchor (ua, tha)."""
    rho = g[0]
    du1 = g[special[0]] / rho
    du2 = g[special[1]] / rho
    du3 = g[special[2]] / rho
    s2 = g[special[3]] + g[special[4]] + g[special[5]]
    th = tha + (2.0 * s2 - rho * (du1 * du1 + du2 * du2 + du3 * du3)) / (3.0 * rho)
    return rho, ua1 + du1, ua2 + du2, ua3 + du3, th


@njit(**JIT)
def raw_stress(g, tha, rho, du1, du2, du3, th, special):
    """Deviatoric stress tensor of a raw coefficient vector (6 components)."""
    s11 = 2.0 * g[special[3]] + rho * (tha - th) - rho * du1 * du1
    s22 = 2.0 * g[special[4]] + rho * (tha - th) - rho * du2 * du2
    s33 = 2.0 * g[special[5]] + rho * (tha - th) - rho * du3 * du3
    s12 = g[special[6]] - rho * du1 * du2
    s13 = g[special[7]] - rho * du1 * du3
    s23 = g[special[8]] - rho * du2 * du3
    return s11, s22, s33, s12, s13, s23


# ---------------------------------------------------------------------------
# Gaussian closure expansion
# ---------------------------------------------------------------------------

@njit(**JIT)
def gauss_expand(rho, dmu, mm, alphas, down, canon):
    """Coefficients of the Gaussian with mass ``rho``, mean offset ``dmu`` and
    covariance ``tha*I + mm`` expanded in an anchor with temperature ``tha``.

    Each entry follows from the one two degrees down; picking the smallest
    admissible direction makes the walk canonical (the result is direction
    independent, which the tests assert).
    """
    n = alphas.shape[0]
    g = np.empty(n)
    g[0] = rho
    for b in range(1, n):
        i = canon[b]
        bm = down[i, b]
        acc = dmu[i] * g[bm]
        for j in range(3):
            bmj = down[j, bm]
            if bmj >= 0:
                acc += mm[i, j] * g[bmj]
        g[b] = acc / alphas[b, i]
    return g


# ---------------------------------------------------------------------------
# truncated transport operator and HLL interface flux
# ---------------------------------------------------------------------------

@njit(**JIT)
def stream_apply(f, ua1, tha, alphas, up, down):
    """Coefficients of ``xi_1 f`` in the anchor of ``f`` (top degree truncated)."""
    n = f.shape[0]
    out = np.empty(n)
    for b in range(n):
        acc = ua1 * f[b]
        a = down[0, b]
        if a >= 0:
            acc += tha * f[a]
        c = up[0, b]
        if c >= 0:
            acc += (alphas[b, 0] + 1.0) * f[c]
        out[b] = acc
    return out


@njit(**JIT)
def hll_combine(sl, sr, fl, fr, lam_m, lam_p):
    """HLL average of two transported states sharing one anchor."""
    n = sl.shape[0]
    out = np.empty(n)
    if lam_m >= 0.0:
        for b in range(n):
            out[b] = sl[b]
    elif lam_p <= 0.0:
        for b in range(n):
            out[b] = sr[b]
    else:
        span = lam_p - lam_m
        cross = lam_p * lam_m
        for b in range(n):
            out[b] = (lam_p * sl[b] - lam_m * sr[b] + cross * (fr[b] - fl[b])) / span
    return out


# ---------------------------------------------------------------------------
# half-space fluxes and wall ghosts
# ---------------------------------------------------------------------------

@njit(**JIT)
def half_flux_pos(f, ua1, tha, axis1, order):
    """Exact outgoing mass flux ``int_{xi1>0} xi1 f`` of a coefficient vector.

    Only the ``(k,0,0)`` entries survive the transverse marginalization; the
    remaining 1-D integrals reduce to Hermite values at the cut.
    """
    sq = math.sqrt(tha)
    a = -ua1 / sq
    he = np.empty(order + 2)
    he[0] = 1.0
    if order + 2 > 1:
        he[1] = a
    for k in range(2, order + 2):
        he[k] = a * he[k - 1] - (k - 1) * he[k - 2]
    expa = math.exp(-0.5 * a * a)
    erfa = SQRT_HALF_PI * math.erfc(a / math.sqrt(2.0))

    acc = 0.0
    thpow = 1.0
    a_prev = 0.0
    for k in range(order + 1):
        if k == 0:
            a_k = erfa
            b_k = expa
        else:
            a_k = he[k - 1] * expa
            b_k = he[k] * expa + k * a_prev
        acc += f[axis1[k]] * thpow * (ua1 * a_k + sq * b_k)
        a_prev = a_k
        thpow /= sq
    return acc * INV_SQRT_TWO_PI


@njit(**JIT)
def make_ghost(fb, ub1, ub2, ub3, thb, is_left, thw, uw1, uw2, uw3, chi,
               order, tab):
    """Wall ghost state for a compliant boundary cell.

    Diffuse-specular splitting: the diffuse density is set so the ghost's
    re-emitted half-space mass flux cancels the incoming one exactly; a short
    secant loop absorbs the truncation effect of mixing the two parts for
    intermediate accommodation.
    """
    alphas, degree, factorial, up, down, parity, axis1, canon, special = tab
    n = fb.shape[0]

    gm = np.empty(n)
    for b in range(n):
        gm[b] = parity[b] * fb[b]
    if chi == 0.0:
        return gm, -ub1, ub2, ub3, thb

    phi_pos = half_flux_pos(fb, ub1, thb, axis1, order)
    flux_tot = fb[0] * ub1
    if is_left:
        incoming = flux_tot - phi_pos          # <= 0 toward the wall
    else:
        incoming = phi_pos
    emit = math.sqrt(thw) * INV_SQRT_TWO_PI    # outgoing flux per unit density
    rho_w = abs(incoming) / emit
    if rho_w < 0.0:
        rho_w = 0.0

    if chi == 1.0:
        g = np.zeros(n)
        g[0] = rho_w
        return g, uw1, uw2, uw3, thw

    # mix diffuse and specular parts in the mirrored anchor, re-anchor, and
    # tune the diffuse density until the net normal mass flux vanishes
    dmu = np.empty(3)
    dmu[0] = uw1 + ub1
    dmu[1] = uw2 - ub2
    dmu[2] = uw3 - ub3
    mm = np.zeros((3, 3))
    for d in range(3):
        mm[d, d] = thw - thb

    rw = rho_w
    rw_prev = rho_w
    net_prev = 0.0
    g = gm.copy()
    ug1 = -ub1
    ug2 = ub2
    ug3 = ub3
    thg = thb
    scale = abs(incoming) + fb[0] * math.sqrt(thb)
    for it in range(20):
        diff = gauss_expand(rw, dmu, mm, alphas, down, canon)
        mix = np.empty(n)
        for b in range(n):
            mix[b] = (1.0 - chi) * gm[b] + chi * diff[b]
        rho, v1, v2, v3, th = raw_macro(mix, -ub1, ub2, ub3, thb, special)
        if rho <= 0.0 or th <= 0.0:
            break
        g = project_coeffs(mix, -ub1, ub2, ub3, thb, v1, v2, v3, th, order, alphas)
        ug1, ug2, ug3, thg = v1, v2, v3, th
        out_pos = half_flux_pos(g, ug1, thg, axis1, order)
        if is_left:
            net = out_pos + incoming
        else:
            net = (g[0] * ug1 - out_pos) + incoming
        if abs(net) <= 1e-13 * scale:
            break
        if it == 0:
            rw_prev = rw
            net_prev = net
            rw = rw - net / (chi * emit)       # affine predictor
        else:
            dnet = net - net_prev
            if dnet == 0.0:
                break
            step = net * (rw - rw_prev) / dnet
            rw_prev = rw
            net_prev = net
            rw = rw - step
        if rw < 0.0:
            rw = 0.0
    return g, ug1, ug2, ug3, thg


# ---------------------------------------------------------------------------
# collision frequency
# ---------------------------------------------------------------------------

@njit(**JIT)
def frequency(pr, kn, law, w, rho, th):
    if law == 0:
        return SQRT_HALF_PI * (pr / kn) * rho * th ** (1.0 - w)
    return 3.2 * math.sqrt(th / (2.0 * math.pi)) * (pr / kn) * rho


# ---------------------------------------------------------------------------
# local residual
# ---------------------------------------------------------------------------

@njit(**JIT)
def local_norm_sq(r, tha, degree, factorial):
    """Squared weighted L2 norm of a coefficient vector in its anchor."""
    n = r.shape[0]
    c0 = (2.0 * math.pi) ** (-1.5)
    acc = 0.0
    for b in range(n):
        acc += c0 * tha ** (-float(degree[b]) - 3.0) * factorial[b] * r[b] * r[b]
    return acc


@njit(**JIT)
def cell_residual(fc, ua1, ua2, ua3, tha, t_eval,
                  left_wall, right_wall,
                  fl, sl, ul1, thl,
                  fr, sr, ur1, thr,
                  dx, phys, walls, rhs_a, order, tab):
    """Defect ``rhs - R`` of one cell, expressed in the evaluation anchor.

    ``fc`` may be a raw (perturbed) vector; its physics are evaluated at its
    own macroscopic state while all coefficients live in the evaluation
    anchor.  At wall cells the ghost is rebuilt from ``fc`` itself so the
    numerical Jacobian sees the boundary coupling.
    """
    alphas, degree, factorial, up, down, parity, axis1, canon, special = tab
    pr, kn, law, w, fx1, fx2, fx3, cmax = phys
    n = fc.shape[0]
    out = np.empty(n)

    rho, u1, u2, u3, th = raw_macro(fc, ua1, ua2, ua3, tha, special)
    if not (rho > 0.0 and th > 0.0):
        return out, 1

    sc = stream_apply(fc, ua1, tha, alphas, up, down)
    cq = cmax * math.sqrt(th)
    if left_wall or right_wall:
        fcc = project_coeffs(fc, ua1, ua2, ua3, tha, u1, u2, u3, th, order, alphas)

    # wall interfaces use the half-space upwind flux, whose mass row vanishes
    # exactly for the flux-balanced ghost; interior interfaces use HLL
    if left_wall:
        g, ug1, ug2, ug3, thg = make_ghost(
            fcc, u1, u2, u3, th, True,
            walls[0], walls[1], walls[2], walls[3], walls[4], order, tab)
        mw = wall_flux_moments(g, ug1, ug2, ug3, thg,
                               fc, ua1, ua2, ua3, tha, order, alphas)
        flux_l = forward_sub(t_eval, mw)
    else:
        lam_m = min(ul1 - cmax * math.sqrt(thl), u1 - cq)
        lam_p = max(ul1 + cmax * math.sqrt(thl), u1 + cq)
        flux_l = hll_combine(sl, sc, fl, fc, lam_m, lam_p)
    if right_wall:
        g, ug1, ug2, ug3, thg = make_ghost(
            fcc, u1, u2, u3, th, False,
            walls[5], walls[6], walls[7], walls[8], walls[9], order, tab)
        mw = wall_flux_moments(fc, ua1, ua2, ua3, tha,
                               g, ug1, ug2, ug3, thg, order, alphas)
        flux_r = forward_sub(t_eval, mw)
    else:
        lam_m = min(u1 - cq, ur1 - cmax * math.sqrt(thr))
        lam_p = max(u1 + cq, ur1 + cmax * math.sqrt(thr))
        flux_r = hll_combine(sc, sr, fc, fr, lam_m, lam_p)

    s11, s22, s33, s12, s13, s23 = raw_stress(
        fc, tha, rho, u1 - ua1, u2 - ua2, u3 - ua3, th, special)
    nu = frequency(pr, kn, law, w, rho, th)
    fac = (1.0 - 1.0 / pr) / rho
    mm = np.empty((3, 3))
    mm[0, 0] = (th - tha) + fac * s11
    mm[1, 1] = (th - tha) + fac * s22
    mm[2, 2] = (th - tha) + fac * s33
    mm[0, 1] = fac * s12
    mm[1, 0] = fac * s12
    mm[0, 2] = fac * s13
    mm[2, 0] = fac * s13
    mm[1, 2] = fac * s23
    mm[2, 1] = fac * s23
    dmu = np.empty(3)
    dmu[0] = u1 - ua1
    dmu[1] = u2 - ua2
    dmu[2] = u3 - ua3
    ges = gauss_expand(rho, dmu, mm, alphas, down, canon)

    inv_dx = 1.0 / dx
    for b in range(n):
        gb = 0.0
        a = down[0, b]
        if a >= 0:
            gb += fx1 * fc[a]
        a = down[1, b]
        if a >= 0:
            gb += fx2 * fc[a]
        a = down[2, b]
        if a >= 0:
            gb += fx3 * fc[a]
        qb = nu * (ges[b] - fc[b])
        out[b] = rhs_a[b] - ((flux_r[b] - flux_l[b]) * inv_dx - gb - qb)
    return out, 0


# ---------------------------------------------------------------------------
# dense linear solve (LU with partial pivoting via LAPACK)
# ---------------------------------------------------------------------------

@njit(**JIT)
def lu_solve(a, b):
    """Solve ``a x = b``; returns ``(x, 0)`` or ``(b, 1)`` when singular."""
    try:
        return np.linalg.solve(a, b), 0
    except Exception:
        return b.copy(), 1


# ---------------------------------------------------------------------------
# positivity relaxation bound
# ---------------------------------------------------------------------------

@njit(**JIT)
def relaxation_tau(f0, df0, s1, s2, dtheta, rho_floor):
    """Largest step fraction (capped at 1) keeping density and temperature
    above their floors; ``dtheta`` is the current headroom above the floor."""
    tau = 1.0
    if df0 < 0.0:
        t = (rho_floor - f0) / df0
        if t < tau:
            tau = t
    qa = s1 - 2.0 * df0 * s2 - 3.0 * dtheta * df0 * df0
    qb = -2.0 * f0 * (s2 + 3.0 * df0 * dtheta)
    qc = -3.0 * f0 * f0 * dtheta
    if qa == 0.0:
        if qb > 0.0:
            t = -qc / qb
            if t < tau:
                tau = t
    elif qa > 0.0:
        disc = qb * qb - 4.0 * qa * qc
        if disc < 0.0:
            disc = 0.0
        root = math.sqrt(disc)
        if qb > 0.0:
            t = 2.0 * qc / (-qb - root)
        else:
            t = (-qb + root) / (2.0 * qa)
        if t < tau:
            tau = t
    else:
        if qb > 0.0:
            disc = qb * qb - 4.0 * qa * qc
            if disc > 0.0:
                root = math.sqrt(disc)
                t = 2.0 * qc / (-qb - root)
                if t < tau:
                    tau = t
    if tau < 0.0:
        tau = 0.0
    return tau


# ---------------------------------------------------------------------------
# finite-difference Jacobian
# ---------------------------------------------------------------------------

@njit(**JIT)
def fd_jacobian(fc, ua1, ua2, ua3, tha, t_eval,
                left_wall, right_wall,
                fl, sl, ul1, thl, fr, sr, ur1, thr,
                dx, phys, walls, rhs_a, r0, fd_floor, order, tab):
    """Column-wise forward differences of the residual in the evaluation
    anchor; the perturbation floor is scale aware so zero coefficients still
    get a meaningful column."""
    degree = tab[1]
    n = fc.shape[0]
    jac = np.empty((n, n))
    rho_i = fc[0]
    for k in range(n):
        scale = abs(fc[k])
        floor = fd_floor * rho_i * tha ** (0.5 * float(degree[k]))
        if floor > scale:
            scale = floor
        delta = SQRT_EPS * scale
        if delta <= 0.0:
            return jac, 2
        fp = fc.copy()
        fp[k] += delta
        rk, st = cell_residual(fp, ua1, ua2, ua3, tha, t_eval,
                               left_wall, right_wall,
                               fl, sl, ul1, thl, fr, sr, ur1, thr,
                               dx, phys, walls, rhs_a, order, tab)
        if st != 0:
            return jac, st
        inv = 1.0 / delta
        for b in range(n):
            jac[b, k] = -(rk[b] - r0[b]) * inv
    return jac, 0


# ---------------------------------------------------------------------------
# local Newton iteration and SGS sweep
# ---------------------------------------------------------------------------

@njit(**JIT)
def newton_cell(coeffs, us, ths, i, n_cells, dx_i,
                has_rhs, rhs_m, phys, walls, ncfg, order, tab):
    """Algorithm: residual, FD Jacobian, regularized solve, damped update,
    re-anchor; stops on tolerance, residual halving or the step cap.

    Returns ``(steps, clips, singular, status)``.
    """
    alphas, degree, factorial, up, down, parity, axis1, canon, special = tab
    reg_weight, loc_tol, max_steps, halving, fd_floor, rho_floor, theta_floor = ncfg
    n = coeffs.shape[1]

    left_wall = i == 0
    right_wall = i == n_cells - 1
    ml = np.zeros(n)
    mr = np.zeros(n)
    ul1 = 0.0
    thl = 1.0
    ur1 = 0.0
    thr = 1.0
    if not left_wall:
        tl = moment_matrix(us[i - 1, 0], us[i - 1, 1], us[i - 1, 2], ths[i - 1],
                           order, alphas)
        ml = np.dot(tl, coeffs[i - 1])
        ul1 = us[i - 1, 0]
        thl = ths[i - 1]
    if not right_wall:
        tr = moment_matrix(us[i + 1, 0], us[i + 1, 1], us[i + 1, 2], ths[i + 1],
                           order, alphas)
        mr = np.dot(tr, coeffs[i + 1])
        ur1 = us[i + 1, 0]
        thr = ths[i + 1]

    fc = coeffs[i].copy()
    ua1 = us[i, 0]
    ua2 = us[i, 1]
    ua3 = us[i, 2]
    tha = ths[i]

    steps = 0
    clips = 0
    singular = 0
    status = 0
    dummy = np.zeros(n)
    norm0 = 0.0
    for it in range(int(max_steps) + 1):
        t_eval = moment_matrix(ua1, ua2, ua3, tha, order, alphas)
        if has_rhs:
            rhs_a = forward_sub(t_eval, rhs_m)
        else:
            rhs_a = np.zeros(n)
        if left_wall:
            fl = dummy
            sl = dummy
        else:
            same = (us[i - 1, 0] == ua1 and us[i - 1, 1] == ua2
                    and us[i - 1, 2] == ua3 and ths[i - 1] == tha)
            fl = coeffs[i - 1].copy() if same else forward_sub(t_eval, ml)
            sl = stream_apply(fl, ua1, tha, alphas, up, down)
        if right_wall:
            fr = dummy
            sr = dummy
        else:
            same = (us[i + 1, 0] == ua1 and us[i + 1, 1] == ua2
                    and us[i + 1, 2] == ua3 and ths[i + 1] == tha)
            fr = coeffs[i + 1].copy() if same else forward_sub(t_eval, mr)
            sr = stream_apply(fr, ua1, tha, alphas, up, down)

        r0, st = cell_residual(fc, ua1, ua2, ua3, tha, t_eval,
                               left_wall, right_wall,
                               fl, sl, ul1, thl, fr, sr, ur1, thr,
                               dx_i, phys, walls, rhs_a, order, tab)
        if st != 0:
            status = st
            break
        nrm = math.sqrt(local_norm_sq(r0, tha, degree, factorial))
        if not math.isfinite(nrm):
            status = 2
            break
        if it == 0:
            norm0 = nrm
        if nrm <= loc_tol:
            break
        if halving != 0.0 and it >= 1 and nrm <= 0.5 * norm0:
            break
        if it == int(max_steps):
            break

        jac, st = fd_jacobian(fc, ua1, ua2, ua3, tha, t_eval,
                              left_wall, right_wall,
                              fl, sl, ul1, thl, fr, sr, ur1, thr,
                              dx_i, phys, walls, rhs_a, r0, fd_floor,
                              order, tab)
        if st != 0:
            status = st
            break

        shift = reg_weight * nrm
        for d in range(n):
            jac[d, d] += shift
        dfv, sing_flag = lu_solve(jac, r0)
        if sing_flag != 0:
            singular += 1
            break

        s1 = (dfv[special[0]] ** 2 + dfv[special[1]] ** 2 + dfv[special[2]] ** 2)
        s2 = dfv[special[3]] + dfv[special[4]] + dfv[special[5]]
        tau = relaxation_tau(fc[0], dfv[0], s1, s2, tha - theta_floor, rho_floor)
        if tau < 1.0:
            clips += 1
        if tau <= 0.0:
            break
        fstar = fc + tau * dfv
        rho, v1, v2, v3, th = raw_macro(fstar, ua1, ua2, ua3, tha, special)
        t_new = moment_matrix(v1, v2, v3, th, order, alphas)
        fc = forward_sub(t_new, np.dot(t_eval, fstar))
        ua1, ua2, ua3, tha = v1, v2, v3, th
        steps += 1

    coeffs[i] = fc
    us[i, 0] = ua1
    us[i, 1] = ua2
    us[i, 2] = ua3
    ths[i] = tha
    return steps, clips, singular, status


@njit(**JIT)
def sgs_sweep_kernel(coeffs, us, ths, dxs, has_rhs, rhs_m,
                     phys, walls, ncfg, order, tab):
    """One symmetric Gauss-Seidel sweep: forward then backward cell loop,
    each cell solved with the freshest neighbor states (in-place updates)."""
    n_cells = coeffs.shape[0]
    steps = 0
    clips = 0
    singular = 0
    for i in range(n_cells):
        s, c, g, st = newton_cell(coeffs, us, ths, i, n_cells, dxs[i],
                                  has_rhs, rhs_m[i], phys, walls, ncfg,
                                  order, tab)
        steps += s
        clips += c
        singular += g
        if st != 0:
            return steps, clips, singular, st
    for i in range(n_cells - 1, -1, -1):
        s, c, g, st = newton_cell(coeffs, us, ths, i, n_cells, dxs[i],
                                  has_rhs, rhs_m[i], phys, walls, ncfg,
                                  order, tab)
        steps += s
        clips += c
        singular += g
        if st != 0:
            return steps, clips, singular, st
    return steps, clips, singular, 0


# ---------------------------------------------------------------------------
# field-level residual assembly
# ---------------------------------------------------------------------------

@njit(**JIT)
def assemble_kernel(coeffs, us, ths, dxs, has_rhs, rhs_m,
                    phys, walls, order, tab):
    """Per-cell defects ``rhs - R`` in each cell's own anchor plus their
    weighted norms; returns ``(rt, norms, status)``."""
    alphas, degree, factorial, up, down, parity, axis1, canon, special = tab
    n_cells, n = coeffs.shape
    rt = np.empty((n_cells, n))
    norms = np.empty(n_cells)
    moments = np.empty((n_cells, n))
    for i in range(n_cells):
        t = moment_matrix(us[i, 0], us[i, 1], us[i, 2], ths[i], order, alphas)
        moments[i] = np.dot(t, coeffs[i])
    dummy = np.zeros(n)
    for i in range(n_cells):
        ua1 = us[i, 0]
        ua2 = us[i, 1]
        ua3 = us[i, 2]
        tha = ths[i]
        t_eval = moment_matrix(ua1, ua2, ua3, tha, order, alphas)
        if has_rhs:
            rhs_a = forward_sub(t_eval, rhs_m[i])
        else:
            rhs_a = np.zeros(n)
        left_wall = i == 0
        right_wall = i == n_cells - 1
        fl = dummy
        sl = dummy
        ul1 = 0.0
        thl = 1.0
        fr = dummy
        sr = dummy
        ur1 = 0.0
        thr = 1.0
        if not left_wall:
            same = (us[i - 1, 0] == ua1 and us[i - 1, 1] == ua2
                    and us[i - 1, 2] == ua3 and ths[i - 1] == tha)
            fl = coeffs[i - 1].copy() if same else forward_sub(t_eval, moments[i - 1])
            sl = stream_apply(fl, ua1, tha, alphas, up, down)
            ul1 = us[i - 1, 0]
            thl = ths[i - 1]
        if not right_wall:
            same = (us[i + 1, 0] == ua1 and us[i + 1, 1] == ua2
                    and us[i + 1, 2] == ua3 and ths[i + 1] == tha)
            fr = coeffs[i + 1].copy() if same else forward_sub(t_eval, moments[i + 1])
            sr = stream_apply(fr, ua1, tha, alphas, up, down)
            ur1 = us[i + 1, 0]
            thr = ths[i + 1]
        r, st = cell_residual(coeffs[i], ua1, ua2, ua3, tha, t_eval,
                              left_wall, right_wall,
                              fl, sl, ul1, thl, fr, sr, ur1, thr,
                              dxs[i], phys, walls, rhs_a, order, tab)
        if st != 0:
            return rt, norms, st
        rt[i] = r
        norms[i] = math.sqrt(local_norm_sq(r, tha, degree, factorial))
    return rt, norms, 0


# ---------------------------------------------------------------------------
# explicit pseudo-time marcher
# ---------------------------------------------------------------------------

@njit(**JIT)
def pseudo_step_kernel(coeffs, us, ths, dxs, cfl, phys, walls, order, tab):
    """Forward-Euler relaxation step with per-cell CFL time steps."""
    alphas, degree, factorial, up, down, parity, axis1, canon, special = tab
    cmax = phys[7]
    n_cells, n = coeffs.shape
    rhs_m = np.zeros((n_cells, n))
    rt, norms, st = assemble_kernel(coeffs, us, ths, dxs, False, rhs_m,
                                    phys, walls, order, tab)
    if st != 0:
        return st
    for i in range(n_cells):
        speed = abs(us[i, 0]) + cmax * math.sqrt(ths[i])
        dt = cfl * dxs[i] / speed
        fnew = coeffs[i] + dt * rt[i]
        rho, v1, v2, v3, th = raw_macro(fnew, us[i, 0], us[i, 1], us[i, 2],
                                        ths[i], special)
        if not (rho > 0.0 and th > 0.0):
            return 1
        coeffs[i] = project_coeffs(fnew, us[i, 0], us[i, 1], us[i, 2], ths[i],
                                   v1, v2, v3, th, order, alphas)
        us[i, 0] = v1
        us[i, 1] = v2
        us[i, 2] = v3
        ths[i] = th
    return 0


# ---------------------------------------------------------------------------
# grid-transfer kernels
# ---------------------------------------------------------------------------

@njit(**JIT)
def restrict_field_kernel(fcoeffs, fus, fths, fdx, order, tab):
    """Conservative two-cell merge: anchors from the mass/momentum/energy
    balances, coefficients by width-weighted averaging in the merged anchor."""
    alphas = tab[0]
    special = tab[8]
    nf, n = fcoeffs.shape
    nc = nf // 2
    cc = np.empty((nc, n))
    cu = np.empty((nc, 3))
    cth = np.empty(nc)
    for i in range(nc):
        j = 2 * i
        dx0 = fdx[j]
        dx1 = fdx[j + 1]
        dxh = dx0 + dx1
        r0 = fcoeffs[j, 0]
        r1 = fcoeffs[j + 1, 0]
        mass = r0 * dx0 + r1 * dx1
        rho = mass / dxh
        v1 = (r0 * fus[j, 0] * dx0 + r1 * fus[j + 1, 0] * dx1) / mass
        v2 = (r0 * fus[j, 1] * dx0 + r1 * fus[j + 1, 1] * dx1) / mass
        v3 = (r0 * fus[j, 2] * dx0 + r1 * fus[j + 1, 2] * dx1) / mass
        e0 = r0 * (fus[j, 0] ** 2 + fus[j, 1] ** 2 + fus[j, 2] ** 2) + 3.0 * r0 * fths[j]
        e1 = r1 * (fus[j + 1, 0] ** 2 + fus[j + 1, 1] ** 2 + fus[j + 1, 2] ** 2) + 3.0 * r1 * fths[j + 1]
        th = ((e0 * dx0 + e1 * dx1) / dxh - rho * (v1 * v1 + v2 * v2 + v3 * v3)) / (3.0 * rho)
        if th <= 0.0:
            return cc, cu, cth, 1
        g0 = project_coeffs(fcoeffs[j], fus[j, 0], fus[j, 1], fus[j, 2], fths[j],
                            v1, v2, v3, th, order, alphas)
        g1 = project_coeffs(fcoeffs[j + 1], fus[j + 1, 0], fus[j + 1, 1],
                            fus[j + 1, 2], fths[j + 1], v1, v2, v3, th,
                            order, alphas)
        for b in range(n):
            cc[i, b] = (g0[b] * dx0 + g1[b] * dx1) / dxh
        cu[i, 0] = v1
        cu[i, 1] = v2
        cu[i, 2] = v3
        cth[i] = th
    return cc, cu, cth, 0


@njit(**JIT)
def restrict_raw_kernel(rfine, fus, fths, fdx, cu, cth, order, alphas):
    """Width-weighted average of per-cell raw vectors re-expanded in the
    coarse anchors (used for residual transfer)."""
    nf, n = rfine.shape
    nc = nf // 2
    rc = np.empty((nc, n))
    for i in range(nc):
        j = 2 * i
        dx0 = fdx[j]
        dx1 = fdx[j + 1]
        dxh = dx0 + dx1
        g0 = project_coeffs(rfine[j], fus[j, 0], fus[j, 1], fus[j, 2], fths[j],
                            cu[i, 0], cu[i, 1], cu[i, 2], cth[i], order, alphas)
        g1 = project_coeffs(rfine[j + 1], fus[j + 1, 0], fus[j + 1, 1],
                            fus[j + 1, 2], fths[j + 1],
                            cu[i, 0], cu[i, 1], cu[i, 2], cth[i], order, alphas)
        for b in range(n):
            rc[i, b] = (g0[b] * dx0 + g1[b] * dx1) / dxh
    return rc


@njit(**JIT)
def prolong_correct_kernel(fcoeffs, fus, fths, bc, bu, bth, sc, su, sth,
                           rho_floor, theta_floor, order, tab):
    """Identity prolongation with additive coarse change, positivity-guarded.

    The coarse change is halved (up to 10 times) for any fine cell it would
    push below the density/temperature floors; each corrected cell is then
    re-anchored to its own macroscopic state.
    """
    alphas = tab[0]
    special = tab[8]
    nf, n = fcoeffs.shape
    for k in range(nf):
        i = k // 2
        ua1 = fus[k, 0]
        ua2 = fus[k, 1]
        ua3 = fus[k, 2]
        tha = fths[k]
        base = project_coeffs(bc[i], bu[i, 0], bu[i, 1], bu[i, 2], bth[i],
                              ua1, ua2, ua3, tha, order, alphas)
        solved = project_coeffs(sc[i], su[i, 0], su[i, 1], su[i, 2], sth[i],
                                ua1, ua2, ua3, tha, order, alphas)
        delta = solved - base
        ok = False
        cand = fcoeffs[k].copy()
        rho = 0.0
        v1 = 0.0
        v2 = 0.0
        v3 = 0.0
        th = 0.0
        for attempt in range(11):
            cand = fcoeffs[k] + delta
            rho, v1, v2, v3, th = raw_macro(cand, ua1, ua2, ua3, tha, special)
            if rho >= rho_floor and th >= theta_floor:
                ok = True
                break
            for b in range(n):
                delta[b] *= 0.5
        if not ok:
            continue
        fcoeffs[k] = project_coeffs(cand, ua1, ua2, ua3, tha, v1, v2, v3, th,
                                    order, alphas)
        fus[k, 0] = v1
        fus[k, 1] = v2
        fus[k, 2] = v3
        fths[k] = th
    return 0

"""Compiled kernels for the built-in anisotropies.

Mirrors the numpy reference path in :mod:`aniflow.anisotropy`,
:mod:`aniflow.flow_matrix` and :mod:`aniflow.assembly`; the test-suite checks
both paths against each other.  Anisotropy codes and parameter layouts are
the ones exposed by the ``code``/``params`` attributes of the built-ins.
"""
import math

import numpy as np
from numba import njit

ISOTROPIC, QUADRATIC, SIN2D, REG_L1 = 0, 1, 2, 3
MOB_ONE, MOB_INV_PHI = 0, 1

OK, MAX_ITER, INCREASING, SINGULAR, DEGENERATE = 0, 1, 2, 3, 4

DEGENERATE_EDGE = 1e-10  # relative to h, i.e. |x_rho| < 1e-10
PIVOT_TOL = 1e-13
BACKWARD_ERROR_TOL = 1e-12

# numpy error model: no per-division zero checks in the hot loops
_jit = njit(cache=True, error_model="numpy")
_inline = njit(cache=True, error_model="numpy", inline="always")


@_inline
def phi_derivs(code, params, p, g, Hs, hess):
    """Return phi(p); fill g with phi'(p) and, if ``hess``, Hs with phi''(p)."""
    d = p.shape[0]
    r2 = 0.0
    for i in range(d):
        r2 += p[i] * p[i]
    r = math.sqrt(r2)
    if code == ISOTROPIC:
        for i in range(d):
            g[i] = p[i] / r
            for k in range(d * hess):
                Hs[i, k] = ((1.0 if i == k else 0.0) - p[i] * p[k] / r2) / r
        return r
    if code == QUADRATIC:
        q = 0.0
        for i in range(d):
            q += params[i] * p[i] * p[i]
        f = math.sqrt(q)
        for i in range(d):
            g[i] = params[i] * p[i] / f
        if hess:
            for i in range(d):
                for k in range(d):
                    Hs[i, k] = ((params[i] if i == k else 0.0) - g[i] * g[k]) / f
        return f
    if code == SIN2D:
        kk = params[0]
        delta = params[1]
        theta = math.atan2(p[1], p[0])
        s = math.sin(kk * theta)
        c = math.cos(kk * theta)
        gg = 1.0 + delta * s
        dg = delta * kk * c
        d2g = -delta * kk * kk * s
        er0 = p[0] / r
        er1 = p[1] / r
        et0 = -er1
        et1 = er0
        g[0] = gg * er0 + dg * et0
        g[1] = gg * er1 + dg * et1
        a = (gg + d2g) / r
        Hs[0, 0] = a * et0 * et0
        Hs[0, 1] = a * et0 * et1
        Hs[1, 0] = a * et1 * et0
        Hs[1, 1] = a * et1 * et1
        return r * gg
    # regularized l1: s_i = sqrt(A_i p . p) with A_i = d2 Id + (1 - d2) e_i e_i^T
    d2 = params[0] * params[0]
    f = 0.0
    for i in range(d):
        g[i] = 0.0
        for k in range(d):
            Hs[i, k] = 0.0
    for i in range(d):
        si = math.sqrt((1.0 - d2) * p[i] * p[i] + d2 * r2)
        f += si
        for k in range(d):
            apk = d2 * p[k] + ((1.0 - d2) * p[i] if k == i else 0.0)
            g[k] += apk / si
            for l in range(d * hess):
                apl = d2 * p[l] + ((1.0 - d2) * p[i] if l == i else 0.0)
                aik = 0.0
                if k == l:
                    aik = 1.0 if k == i else d2
                Hs[k, l] += (aik - apk * apl / (si * si)) / si
    return f


@_inline
def phi_value(code, params, p):
    d = p.shape[0]
    r2 = 0.0
    for i in range(d):
        r2 += p[i] * p[i]
    if code == ISOTROPIC:
        return math.sqrt(r2)
    if code == QUADRATIC:
        q = 0.0
        for i in range(d):
            q += params[i] * p[i] * p[i]
        return math.sqrt(q)
    if code == SIN2D:
        return math.sqrt(r2) * (1.0 + params[1] * math.sin(params[0] * math.atan2(p[1], p[0])))
    d2 = params[0] * params[0]
    f = 0.0
    for i in range(d):
        f += math.sqrt((1.0 - d2) * p[i] * p[i] + d2 * r2)
    return f


@_inline
def _flow_H(code, params, mcode, p, g, Hs, w, out, j):
    """Closed-form H(p) written into ``out[j]``; ``g``, ``Hs``, ``w`` are scratch."""
    d = p.shape[0]
    f = phi_derivs(code, params, p, g, Hs, False)
    r2 = 0.0
    for i in range(d):
        r2 += p[i] * p[i]
    r = math.sqrt(r2)
    m = 1.0 if mcode == MOB_ONE else r / f
    alpha = m * r * f
    gt = 0.0
    for i in range(d):
        gt += g[i] * p[i] / r
    ww = 0.0
    for i in range(d):
        w[i] = (r / f) * (g[i] - gt * p[i] / r)
        ww += w[i] * w[i]
    for i in range(d):
        ti = p[i] / r
        for k in range(d):
            tk = p[k] / r
            num = w[i] * (tk - w[k]) - ti * (w[k] + ww * tk)
            out[j, i, k] = alpha * ((1.0 if i == k else 0.0) + num / (1.0 + ww))


@_jit
def element_H(code, params, mcode, X, h, H):
    """H at the (old) edge derivative of every element; returns 0 or DEGENERATE."""
    J, d = X.shape
    p = np.empty(d)
    g = np.empty(d)
    Hs = np.empty((d, d))
    w = np.empty(d)
    for j in range(J):
        n2 = 0.0
        for i in range(d):
            p[i] = (X[j, i] - X[j - 1, i]) / h
            n2 += p[i] * p[i]
        if math.sqrt(n2) < DEGENERATE_EDGE:
            return DEGENERATE
        _flow_H(code, params, mcode, p, g, Hs, w, H, j)
    return OK


@_jit
def _element_fluxes(code, params, E0, dx, h, G, S, with_jac):
    """Phi'(x_rho) and Phi''(x_rho) per element of x_old + dx."""
    J, d = E0.shape
    p = np.empty(d)
    g = np.empty(d)
    Hs = np.empty((d, d))
    for j in range(J):
        n2 = 0.0
        for i in range(d):
            p[i] = (E0[j, i] + dx[j, i] - dx[j - 1, i]) / h
            n2 += p[i] * p[i]
        if math.sqrt(n2) < DEGENERATE_EDGE:
            return DEGENERATE
        f = phi_derivs(code, params, p, g, Hs, with_jac)
        for i in range(d):
            G[j, i] = f * g[i]
        if with_jac:
            for i in range(d):
                for k in range(d):
                    S[j, i, k] = g[i] * g[k] + f * Hs[i, k]
    return OK


@_jit
def mass_apply(H, v, h, lumped, out):
    """H-weighted mass operator (consistent or lumped) applied to nodal ``v``."""
    J, d = v.shape
    for j in range(J):
        jp = (j + 1) % J
        for i in range(d):
            acc = 0.0
            for k in range(d):
                if lumped:
                    acc += 0.5 * h * (H[j, i, k] + H[jp, i, k]) * v[j, k]
                else:
                    acc += h / 6.0 * (H[j, i, k] * (v[j - 1, k] + 2.0 * v[j, k])
                                      + H[jp, i, k] * (2.0 * v[j, k] + v[jp, k]))
            out[j, i] = acc


@_jit
def assemble(code, params, E0, dx, H, h, dt, lumped, force, R, Lo, Di, Up, with_jac):
    """Residual (and Jacobian blocks) of one implicit step at increment ``dx``.

    ``E0`` are the old edge vectors, ``force`` the nodal forcing values
    (already evaluated at the forcing time), ``H`` the frozen element matrices.
    """
    J, d = dx.shape
    G = np.empty((J, d))
    S = np.empty((J, d, d))
    st = _element_fluxes(code, params, E0, dx, h, G, S, with_jac)
    if st != OK:
        return st
    mass_apply(H, dx, h, lumped, R)
    for j in range(J):
        jp = (j + 1) % J
        for i in range(d):
            R[j, i] = R[j, i] / dt + G[j, i] - G[jp, i] - h * force[j, i]
    if with_jac:
        c = h / dt
        for j in range(J):
            jp = (j + 1) % J
            for i in range(d):
                for k in range(d):
                    if lumped:
                        Lo[j, i, k] = -S[j, i, k] / h
                        Up[j, i, k] = -S[jp, i, k] / h
                        Di[j, i, k] = 0.5 * c * (H[j, i, k] + H[jp, i, k]) + (S[j, i, k] + S[jp, i, k]) / h
                    else:
                        Lo[j, i, k] = c / 6.0 * H[j, i, k] - S[j, i, k] / h
                        Up[j, i, k] = c / 6.0 * H[jp, i, k] - S[jp, i, k] / h
                        Di[j, i, k] = c / 3.0 * (H[j, i, k] + H[jp, i, k]) + (S[j, i, k] + S[jp, i, k]) / h
    return OK


@_inline
def _small_solve(A, B, X, M, Y):
    """Solve A X = B (d x d, d x k) by partial pivoting; return min |pivot| / max |A|.

    ``M`` and ``Y`` are scratch arrays shaped like ``A`` and ``B``.
    """
    d = A.shape[0]
    k = B.shape[1]
    for i in range(d):
        for l in range(d):
            M[i, l] = A[i, l]
        for l in range(k):
            Y[i, l] = B[i, l]
    scale = 0.0
    for i in range(d):
        for l in range(d):
            scale = max(scale, abs(M[i, l]))
    if scale == 0.0:
        return 0.0
    minpiv = np.inf
    for col in range(d):
        piv = col
        for i in range(col + 1, d):
            if abs(M[i, col]) > abs(M[piv, col]):
                piv = i
        if piv != col:
            for l in range(d):
                tmp = M[col, l]
                M[col, l] = M[piv, l]
                M[piv, l] = tmp
            for l in range(k):
                tmp = Y[col, l]
                Y[col, l] = Y[piv, l]
                Y[piv, l] = tmp
        pv = M[col, col]
        minpiv = min(minpiv, abs(pv) / scale)
        if pv == 0.0:
            return 0.0
        for i in range(col + 1, d):
            fct = M[i, col] / pv
            if fct != 0.0:
                for l in range(col, d):
                    M[i, l] -= fct * M[col, l]
                for l in range(k):
                    Y[i, l] -= fct * Y[col, l]
    for col in range(d - 1, -1, -1):
        for l in range(k):
            acc = Y[col, l]
            for i in range(col + 1, d):
                acc -= M[col, i] * X[i, l]
            X[col, l] = acc / M[col, col]
    return minpiv


@_jit
def cyclic_block_solve(Lo, Di, Up, b, x):
    """Solve the periodic block-tridiagonal system by bordered block elimination.

    Row j reads ``Lo[j] x[j-1] + Di[j] x[j] + Up[j] x[j+1] = b[j]`` (indices
    mod J).  The last node acts as the border unknown.  Returns the smallest
    relative pivot encountered (0 for an exactly singular system).
    """
    J, d = b.shape
    n = J - 1
    G = np.empty((n, d, d))
    F = np.empty((n, d, d))
    Y = np.empty((n, d))
    rhs = np.empty((d, 2 * d + 1))
    sol = np.empty((d, 2 * d + 1))
    S = np.empty((d, d))
    Ms = np.empty((d, d))
    Ys = np.empty((d, 2 * d + 1))
    minpiv = np.inf
    for j in range(n):
        # S = Di[j] - Lo[j] G[j-1];  rhs = [Up[j] | -Lo[j] F[j-1] | b[j] - Lo[j] Y[j-1]]
        for i in range(d):
            for k in range(d):
                S[i, k] = Di[j, i, k]
                rhs[i, k] = Up[j, i, k]
                rhs[i, d + k] = Lo[j, i, k] if j == 0 else 0.0
            rhs[i, 2 * d] = b[j, i]
        if j > 0:
            for i in range(d):
                for k in range(d):
                    accS = 0.0
                    accF = 0.0
                    for l in range(d):
                        accS += Lo[j, i, l] * G[j - 1, l, k]
                        accF += Lo[j, i, l] * F[j - 1, l, k]
                    S[i, k] -= accS
                    rhs[i, d + k] = -accF
                accY = 0.0
                for l in range(d):
                    accY += Lo[j, i, l] * Y[j - 1, l]
                rhs[i, 2 * d] -= accY
        piv = _small_solve(S, rhs, sol, Ms, Ys)
        minpiv = min(minpiv, piv)
        if piv == 0.0:
            return 0.0
        for i in range(d):
            for k in range(d):
                G[j, i, k] = sol[i, k]
                F[j, i, k] = sol[i, d + k]
            Y[j, i] = sol[i, 2 * d]
    # back substitution x_j = P_j - Q_j z with z = x[J-1]
    P = np.empty((n, d))
    Q = np.empty((n, d, d))
    for i in range(d):
        P[n - 1, i] = Y[n - 1, i]
        for k in range(d):
            Q[n - 1, i, k] = G[n - 1, i, k] + F[n - 1, i, k]
    for j in range(n - 2, -1, -1):
        for i in range(d):
            acc = Y[j, i]
            for l in range(d):
                acc -= G[j, i, l] * P[j + 1, l]
            P[j, i] = acc
            for k in range(d):
                acc = F[j, i, k]
                for l in range(d):
                    acc -= G[j, i, l] * Q[j + 1, l, k]
                Q[j, i, k] = acc
    last = J - 1
    zr = np.empty((d, 1))
    zs = np.empty((d, 1))
    for i in range(d):
        acc = b[last, i]
        for l in range(d):
            acc -= Lo[last, i, l] * P[n - 1, l] + Up[last, i, l] * P[0, l]
        zr[i, 0] = acc
        for k in range(d):
            acc = Di[last, i, k]
            for l in range(d):
                acc -= Lo[last, i, l] * Q[n - 1, l, k] + Up[last, i, l] * Q[0, l, k]
            S[i, k] = acc
    piv = _small_solve(S, zr, zs, Ms, Ys[:, :1])
    minpiv = min(minpiv, piv)
    if piv == 0.0:
        return 0.0
    for i in range(d):
        x[last, i] = zs[i, 0]
    for j in range(n):
        for i in range(d):
            acc = P[j, i]
            for k in range(d):
                acc -= Q[j, i, k] * zs[k, 0]
            x[j, i] = acc
    return minpiv


@_jit
def block_matvec(Lo, Di, Up, x, out):
    J, d = x.shape
    for j in range(J):
        jp = (j + 1) % J
        for i in range(d):
            acc = 0.0
            for k in range(d):
                acc += Lo[j, i, k] * x[j - 1, k] + Di[j, i, k] * x[j, k] + Up[j, i, k] * x[jp, k]
            out[j, i] = acc


@_jit
def backward_error(Lo, Di, Up, b, x):
    """Max-norm residual divided by ``||A||_inf ||x||_inf + ||b||_inf``."""
    J, d = x.shape
    r = np.empty((J, d))
    block_matvec(Lo, Di, Up, x, r)
    res = 0.0
    anorm = 0.0
    xnorm = 0.0
    bnorm = 0.0
    for j in range(J):
        for i in range(d):
            res = max(res, abs(r[j, i] - b[j, i]))
            xnorm = max(xnorm, abs(x[j, i]))
            bnorm = max(bnorm, abs(b[j, i]))
            row = 0.0
            for k in range(d):
                row += abs(Lo[j, i, k]) + abs(Di[j, i, k]) + abs(Up[j, i, k])
            anorm = max(anorm, row)
    denom = anorm * xnorm + bnorm
    if denom == 0.0:
        return 0.0
    return res / denom


@_jit
def _norm2(a):
    s = 0.0
    for v in a.ravel():
        s += v * v
    return math.sqrt(s)


@_jit
def energy_Phi(code, params, X, h):
    J, d = X.shape
    p = np.empty(d)
    e = 0.0
    for j in range(J):
        for i in range(d):
            p[i] = (X[j, i] - X[j - 1, i]) / h
        f = phi_value(code, params, p)
        e += 0.5 * f * f * h
    return e


@_jit
def newton_step(code, params, mcode, X_old, h, dt, lumped, force,
                tol_res, tol_step, max_iter, X_new, stats):
    """One implicit time step by Newton's method on the increment.

    ``stats`` receives ``[status, iterations, residual, dissipation,
    E_Phi_old, E_Phi_new]``.
    """
    J, d = X_old.shape
    H = np.empty((J, d, d))
    st = element_H(code, params, mcode, X_old, h, H)
    stats[0] = st
    stats[1] = 0
    stats[2] = np.nan
    if st != OK:
        return
    E0 = np.empty((J, d))
    for j in range(J):
        for i in range(d):
            E0[j, i] = X_old[j, i] - X_old[j - 1, i]
    dx = np.zeros((J, d))
    R = np.empty((J, d))
    Lo = np.empty((J, d, d))
    Di = np.empty((J, d, d))
    Up = np.empty((J, d, d))
    s = np.empty((J, d))
    negR = np.empty((J, d))
    st = assemble(code, params, E0, dx, H, h, dt, lumped, force, R, Lo, Di, Up, True)
    if st != OK:
        stats[0] = st
        return
    rnorm = _norm2(R)
    xnorm = _norm2(X_old)
    it = 0
    increases = 0
    status = OK
    while rnorm > tol_res:
        if it >= max_iter:
            status = MAX_ITER
            break
        for j in range(J):
            for i in range(d):
                negR[j, i] = -R[j, i]
        piv = cyclic_block_solve(Lo, Di, Up, negR, s)
        # the Newton residual test checks each solve; only guard against breakdown here
        if piv < PIVOT_TOL:
            status = SINGULAR
            break
        for j in range(J):
            for i in range(d):
                dx[j, i] += s[j, i]
        it += 1
        st = assemble(code, params, E0, dx, H, h, dt, lumped, force, R, Lo, Di, Up, False)
        if st != OK:
            status = st
            break
        new_rnorm = _norm2(R)
        if new_rnorm <= tol_res:
            rnorm = new_rnorm
            break
        if _norm2(s) <= tol_step * (1.0 + xnorm):
            rnorm = new_rnorm
            break
        if new_rnorm > rnorm:
            increases += 1
            if increases >= 2:
                rnorm = new_rnorm
                status = INCREASING
                break
        else:
            increases = 0
        rnorm = new_rnorm
        if it < max_iter:
            assemble(code, params, E0, dx, H, h, dt, lumped, force, R, Lo, Di, Up, True)
    for j in range(J):
        for i in range(d):
            X_new[j, i] = X_old[j, i] + dx[j, i]
    stats[0] = status
    stats[1] = it
    stats[2] = rnorm
    if status == OK:
        Mdx = np.empty((J, d))
        mass_apply(H, dx, h, lumped, Mdx)
        diss = 0.0
        for j in range(J):
            for i in range(d):
                diss += Mdx[j, i] * dx[j, i]
        stats[3] = diss / dt
        stats[4] = energy_Phi(code, params, X_old, h)
        stats[5] = energy_Phi(code, params, X_new, h)


@_jit
def monitors(code, params, X, h, out):
    """Fill ``out`` with ``[E_phi, E_Phi, ratio, K_inf]``; returns DEGENERATE on a collapsed edge."""
    J, d = X.shape
    p = np.empty(d)
    lengths = np.empty(J)
    e_phi = 0.0
    e_Phi = 0.0
    for j in range(J):
        n2 = 0.0
        for i in range(d):
            p[i] = X[j, i] - X[j - 1, i]
            n2 += p[i] * p[i]
        lengths[j] = math.sqrt(n2)
        if lengths[j] == 0.0:
            return DEGENERATE
        f = phi_value(code, params, p)
        e_phi += f
        e_Phi += 0.5 * f * f / h
    kmax = 0.0
    for j in range(J):
        jp = (j + 1) % J
        k2 = 0.0
        for i in range(d):
            ti = (X[j, i] - X[j - 1, i]) / lengths[j]
            tn = (X[jp, i] - X[j, i]) / lengths[jp]
            ki = 2.0 * (tn - ti) / (lengths[j] + lengths[jp])
            k2 += ki * ki
        kmax = max(kmax, math.sqrt(k2))
    out[0] = e_phi
    out[1] = e_Phi
    out[2] = lengths.max() / lengths.min()
    out[3] = kmax
    return OK


@_jit
def error_sq(X, s, Y, DY, weights, out):
    """Squared L2 error and H1 seminorm of the interpolant of ``X`` against exact
    values ``Y`` / derivatives ``DY`` at Gauss points ``s`` (element j spans
    ``[q_{j-1}, q_j]``); results go to ``out[0]``, ``out[1]``."""
    J, d = X.shape
    nq = s.shape[0]
    l2 = 0.0
    h1 = 0.0
    for j in range(J):
        for q in range(nq):
            for i in range(d):
                e = X[j - 1, i] + s[q] * (X[j, i] - X[j - 1, i]) - Y[j, q, i]
                de = J * (X[j, i] - X[j - 1, i]) - DY[j, q, i]
                l2 += weights[q] * e * e
                h1 += weights[q] * de * de
    out[0] = l2
    out[1] = h1

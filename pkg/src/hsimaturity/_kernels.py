"""Hot inner loops, each in a loop form (compiled by numba when available) and
a vectorised numpy form.

The public dispatchers ``fcls_batch`` and ``component_roots`` pick the numba
form unless numba is missing or ``HSIMATURITY_DISABLE_NUMBA`` is set; both
forms stay importable for benchmarking and cross-checks.
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit, njit_options, prange

STATUS_OK = 0
STATUS_FALLBACK = 1      # active set failed, projected gradient used

_ZERO_TOL = 1e-12
_MAX_ACTIVE_SET_ITER = 200
_PG_ITER = 20000


# --------------------------------------------------------------------------
# fully constrained least squares: loop form

@njit(**njit_options())
def _solve_face(G, h, free, p_out):
    """Equality-constrained LS on the free coordinates (others pinned at 0).

    Solves ``G_F p_F + lam * 1 = h_F, sum(p_F) = 1`` by Gaussian elimination
    with partial pivoting. Returns ``(lam, ok)``.
    """
    m = G.shape[0]
    idx = np.empty(m, dtype=np.int64)
    f = 0
    for j in range(m):
        if free[j]:
            idx[f] = j
            f += 1
    n = f + 1
    A = np.zeros((n, n + 1))
    for a in range(f):
        for b in range(f):
            A[a, b] = G[idx[a], idx[b]]
        A[a, f] = 1.0
        A[f, a] = 1.0
        A[a, n] = h[idx[a]]
    A[f, n] = 1.0

    scale = 0.0
    for a in range(f):
        scale = max(scale, abs(A[a, a]))
    tiny = 1e-300 if scale == 0.0 else scale * 1e-15
    for col in range(n):
        piv = col
        best = abs(A[col, col])
        for r in range(col + 1, n):
            if abs(A[r, col]) > best:
                best = abs(A[r, col])
                piv = r
        if best <= tiny:
            return 0.0, False
        if piv != col:
            for c in range(n + 1):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
        for r in range(col + 1, n):
            fac = A[r, col] / A[col, col]
            if fac != 0.0:
                for c in range(col, n + 1):
                    A[r, c] -= fac * A[col, c]
    sol = np.empty(n)
    for r in range(n - 1, -1, -1):
        acc = A[r, n]
        for c in range(r + 1, n):
            acc -= A[r, c] * sol[c]
        sol[r] = acc / A[r, r]

    for j in range(m):
        p_out[j] = 0.0
    for a in range(f):
        p_out[idx[a]] = sol[a]
    return sol[f], True


@njit(**njit_options())
def _project_simplex(v, out):
    m = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for k in range(m):
        css += u[k]
        t = (css - 1.0) / (k + 1)
        if u[k] - t > 0.0:
            theta = t
    for j in range(m):
        out[j] = max(v[j] - theta, 0.0)


@njit(**njit_options())
def _projected_gradient(G, h, p):
    m = G.shape[0]
    lip = 0.0
    for j in range(m):
        lip += G[j, j]
    if lip <= 0.0:
        lip = 1.0
    v = np.empty(m)
    for j in range(m):
        p[j] = 1.0 / m
    for it in range(_PG_ITER):
        step = 1.0 / lip
        for j in range(m):
            g = -h[j]
            for k in range(m):
                g += G[j, k] * p[k]
            v[j] = p[j] - step * g
        _project_simplex(v, p)


@njit(**njit_options())
def _clean_simplex(p):
    s = 0.0
    for j in range(p.shape[0]):
        if p[j] < 0.0:
            p[j] = 0.0
        s += p[j]
    for j in range(p.shape[0]):
        p[j] /= s


@njit(**njit_options())
def fcls_pixel_loops(G, h, p):
    """Active-set FCLS for one pixel given ``G = E E^T`` and ``h = E x``.

    Writes the proportions into ``p`` and returns a status code.
    """
    m = G.shape[0]
    free = np.ones(m, dtype=np.bool_)
    q = np.empty(m)
    mu_tol = 0.0
    for j in range(m):
        mu_tol += G[j, j]
    mu_tol = _ZERO_TOL * max(mu_tol / m, 1e-300)

    # clamp the most negative coordinate until the face solution is feasible
    for it in range(m):
        lam, ok = _solve_face(G, h, free, p)
        if not ok:
            _projected_gradient(G, h, p)
            return STATUS_FALLBACK
        worst = -1
        most = -_ZERO_TOL
        for j in range(m):
            if free[j] and p[j] < most:
                most = p[j]
                worst = j
        if worst < 0:
            break
        free[worst] = False
    for j in range(m):
        if not free[j] or p[j] < 0.0:
            p[j] = 0.0
    _clean_simplex(p)

    # primal active-set refinement until the KKT conditions hold
    for it in range(_MAX_ACTIVE_SET_ITER):
        lam, ok = _solve_face(G, h, free, q)
        if not ok:
            _projected_gradient(G, h, p)
            return STATUS_FALLBACK
        step_norm = 0.0
        for j in range(m):
            step_norm = max(step_norm, abs(q[j] - p[j]))
        if step_norm <= _ZERO_TOL:
            enter = -1
            most = -mu_tol
            for j in range(m):
                if not free[j]:
                    mu = lam - h[j]
                    for k in range(m):
                        mu += G[j, k] * p[k]
                    if mu < most:
                        most = mu
                        enter = j
            if enter < 0:
                _clean_simplex(p)
                return STATUS_OK
            free[enter] = True
            continue
        alpha = 1.0
        block = -1
        for j in range(m):
            if free[j]:
                d = q[j] - p[j]
                if d < 0.0:
                    a = -p[j] / d
                    if a < alpha:
                        alpha = a
                        block = j
        for j in range(m):
            p[j] += alpha * (q[j] - p[j])
        if block >= 0:
            p[block] = 0.0
            free[block] = False
    _projected_gradient(G, h, p)
    return STATUS_FALLBACK


@njit(**njit_options(parallel=True))
def _fcls_batch_numba(G, H):
    n = H.shape[0]
    m = G.shape[0]
    P = np.empty((n, m))
    status = np.empty(n, dtype=np.int8)
    for i in prange(n):
        p = np.empty(m)
        status[i] = fcls_pixel_loops(G, H[i], p)
        for j in range(m):
            P[i, j] = p[j]
    return P, status


def _fcls_batch_python(G, H):
    n, m = H.shape[0], G.shape[0]
    P = np.empty((n, m))
    status = np.empty(n, dtype=np.int8)
    p = np.empty(m)
    for i in range(n):
        status[i] = fcls_pixel_loops(G, H[i], p)
        P[i] = p
    return P, status


# --------------------------------------------------------------------------
# fully constrained least squares: vectorised face enumeration

MAX_ENUM_ENDMEMBERS = 10


def fcls_batch_numpy(G, H):
    """Exact FCLS for many pixels by enumerating every face of the simplex.

    The minimiser lies in the relative interior of some face, where it equals
    the sum-to-one constrained solution restricted to that face. Each face's
    KKT system depends only on ``G``, so one solve per face serves all pixels.
    Falls back to the per-pixel loop form above ``MAX_ENUM_ENDMEMBERS``.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    H = np.ascontiguousarray(H, dtype=np.float64)
    n, m = H.shape
    if m > MAX_ENUM_ENDMEMBERS:
        return _fcls_batch_python(G, H)
    best_p = np.zeros((n, m))
    best_obj = np.full(n, np.inf)
    for mask in range(1, 1 << m):
        support = [j for j in range(m) if mask >> j & 1]
        f = len(support)
        kkt = np.ones((f + 1, f + 1))
        kkt[:f, :f] = G[np.ix_(support, support)]
        kkt[f, f] = 0.0
        try:
            inv = np.linalg.inv(kkt)
        except np.linalg.LinAlgError:
            continue
        ps = H[:, support] @ inv[:f, :f].T + inv[:f, f]
        feasible = np.all(ps >= -_ZERO_TOL, axis=1)
        if not feasible.any():
            continue
        p = np.zeros((n, m))
        p[:, support] = np.maximum(ps, 0.0)
        p /= p.sum(axis=1, keepdims=True)
        obj = np.einsum("ij,jk,ik->i", p, G, p) - 2.0 * np.einsum("ij,ij->i", p, H)
        better = feasible & (obj < best_obj)
        best_obj[better] = obj[better]
        best_p[better] = p[better]
    status = np.zeros(n, dtype=np.int8)
    return best_p, status


def fcls_batch_numba(G, H):
    if not HAVE_NUMBA:
        raise RuntimeError("numba backend is not available")
    return _fcls_batch_numba(np.ascontiguousarray(G, dtype=np.float64),
                             np.ascontiguousarray(H, dtype=np.float64))


def fcls_batch(G, H):
    """Proportions ``(N, M)`` and status codes ``(N,)`` for rows of ``H``."""
    if HAVE_NUMBA:
        return fcls_batch_numba(G, H)
    return fcls_batch_numpy(G, H)


def fcls_single(G, h):
    p = np.empty(G.shape[0])
    status = fcls_pixel_loops(np.ascontiguousarray(G, dtype=np.float64),
                              np.ascontiguousarray(h, dtype=np.float64), p)
    return p, int(status)


# --------------------------------------------------------------------------
# connected components
#
# Both forms return, per pixel, the flat index of the first (row-major)
# pixel of its component, or -1 for background.

@njit(**njit_options())
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(**njit_options())
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit(**njit_options())
def _component_roots_loops(mask, eight):
    h, w = mask.shape
    parent = np.arange(h * w)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            i = y * w + x
            if x > 0 and mask[y, x - 1]:
                _union(parent, i, i - 1)
            if y > 0:
                if mask[y - 1, x]:
                    _union(parent, i, i - w)
                if eight:
                    if x > 0 and mask[y - 1, x - 1]:
                        _union(parent, i, i - w - 1)
                    if x < w - 1 and mask[y - 1, x + 1]:
                        _union(parent, i, i - w + 1)
    roots = np.full((h, w), -1, dtype=np.int64)
    for y in range(h):
        for x in range(w):
            if mask[y, x]:
                roots[y, x] = _find(parent, y * w + x)
    return roots


def component_roots_numba(mask, eight=True):
    if not HAVE_NUMBA:
        raise RuntimeError("numba backend is not available")
    return _component_roots_loops(np.ascontiguousarray(mask, dtype=np.bool_), bool(eight))


def component_roots_numpy(mask, eight=True):
    """Min-index label propagation with pointer jumping."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    big = np.iinfo(np.int64).max
    lab = np.where(mask, np.arange(h * w, dtype=np.int64).reshape(h, w), big)
    shifts = [(0, 1), (1, 0), (0, -1), (-1, 0)]
    if eight:
        shifts += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
    fg = mask.ravel()
    while True:
        padded = np.pad(lab, 1, constant_values=big)
        new = lab.copy()
        for dy, dx in shifts:
            np.minimum(new, padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w], out=new)
        new[~mask] = big
        flat = new.ravel()
        flat[fg] = flat[flat[fg]]
        if np.array_equal(new, lab):
            break
        lab = new
    return np.where(mask, lab, -1)


def component_roots(mask, eight=True):
    if HAVE_NUMBA:
        return component_roots_numba(mask, eight)
    return component_roots_numpy(mask, eight)

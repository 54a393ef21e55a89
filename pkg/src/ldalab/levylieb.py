"""Grand-canonical Levy-Lieb functional, minimal kinetic energy and exchange energy.

Both constrained minimizations are solved through their concave Legendre dual
``v -> e(v) - <v, n>``. The dual is smoothed at inverse temperature ``beta``
(Fermi-Dirac for the one-body problem, Boltzmann over the Fock spectrum for
the many-body problem) and maximized by damped Newton steps while ``beta`` is
raised. Each thermal maximizer gives an explicit feasible state, so every
result carries a certified bracket ``dual <= value <= primal``.

Sites with occupation exactly 0 are removed from the problem. Sites with
occupation exactly 1 are removed as well and folded into constants, a mean
field on the remaining sites and Jordan-Wigner signs on the hoppings.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy import optimize
from scipy.special import expit

from .errors import CapacityError, InputError, StateError
from .lattice import FOCK_CAP, GridDensity, LatticeModel

DENSE_MAX = 600        # sector dimension up to which full spectra are used
NEWTON_MAX_SITES = 3000  # one-body size up to which the exact Hessian is formed
V_BIG = 1.0e6           # reported multiplier for pinned sites
PIN_TOL = 1e-14


# --------------------------------------------------------------------------
# Fock space

@lru_cache(maxsize=32)
def _sector_basis(n_modes: int, n: int) -> np.ndarray:
    states = [sum(1 << i for i in c) for c in itertools.combinations(range(n_modes), n)]
    return np.array(sorted(states), dtype=np.int64)


class FockSpace:
    """Occupation-number basis of ``n_modes`` spinless fermionic modes, by sector."""

    def __init__(self, n_modes: int, cap: int = FOCK_CAP):
        if n_modes > cap:
            raise CapacityError(f"Fock space over {n_modes} sites exceeds the cap of {cap} sites")
        self.n_modes = int(n_modes)

    def basis(self, n: int) -> np.ndarray:
        return _sector_basis(self.n_modes, n)

    def dim(self, n: int) -> int:
        return len(self.basis(n))

    def occupations(self, n: int) -> np.ndarray:
        s = self.basis(n)
        return ((s[:, None] >> np.arange(self.n_modes)) & 1).astype(float)

    def hop(self, n: int, i: int, j: int):
        """Sparse action of ``c_i^+ c_j`` (i != j): (target index, source index, sign)."""
        s = self.basis(n)
        ok = ((s >> j) & 1).astype(bool) & ~((s >> i) & 1).astype(bool)
        src = np.nonzero(ok)[0]
        t = s[src] ^ (1 << i) ^ (1 << j)
        lo, hi = min(i, j), max(i, j)
        between = ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)
        sign = 1.0 - 2.0 * (np.bitwise_count(s[src] & between) & 1)
        return np.searchsorted(s, t), src, sign

    def one_body(self, n: int, K: np.ndarray) -> sp.csr_matrix:
        """Matrix of ``sum_ij K_ij c_i^+ c_j`` on sector ``n``."""
        d = self.dim(n)
        occ = self.occupations(n)
        rows, cols, vals = [np.arange(d)], [np.arange(d)], [occ @ np.diag(K)]
        for i, j in zip(*np.nonzero(K)):
            if i == j:
                continue
            t, s, sg = self.hop(n, i, j)
            rows.append(t)
            cols.append(s)
            vals.append(K[i, j] * sg)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(d, d))

    def pair_diagonal(self, n: int, W: np.ndarray) -> np.ndarray:
        """Diagonal of ``sum_{i<j} W_ij n_i n_j`` on sector ``n``."""
        occ = self.occupations(n)
        return 0.5 * (np.einsum("si,ij,sj->s", occ, W, occ) - occ @ np.diag(W))


# --------------------------------------------------------------------------
# reduced problems (pinned sites removed)

@dataclass
class _Reduced:
    active: np.ndarray
    filled: np.ndarray
    K: np.ndarray          # kinetic matrix on active sites, JW signs applied
    W: np.ndarray          # pair matrix on active sites
    field: np.ndarray      # mean field from filled sites
    const_kin: float
    const_int: float
    n: np.ndarray          # target occupations on active sites


def _reduce(model: LatticeModel, W: Optional[np.ndarray], occ: np.ndarray,
            active=None, filled=None) -> _Reduced:
    if active is None:
        active = np.nonzero((occ > PIN_TOL) & (occ < 1 - PIN_TOL))[0]
        filled = np.nonzero(occ >= 1 - PIN_TOL)[0]
    K = model.laplacian
    KA = K[active][:, active].toarray()
    if len(filled) and len(active) > 1:
        # parity of filled sites strictly between each active pair
        cnt = np.searchsorted(filled, active)
        between = np.abs(cnt[:, None] - cnt[None, :])
        KA = KA * (1.0 - 2.0 * (between % 2))
    kd = K.diagonal()
    if W is None:
        WA = np.zeros((len(active), len(active)))
        fld = np.zeros(len(active))
        ci = 0.0
    else:
        WA = W[np.ix_(active, active)]
        fld = W[np.ix_(active, filled)].sum(axis=1)
        WF = W[np.ix_(filled, filled)]
        ci = 0.5 * float(WF.sum() - np.trace(WF))
    return _Reduced(active, filled, KA, WA, fld, float(kd[filled].sum()), ci, occ[active])


def _check_occupations(rho: GridDensity) -> np.ndarray:
    n = rho.occupations
    if np.any(n < 0) or np.any(n > 1 + 1e-12):
        raise InputError("density is not representable: occupations must lie in [0, 1]")
    return np.clip(n, 0.0, 1.0)


# --------------------------------------------------------------------------
# states

@dataclass
class GrandState:
    """Number-conserving mixed state stored in factor form ``Gamma_N = B_N B_N^T``.

    ``blocks[N]`` has shape ``(dim_N, r_N)`` on the Fock space of the
    ``active`` sites; every site in ``filled`` is occupied in all components.
    """

    n_sites: int
    active: np.ndarray
    filled: np.ndarray
    blocks: dict

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=int)
        self.filled = np.asarray(self.filled, dtype=int)
        space = FockSpace(len(self.active), cap=max(FOCK_CAP, len(self.active)))
        for N, B in self.blocks.items():
            if B.ndim != 2 or B.shape[0] != space.dim(N):
                raise StateError(f"sector {N} block has wrong shape {B.shape}")

    @property
    def space(self) -> FockSpace:
        return FockSpace(len(self.active), cap=max(FOCK_CAP, len(self.active)))

    @property
    def vacuum_weight(self) -> float:
        B = self.blocks.get(0)
        return 0.0 if B is None or len(self.filled) else float(np.sum(B * B))

    def trace(self) -> float:
        return float(sum(np.sum(B * B) for B in self.blocks.values()))

    def sector_matrix(self, n: int) -> np.ndarray:
        B = self.blocks.get(n)
        d = self.space.dim(n)
        return np.zeros((d, d)) if B is None else B @ B.T

    def diagonal_weights(self, n: int) -> np.ndarray:
        B = self.blocks[n]
        return np.sum(B * B, axis=1)

    def mix(self, other: "GrandState", lam: float) -> "GrandState":
        """``lam * self + (1 - lam) * other`` (same active and filled sites)."""
        if not (np.array_equal(self.active, other.active) and np.array_equal(self.filled, other.filled)):
            raise StateError("states live on different site sets")
        out = {}
        for N in set(self.blocks) | set(other.blocks):
            parts = []
            if N in self.blocks:
                parts.append(np.sqrt(lam) * self.blocks[N])
            if N in other.blocks:
                parts.append(np.sqrt(1 - lam) * other.blocks[N])
            out[N] = np.hstack(parts)
        return GrandState(self.n_sites, self.active, self.filled, out)


def vacuum_state(n_sites: int) -> GrandState:
    return GrandState(n_sites, np.arange(n_sites), np.array([], dtype=int), {0: np.ones((1, 1))})


def slater_state(n_sites: int, orbitals: np.ndarray) -> GrandState:
    """Pure Slater determinant of the orthonormal columns of ``orbitals``."""
    Phi = np.asarray(orbitals, dtype=float).reshape(n_sites, -1)
    k = Phi.shape[1]
    space = FockSpace(n_sites, cap=max(FOCK_CAP, n_sites))
    occ = space.occupations(k).astype(bool)
    amp = np.array([np.linalg.det(Phi[row]) for row in occ]) if k else np.ones(1)
    return GrandState(n_sites, np.arange(n_sites), np.array([], dtype=int), {k: amp[:, None]})


def random_grand_state(n_sites: int, rng: np.random.Generator, max_particles: int = 4,
                       rank: Optional[int] = None) -> GrandState:
    """Random state: Gaussian factor per sector up to ``max_particles``, then normalized."""
    space = FockSpace(n_sites)
    blocks = {}
    for N in range(min(max_particles, n_sites) + 1):
        d = space.dim(N)
        blocks[N] = rng.standard_normal((d, d if rank is None else min(rank, d)))
    s = np.sqrt(sum(np.sum(B * B) for B in blocks.values()))
    blocks = {N: B / s for N, B in blocks.items()}
    return GrandState(n_sites, np.arange(n_sites), np.array([], dtype=int), blocks)


def _interaction_matrix(model: LatticeModel, pot):
    if pot is None:
        return None
    return model.interaction(pot)


def state_observables(gamma: GrandState, model: LatticeModel, pot):
    """Kinetic energy, pair interaction and density of a grand state.

    Returns
    -------
    kinetic : float
    interaction : float
    rho : GridDensity
    """
    tr = gamma.trace()
    if abs(tr - 1.0) > 1e-8:
        raise StateError(f"state trace is {tr}, expected 1")
    if gamma.n_sites != model.n_sites:
        raise StateError("state and model have different site counts")
    W = _interaction_matrix(model, pot)
    occ_full = np.zeros(model.n_sites)
    occ_full[gamma.filled] = 1.0
    red = _reduce(model, W, occ_full, gamma.active, gamma.filled)
    space = gamma.space
    kin, inter = red.const_kin, red.const_int
    n_act = np.zeros(len(gamma.active))
    for N, B in gamma.blocks.items():
        wts = np.sum(B * B, axis=1)
        occ = space.occupations(N)
        kin += float(np.sum(B * (space.one_body(N, red.K) @ B)))
        inter += float(wts @ (space.pair_diagonal(N, red.W) + occ @ red.field))
        n_act += wts @ occ
    occ_full[gamma.active] = n_act
    return kin, inter, GridDensity.from_occupations(model, occ_full)


def one_body_rdm(gamma: GrandState) -> np.ndarray:
    """``gamma_ij = Tr(Gamma c_j^+ c_i)`` on the full site set."""
    space = gamma.space
    A = len(gamma.active)
    g = np.zeros((A, A))
    for N, B in gamma.blocks.items():
        g[np.diag_indices(A)] += np.sum(B * B, axis=1) @ space.occupations(N)
        for i in range(A):
            for j in range(A):
                if i != j:
                    t, s, sg = space.hop(N, j, i)  # c_j^+ c_i
                    g[i, j] += float(np.sum(sg[:, None] * B[t] * B[s]))
    full = np.zeros((gamma.n_sites, gamma.n_sites))
    full[np.ix_(gamma.active, gamma.active)] = g
    full[gamma.filled, gamma.filled] = 1.0
    return full


# --------------------------------------------------------------------------
# many-body Hamiltonian on a reduced problem

class _FockHamiltonian:
    def __init__(self, red: _Reduced, cap: int):
        M = len(red.active)
        self.space = FockSpace(M, cap)
        self.M = M
        self.occ = [self.space.occupations(N) for N in range(M + 1)]
        self.T = [self.space.one_body(N, red.K) for N in range(M + 1)]
        self.diag0 = [self.space.pair_diagonal(N, red.W) + self.occ[N] @ red.field
                      for N in range(M + 1)]
        self.const = red.const_kin + red.const_int
        self._v0 = {}

    def sector(self, N: int, v: np.ndarray):
        return self.T[N] + sp.diags(self.diag0[N] + self.occ[N] @ v)

    def lowest(self, N: int, v: np.ndarray, k: int):
        """Lowest ``k`` eigenpairs of sector ``N`` (all of them when small)."""
        H = self.sector(N, v)
        d = H.shape[0]
        if d <= DENSE_MAX or k >= d - 1:
            w, U = np.linalg.eigh(H.toarray())
            return w, U
        v0 = self._v0.get(N)
        w, U = sla.eigsh(H, k=k, which="SA", v0=v0, tol=1e-13, maxiter=20 * d)
        o = np.argsort(w)
        w, U = w[o], U[:, o]
        self._v0[N] = U[:, 0]
        return w, U


def ground_value(model: LatticeModel, pot, v, cap: int = FOCK_CAP):
    """Lowest Fock-space energy of ``H_0 + sum_i v_i n_i``, vacuum included.

    Returns
    -------
    e : float
        ``min(0, min_N lambda_min(H_N))``.
    info : dict
        ``sector_energies`` (ground energy per particle number) and
        ``ground_sectors`` (all sectors within 1e-10 of ``e``).
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != model.n_sites:
        raise InputError("potential has wrong length")
    model.check_fock(cap)
    red = _reduce(model, _interaction_matrix(model, pot), np.full(model.n_sites, 0.5))
    ham = _FockHamiltonian(red, cap)
    es = np.array([ham.lowest(N, v, 1)[0][0] for N in range(model.n_sites + 1)])
    e = float(min(0.0, es.min()))
    ground = [int(N) for N in np.nonzero(es <= e + 1e-10)[0]]
    return e, {"sector_energies": es, "ground_sectors": ground}


# --------------------------------------------------------------------------
# smoothed-dual oracles

class _OneBodyOracle:
    """Fermi-Dirac smoothing of ``sum_k min(w_k, 0)`` for ``w = spec(K + diag v)``."""

    def __init__(self, K: np.ndarray):
        self.K = K

    def __call__(self, v, beta):
        w, V = np.linalg.eigh(self.K + np.diag(v))
        f = expit(-beta * w)
        phi = float(np.sum(np.minimum(w, 0) - np.log1p(np.exp(-beta * np.abs(w))) / beta))
        grad = (V * V) @ f
        return dict(phi=phi, grad=grad, w=w, V=V, f=f)

    def hessian(self, ev, beta):
        w, V, f = ev["w"], ev["V"], ev["f"]
        dw = w[:, None] - w[None, :]
        df = f[:, None] - f[None, :]
        fp = -beta * f * (1 - f)
        close = np.abs(dw) < 1e-10
        G = np.where(close, 0.5 * (fp[:, None] + fp[None, :]), df / np.where(close, 1.0, dw))
        # pairs with both levels full or both empty carry no weight: loop over
        # the smaller of the two sets and double the pairs leaving it
        P = f > 1e-15
        Q = f < 1 - 1e-15
        S = P if P.sum() <= Q.sum() else Q
        H = np.zeros((len(w), len(w)))
        for k in np.flatnonzero(S):
            g = np.where(S, G[k], 2.0 * G[k])
            Y = V * V[:, k][:, None]
            H += (Y * g) @ Y.T
        return H

    def polish(self, v, n, ev, beta, max_iter=30):
        """Zero-temperature Newton for a fractionally filled cluster of levels.

        ``gamma = P + Phi Q Phi^T`` with ``P`` the projector on the ``k`` levels
        below the cluster, ``Phi`` the ``m`` cluster eigenvectors and ``Q`` a
        symmetric block. Unknowns ``(v, Q)``; equations ``diag gamma = n`` and
        ``Phi^T H(v) Phi = 0``. The basis is refreshed every step.
        """
        w, f = ev["w"], ev["f"]
        C = np.flatnonzero((f > 1e-9) & (f < 1 - 1e-9))
        if len(C) == 0 or np.any(np.diff(C) != 1):
            return None
        k, m = int(C[0]), len(C)
        out = np.delete(w, C)
        if out.size and np.min(np.abs(out)) * beta < 30:
            return None
        M = len(v)
        iu = np.triu_indices(m)
        Phi = ev["V"][:, C]
        F = (Phi * f[C]) @ Phi.T                       # fractional part of gamma
        rn_prev = np.inf
        for _ in range(max_iter):
            w, V = np.linalg.eigh(self.K + np.diag(v))
            Phi = V[:, k:k + m]
            Q = Phi.T @ F @ Phi
            Q = 0.5 * (Q + Q.T)
            R1 = (V[:, :k] ** 2).sum(axis=1) + np.einsum("ia,ab,ib->i", Phi, Q, Phi) - n
            R2 = np.diag(w[k:k + m])[iu]
            R = np.concatenate([R1, R2])
            rn = np.max(np.abs(R))
            if rn < 1e-14 or rn >= rn_prev:
                if rn >= rn_prev:
                    v, F = v_prev, F_prev
                break
            rn_prev, v_prev, F_prev = rn, v.copy(), F.copy()
            outside = np.ones(M, bool)
            outside[k:k + m] = False
            Vo, wo = V[:, outside], w[outside]
            # d diag(P)/dv : occupied -> empty-or-cluster pairs
            J = np.zeros((M, M))
            for a in range(k):
                inv = np.zeros(M)
                inv[k:] = 2.0 / (w[a] - w[k:])
                Y = V * V[:, a][:, None]
                J += (Y[:, k:] * inv[k:]) @ Y[:, k:].T
            # cluster levels leaving the cluster subspace
            Z = Phi @ Q
            for a in range(m):
                inv = 1.0 / (w[k + a] - wo)
                A = Vo * Z[:, a][:, None]
                B = Vo * Phi[:, a][:, None]
                J += 2.0 * (A * inv) @ B.T
            # derivative w.r.t. the independent entries of Q
            JQ = np.empty((M, len(iu[0])))
            JB = np.empty((len(iu[0]), M))
            for c, (a, b) in enumerate(zip(*iu)):
                prod = Phi[:, a] * Phi[:, b]
                JQ[:, c] = prod if a == b else 2.0 * prod
                JB[c] = prod
            Jfull = np.block([[J, JQ], [JB, np.zeros((len(iu[0]), len(iu[0])))]])
            step = np.linalg.lstsq(Jfull, -R, rcond=None)[0]
            dQ = np.zeros((m, m))
            dQ[iu] = step[M:]
            dQ = dQ + np.triu(dQ, 1).T
            v = v + step[:M]
            F = F + Phi @ dQ @ Phi.T
        w, V = np.linalg.eigh(self.K + np.diag(v))
        Phi = V[:, k:k + m]
        Q = Phi.T @ F @ Phi
        q, U = np.linalg.eigh(0.5 * (Q + Q.T))
        if q.min() < -1e-10 or q.max() > 1 + 1e-10:
            return None
        q = np.clip(q, 0.0, 1.0)
        Vn = V.copy()
        Vn[:, k:k + m] = Phi @ U
        fn = np.zeros(M)
        fn[:k] = 1.0
        fn[k:k + m] = q
        return v, dict(w=w, V=Vn, f=fn, grad=(Vn * Vn) @ fn, exact=True)

    def certificate(self, v, n, beta, ev):
        w, f = ev["w"], ev["f"]
        lower = float(np.sum(np.minimum(w, 0)) - v @ n)
        V = ev["V"]
        if ev.get("exact"):
            # Tr(K gamma) evaluated directly; the cluster basis is rotated
            upper = float(np.sum(((self.K @ V) * V) @ f))
        else:
            upper = float(np.sum(f * w) - v @ ev["grad"])
        return lower, upper


class _FockOracle:
    """Boltzmann smoothing of the grand ground energy over the sector spectra."""

    def __init__(self, ham: _FockHamiltonian, k_states: int = 8):
        self.ham = ham
        self.k = k_states

    def __call__(self, v, beta):
        ham = self.ham
        sectors = []
        for N in range(ham.M + 1):
            w, U = ham.lowest(N, v, self.k)
            sectors.append((N, w, U))
        emin = min(s[1][0] for s in sectors)
        Z = 0.0
        grad = np.zeros(ham.M)
        data = []
        for N, w, U in sectors:
            p = np.exp(-beta * (w - emin))
            Z += p.sum()
            data.append((N, w, U, p))
        energy = 0.0
        keep = []
        for N, w, U, p in data:
            p = p / Z
            sig = p > 1e-300
            if not np.any(p > 1e-18):
                continue
            D = (U[:, sig] ** 2).T @ ham.occ[N]
            grad += p[sig] @ D
            energy += float(p[sig] @ w[sig])
            keep.append((N, w, U, p, D, sig))
        phi = emin - np.log(Z) / beta
        return dict(phi=float(phi), grad=grad, emin=emin, energy=energy, keep=keep)

    def hessian(self, ev, beta):
        keep, mean = ev["keep"], ev["grad"]
        M = self.ham.M
        KM = np.zeros((M, M))
        for N, w, U, p, D, sig in keep:
            L = np.nonzero(p > 1e-18)[0]
            occ = self.ham.occ[N]
            A = np.einsum("sa,si,sb->iab", U[:, L], occ, U, optimize=True)
            dw = w[None, :] - w[L][:, None]
            pa, pb = p[L][:, None], p[None, :]
            close = np.abs(dw) < 1e-12
            G = np.where(close, 0.5 * (pa + pb), (pa - pb) / (beta * np.where(close, 1.0, dw)))
            inL = np.zeros(len(w), bool)
            inL[L] = True
            G = G * np.where(inL, 1.0, 2.0)[None, :]
            KM += np.einsum("iab,jab,ab->ij", A, A, G, optimize=True)
        return -beta * (KM - np.outer(mean, mean))

    def active_set(self, ev, beta):
        """Populated ground clusters ``(N, Phi, Q)``, each separated from the rest of its sector."""
        clusters = []
        for N, w, U, p, D, sig in ev["keep"]:
            on = np.flatnonzero(p > 1e-9)
            if on.size == 0:
                continue
            m = int(on[-1]) + 1
            whole = m == self.ham.space.dim(N)
            if not whole and (m >= len(w) or (w[m] - w[m - 1]) * beta < 30):
                return None
            clusters.append((N, U[:, :m], np.diag(p[:m])))
        if not clusters:
            return None
        tot = sum(np.trace(Q) for _, _, Q in clusters)
        return [(N, Phi, Q / tot) for N, Phi, Q in clusters]

    def polish(self, v, n, ev, beta):
        act = self.active_set(ev, beta)
        return None if act is None else self.polish_clusters(v, n, act)

    def polish_guess(self, v, n, guess):
        """Polish from pure ground states of the guessed sectors with weights ``q``."""
        act = []
        for N, q in zip(guess["sectors"], guess["q"]):
            _, U = self.ham.lowest(N, v, min(2, self.ham.space.dim(N)))
            act.append((N, U[:, :1], np.array([[q]])))
        return self.polish_clusters(v, n, act)

    def _cluster_frame(self, N, v, m):
        d = self.ham.space.dim(N)
        k = m + 2 if d > DENSE_MAX else m
        w, U = self.ham.lowest(N, v, min(max(k, 2), d))
        return w, U

    def _cluster_jacobian(self, N, v, w, U, m, Q):
        """Derivative of the cluster density ``diag-occupation(Phi Q Phi^T)`` in ``v``."""
        occ = self.ham.occ[N]
        M = self.ham.M
        Phi = U[:, :m]
        Z = Phi @ Q
        if U.shape[1] == U.shape[0]:
            out = U[:, m:]
            inv = 1.0 / (w[:m][None, :] - w[m:][:, None])             # (b, a)
            A = np.einsum("sb,sa,sj->baj", out, Phi, occ, optimize=True)
            Bm = np.einsum("si,sb,sa->iba", occ, out, Z, optimize=True)
            return 2.0 * np.einsum("iba,baj->ij", Bm * inv[None], A, optimize=True)
        h = 1e-7
        J = np.empty((M, M))
        base = occ.T @ np.sum(Z * Phi, axis=1)
        for j in range(M):
            vj = v.copy()
            vj[j] += h
            _, Uj = self.ham.lowest(N, vj, m + 2)
            P = Uj[:, :m]
            S = P.T @ Phi
            u, _, vt = np.linalg.svd(S)
            P = P @ (u @ vt)                                          # align with Phi
            J[:, j] = (occ.T @ np.sum((P @ Q) * P, axis=1) - base) / h
        return J

    def polish_clusters(self, v, n, act, max_iter=30):
        """Zero-temperature Newton on ``(v, {Q_N}, E)``.

        Each active sector ``N`` contributes ``Phi_N Q_N Phi_N^T`` with ``Phi_N``
        its lowest ``m_N`` eigenvectors. Equations: total density equals ``n``,
        ``sum tr Q_N = 1`` and ``Phi_N^T H_N Phi_N = E`` on every cluster. The
        frames are refreshed after every step.
        """
        M = self.ham.M
        occ = self.ham.occ
        sizes = [Phi.shape[1] for _, Phi, _ in act]
        ius = [np.triu_indices(m) for m in sizes]
        nq = sum(len(iu[0]) for iu in ius)

        def frames(v, act):
            out = []
            for (N, Phi, Q), m in zip(act, sizes):
                w, U = self._cluster_frame(N, v, m)
                whole = m == self.ham.space.dim(N)
                if not whole and (len(w) <= m or w[m] - w[m - 1] < 1e-12):
                    return None
                S = U[:, :m].T @ Phi
                Qn = S @ Q @ S.T
                out.append((N, w, U, 0.5 * (Qn + Qn.T)))
            return out

        def residual(fr, E):
            dens = np.zeros(M)
            R_tr = -1.0
            R_B = []
            for (N, w, U, Q), m, iu in zip(fr, sizes, ius):
                Phi = U[:, :m]
                dens += occ[N].T @ np.sum((Phi @ Q) * Phi, axis=1)
                R_tr += np.trace(Q)
                R_B.append((np.diag(w[:m]) - E * np.eye(m))[iu])
            return np.concatenate([dens - n, [R_tr]] + R_B)

        fr = frames(v, act)
        if fr is None:
            return None
        E = float(np.mean([f[1][0] for f in fr]))
        R = residual(fr, E)
        for _ in range(max_iter):
            rn = np.max(np.abs(R))
            if rn < 1e-14:
                break
            J = np.zeros((M + 1 + nq, M + nq + 1))
            col, row = M, M + 1
            for (N, w, U, Q), m, iu in zip(fr, sizes, ius):
                Phi = U[:, :m]
                J[:M, :M] += self._cluster_jacobian(N, v, w, U, m, Q)
                for c, (a, b) in enumerate(zip(*iu)):
                    prod = Phi[:, a] * Phi[:, b]
                    J[:M, col + c] = (1.0 if a == b else 2.0) * (occ[N].T @ prod)
                    if a == b:
                        J[M, col + c] = 1.0
                        J[row + c, -1] = -1.0
                    J[row + c, :M] = occ[N].T @ prod
                col += len(iu[0])
                row += len(iu[0])
            step = np.linalg.lstsq(J, -R, rcond=None)[0]
            t, done = 1.0, False
            for _ in range(20):
                vt, Et = v + t * step[:M], E + t * step[-1]
                trial, col = [], M
                for (N, w, U, Q), m, iu in zip(fr, sizes, ius):
                    dQ = np.zeros((m, m))
                    dQ[iu] = t * step[col:col + len(iu[0])]
                    dQ = dQ + np.triu(dQ, 1).T
                    trial.append((N, U[:, :m], Q + dQ))
                    col += len(iu[0])
                ft = frames(vt, trial)
                if ft is not None:
                    Rt = residual(ft, Et)
                    if np.max(np.abs(Rt)) < rn:
                        done = True
                        break
                t *= 0.5
            if not done:
                break
            v, E, fr, R = vt, Et, ft, Rt
        keep, grad, energy = [], np.zeros(M), 0.0
        for (N, w, U, Q), m in zip(fr, sizes):
            q, Rq = np.linalg.eigh(Q)
            if q.min() < -1e-10:
                return None
            q = np.clip(q, 0.0, None)
            Ur = U[:, :m] @ Rq
            H = self.ham.sector(N, v)
            wr = np.einsum("sa,sa->a", Ur, H @ Ur)
            D = (Ur ** 2).T @ occ[N]
            grad += q @ D
            energy += float(q @ wr)
            keep.append((N, wr, Ur, q, D, q > 0))
        return v, dict(keep=keep, grad=grad, energy=energy, exact=True)

    def certificate(self, v, n, beta, ev):
        ham = self.ham
        e = min(0.0, min(ham.lowest(N, v, 1)[0][0] for N in range(1, ham.M + 1)))
        lower = float(e - v @ n)
        upper = float(ev["energy"] - v @ ev["grad"])
        return lower, upper


# --------------------------------------------------------------------------
# dual maximization

@dataclass
class DualCertificate:
    """Outcome of the dual ascent.

    ``dual_value <= exact value <= primal_value``; ``gap`` is their difference.
    ``v`` is per model site; pinned sites carry ``+-V_BIG``.
    """

    v: np.ndarray
    dual_value: float
    primal_value: float
    gap: float
    density_error: float
    iterations: int
    converged: bool
    beta: float
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return dict(dual_value=self.dual_value, primal_value=self.primal_value, gap=self.gap,
                    density_error=self.density_error, iterations=self.iterations,
                    converged=self.converged, beta=self.beta)


def _newton_stage(oracle, v, n, beta, gtol, max_iter, trace, radius=1.0):
    """Damped Newton ascent on ``g(v) = phi_beta(v) - v.n`` at fixed ``beta``.

    A step is accepted on sufficient increase of ``g`` or, once ``g`` no longer
    resolves the remaining ascent, on a decrease of the residual ``|grad g|``.
    """
    ev = oracle(v, beta)
    g = ev["phi"] - v @ n
    r = ev["grad"] - n
    it = 0
    for it in range(1, max_iter + 1):
        rn = np.max(np.abs(r))
        if rn <= gtol:
            break
        H = -oracle.hessian(ev, beta)
        H = 0.5 * (H + H.T)
        mu = 1e-12 * max(1.0, np.max(np.abs(np.diag(H))))
        try:
            d = np.linalg.solve(H + mu * np.eye(len(v)), r)
        except np.linalg.LinAlgError:
            d = r
        if not np.all(np.isfinite(d)) or d @ r <= 0:
            d = r
        # flat directions (e.g. a sector with a locked particle number) need a step cap
        dmax = np.max(np.abs(d))
        if dmax > radius:
            d = d * (radius / dmax)
        t = 1.0
        slope = d @ r
        accepted = False
        for _ in range(40):
            vt = v + t * d
            evt = oracle(vt, beta)
            gt = evt["phi"] - vt @ n
            rt = evt["grad"] - n
            if gt >= g + 1e-4 * t * slope and gt > g:
                accepted = True
            elif abs(gt - g) <= 1e-13 * (1 + abs(g)) and np.max(np.abs(rt)) < 0.5 * rn:
                accepted = True
            if accepted:
                break
            t *= 0.5
        if not accepted:
            break  # no further ascent at working precision
        radius = 2 * radius if t == 1.0 else max(t * np.max(np.abs(d)), 1e-12)
        v, g, r, ev = vt, max(g, gt), rt, evt
        trace.append((beta, g))
    return v, ev, g, it


def _lbfgs_stage(oracle, v, n, beta, gtol, max_iter, trace, radius=None):
    def fg(x):
        ev = oracle(x, beta)
        return -(ev["phi"] - x @ n), -(ev["grad"] - n)

    res = optimize.minimize(fg, v, jac=True, method="L-BFGS-B",
                            options=dict(maxiter=max_iter, gtol=gtol, ftol=1e-16, maxcor=30))
    v = res.x
    ev = oracle(v, beta)
    g = ev["phi"] - v @ n
    trace.append((beta, g))
    return v, ev, g, int(res.nit)


def _try_polish(oracle, v, n, ev, beta):
    res = oracle.polish(v.copy(), n, ev, beta)
    if res is None:
        return None
    vp, evp = res
    lo, up = oracle.certificate(vp, n, np.inf, evp)
    derr = float(np.max(np.abs(evp["grad"] - n)))
    if lo > up + 1e-10:
        return None
    return up - lo, lo, up, derr, np.inf, vp, evp


def _solve_dual(oracle, n, scale, tol, use_newton, max_iter=200, beta_max=1e10, v0=None,
                guess=None, beta0=4.0):
    """Continuation in ``beta``; after each stage try the zero-temperature polish.

    With a guessed active set the polish is tried first from ``v0``.
    """
    trace = []
    v = np.zeros(len(n)) if v0 is None else np.asarray(v0, float).copy()
    beta = beta0 / scale
    total = 0
    best = None
    dtol = 1e-9
    if guess is not None:
        res = oracle.polish_guess(v.copy(), n, guess)
        if res is not None:
            vp, evp = res
            lo, up = oracle.certificate(vp, n, np.inf, evp)
            derr = float(np.max(np.abs(evp["grad"] - n)))
            if -1e-10 <= up - lo <= tol and derr <= dtol:
                return vp, evp, lo, up, derr, np.inf, 0, True, trace
    while True:
        gtol = 1e-11 if use_newton else max(1e-9, 0.1 * tol)
        stage = _newton_stage if use_newton else _lbfgs_stage
        v, ev, g, it = stage(oracle, v, n, beta, gtol, max_iter, trace, scale)
        total += it
        lower, upper = oracle.certificate(v, n, beta, ev)
        derr = float(np.max(np.abs(ev["grad"] - n)))
        cands = [(upper - lower, lower, upper, derr, beta, v.copy(), ev)]
        if upper - lower > 1e-12 and beta * scale >= 40:
            pol = _try_polish(oracle, v, n, ev, beta)
            if pol is not None and pol[3] <= dtol:
                cands.append(pol)
        for c in cands:
            if c[3] <= dtol and (best is None or best[3] > dtol or c[0] < best[0]):
                best = c
            elif best is None:
                best = c
        if (best[0] <= min(tol, 1e-12) and best[3] <= dtol) or beta >= beta_max:
            break
        if abs(best[0]) <= tol and best[3] <= dtol:
            break
        beta *= 100.0
    gap, lower, upper, derr, beta, v, ev = best
    ok = -tol <= gap <= tol and derr <= dtol
    return v, ev, lower, upper, derr, beta, total, ok, trace


# --------------------------------------------------------------------------
# public solvers

@dataclass
class EnergyBreakdown:
    kinetic: float
    interaction: float
    direct: float
    f_ll: float
    exchange: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _full_v(model, red, v):
    out = np.full(model.n_sites, V_BIG)
    out[red.filled] = -V_BIG
    out[red.active] = v
    return out


def kinetic_min(model: LatticeModel, rho: GridDensity, tol: float = 1e-7,
                return_certificate: bool = False):
    """Minimal kinetic energy ``inf Tr(K gamma)`` over ``0 <= gamma <= 1``, ``diag gamma = n``.

    Parameters
    ----------
    model : LatticeModel
    rho : GridDensity
    tol : float
        Target width of the certified bracket (absolute).
    return_certificate : bool
        Also return the DualCertificate.

    Returns
    -------
    T : float
        Kinetic energy of the returned feasible ``gamma`` (upper end of the bracket).
    gamma : ndarray
        One-body density matrix on all sites.
    """
    n = _check_occupations(rho)
    red = _reduce(model, None, n)
    M = len(red.active)
    gamma = np.zeros((model.n_sites, model.n_sites))
    gamma[red.filled, red.filled] = 1.0
    if M == 0:
        cert = DualCertificate(_full_v(model, red, np.zeros(0)), red.const_kin, red.const_kin,
                               0.0, 0.0, 0, True, np.inf)
        return (red.const_kin, gamma, cert) if return_certificate else (red.const_kin, gamma)
    oracle = _OneBodyOracle(red.K)
    scale = max(1.0, float(np.max(np.abs(red.K))))
    v, ev, lower, upper, derr, beta, it, ok, trace = _solve_dual(
        oracle, red.n, scale, tol, use_newton=M <= NEWTON_MAX_SITES, beta0=4000.0)
    V, f = ev["V"], ev["f"]
    gamma[np.ix_(red.active, red.active)] = (V * f) @ V.T
    T = upper + red.const_kin
    cert = DualCertificate(_full_v(model, red, v), lower + red.const_kin, T, upper - lower,
                           derr, it, ok, beta, trace)
    return (T, gamma, cert) if return_certificate else (T, gamma)


def _fock_warm_start(model, rho, red):
    """Non-interacting optimum minus the Hartree field, and the two bracketing sectors."""
    _, _, cert = kinetic_min(model, rho, tol=1e-9, return_certificate=True)
    v0 = cert.v[red.active] - (red.W - np.diag(np.diag(red.W))) @ red.n - red.field
    tot = float(red.n.sum())
    lo = int(np.floor(tot + 1e-12))
    frac = tot - lo
    if frac < 1e-12 or lo + 1 > len(red.n):
        guess = dict(sectors=[lo], q=np.ones(1))
    else:
        guess = dict(sectors=[lo, lo + 1], q=np.array([1 - frac, frac]))
    return v0, guess


def levy_lieb(model: LatticeModel, pot, rho: GridDensity, tol: float = 1e-7,
              cap: int = FOCK_CAP, k_states: int = 8):
    """Grand-canonical Levy-Lieb functional on a lattice.

    Returns
    -------
    breakdown : EnergyBreakdown
    certificate : DualCertificate
    state : GrandState
        Feasible state whose density matches ``rho`` to ``certificate.density_error``.
    """
    from .potential import direct_energy

    n = _check_occupations(rho)
    W = _interaction_matrix(model, pot)
    red = _reduce(model, W, n)
    M = len(red.active)
    if M > cap:
        raise CapacityError(f"Fock space over {M} sites exceeds the cap of {cap} sites")
    ham = _FockHamiltonian(red, cap)
    if M == 0:
        state = GrandState(model.n_sites, red.active, red.filled, {0: np.ones((1, 1))})
        v = np.zeros(0)
        lower = upper = 0.0
        derr, beta, it, ok, trace = 0.0, np.inf, 0, True, []
    else:
        oracle = _FockOracle(ham, k_states)
        scale = max(1.0, float(np.max(np.abs(red.K))), float(np.max(np.abs(red.W))))
        v0, guess = _fock_warm_start(model, rho, red)
        v, ev, lower, upper, derr, beta, it, ok, trace = _solve_dual(
            oracle, red.n, scale, tol, use_newton=True, v0=v0, guess=guess)
        blocks = {}
        for N, w, U, p, D, sig in ev["keep"]:
            s = p > 1e-300
            blocks[N] = U[:, s] * np.sqrt(p[s])
        state = GrandState(model.n_sites, red.active, red.filled, blocks)
    kin, inter, rho_g = state_observables(state, model, pot)
    f_ll = kin + inter
    direct = direct_energy(rho, rho, pot) if pot is not None else 0.0
    cert = DualCertificate(_full_v(model, red, v), lower + ham.const, upper + ham.const,
                           upper - lower, derr, it, ok, beta, trace)
    return EnergyBreakdown(kin, inter, direct, f_ll, f_ll - direct), cert, state


def exchange_energy(model: LatticeModel, pot, rho: GridDensity, tol: float = 1e-7,
                    cap: int = FOCK_CAP) -> EnergyBreakdown:
    """``E(rho) = F_LL(rho) - D(rho)``, with both terms reported."""
    return levy_lieb(model, pot, rho, tol, cap)[0]

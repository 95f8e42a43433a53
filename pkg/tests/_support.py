"""Shared generators and independent oracles for the test suite.

Oracles here are deliberately different algorithms from the library paths
they check: fixed-step RK4 for cell propagators, cell-averaged finite
difference matrices for kernels and spectra, explicit Chebyshev-type closed
forms for the free chain.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from anderson1d import model


def random_profile(rng, max_cells=4, q_scale=4.0, m_choices=(1, 2, 3, 4)):
    """Piecewise-constant potential on [0, cells] with per-subcell values."""
    m = int(rng.choice(m_choices))
    cells = int(rng.integers(2, max_cells + 1))
    values = tuple(float(v) for v in rng.uniform(-q_scale, q_scale, size=m * cells))
    return model.PotentialProfile(0, m, (1,) * (m * cells), values)


def budgeted_cell(rng, budget):
    """(profile over one unit cell, theta) with integral |q| <= budget.

    Mirrors the generator that produced the frozen mass-envelope table.
    """
    m = int(rng.choice([1, 2, 4, 8]))
    raw = rng.uniform(-1.0, 1.0, size=m)
    l1 = float(np.abs(raw).mean())
    if l1 == 0.0:
        raw = np.ones(m)
        l1 = 1.0
    frac = float(rng.uniform(0.5, 1.0))
    values = tuple(float(v) for v in raw * (budget * frac / l1))
    theta = float(rng.uniform(0.0, 2.0 * math.pi))
    return model.PotentialProfile(0, m, (1,) * m, values), theta


def rk4_system_propagator(q: float, length: float, n_steps: int = 4000) -> np.ndarray:
    """Fundamental matrix of u'' = q u by fixed-step RK4 on (u, u')."""
    h = length / n_steps
    y = np.array([[1.0, 0.0], [0.0, 1.0]])  # columns are basis solutions

    def f(state):
        return np.array([state[1], q * state[0]])

    for _ in range(n_steps):
        k1 = np.array([f(y[:, 0]), f(y[:, 1])]).T
        k2 = np.array([f(y[:, 0] + 0.5 * h * k1[:, 0]), f(y[:, 1] + 0.5 * h * k1[:, 1])]).T
        k3 = np.array([f(y[:, 0] + 0.5 * h * k2[:, 0]), f(y[:, 1] + 0.5 * h * k2[:, 1])]).T
        k4 = np.array([f(y[:, 0] + h * k3[:, 0]), f(y[:, 1] + h * k3[:, 1])]).T
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def fd_hamiltonian(profile, a, b, mesh=512):
    """Interior nodes and (diag, offdiag) of the cell-averaged FD operator."""
    n = (b - a) * mesh - 1
    xs = a + np.arange(1, n + 1) / mesh
    h = 1.0 / mesh
    q = 0.5 * (
        np.array([profile.value_at(x - h / 2) for x in xs])
        + np.array([profile.value_at(x + h / 2) for x in xs])
    )
    diag = 2.0 / h**2 + q
    off = -np.ones(n - 1) / h**2
    return xs, diag, off


def fd_kernel(profile, a, b, energy, mesh=512):
    """Dense Dirichlet resolvent kernel on the mesh, via a banded solve."""
    xs, diag, off = fd_hamiltonian(profile, a, b, mesh)
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = diag - energy
    ab[2, :-1] = off
    kernel = solve_banded((1, 1), ab, np.eye(n)) * mesh
    return xs, kernel


def fd_kernel_columns(profile, a, b, energy, targets, mesh=512):
    """Kernel columns G(., t) for t in targets (grid-snapped), one solve each."""
    xs, diag, off = fd_hamiltonian(profile, a, b, mesh)
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1, :] = diag - energy
    ab[2, :-1] = off
    cols = {}
    for t in targets:
        j = int(round((t - a) * mesh)) - 1
        rhs = np.zeros(n)
        rhs[j] = 1.0
        cols[t] = solve_banded((1, 1), ab, rhs) * mesh
    return xs, cols


def fd_eigenvalues_below(profile, a, b, energy, mesh=512) -> int:
    _, diag, off = fd_hamiltonian(profile, a, b, mesh)
    evals = eigh_tridiagonal(diag, off, select="v", select_range=(-1e9, energy))[0]
    return int(evals.size)


def fd_block_hs(xs, kernel, x, y, mesh=512):
    """Trapezoid Frobenius norm of the kernel block [x, x+1] x [y, y+1].

    The kernel vanishes on the boundary, so padding with zeros supplies the
    edge rows exactly.
    """
    full = np.zeros((kernel.shape[0] + 2, kernel.shape[1] + 2))
    full[1:-1, 1:-1] = kernel
    a = xs[0] - 1.0 / mesh
    ix = slice(int(round((x - a) * mesh)), int(round((x + 1 - a) * mesh)) + 1)
    iy = slice(int(round((y - a) * mesh)), int(round((y + 1 - a) * mesh)) + 1)
    block = full[ix, iy] ** 2
    wx = np.ones(block.shape[0])
    wx[0] = wx[-1] = 0.5
    wy = np.ones(block.shape[1])
    wy[0] = wy[-1] = 0.5
    return math.sqrt(float(np.einsum("i,ij,j->", wx, block, wy)) / mesh**2)


def chebyshev_second(j: int, c: float) -> float:
    """U_j(c) via the explicit root formula, valid inside and outside [-1, 1]."""
    if j < 0:
        return 0.0
    if abs(c) <= 1.0:
        theta = math.acos(c)
        if math.sin(theta) < 1e-12:
            return float((j + 1) * (1 if c > 0 else (-1) ** j))
        return math.sin((j + 1) * theta) / math.sin(theta)
    s = math.copysign(1.0, c)
    ca = abs(c)
    r = ca + math.sqrt(ca * ca - 1.0)
    val = (r ** (j + 1) - r ** (-(j + 1))) / (r - 1.0 / r)
    return float(s**j * val)


def free_chain_green(x: int, b: int, energy: float, y: int) -> float:
    """Closed-form G_{[x, b]}(x, y; E) of the zero-coupling chain.

    The boundary solutions are u_x(x + j) = U_j(-E/2) and
    u_b(b - j) = U_j(-E/2); the Wronskian is evaluated at the left edge.
    """
    c = -energy / 2.0
    n = b - x
    u_b_at = lambda site: chebyshev_second(b - site, c)
    w = chebyshev_second(1, c) * u_b_at(x) - chebyshev_second(0, c) * u_b_at(x + 1)
    return u_b_at(y) / w

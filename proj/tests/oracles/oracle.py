"""Independent reference computations used to freeze expected values in the C++ tests.

Routes here deliberately differ from the library: the beamsplitter is built as a
matrix exponential on a truncated two-mode Fock space, the inversion uses a
generic multivariate root solver, and the emitter uses an adaptive ODE solver.
"""
import numpy as np
from scipy.linalg import expm
from scipy.integrate import solve_ivp
from scipy.optimize import fsolve

CUT = 9  # per-mode truncation, enough for 4 photons total


def ladder(n):
    return np.diag(np.sqrt(np.arange(1, n)), 1)


def two_mode_ops(n):
    a = ladder(n)
    eye = np.eye(n)
    return np.kron(a, eye), np.kron(eye, a)


def input_state(p, alpha, phi, n):
    """|psi_a> (x) |psi_b> with b acquiring n*phi per Fock term."""
    amps_a = np.zeros(n, complex)
    amps_b = np.zeros(n, complex)
    phases = [0.0] + list(alpha)
    for k, pk in enumerate(p):
        amps_a[k] = np.sqrt(pk) * np.exp(1j * phases[k])
        amps_b[k] = np.sqrt(pk) * np.exp(1j * (phases[k] + k * phi))
    return np.kron(amps_a, amps_b)


def bs_unitary(n):
    # exp(theta (a^dag b - a b^dag)) with theta = pi/4 realises a balanced splitter
    a, b = two_mode_ops(n)
    gen = np.pi / 4 * (a.conj().T @ b - a @ b.conj().T)
    return expm(gen)


def brute(p, alpha, phi, n=CUT):
    psi = bs_unitary(n) @ input_state(p, alpha, phi, n)
    c, d = two_mode_ops(n)
    nc = np.real(psi.conj() @ (c.conj().T @ c) @ psi)
    nd = np.real(psi.conj() @ (d.conj().T @ d) @ psi)
    cc = np.real(psi.conj() @ (c.conj().T @ c @ d.conj().T @ d) @ psi)
    return nc, nd, cc


def inversion(v1, v2, g2):
    def eqs(x):
        p0, p1, p2, l2 = x
        return [
            l2 * p1 * (p0 + 2 * np.sqrt(2 * p0 * p2) + 2 * p2) / (p1 + 2 * p2) - v1,
            l2 * p0 - v2,
            2 * p2 / (p1 + 2 * p2) ** 2 - g2,
            p0 + p1 + p2 - 1,
        ]
    sol = fsolve(eqs, [0.8, 0.05, 0.15, 0.5], xtol=1e-14)
    return sol[0], sol[1], sol[2], np.sqrt(sol[3])


def emitter(area_pi, fwhm, gamma, gamma_star=0.0):
    c = 2 * np.log(2) / fwhm**2
    norm = (4 * np.log(2) / (np.pi * fwhm**2)) ** 0.25
    xi_int = norm * np.sqrt(np.pi / c)
    amp = area_pi * np.pi / 2 / xi_int

    def omega(t):
        return amp * norm * np.exp(-c * t * t)

    sm = np.array([[0, 1], [0, 0]], complex)  # |g><e| with g=0, e=1
    sz = sm.conj().T @ sm - sm @ sm.conj().T

    def rhs(t, y):
        rho = y[:4].reshape(2, 2)
        h = 1j * omega(t) * (sm - sm.conj().T)
        d = -1j * (h @ rho - rho @ h)
        d += gamma / 2 * (2 * sm @ rho @ sm.conj().T - sm.conj().T @ sm @ rho - rho @ sm.conj().T @ sm)
        d += gamma_star / 4 * (2 * sz @ rho @ sz - 2 * rho)
        return np.concatenate([d.reshape(4), [gamma * rho[1, 1]]])

    t0, t1 = -4 * fwhm, 4 * fwhm + 10 / gamma
    y0 = np.zeros(5, complex)
    y0[0] = 1
    sol = solve_ivp(rhs, (t0, t1), y0, rtol=1e-11, atol=1e-13, dense_output=True)
    n_out = sol.y[4, -1].real

    # regression theorem over emission times inside the pulse window
    tw = np.linspace(t0, 4 * fwhm, 801)
    inner = []
    for t in tw:
        ree = sol.sol(t)[3].real
        yc = np.zeros(5, complex)
        yc[0] = 1
        s2 = solve_ivp(rhs, (t, t1), yc, rtol=1e-10, atol=1e-13)
        inner.append(gamma * ree * s2.y[4, -1].real)
    c0 = 2 * np.trapz(inner, tw)
    return n_out, c0


if __name__ == "__main__":
    print("NOON", brute([0, 1], [0], 0.0))
    print("0+1 phi=0", brute([0.5, 0.5], [0], 0.0))
    print("0+1 phi=pi/2", brute([0.5, 0.5], [0], np.pi / 2))
    print("p=(.7,.2,.1) phi=pi/4", brute([0.7, 0.2, 0.1], [0, 0], np.pi / 4))
    print("phased (0.4,0.3,0.2,0.1) alpha=(0.3,-1.1,2.0) phi=0.7",
          brute([0.4, 0.3, 0.2, 0.1], [0.3, -1.1, 2.0], 0.7, n=10))
    print("v1 alpha pi:", brute([0.5, 0.3, 0.2], [np.pi / 2, 0.0], 0.0),
          brute([0.5, 0.3, 0.2], [np.pi / 2, 0.0], np.pi))
    print("inversion", inversion(0.192, 0.452, 2.98))
    print("emitter QD1 pi", emitter(1.0, 40.0, 1 / 166.0))
    print("emitter 2pi gt=0.09", emitter(2.0, 0.09 * 166.0, 1 / 166.0))

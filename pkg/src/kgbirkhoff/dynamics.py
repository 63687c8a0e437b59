"""Time integration and the measurements behind the normal-form estimates.

The truncated flow ``du/dt = i grad_ubar G(u, ubar)`` is integrated with a
Strang splitting (exact diagonal rotation around an explicit-midpoint
nonlinear substep) or an adaptive Runge-Kutta on the full field.  Generator
flows realize the normal-form change of variables numerically: the forward
transform applies the time-1 flows of the generators highest degree first,
the inverse applies time-(-1) flows in the opposite order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .kgmodel import weighted_energy
from .polyalg import HomPoly, State


class DivergenceError(RuntimeError):
    """Trajectory norm exceeded the blow-up guard."""

    def __init__(self, t_last, norm_ratio):
        self.t_last = t_last
        self.norm_ratio = norm_ratio
        super().__init__(
            f"trajectory diverged after t={t_last:.6g} "
            f"(norm ratio {norm_ratio:.3g})")


class FlowError(RuntimeError):
    """Generator flow failed (step-size underflow, amplitude too large)."""


@dataclass
class IntegratorConfig:
    """Time stepper parameters.

    ``scheme`` is ``"strang-split"`` (exact linear rotation + explicit
    midpoint nonlinear substep) or ``"rk-adaptive"`` (DOP853 on the full
    vector field with ``local_tol``).
    """

    dt: float
    t_end: float
    scheme: str = "strang-split"
    local_tol: float = 1e-10

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.dt > self.t_end:
            raise ValueError("dt must not exceed t_end")
        if self.local_tol <= 0:
            raise ValueError("local_tol must be > 0")
        if self.scheme not in ("strang-split", "rk-adaptive"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class Trajectory:
    """Sampled observables along one trajectory (times strictly increasing)."""

    times: np.ndarray
    actions: np.ndarray          # shape (n_samples, n_max), cluster order
    hamiltonian: np.ndarray
    sobolev: np.ndarray
    energy: np.ndarray           # weighted energy sum n^(2s) J_n
    s: float
    checkpoints: list = field(default_factory=list)   # (t, state array)
    diagnostics: dict = field(default_factory=dict)

    def energy_drift(self):
        return float(np.max(np.abs(self.hamiltonian - self.hamiltonian[0])))


# ----------------------------------------------------------------------
# compiled polynomial evaluation (arrays indexed by mode position)
# ----------------------------------------------------------------------

class CompiledParts:
    """Vector-field evaluator for a set of homogeneous parts.

    Monomials are grouped by (u-arity, ubar-arity) into index matrices so
    that gradients reduce to a few vectorized products per group;
    multiplicities of repeated modes come out of summing over slot columns.
    """

    def __init__(self, parts, spec):
        self.spec = spec
        self.n = len(spec.mode_ids)
        groups = {}
        for part in parts:
            for k, c in part.terms.items():
                shape = (len(k.u_modes), len(k.ubar_modes))
                rows = groups.setdefault(shape, ([], [], []))
                rows[0].append([spec.mode_position(m) for m in k.u_modes])
                rows[1].append([spec.mode_position(m) for m in k.ubar_modes])
                rows[2].append(c)
        self.groups = []
        for (nu, nb), (upos, bpos, coeff) in groups.items():
            self.groups.append((
                np.array(upos, dtype=np.intp).reshape(len(coeff), nu),
                np.array(bpos, dtype=np.intp).reshape(len(coeff), nb),
                np.array(coeff, dtype=complex)))

    def value(self, u):
        total = 0j
        for upos, bpos, coeff in self.groups:
            term = coeff * np.prod(u[upos], axis=1) \
                * np.prod(np.conj(u)[bpos], axis=1)
            total += term.sum()
        return total

    def grad_ubar(self, u):
        """Array of ``dP/dubar_k`` at ``u``."""
        ubar = np.conj(u)
        out = np.zeros(self.n, dtype=complex)
        for upos, bpos, coeff in self.groups:
            nb = bpos.shape[1]
            if nb == 0:
                continue
            base = coeff * np.prod(u[upos], axis=1)
            vals = ubar[bpos]
            for j in range(nb):
                others = np.prod(np.delete(vals, j, axis=1), axis=1)
                np.add.at(out, bpos[:, j], base * others)
        return out

    def field(self, u):
        """Hamiltonian vector field ``i * grad_ubar`` at ``u``."""
        return 1j * self.grad_ubar(u)


def compile_parts(parts, spec):
    return CompiledParts([p for p in parts if not p.is_zero()], spec)


# ----------------------------------------------------------------------
# flows
# ----------------------------------------------------------------------

def linear_flow(state, t, spec):
    """Exact flow of the quadratic part: each mode rotates by ``exp(i w t)``."""
    return State({m: c * complex(np.exp(1j * spec.omega[spec.cluster_of(m)]
                                        * t))
                  for m, c in state.amplitudes.items()})


def _observe(u, spec, s):
    j = np.zeros(spec.n_max)
    np.add.at(j, np.array([spec.cluster_of(m) for m in spec.mode_ids]) - 1,
              np.abs(u) ** 2)
    weights = np.arange(1, spec.n_max + 1, dtype=float) ** (2 * s)
    energy = float(weights @ j)
    return j, energy


def integrate(state0, ham, cfg, observe_every=1, s=2.0,
              checkpoint_every=None):
    """Integrate the truncated flow of ``G2 + parts`` and sample observables.

    Parameters
    ----------
    state0 : State
    ham : PolyHamiltonian
    cfg : IntegratorConfig
    observe_every : int
        Record observables every that many steps (first and last always).
    s : float
        Weight exponent for the energy observable.
    checkpoint_every : int, optional
        Store the full state every that many observations.

    Returns
    -------
    Trajectory

    Raises
    ------
    DivergenceError
        If the norm grows past 1e3 times its initial value.
    """
    spec = ham.spec
    u = spec.state_to_array(state0)
    nl = compile_parts(ham.parts, spec)
    omega = spec.omega_by_mode
    n_steps = int(round(cfg.t_end / cfg.dt))
    guard = 1e3 * max(np.linalg.norm(u), 1e-300)

    times, acts, hams, sobs, ens = [], [], [], [], []
    checkpoints = []

    def record(i_obs, t, u):
        j, energy = _observe(u, spec, s)
        times.append(t)
        acts.append(j)
        g2 = float(omega @ (np.abs(u) ** 2))
        hams.append(g2 + nl.value(u).real)
        sobs.append(math.sqrt(energy))
        ens.append(energy)
        if checkpoint_every and i_obs % checkpoint_every == 0:
            checkpoints.append((t, u.copy()))

    if cfg.scheme == "strang-split":
        half = np.exp(1j * omega * cfg.dt / 2)
        record(0, 0.0, u)
        n_obs = 1
        for step in range(1, n_steps + 1):
            u = half * u
            k1 = nl.field(u)
            um = u + 0.5 * cfg.dt * k1
            u = u + cfg.dt * nl.field(um)
            u = half * u
            if step % observe_every == 0 or step == n_steps:
                t = step * cfg.dt
                if np.linalg.norm(u) > guard:
                    raise DivergenceError(t_last=(step - 1) * cfg.dt,
                                          norm_ratio=1e3)
                record(n_obs, t, u)
                n_obs += 1
    else:
        def rhs(t, y):
            uu = y.view(complex)
            duu = 1j * omega * uu + nl.field(uu)
            return duu.view(float)

        t_eval = np.arange(0, n_steps + 1, observe_every) * cfg.dt
        if t_eval[-1] < cfg.t_end:
            t_eval = np.append(t_eval, cfg.t_end)
        sol = solve_ivp(rhs, (0.0, cfg.t_end), u.view(float).copy(),
                        method="DOP853", t_eval=t_eval,
                        rtol=cfg.local_tol, atol=cfg.local_tol * 1e-2)
        if not sol.success:
            raise DivergenceError(t_last=float(sol.t[-1]), norm_ratio=np.nan)
        for i, t in enumerate(sol.t):
            uu = sol.y[:, i].copy().view(complex)
            if np.linalg.norm(uu) > guard:
                raise DivergenceError(t_last=float(t), norm_ratio=1e3)
            record(i, float(t), uu)

    traj = Trajectory(times=np.array(times), actions=np.array(acts),
                      hamiltonian=np.array(hams), sobolev=np.array(sobs),
                      energy=np.array(ens), s=s, checkpoints=checkpoints)
    traj.diagnostics = {"dt": cfg.dt, "scheme": cfg.scheme,
                        "n_steps": n_steps,
                        "energy_drift": traj.energy_drift()}
    return traj


def generator_flow(F, state, t, local_tol=1e-10, spec=None):
    """Flow ``du/dt = i grad_ubar F`` from ``state`` for time ``t``.

    Uses an adaptive explicit integrator (DOP853) at ``local_tol``;
    composing ``t`` and ``-t`` returns the input to integrator accuracy.
    """
    if t == 0 or F.is_zero():
        return state.copy()
    order, pos = _flow_ordering(F, state, spec)
    u0 = np.zeros(len(order), dtype=complex)
    for m, c in state.amplitudes.items():
        u0[pos[m]] = c
    comp = _compile_on_ordering([F], order, pos)

    def rhs(_t, y):
        return comp.field(y.view(complex)).view(float)

    sol = solve_ivp(rhs, (0.0, t), u0.view(float).copy(), method="DOP853",
                    rtol=local_tol, atol=local_tol * 1e-2)
    if not sol.success:
        raise FlowError(f"generator flow failed: {sol.message}")
    u1 = sol.y[:, -1].copy().view(complex)
    return State({m: complex(u1[pos[m]]) for m in order if u1[pos[m]] != 0})


def _flow_ordering(F, state, spec):
    if spec is not None:
        return list(spec.mode_ids), {m: i for i, m
                                     in enumerate(spec.mode_ids)}
    modes = set(state.amplitudes)
    for k in F.terms:
        modes.update(k.u_modes)
        modes.update(k.ubar_modes)
    order = sorted(modes)
    return order, {m: i for i, m in enumerate(order)}


class _Ordering:
    def __init__(self, order, pos):
        self.mode_ids = tuple(order)
        self._pos = pos

    def mode_position(self, m):
        return self._pos[m]


def _compile_on_ordering(parts, order, pos):
    fake = _Ordering(order, pos)
    comp = CompiledParts.__new__(CompiledParts)
    CompiledParts.__init__(comp, parts, fake)
    return comp


def apply_transform(generators, state, spec=None, local_tol=1e-10):
    """Forward normal-form transform: time-1 flows, highest degree first."""
    out = state
    for F in reversed(list(generators)):
        out = generator_flow(F, out, 1.0, local_tol=local_tol, spec=spec)
    return out


def apply_inverse_transform(generators, state, spec=None, local_tol=1e-10):
    """Inverse transform: time-(-1) flows, lowest degree first."""
    out = state
    for F in generators:
        out = generator_flow(F, out, -1.0, local_tol=local_tol, spec=spec)
    return out


# ----------------------------------------------------------------------
# near-identity measurement
# ----------------------------------------------------------------------

@dataclass
class NearIdentityFit:
    amplitudes: list
    forward_deviation: list
    inverse_deviation: list
    forward_exponent: float
    forward_constant: float
    inverse_exponent: float
    inverse_constant: float


def near_identity_check(generators, amplitudes, spec=None, n_directions=4,
                        seed=7, local_tol=1e-10):
    """Power-law fit of ``|T(u) - u|`` against ``|u|``.

    Random unit directions are scaled to each amplitude; the deviation is
    averaged over directions and the log-log slope fitted (the transform is
    quadratically close to the identity, so the expected exponent is 2).
    Both the forward and the inverse transform are measured.
    """
    amplitudes = list(amplitudes)
    if len(amplitudes) < 3:
        raise ValueError("need at least 3 amplitudes for a fit")
    modes = set()
    for F in generators:
        for k in F.terms:
            modes.update(k.u_modes)
            modes.update(k.ubar_modes)
    if spec is not None:
        modes.update(spec.mode_ids)
    modes = sorted(modes)
    rng = np.random.default_rng(seed)
    dirs = []
    for _ in range(n_directions):
        z = rng.normal(size=len(modes)) + 1j * rng.normal(size=len(modes))
        z /= np.linalg.norm(z)
        dirs.append(z)

    fwd, inv = [], []
    for amp in amplitudes:
        df, di = [], []
        for z in dirs:
            u = State({m: complex(amp * z[i]) for i, m in enumerate(modes)})
            tu = apply_transform(generators, u, spec=spec,
                                 local_tol=local_tol)
            df.append(_state_distance(tu, u))
            ti = apply_inverse_transform(generators, u, spec=spec,
                                         local_tol=local_tol)
            di.append(_state_distance(ti, u))
        fwd.append(float(np.mean(df)))
        inv.append(float(np.mean(di)))

    def fit(devs):
        if min(devs) == 0.0:
            return 0.0, 0.0
        slope, intercept = np.polyfit(np.log(amplitudes), np.log(devs), 1)
        return float(slope), float(np.exp(intercept))

    fe, fc = fit(fwd)
    ie, ic = fit(inv)
    return NearIdentityFit(amplitudes=amplitudes, forward_deviation=fwd,
                           inverse_deviation=inv, forward_exponent=fe,
                           forward_constant=fc, inverse_exponent=ie,
                           inverse_constant=ic)


def _state_distance(a, b):
    modes = set(a.amplitudes) | set(b.amplitudes)
    return math.sqrt(sum(abs(a.get(m) - b.get(m)) ** 2 for m in modes))


# ----------------------------------------------------------------------
# drift experiment
# ----------------------------------------------------------------------

@dataclass
class DriftRow:
    eps: float
    t_end: float
    raw_drift: float             # max_t max_n n^(2s) |J_n(t) - J_n(0)|
    transformed_drift: float     # same for J_n o T^(-1)
    raw_bound_ok: bool           # raw_drift <= 10 eps^3
    energy_series: list          # (t, E(t)) with E = sum n^(2s) J_n o T^(-1)
    max_energy_increment: float


@dataclass
class DriftTable:
    rows: list
    r: int
    s: float
    seed: int
    raw_exponent: float
    raw_constant: float
    transformed_exponent: float
    transformed_constant: float


def random_unit_state(spec, s, seed):
    """Complex Gaussian data per mode, rescaled to unit H^s norm."""
    rng = np.random.default_rng(seed)
    z = rng.normal(size=len(spec.mode_ids)) \
        + 1j * rng.normal(size=len(spec.mode_ids))
    state = State({m: complex(z[i]) for i, m in enumerate(spec.mode_ids)})
    norm = math.sqrt(weighted_energy(state, s, spec))
    return State({m: c / norm for m, c in state.amplitudes.items()})


def drift_experiment(ham, nf, eps_list, r, s, cfg, seed=2024,
                     observe_every=None, transform_samples=160):
    """Measure action drift of the original flow against the transform.

    For each amplitude ``eps`` the truncated flow starts from random unit
    H^s data scaled by ``eps`` and runs to ``t = eps^(-r)``.  The raw drift
    ``max n^(2s) |J_n(t) - J_n(0)|`` is recorded at every observation; the
    transformed drift applies the inverse normal-form transform at
    ``transform_samples`` evenly spaced checkpoints first.  Log-log slopes
    over the eps grid estimate both drift exponents.

    Parameters
    ----------
    ham : PolyHamiltonian
    nf : NormalFormResult
        Must stem from ``ham`` with order at least ``r``.
    eps_list : sequence of float (>= 3 entries, decreasing geometric grid)
    r : int
        Time horizon exponent, ``t_end = eps^(-r)``.
    s : float
    cfg : IntegratorConfig
        ``cfg.t_end`` is overridden per eps.
    """
    eps_list = list(eps_list)
    if len(eps_list) < 3:
        raise ValueError("need at least 3 amplitudes")
    if nf.r0 < r:
        raise ValueError("normal form order below the requested horizon")
    spec = ham.spec
    weights = np.arange(1, spec.n_max + 1, dtype=float) ** (2 * s)
    unit = random_unit_state(spec, s, seed)

    rows = []
    for eps in eps_list:
        u0 = State({m: eps * c for m, c in unit.amplitudes.items()})
        t_end = eps ** (-r)
        dt = cfg.dt
        n_steps = int(round(t_end / dt))
        run_cfg = IntegratorConfig(dt=dt, t_end=n_steps * dt,
                                   scheme=cfg.scheme,
                                   local_tol=cfg.local_tol)
        obs = observe_every or max(1, int(round(0.01 / dt)))
        n_obs = n_steps // obs + 1
        ck_every = max(1, n_obs // transform_samples)
        traj = integrate(u0, ham, run_cfg, observe_every=obs, s=s,
                         checkpoint_every=ck_every)

        dj = np.abs(traj.actions - traj.actions[0]) * weights
        raw = float(dj.max())

        tr_actions = []
        energy_series = []
        for t, u in traj.checkpoints:
            w = apply_inverse_transform(nf.generators,
                                        spec.array_to_state(u), spec=spec,
                                        local_tol=cfg.local_tol)
            warr = spec.state_to_array(w)
            j, energy = _observe(warr, spec, s)
            tr_actions.append(j)
            energy_series.append((float(t), energy))
        tr_actions = np.array(tr_actions)
        dj_tr = np.abs(tr_actions - tr_actions[0]) * weights
        transformed = float(dj_tr.max())
        energies = np.array([e for _, e in energy_series])
        rows.append(DriftRow(
            eps=eps, t_end=t_end, raw_drift=raw,
            transformed_drift=transformed,
            raw_bound_ok=bool(raw <= 10.0 * eps ** 3),
            energy_series=energy_series,
            max_energy_increment=float(np.max(np.abs(energies
                                                     - energies[0])))))

    def fit(vals):
        vals = np.array(vals)
        if np.any(vals <= 0):
            return 0.0, 0.0
        slope, intercept = np.polyfit(np.log(eps_list), np.log(vals), 1)
        return float(slope), float(np.exp(intercept))

    re_, rc = fit([row.raw_drift for row in rows])
    te, tc = fit([row.transformed_drift for row in rows])
    return DriftTable(rows=rows, r=r, s=s, seed=seed, raw_exponent=re_,
                      raw_constant=rc, transformed_exponent=te,
                      transformed_constant=tc)

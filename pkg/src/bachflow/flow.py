"""Time evolution of the linearized and the gauge-adjusted flow.

* :func:`linear_flow_torus`: exact per-mode exponentials on the flat torus.
* :func:`linear_flow_slab`: classical RK4 for dv/dt = L v / (n-2) on any
  grid, with an explicit stability-limited step.
* :func:`nonlinear_flow_torus`: RK4 for dg/dt = F(g) near the flat metric.
* :func:`decay_rate_fit`: least-squares slope of log |v(t)|.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .curvature import GaugeParams, MetricField, bach_tensor, flow_rhs, gauge_vector
from .decomposition import _wavenumbers, interior_mask
from .linearized import apply_L
from .model_spaces import ModelSpace
from .tensor_fields import TensorField, l2_inner, l2_norm_sq, metric_field

__all__ = [
    "DecayFit",
    "FlowBlowUp",
    "FlowTrajectory",
    "decay_rate_fit",
    "energy_identity_residual",
    "linear_flow_slab",
    "linear_flow_torus",
    "load_checkpoint",
    "nonlinear_flow_torus",
    "stable_dt",
    "torus_tt_mode",
]


class FlowBlowUp(RuntimeError):
    """Raised when the solution norm grows past the allowed factor."""

    def __init__(self, time: float, dt: float, recommended_dt: float, growth: float):
        self.time = time
        self.dt = dt
        self.recommended_dt = recommended_dt
        self.growth = growth
        super().__init__(f"norm grew by {growth:.3g}x at t={time:.4g}; dt={dt:.3e} "
                         f"(recommended <= {recommended_dt:.3e})")


@dataclass
class FlowTrajectory:
    """Stored times, states and per-step diagnostics of one run."""

    times: np.ndarray
    states: list
    diagnostics: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or len(self.states) != self.times.size:
            raise ValueError("one state per stored time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name, vals in self.diagnostics.items():
            if len(vals) != self.times.size:
                raise ValueError(f"diagnostic {name!r} is missing at some stored steps")
            self.diagnostics[name] = np.asarray(vals, dtype=float)

    def __len__(self) -> int:
        return self.times.size

    def to_csv(self) -> str:
        names = list(self.diagnostics)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + names)
        for i, t in enumerate(self.times):
            w.writerow([repr(float(t))] + [repr(float(self.diagnostics[k][i])) for k in names])
        return buf.getvalue()

    def save_checkpoint(self, path) -> None:
        """npz container: a JSON header plus one array per stored state."""
        first = self.states[0]
        space = first.space if isinstance(first, TensorField) else first.g.space
        header = {
            "n": space.n, "c": space.c, "chart": space.chart.name,
            "grid_shape": list(space.grid.shape), "active": list(space.grid.active),
            "kind": "metric" if isinstance(first, MetricField) else "perturbation",
            "params": self.params,
        }
        arrays = {f"state_{i:06d}": (s.g.data if isinstance(s, MetricField) else s.data)
                  for i, s in enumerate(self.states)}
        np.savez_compressed(path, header=np.array(json.dumps(header, sort_keys=True)), times=self.times,
                            **{f"diag_{k}": v for k, v in self.diagnostics.items()}, **arrays)


def load_checkpoint(path) -> tuple[dict, np.ndarray, list[np.ndarray], dict]:
    """Header, times, raw state arrays and diagnostics written by :meth:`FlowTrajectory.save_checkpoint`."""
    with np.load(path) as z:
        header = json.loads(str(z["header"]))
        times = z["times"]
        states = [z[k] for k in sorted(k for k in z.files if k.startswith("state_"))]
        diags = {k[5:]: z[k] for k in z.files if k.startswith("diag_")}
    return header, times, states, diags


def stable_dt(space: ModelSpace, safety: float = 0.2) -> float:
    """Default explicit step safety * h^4 (n-2)/8, h the smallest proper grid spacing."""
    g = space.grid
    gdiag = space.metric_diagonal
    h = np.inf
    for a in range(space.n):
        p = g.axis_of(a)
        if p is not None:
            h = min(h, float(g.spacing[p] * np.sqrt(np.min(gdiag[a]))))
    if not np.isfinite(h):
        raise ValueError("no active grid axis")
    return safety * h ** 4 * (space.n - 2) / 8.0


def _rk4(rhs, y: np.ndarray, t: float, dt: float, fix=None) -> np.ndarray:
    fix = (lambda arr, s: arr) if fix is None else fix
    k1 = rhs(y, t)
    k2 = rhs(fix(y + 0.5 * dt * k1, t + 0.5 * dt), t + 0.5 * dt)
    k3 = rhs(fix(y + 0.5 * dt * k2, t + 0.5 * dt), t + 0.5 * dt)
    k4 = rhs(fix(y + dt * k3, t + dt), t + dt)
    return fix(y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), t + dt)


def _step_plan(total: float, dt: float, samples: int | None, save_every: int | None) -> tuple[int, float, int]:
    if total <= 0:
        raise ValueError("final time must be positive")
    if dt <= 0:
        raise ValueError("time step must be positive")
    steps = max(1, int(np.ceil(total / dt - 1e-9)))
    dt = total / steps
    if save_every is None:
        save_every = max(1, steps // (samples or 50))
    return steps, dt, save_every


# ---------------------------------------------------------------------- torus, exact
def linear_flow_torus(v0: TensorField, total: float, *, times=None, samples: int = 50) -> FlowTrajectory:
    """Exact linear flow on the flat torus: mode k scales by exp(t sigma(k)/(n-2)).

    sigma(k) = -|xi|^4 / 2 with xi = 2 pi k / period.
    """
    space = v0.space
    if space.c != 0 or not space.grid.periodic:
        raise ValueError("the modal flow needs the periodic flat torus")
    n = space.n
    times = np.linspace(0.0, total, samples + 1) if times is None else np.asarray(times, dtype=float)
    axes = tuple(range(v0.rank, v0.rank + space.grid.ndim))
    k2 = sum(np.broadcast_to(w, space.grid.shape) ** 2 for w in _wavenumbers(space))
    rate = -0.5 * k2 ** 2 / (n - 2)
    spec = np.fft.fftn(v0.data, axes=axes)
    states, norms = [], []
    for t in times:
        data = np.real(np.fft.ifftn(spec * np.exp(rate * t), axes=axes))
        v = TensorField(data, space, v0.symmetry)
        states.append(v)
        norms.append(np.sqrt(l2_norm_sq(v)))
    return FlowTrajectory(times, states, {"norm": norms}, {"method": "modal", "n": n})


def torus_tt_mode(space: ModelSpace, k, amplitude: float = 1.0) -> TensorField:
    """amplitude * cos(2 pi k.x / period) (a b^T + b a^T) with a, b orthonormal and orthogonal to k.

    Divergence-free and trace-free, so the field is TT.
    """
    if space.c != 0 or not space.grid.periodic:
        raise ValueError("torus modes need the periodic flat model")
    n = space.n
    kv = np.zeros(n)
    kv[: len(k)] = k
    basis = np.linalg.svd(kv.reshape(1, -1))[2]
    a, b = (basis[1], basis[2]) if np.any(kv) else (np.eye(n)[0], np.eye(n)[1])
    e = np.outer(a, b) + np.outer(b, a)
    phase = 0.0
    for ax, ka in enumerate(kv):
        if ka:
            if space.grid.axis_of(ax) is None:
                raise ValueError(f"coordinate {ax} carries a wave number but is not resolved")
            phase = phase + 2.0 * np.pi * ka * space.coords[ax] / space.chart.period
    wave = np.broadcast_to(np.cos(phase), space.grid.shape)
    return TensorField(amplitude * e.reshape(e.shape + (1,) * space.grid.ndim) * wave, space, "sym2")


# ---------------------------------------------------------------------- grid stepping
def linear_flow_slab(v0: TensorField, total: float, *, dt: float | None = None, boundary=None,
                     samples: int = 50, save_every: int | None = None, max_growth: float = 10.0,
                     operator=None) -> FlowTrajectory:
    """RK4 for dv/dt = L v / (n-2) on the grid of ``v0``.

    On non-periodic grids a band of half a stencil width along the edge is
    held at ``boundary(t)`` (a TensorField, or zero when omitted), so a
    compactly supported start stays compactly supported up to the
    evolution's spread.  Aborts with :class:`FlowBlowUp` when the norm
    exceeds ``max_growth`` times its initial value.
    """
    space = v0.space
    n = space.n
    op = apply_L if operator is None else operator
    rec = stable_dt(space)
    dt = rec if dt is None else float(dt)
    steps, dt, save_every = _step_plan(total, dt, samples, save_every)
    sym = v0.symmetry
    if space.grid.periodic:
        fix = None
    else:
        band = ~interior_mask(space, space.order // 2 + 1)

        def fix(arr, t):
            out = arr.copy()
            out[..., band] = 0.0 if boundary is None else boundary(t).data[..., band]
            return out

    def rhs(arr, t):
        return op(TensorField(arr, space, sym)).data / (n - 2)

    y = v0.data.copy() if fix is None else fix(v0.data, 0.0)
    norm0 = np.sqrt(l2_norm_sq(TensorField(y, space, sym)))
    times, states, norms, forms = [], [], [], []

    def record(t, arr):
        v = TensorField(arr, space, sym)
        times.append(t)
        states.append(v)
        norms.append(np.sqrt(l2_norm_sq(v)))
        forms.append(l2_inner(v, op(v)))

    record(0.0, y)
    for step in range(1, steps + 1):
        t = (step - 1) * dt
        y = _rk4(rhs, y, t, dt, fix)
        nrm = np.sqrt(l2_norm_sq(TensorField(y, space, sym)))
        if not np.isfinite(nrm) or (norm0 > 0 and nrm > max_growth * norm0):
            raise FlowBlowUp(t + dt, dt, rec, nrm / norm0 if norm0 > 0 else np.inf)
        if step % save_every == 0 or step == steps:
            record(step * dt, y)
    return FlowTrajectory(times, states, {"norm": norms, "quadratic_form": forms},
                          {"method": "rk4", "dt": dt, "recommended_dt": rec, "n": n})


def energy_identity_residual(traj: FlowTrajectory) -> float:
    """Largest gap between d|v|^2/dt (centered differences) and 2 (v, Lv)/(n-2), relative to the latter."""
    n = traj.params["n"]
    t = traj.times
    e = traj.diagnostics["norm"] ** 2
    rate = np.gradient(e, t)
    pred = 2.0 * traj.diagnostics["quadratic_form"] / (n - 2)
    inner = slice(1, -1)
    scale = np.max(np.abs(pred[inner]))
    return float(np.max(np.abs(rate[inner] - pred[inner])) / scale) if scale > 0 else 0.0


def nonlinear_flow_torus(g0: MetricField, total: float, *, dt: float | None = None, samples: int = 50,
                         save_every: int | None = None, gauge: GaugeParams | None = None,
                         probe: TensorField | None = None, max_growth: float = 10.0,
                         max_deviation: float = 1e-2) -> FlowTrajectory:
    """RK4 for dg/dt = F(g) starting near the flat metric of the torus.

    Diagnostics per stored step: |g - h|, volume, |B(g)|, |Z| (all L^2
    with respect to the background), and, when ``probe`` is given, the
    amplitude <g - h, probe>/|probe|.
    """
    space = g0.space
    if space.c != 0 or not space.grid.periodic:
        raise ValueError("the nonlinear flow runs on the periodic flat torus")
    h = metric_field(space).data
    dev0 = float(np.max(np.abs(g0.g.data - h)))
    if dev0 > max_deviation:
        raise ValueError(f"initial deviation {dev0:.3e} exceeds {max_deviation:.1e}")
    rec = stable_dt(space)
    dt = rec if dt is None else float(dt)
    steps, dt, save_every = _step_plan(total, dt, samples, save_every)
    probe_norm = np.sqrt(l2_norm_sq(probe)) if probe is not None else None

    def rhs(arr, t):
        return flow_rhs(MetricField(TensorField(arr, space, "sym2")), 0.0, gauge).data

    diag = {"deviation": [], "volume": [], "bach_norm": [], "gauge_norm": []}
    if probe is not None:
        diag["mode_amplitude"] = []
    times, states = [], []

    def record(t, arr):
        g = MetricField(TensorField(arr, space, "sym2"))
        v = TensorField(arr - h, space, "sym2")
        times.append(t)
        states.append(g)
        diag["deviation"].append(np.sqrt(l2_norm_sq(v)))
        diag["volume"].append(g.volume())
        diag["bach_norm"].append(np.sqrt(l2_norm_sq(bach_tensor(g))))
        diag["gauge_norm"].append(np.sqrt(l2_norm_sq(gauge_vector(g, 0.0, gauge))))
        if probe is not None:
            diag["mode_amplitude"].append(l2_inner(v, probe) / probe_norm)

    y = g0.g.data.copy()
    record(0.0, y)
    dev_start = max(diag["deviation"][0], np.finfo(float).tiny)
    for step in range(1, steps + 1):
        t = (step - 1) * dt
        y = _rk4(rhs, y, t, dt)
        dev = np.sqrt(l2_norm_sq(TensorField(y - h, space, "sym2")))
        if not np.isfinite(dev) or (diag["deviation"][0] > 0 and dev > max_growth * dev_start):
            raise FlowBlowUp(t + dt, dt, rec, dev / dev_start)
        if step % save_every == 0 or step == steps:
            record(step * dt, y)
    return FlowTrajectory(times, states, diag, {"method": "rk4-nonlinear", "dt": dt, "recommended_dt": rec,
                                                "n": space.n})


# ---------------------------------------------------------------------- rate fitting
@dataclass(frozen=True)
class DecayFit:
    rate: float
    r2: float
    window: tuple


def decay_rate_fit(traj, *, key: str = "norm", window: tuple | None = None, values=None) -> DecayFit:
    """Least-squares fit of log|value| = const - rate t.

    ``traj`` is a :class:`FlowTrajectory` (diagnostic ``key``) or an array
    of times when ``values`` is given.
    """
    if isinstance(traj, FlowTrajectory):
        t = traj.times
        y = traj.diagnostics[key] if values is None else np.asarray(values, dtype=float)
    else:
        t = np.asarray(traj, dtype=float)
        if values is None:
            raise ValueError("values are required when times are passed directly")
        y = np.asarray(values, dtype=float)
    lo, hi = (t[0], t[-1]) if window is None else window
    sel = (t >= lo) & (t <= hi) & (np.abs(y) > 0)
    if sel.sum() < 2:
        raise ValueError("fewer than two usable points in the fit window")
    ly = np.log(np.abs(y[sel]))
    slope, intercept = np.polyfit(t[sel], ly, 1)
    fit = intercept + slope * t[sel]
    ss_res = float(np.sum((ly - fit) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), r2, (float(lo), float(hi)))

"""Constant-density acoustic finite-difference modelling.

Solves  p_tt + 2*eta*p_t = v^2 * (lap p + rho * s)  with an 8th-order central
Laplacian and a 2nd-order leapfrog in time.  ``eta`` is zero in the interior
and ramps quadratically through a sponge strip of ``boundary_width`` cells.
Writing the damping into the equation (rather than multiplying the field)
keeps the discrete operator symmetric, so source/receiver reciprocity holds
to round-off.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from ._io import read_f32, write_f32

# Taylor coefficients of the 8th-order second derivative (centre, +-1 .. +-4)
FD8 = (-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0)
HALO = 4


class SimulationError(RuntimeError):
    def __init__(self, message, scenario_id=None, year=None, shot=None, step=None):
        where = ", ".join(
            f"{k}={v}" for k, v in (("scenario", scenario_id), ("year", year), ("shot", shot), ("step", step))
            if v is not None
        )
        super().__init__(f"{message} ({where})" if where else message)
        self.scenario_id, self.year, self.shot, self.step = scenario_id, year, shot, step


class CFLError(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Grid, time stepping and acquisition geometry.

    Positions are (row, col) on the velocity map; the sponge strip is added
    outside the map, so every map cell is interior.  The defaults (3 shots on
    the top row, a receiver on every surface cell, 15 Hz Ricker) are
    stand-ins: the original acquisition geometry was never published.
    """

    dx: float = 10.0
    dt: float = 1.5e-3
    nt: int = 400
    source_positions: tuple[tuple[int, int], ...] = ()
    receiver_positions: tuple[tuple[int, int], ...] = ()
    peak_frequency: float = 15.0
    boundary_width: int = 20
    density: float = 2000.0
    cfl_coeff: float = 0.5
    sponge_reflection: float = 1e-3

    @classmethod
    def surface_acquisition(cls, height: int, width: int, n_shots: int = 3, **kwargs) -> "SimConfig":
        if n_shots < 1:
            raise ValueError("n_shots must be >= 1")
        cols = np.linspace(0, width - 1, n_shots + 2)[1:-1]
        sources = tuple((0, int(round(c))) for c in cols)
        receivers = tuple((0, c) for c in range(width))
        return cls(source_positions=sources, receiver_positions=receivers, **kwargs)

    @property
    def n_shots(self) -> int:
        return len(self.source_positions)

    def with_shots(self, n_shots: int, height: int, width: int) -> "SimConfig":
        acq = self.surface_acquisition(height, width, n_shots)
        return replace(self, source_positions=acq.source_positions, receiver_positions=acq.receiver_positions)


@dataclass(frozen=True)
class SeismicGather:
    traces: np.ndarray  # (receivers, nt)
    shot_index: int
    scenario_id: int | None = None
    year: int | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.traces)):
            raise ValueError("gather contains non-finite samples")


@dataclass
class CFLResult:
    passed: bool
    max_dt: float

    def __bool__(self) -> bool:
        return self.passed


@dataclass
class Propagation:
    gathers: list[SeismicGather]
    snapshots: np.ndarray | None = None  # (shots, n_snap, H, W)
    snapshot_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def traces(self) -> np.ndarray:
        return np.stack([g.traces for g in self.gathers])


def ricker_wavelet(peak_frequency: float, dt: float, nt: int) -> np.ndarray:
    """Ricker pulse centred at ``1.5 / f``."""
    if peak_frequency <= 0 or dt <= 0:
        raise ValueError("peak_frequency and dt must be positive")
    t0 = 1.5 / peak_frequency
    if nt * dt < 2 * t0:
        warnings.warn(
            f"nt*dt={nt * dt:.4g}s does not contain the wavelet main lobe (needs {2 * t0:.4g}s)",
            stacklevel=2,
        )
    tau = np.arange(nt) * dt - t0
    arg = (np.pi * peak_frequency * tau) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def cfl_check(config: SimConfig, velocity_map: np.ndarray) -> CFLResult:
    v_max = float(np.max(velocity_map))
    if v_max <= 0 or np.min(velocity_map) <= 0:
        raise ValueError("velocity map must be positive")
    bound = config.cfl_coeff * config.dx / v_max
    return CFLResult(config.dt <= bound, bound)


def damping_profile(shape: tuple[int, int], width: int, eta_max: float) -> np.ndarray:
    """``eta`` on the padded grid (sponge + halo); zero inside the map."""
    H, W = shape
    Hp, Wp = H + 2 * (width + HALO), W + 2 * (width + HALO)
    eta = np.zeros((Hp, Wp))
    if width == 0:
        return eta
    i = np.arange(Hp) - (HALO + width)
    j = np.arange(Wp) - (HALO + width)
    di = np.clip(np.maximum(-i, i - (H - 1)), 0, None) / width
    dj = np.clip(np.maximum(-j, j - (W - 1)), 0, None) / width
    d = np.sqrt(np.minimum(di, 1.0)[:, None] ** 2 + np.minimum(dj, 1.0)[None, :] ** 2)
    return eta_max * np.minimum(d, 1.0) ** 2


@numba.njit(cache=True)
def _leapfrog(vel2, a, b, p_prev, p_cur, src_rows, src_cols, src_gain, wavelet,
              rec_rows, rec_cols, snap_every, traces, snaps):
    nz, nx = p_cur.shape
    nt = wavelet.shape[0]
    c0, c1, c2, c3, c4 = -205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0
    p_next = np.zeros_like(p_cur)
    n_snap = 0
    for n in range(nt):
        for r in range(rec_rows.shape[0]):
            traces[r, n] = p_cur[rec_rows[r], rec_cols[r]]
        if snap_every > 0 and n % snap_every == 0:
            snaps[n_snap] = p_cur
            n_snap += 1
        for i in range(4, nz - 4):
            for j in range(4, nx - 4):
                lap = (2.0 * c0 * p_cur[i, j]
                       + c1 * (p_cur[i + 1, j] + p_cur[i - 1, j] + p_cur[i, j + 1] + p_cur[i, j - 1])
                       + c2 * (p_cur[i + 2, j] + p_cur[i - 2, j] + p_cur[i, j + 2] + p_cur[i, j - 2])
                       + c3 * (p_cur[i + 3, j] + p_cur[i - 3, j] + p_cur[i, j + 3] + p_cur[i, j - 3])
                       + c4 * (p_cur[i + 4, j] + p_cur[i - 4, j] + p_cur[i, j + 4] + p_cur[i, j - 4]))
                p_next[i, j] = a[i, j] * (2.0 * p_cur[i, j] - b[i, j] * p_prev[i, j] + vel2[i, j] * lap)
        for s in range(src_rows.shape[0]):
            p_next[src_rows[s], src_cols[s]] += src_gain[s] * wavelet[n]
        if n % 50 == 49:
            for r in range(rec_rows.shape[0]):
                if not np.isfinite(p_next[rec_rows[r], rec_cols[r]]):
                    return n
            if not np.isfinite(np.max(np.abs(p_next))):
                return n
        p_prev, p_cur, p_next = p_cur, p_next, p_prev
    return -1


def laplacian8(p: np.ndarray) -> np.ndarray:
    """Undivided 8th-order Laplacian on the cells at least HALO from the edge."""
    n, m = p.shape
    core = (slice(HALO, n - HALO), slice(HALO, m - HALO))
    lap = 2.0 * FD8[0] * p[core]
    for k in range(1, 5):
        lap = lap + FD8[k] * (p[HALO + k:n - HALO + k, HALO:m - HALO] + p[HALO - k:n - HALO - k, HALO:m - HALO]
                              + p[HALO:n - HALO, HALO + k:m - HALO + k] + p[HALO:n - HALO, HALO - k:m - HALO - k])
    return lap


def _padded(velocity_map: np.ndarray, width: int) -> np.ndarray:
    v = np.pad(velocity_map.astype(np.float64), width, mode="edge")
    return np.pad(v, HALO, mode="edge")


def run_wavefield(velocity_map: np.ndarray, config: SimConfig, sources: Sequence[tuple[int, int]],
                  receivers: Sequence[tuple[int, int]], wavelet: np.ndarray,
                  source_scale: Sequence[float] | float = 1.0, initial: np.ndarray | None = None,
                  snapshot_every: int = 0) -> tuple[np.ndarray, np.ndarray | None]:
    """Low-level time stepping for one simultaneous source group.

    ``initial`` optionally sets p at t=0 and t=-dt (zero initial velocity)
    on the map grid.  Returns receiver traces (n_rec, nt) and snapshots.
    """
    vel = np.asarray(velocity_map, dtype=np.float64)
    H, W = vel.shape
    check = cfl_check(config, vel)
    if not check:
        raise CFLError(f"dt={config.dt:g}s exceeds the stability bound {check.max_dt:g}s")
    off = config.boundary_width + HALO
    for r, c in list(sources) + list(receivers):
        if not (0 <= r < H and 0 <= c < W):
            raise ValueError(f"position {(r, c)} outside the {H}x{W} map")
    vp = _padded(vel, config.boundary_width)
    v_max = float(vel.max())
    width_m = max(config.boundary_width, 1) * config.dx
    eta_max = 3.0 * v_max * np.log(1.0 / config.sponge_reflection) / (2.0 * width_m)
    eta = damping_profile((H, W), config.boundary_width, eta_max)
    a = 1.0 / (1.0 + eta * config.dt)
    b = 1.0 - eta * config.dt
    vel2 = (vp * config.dt / config.dx) ** 2
    vel2[:HALO], vel2[-HALO:], vel2[:, :HALO], vel2[:, -HALO:] = 0, 0, 0, 0

    src = np.asarray(sources, dtype=np.int64).reshape(-1, 2) + off
    rec = np.asarray(receivers, dtype=np.int64).reshape(-1, 2) + off
    scale = np.broadcast_to(np.asarray(source_scale, dtype=np.float64), (len(src),))
    gain = scale * config.density * vp[src[:, 0], src[:, 1]] ** 2 * config.dt**2 / config.dx**2
    gain = gain * a[src[:, 0], src[:, 1]]

    p_cur = np.zeros_like(vp)
    if initial is not None:
        p_cur[off:off + H, off:off + W] = initial
    p_prev = p_cur.copy()
    if initial is not None:
        # second-order start for zero initial velocity: p(-dt) = p0 + dt^2/2 * v^2 lap p0
        p_prev[HALO:-HALO, HALO:-HALO] += 0.5 * vel2[HALO:-HALO, HALO:-HALO] * laplacian8(p_cur)
    nt = len(wavelet)
    traces = np.zeros((len(rec), nt))
    n_snap = (nt + snapshot_every - 1) // snapshot_every if snapshot_every > 0 else 0
    snaps = np.zeros((max(n_snap, 1),) + vp.shape)
    status = _leapfrog(vel2, a, b, p_prev, p_cur, src[:, 0].copy(), src[:, 1].copy(), gain,
                       np.ascontiguousarray(wavelet, dtype=np.float64), rec[:, 0].copy(), rec[:, 1].copy(),
                       snapshot_every, traces, snaps)
    if status >= 0:
        raise SimulationError("non-finite wavefield", step=int(status))
    snapshots = snaps[:n_snap, off:off + H, off:off + W] if n_snap else None
    return traces, snapshots


def propagate(velocity_map: np.ndarray, config: SimConfig, source_scale: float = 1.0,
              snapshot_every: int = 0, scenario_id: int | None = None, year: int | None = None) -> Propagation:
    """One gather per configured source, each shot simulated independently."""
    if not config.source_positions or not config.receiver_positions:
        H, W = np.shape(velocity_map)
        config = config.with_shots(max(config.n_shots, 3), H, W)
    wavelet = ricker_wavelet(config.peak_frequency, config.dt, config.nt)
    gathers, snaps = [], []
    for k, src in enumerate(config.source_positions):
        try:
            traces, snap = run_wavefield(velocity_map, config, [src], config.receiver_positions, wavelet,
                                         source_scale, snapshot_every=snapshot_every)
        except SimulationError as exc:
            raise type(exc)(str(exc).split(" (")[0], scenario_id, year, k, exc.step) from exc
        gathers.append(SeismicGather(traces, k, scenario_id, year))
        snaps.append(snap)
    snapshots = np.stack(snaps) if snapshot_every > 0 else None
    steps = np.arange(0, config.nt, snapshot_every) if snapshot_every > 0 else np.zeros(0, dtype=int)
    return Propagation(gathers, snapshots, steps)


def simulate_maps(maps: np.ndarray, config: SimConfig, context: Sequence[tuple[int, int]] | None = None
                  ) -> np.ndarray:
    """Gathers for a stack of maps: (N, shots, receivers, nt) float32."""
    maps = np.asarray(maps)
    out = np.zeros((len(maps), config.n_shots, len(config.receiver_positions), config.nt), dtype=np.float32)
    for i, m in enumerate(maps):
        sid, year = context[i] if context is not None else (None, None)
        out[i] = propagate(m, config, scenario_id=sid, year=year).traces
    return out


@dataclass
class GatherArchive:
    """Gathers keyed by scenario id, each (20, shots, receivers, nt)."""

    config: SimConfig
    gathers: dict[int, np.ndarray]
    years: tuple[int, ...] = tuple(range(10, 201, 10))

    def keys(self) -> list[tuple[int, int, int]]:
        return [
            (sid, year, shot)
            for sid in sorted(self.gathers)
            for year in self.years
            for shot in range(self.config.n_shots)
        ]

    def __len__(self) -> int:
        return len(self.keys())

    def gather(self, scenario_id: int, year: int, shot: int) -> np.ndarray:
        return self.gathers[scenario_id][self.years.index(year), shot]


def forward_dataset(scenarios, config: SimConfig) -> GatherArchive:
    shapes = {s.velocities.shape[1:] for s in scenarios}
    if len(shapes) > 1:
        raise ValueError(f"all maps must share dims, found {sorted(shapes)}")
    out = {}
    for s in scenarios:
        years = tuple(range(10, 10 * (len(s.velocities) + 1), 10))
        out[s.scenario_id] = simulate_maps(s.velocities, config, [(s.scenario_id, y) for y in years])
    return GatherArchive(config, out)


def config_meta(config: SimConfig) -> dict:
    return {
        "dx": config.dx, "dt": config.dt, "nt": config.nt,
        "source_positions": [list(p) for p in config.source_positions],
        "receiver_positions": [list(p) for p in config.receiver_positions],
        "peak_frequency": config.peak_frequency, "boundary_width": config.boundary_width,
        "density": config.density, "cfl_coeff": config.cfl_coeff,
        "sponge_reflection": config.sponge_reflection,
    }


def config_from_meta(meta: dict) -> SimConfig:
    return SimConfig(
        dx=meta["dx"], dt=meta["dt"], nt=meta["nt"],
        source_positions=tuple(tuple(p) for p in meta["source_positions"]),
        receiver_positions=tuple(tuple(p) for p in meta["receiver_positions"]),
        peak_frequency=meta["peak_frequency"], boundary_width=meta["boundary_width"],
        density=meta["density"], cfl_coeff=meta["cfl_coeff"],
        sponge_reflection=meta.get("sponge_reflection", 1e-3),
    )


def save_archive(directory: str | Path, archive: GatherArchive) -> Path:
    directory = Path(directory)
    for sid, g in sorted(archive.gathers.items()):
        write_f32(directory / f"gathers_{sid:04d}.f32", g, {
            "kind": "gathers", "scenario_id": sid, "years": list(archive.years),
            "shot_ids": list(range(archive.config.n_shots)), **config_meta(archive.config),
        })
    return directory


def load_archive(directory: str | Path) -> GatherArchive:
    gathers, config, years = {}, None, None
    for path in sorted(Path(directory).glob("gathers_*.f32")):
        arr, meta = read_f32(path)
        gathers[int(meta["scenario_id"])] = arr
        config = config or config_from_meta(meta)
        years = years or tuple(meta["years"])
    if config is None:
        raise FileNotFoundError(f"no gathers_*.f32 files in {directory}")
    return GatherArchive(config, gathers, years)

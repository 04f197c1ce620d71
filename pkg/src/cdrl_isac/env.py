"""Per-slot ISAC pipeline shared by training and evaluation.

Each slot: advance the scenario, then track every live target with its
allocated dwell (predict, SNR, measurement, update), then communicate for the
remaining time toward the estimated target directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import comms, ekf, sensing
from .config import RunConfig
from .motion import process_noise_cov, transition_matrix
from .scenario import ScenarioScript, World, maybe_spawn, move_targets, remove_aged


def make_streams(seed: int, n: int = 4) -> list[np.random.Generator]:
    """Independent generators for scenario, sensor, Monte-Carlo and agent draws."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class Track:
    target_id: int
    belief: ekf.Belief
    fresh: bool = True


@dataclass
class SlotResult:
    slot: int
    live: np.ndarray  # bool (N,)
    dwells: np.ndarray  # dwell fractions (N,)
    tau_c: float
    dwell_sum: float  # seconds
    rate: float  # realized sum rate
    target_rates: np.ndarray  # realized per-target rate (N,)
    proxy_rate: float  # sigma_theta based rate used for the reward
    azimuth_vars: np.ndarray  # (N,) rad^2
    distances: np.ndarray  # true distances (N,), 0 when absent


class IsacEnv:
    def __init__(
        self,
        cfg: RunConfig,
        seed: int,
        *,
        training: bool,
        script: ScenarioScript | None = None,
        spawn: bool = True,
    ):
        self.cfg = cfg
        self.training = training
        self.script = script
        self.spawn = spawn and script is None
        self.N = cfg.max_targets
        self.motion_cfg = cfg.motion()
        self.radar_cfg = cfg.radar()
        self.comm_cfg = cfg.comm()
        self.scen_cfg = cfg.scenario()
        self.F = transition_matrix(cfg.T0)
        self.Q = process_noise_cov(cfg.T0, cfg.sigma_w_sq)
        self.scen_rng, self.sensor_rng, self.mc_rng = make_streams(seed, 3)
        self.world = World(self.N)
        self.tracks: dict[int, Track] = {}
        self.slot = 0
        self.prev_azimuth_vars = np.zeros(self.N)
        self.prev_dwells = np.zeros(self.N)

    def begin_slot(self) -> np.ndarray:
        """Advance the scenario to the current slot; return the live mask."""
        if self.slot > 0:
            move_targets(self.world, self.scen_cfg, self.motion_cfg, self.scen_rng)
            remove_aged(self.world, self.scen_cfg)
        if self.script is not None:
            self.script.apply(self.world, self.slot)
        elif self.spawn:
            maybe_spawn(self.world, self.scen_cfg, self.scen_rng)
        for idx in list(self.tracks):
            t = self.world.targets.get(idx)
            if t is None or t.target_id != self.tracks[idx].target_id:
                del self.tracks[idx]
                self.prev_azimuth_vars[idx] = 0.0
                self.prev_dwells[idx] = 0.0
        for idx, t in self.world.targets.items():
            if idx not in self.tracks:
                self.tracks[idx] = Track(t.target_id, self._acquire(t.state))
        return self.live_mask()

    def live_mask(self) -> np.ndarray:
        m = np.zeros(self.N, dtype=bool)
        m[list(self.world.targets)] = True
        return m

    def _acquire(self, state) -> ekf.Belief:
        # Search detection at reference dwell with an aligned beam seeds the track.
        s = sensing.snr(self.cfg.tau0, state.distance, 0.0, 0.0, self.radar_cfg)
        var = sensing.measurement_noise_variances(s, self.radar_cfg)
        z = sensing.observe(state, var, self.sensor_rng)
        pos_var = var.sigma_r_sq + z.range**2 * var.sigma_th_sq
        b0 = ekf.initialize(self.cfg.prior_scale)
        mean = b0.mean.copy()
        mean[:2] = z.range * math.cos(z.azimuth), z.range * math.sin(z.azimuth)
        cov = b0.cov @ np.diag([pos_var, pos_var, self.cfg.acq_velocity_var, self.cfg.acq_velocity_var])
        return ekf.Belief(mean, cov)

    def execute(self, dwells: np.ndarray) -> SlotResult:
        """Run the tracking and communication phases for the current slot."""
        cfg = self.cfg
        N = self.N
        dwells = np.where(self.live_mask(), np.asarray(dwells, dtype=float), 0.0)
        dwell_sum = float(dwells.sum()) * cfg.T0
        tau_c = comms.communication_time(dwell_sum, cfg.T0)
        azvars = np.zeros(N)
        distances = np.zeros(N)
        target_rates = np.zeros(N)
        proxy_terms = 0.0
        for idx in sorted(self.world.targets):
            truth = self.world.targets[idx].state
            track = self.tracks[idx]
            b = track.belief if track.fresh else ekf.predict(track.belief, self.F, self.Q)
            track.fresh = False
            theta_pred = b.azimuth
            r_true, th_true = truth.distance, truth.azimuth
            tau = dwells[idx] * cfg.T0
            s = sensing.snr(tau, r_true, th_true, theta_pred, self.radar_cfg) if tau > 0 else 0.0
            if s > 0 and b.distance > 0:
                var = sensing.measurement_noise_variances(s, self.radar_cfg)
                z = sensing.observe(truth, var, self.sensor_rng)
                H = sensing.measurement_jacobian(b.mean[0], b.mean[1])
                R = np.diag([var.sigma_r_sq, var.sigma_th_sq])
                try:
                    b = ekf.update(b, z, H, R)
                except ekf.SingularInnovation:
                    pass
            track.belief = b
            mean_pos = (truth.x, truth.y) if self.training else b.position
            if mean_pos == (0.0, 0.0):
                mean_pos = (truth.x, truth.y)
            azvars[idx] = ekf.azimuth_variance_mc(b, mean_pos, cfg.mc_samples, self.mc_rng)
            distances[idx] = r_true

            theta_beam = theta_pred if cfg.comm_pointing == "predicted" else b.azimuth
            l_real = comms.pointing_loss(th_true, theta_beam, self.comm_cfg)
            target_rates[idx] = comms.target_rate(tau_c, r_true, l_real, self.comm_cfg)
            d_reward = max(b.distance, cfg.min_range_m) if self.training else r_true
            l_proxy = comms.spread_loss(math.sqrt(azvars[idx]), self.comm_cfg)
            proxy_terms += comms.spectral_efficiency(d_reward, l_proxy, self.comm_cfg)

        result = SlotResult(
            slot=self.slot,
            live=self.live_mask(),
            dwells=dwells,
            tau_c=tau_c,
            dwell_sum=dwell_sum,
            rate=float(target_rates.sum()),
            target_rates=target_rates,
            proxy_rate=tau_c * self.comm_cfg.bandwidth_B * proxy_terms,
            azimuth_vars=azvars,
            distances=distances,
        )
        self.prev_azimuth_vars = azvars
        self.prev_dwells = dwells
        self.slot += 1
        return result

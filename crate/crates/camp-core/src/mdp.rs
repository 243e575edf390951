//! The decision problem: CDM-like state tuple, wait/maneuver actions, the
//! stochastic state-update transition, the reward table, and the minimum
//! delta-v maneuver cost solver.

use nalgebra::Vector6;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conjunction::{collision_probability, Covariance, HardbodyRadii};
use crate::linalg::{psd_factor6, sample_gaussian6};
use crate::orbital::{along_track_unit, propagate, EciState, GravityModel};
use crate::{Error, Result};

/// Hours between consecutive state updates.
pub const EPOCH_STEP_HOURS: u32 = 8;
/// First CDM arrives 72 hours before closest approach.
pub const MAX_T_HOURS: u32 = 72;
/// Thrust-step cap for the maneuver cost search.
pub const MANEUVER_STEP_CAP: u64 = 1_000_000;

/// Decision alternatives available at each state update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Wait,
    Maneuver,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Wait, Action::Maneuver];

    pub fn label(&self) -> &'static str {
        match self {
            Action::Wait => "wait",
            Action::Maneuver => "maneuver",
        }
    }
}

/// Thrust sense along the velocity vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThrustDirection {
    Along,
    AntiAlong,
}

impl ThrustDirection {
    fn sign(&self) -> f64 {
        match self {
            ThrustDirection::Along => 1.0,
            ThrustDirection::AntiAlong => -1.0,
        }
    }
}

/// The CDM-like planning state.
///
/// `chief` and `deputy` are the estimated states at the closest-approach
/// epoch (the frame in which the collision probability is evaluated);
/// `t_hours` counts down to that epoch on the 8-hour CDM grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpStateRaw", into = "MdpStateRaw")]
pub struct MdpState {
    t_hours: u32,
    chief: EciState,
    deputy: EciState,
    sigma_c: Covariance,
    sigma_d: Covariance,
    radii: HardbodyRadii,
}

#[derive(Serialize, Deserialize)]
struct MdpStateRaw {
    t_hours: u32,
    chief: EciState,
    deputy: EciState,
    sigma_c: Covariance,
    sigma_d: Covariance,
    r_c_m: f64,
    r_d_m: f64,
}

impl From<MdpState> for MdpStateRaw {
    fn from(s: MdpState) -> Self {
        Self {
            t_hours: s.t_hours,
            chief: s.chief,
            deputy: s.deputy,
            sigma_c: s.sigma_c,
            sigma_d: s.sigma_d,
            r_c_m: s.radii.chief_m(),
            r_d_m: s.radii.deputy_m(),
        }
    }
}

impl TryFrom<MdpStateRaw> for MdpState {
    type Error = Error;
    fn try_from(raw: MdpStateRaw) -> Result<Self> {
        MdpState::new(
            raw.t_hours,
            raw.chief,
            raw.deputy,
            raw.sigma_c,
            raw.sigma_d,
            HardbodyRadii::new(raw.r_c_m, raw.r_d_m)?,
        )
    }
}

impl MdpState {
    pub fn new(
        t_hours: u32,
        chief: EciState,
        deputy: EciState,
        sigma_c: Covariance,
        sigma_d: Covariance,
        radii: HardbodyRadii,
    ) -> Result<Self> {
        if t_hours > MAX_T_HOURS || t_hours % EPOCH_STEP_HOURS != 0 {
            return Err(Error::invalid(format!(
                "t must lie on the {{0, {EPOCH_STEP_HOURS}, ..., {MAX_T_HOURS}}} hour grid, got {t_hours}"
            )));
        }
        Ok(Self {
            t_hours,
            chief,
            deputy,
            sigma_c,
            sigma_d,
            radii,
        })
    }

    pub fn t_hours(&self) -> u32 {
        self.t_hours
    }

    pub fn chief(&self) -> &EciState {
        &self.chief
    }

    pub fn deputy(&self) -> &EciState {
        &self.deputy
    }

    pub fn sigma_c(&self) -> &Covariance {
        &self.sigma_c
    }

    pub fn sigma_d(&self) -> &Covariance {
        &self.sigma_d
    }

    pub fn radii(&self) -> &HardbodyRadii {
        &self.radii
    }

    /// Same state with a replaced chief estimate.
    pub fn with_chief(&self, chief: EciState) -> Self {
        Self { chief, ..*self }
    }

    /// Legal actions at this state; maneuvering is not possible at t = 0.
    pub fn legal_actions(&self) -> &'static [Action] {
        if self.t_hours == 0 {
            &[Action::Wait]
        } else {
            &Action::ALL
        }
    }
}

/// State-update noise model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransitionRaw", into = "TransitionRaw")]
pub struct TransitionParams {
    /// Probability the deputy is observed during one update interval.
    pub p_obs: f64,
    /// Chief covariance shrink factor per update.
    pub k_c: f64,
    /// Lower bound of the deputy covariance shrink factor.
    pub k_d_lower: f64,
    /// Upper bound of the deputy covariance shrink factor.
    pub k_d_upper: f64,
}

#[derive(Serialize, Deserialize)]
struct TransitionRaw {
    p_obs: f64,
    k_c: f64,
    k_d_lower: f64,
    k_d_upper: f64,
}

impl From<TransitionParams> for TransitionRaw {
    fn from(p: TransitionParams) -> Self {
        Self {
            p_obs: p.p_obs,
            k_c: p.k_c,
            k_d_lower: p.k_d_lower,
            k_d_upper: p.k_d_upper,
        }
    }
}

impl TryFrom<TransitionRaw> for TransitionParams {
    type Error = Error;
    fn try_from(raw: TransitionRaw) -> Result<Self> {
        TransitionParams::new(raw.p_obs, raw.k_c, raw.k_d_lower, raw.k_d_upper)
    }
}

impl Default for TransitionParams {
    fn default() -> Self {
        Self {
            p_obs: 0.5,
            k_c: 0.05,
            k_d_lower: 0.05,
            k_d_upper: 0.3,
        }
    }
}

impl TransitionParams {
    pub fn new(p_obs: f64, k_c: f64, k_d_lower: f64, k_d_upper: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_obs) {
            return Err(Error::invalid(format!("p_obs must be in [0, 1], got {p_obs}")));
        }
        if !(0.0..1.0).contains(&k_c) {
            return Err(Error::invalid(format!("k_c must be in [0, 1), got {k_c}")));
        }
        if !(0.0 <= k_d_lower && k_d_lower <= k_d_upper && k_d_upper < 1.0) {
            return Err(Error::invalid(format!(
                "require 0 <= k_d_lower <= k_d_upper < 1, got [{k_d_lower}, {k_d_upper}]"
            )));
        }
        Ok(Self {
            p_obs,
            k_c,
            k_d_lower,
            k_d_upper,
        })
    }
}

/// Reward-table parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RewardRaw", into = "RewardRaw")]
pub struct RewardParams {
    /// Penalty for an unmitigated collision risk at closest approach (< 0).
    pub r_crash: f64,
    /// Operator risk threshold on the collision probability.
    pub pc_threshold: f64,
    /// Thrust increment of the maneuver cost search, m/s.
    pub delta_v_step_m_s: f64,
}

#[derive(Serialize, Deserialize)]
struct RewardRaw {
    r_crash: f64,
    pc_threshold: f64,
    delta_v_step_m_s: f64,
}

impl From<RewardParams> for RewardRaw {
    fn from(p: RewardParams) -> Self {
        Self {
            r_crash: p.r_crash,
            pc_threshold: p.pc_threshold,
            delta_v_step_m_s: p.delta_v_step_m_s,
        }
    }
}

impl TryFrom<RewardRaw> for RewardParams {
    type Error = Error;
    fn try_from(raw: RewardRaw) -> Result<Self> {
        RewardParams::new(raw.r_crash, raw.pc_threshold, raw.delta_v_step_m_s)
    }
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            r_crash: -0.5,
            pc_threshold: 1e-5,
            delta_v_step_m_s: 1e-3,
        }
    }
}

impl RewardParams {
    pub fn new(r_crash: f64, pc_threshold: f64, delta_v_step_m_s: f64) -> Result<Self> {
        if !(r_crash < 0.0) || !r_crash.is_finite() {
            return Err(Error::invalid(format!("r_crash must be negative, got {r_crash}")));
        }
        if !(0.0 < pc_threshold && pc_threshold < 1.0) {
            return Err(Error::invalid(format!(
                "pc_threshold must be in (0, 1), got {pc_threshold}"
            )));
        }
        if !(delta_v_step_m_s > 0.0) || !delta_v_step_m_s.is_finite() {
            return Err(Error::invalid(format!(
                "delta_v_step must be positive, got {delta_v_step_m_s}"
            )));
        }
        Ok(Self {
            r_crash,
            pc_threshold,
            delta_v_step_m_s,
        })
    }
}

fn state_vector(s: &EciState) -> Vector6<f64> {
    let mut v = Vector6::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(&s.position());
    v.fixed_rows_mut::<3>(3).copy_from(&s.velocity());
    v
}

fn state_from_vector(v: &Vector6<f64>) -> Result<EciState> {
    EciState::new(
        v.fixed_rows::<3>(0).into_owned(),
        v.fixed_rows::<3>(3).into_owned(),
    )
}

/// Samples the next state-update from the current one.
///
/// Time steps down by 8 hours; both object estimates are resampled from
/// their covariances; the chief covariance shrinks by `(1 - k_c)`; with
/// probability `p_obs` the deputy covariance shrinks by `(1 - k_d)` with
/// `k_d ~ U(k_d_lower, k_d_upper)`. Hardbody radii never change.
pub fn transition<R: Rng + ?Sized>(
    s: &MdpState,
    _action: Action,
    params: &TransitionParams,
    rng: &mut R,
) -> Result<MdpState> {
    if s.t_hours == 0 {
        return Err(Error::TerminalState);
    }
    let t_next = s.t_hours - EPOCH_STEP_HOURS;

    let chief_factor = psd_factor6(s.sigma_c.matrix());
    let chief = state_from_vector(&sample_gaussian6(
        &state_vector(&s.chief),
        &chief_factor,
        rng,
    ))?;
    let deputy_factor = psd_factor6(s.sigma_d.matrix());
    let deputy = state_from_vector(&sample_gaussian6(
        &state_vector(&s.deputy),
        &deputy_factor,
        rng,
    ))?;

    let sigma_c = s.sigma_c.scaled(1.0 - params.k_c)?;
    let sigma_d = if rng.random_bool(params.p_obs) {
        let k_d = if params.k_d_upper > params.k_d_lower {
            rng.random_range(params.k_d_lower..params.k_d_upper)
        } else {
            params.k_d_lower
        };
        s.sigma_d.scaled(1.0 - k_d)?
    } else {
        s.sigma_d
    };

    MdpState::new(t_next, chief, deputy, sigma_c, sigma_d, s.radii)
}

/// Applies an along-track thrust at the epoch `t_hours` before closest
/// approach and returns the perturbed closest-approach state.
///
/// The chief estimate is back-propagated `t_hours`, the velocity increment
/// `dv` is added along (or against) the velocity direction at that epoch,
/// and the result is propagated forward again.
pub fn apply_thrust(
    chief_tca: &EciState,
    t_hours: u32,
    direction: ThrustDirection,
    dv_m_s: f64,
    gravity: &GravityModel,
) -> Result<EciState> {
    if t_hours == 0 {
        return Err(Error::TerminalState);
    }
    if !(dv_m_s >= 0.0) || !dv_m_s.is_finite() {
        return Err(Error::invalid(format!("dv must be non-negative, got {dv_m_s}")));
    }
    let dt_s = t_hours as f64 * 3600.0;
    let at_burn = propagate(chief_tca, -dt_s, gravity)?;
    let unit = along_track_unit(&at_burn)?;
    let dv_km_s = dv_m_s / 1000.0;
    let burned = at_burn.with_velocity(at_burn.velocity() + direction.sign() * dv_km_s * unit)?;
    propagate(&burned, dt_s, gravity)
}

/// Result of the maneuver cost search.
#[derive(Clone, Copy, Debug)]
pub struct ManeuverSolution {
    /// Total velocity change, m/s (a positive multiple of the step size).
    pub delta_v_m_s: f64,
    pub direction: ThrustDirection,
    /// Collision probability after the maneuver (below the threshold).
    pub post_pc: f64,
}

/// Minimum delta-v (in steps of `delta_v_step_m_s`) that drives the
/// collision probability below the threshold.
///
/// One step is tried in each direction and the search continues stepping in
/// whichever direction improved the probability more, until the threshold is
/// crossed. Requires the state to actually exceed the threshold.
pub fn maneuver_solution(
    s: &MdpState,
    params: &RewardParams,
    gravity: &GravityModel,
) -> Result<ManeuverSolution> {
    if s.t_hours == 0 {
        return Err(Error::TerminalState);
    }
    let pc0 = collision_probability(s)?;
    if !(pc0 > params.pc_threshold) {
        return Err(Error::ManeuverNotRequired {
            pc: pc0,
            threshold: params.pc_threshold,
        });
    }

    let step = params.delta_v_step_m_s;
    let t = s.t_hours;
    let along = s.with_chief(apply_thrust(&s.chief, t, ThrustDirection::Along, step, gravity)?);
    let anti = s.with_chief(apply_thrust(
        &s.chief,
        t,
        ThrustDirection::AntiAlong,
        step,
        gravity,
    )?);
    let pc_along = collision_probability(&along)?;
    let pc_anti = collision_probability(&anti)?;

    let (direction, mut current, mut pc) = if pc_along > pc_anti {
        (ThrustDirection::AntiAlong, anti, pc_anti)
    } else {
        (ThrustDirection::Along, along, pc_along)
    };

    let mut steps: u64 = 1;
    while pc >= params.pc_threshold {
        if steps >= MANEUVER_STEP_CAP {
            return Err(Error::ManeuverIterationCap(MANEUVER_STEP_CAP));
        }
        let chief = apply_thrust(&current.chief, t, direction, step, gravity)?;
        current = current.with_chief(chief);
        pc = collision_probability(&current)?;
        steps += 1;
    }

    Ok(ManeuverSolution {
        delta_v_m_s: steps as f64 * step,
        direction,
        post_pc: pc,
    })
}

/// Total delta-v of the minimum maneuver, m/s. See [`maneuver_solution`].
pub fn cost_to_maneuver(s: &MdpState, params: &RewardParams, gravity: &GravityModel) -> Result<f64> {
    maneuver_solution(s, params, gravity).map(|m| m.delta_v_m_s)
}

/// Reward table.
///
/// Maneuvering at `t > 0` costs the minimum delta-v (zero if the state is
/// already below the risk threshold); an unmitigated risk at `t = 0` costs
/// `r_crash`; everything else is free. Rewards are never positive.
pub fn reward(
    s: &MdpState,
    action: Action,
    params: &RewardParams,
    gravity: &GravityModel,
) -> Result<f64> {
    match (s.t_hours == 0, action) {
        (true, Action::Maneuver) => Err(Error::IllegalAction {
            action,
            t_hours: s.t_hours,
        }),
        (true, Action::Wait) => {
            let pc = collision_probability(s)?;
            if pc > params.pc_threshold {
                Ok(params.r_crash)
            } else {
                Ok(0.0)
            }
        }
        (false, Action::Wait) => Ok(0.0),
        (false, Action::Maneuver) => {
            let pc = collision_probability(s)?;
            if pc > params.pc_threshold {
                Ok(-cost_to_maneuver(s, params, gravity)?)
            } else {
                // No thrust is needed to be below the threshold.
                Ok(0.0)
            }
        }
    }
}

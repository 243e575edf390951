//! Two-body Keplerian dynamics: orbital element conversions, Kepler equation
//! solution, analytic propagation, and local orbital frames.
//!
//! All lengths are kilometers, velocities km/s, times seconds. Angles in
//! [`OrbitalElements`] are degrees.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// WGS-84 gravitational parameter, km^3/s^2.
pub const WGS84_MU_KM3_S2: f64 = 398_600.441_8;
/// WGS-84 equatorial radius, km.
pub const WGS84_EARTH_RADIUS_KM: f64 = 6_378.137;

const KEPLER_TOL_RAD: f64 = 1e-12;
const KEPLER_MAX_NEWTON: usize = 50;

/// Point-mass gravity model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GravityModel {
    /// Gravitational parameter, km^3/s^2.
    pub mu: f64,
    /// Equatorial radius, km.
    pub r_earth: f64,
}

impl Default for GravityModel {
    fn default() -> Self {
        Self {
            mu: WGS84_MU_KM3_S2,
            r_earth: WGS84_EARTH_RADIUS_KM,
        }
    }
}

impl GravityModel {
    pub fn new(mu: f64, r_earth: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
        if !(r_earth > 0.0) || !r_earth.is_finite() {
            return Err(Error::invalid(format!(
                "r_earth must be positive, got {r_earth}"
            )));
        }
        Ok(Self { mu, r_earth })
    }
}

/// Inertial position (km) and velocity (km/s) of one object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EciStateRaw", into = "EciStateRaw")]
pub struct EciState {
    position: Vector3<f64>,
    velocity: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct EciStateRaw {
    position: [f64; 3],
    velocity: [f64; 3],
}

impl From<EciState> for EciStateRaw {
    fn from(s: EciState) -> Self {
        Self {
            position: s.position.into(),
            velocity: s.velocity.into(),
        }
    }
}

impl TryFrom<EciStateRaw> for EciState {
    type Error = Error;
    fn try_from(raw: EciStateRaw) -> Result<Self> {
        EciState::new(raw.position.into(), raw.velocity.into())
    }
}

impl EciState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Result<Self> {
        if !position.iter().chain(velocity.iter()).all(|c| c.is_finite()) {
            return Err(Error::NonFinite("ECI state"));
        }
        if position.norm() == 0.0 {
            return Err(Error::invalid("position norm must be > 0"));
        }
        Ok(Self { position, velocity })
    }

    pub fn position(&self) -> Vector3<f64> {
        self.position
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.velocity
    }

    pub fn radius(&self) -> f64 {
        self.position.norm()
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Same position with a replaced velocity vector.
    pub fn with_velocity(&self, velocity: Vector3<f64>) -> Result<Self> {
        Self::new(self.position, velocity)
    }
}

/// Classical orbital elements. Angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementsRaw", into = "ElementsRaw")]
pub struct OrbitalElements {
    /// Semi-major axis, km.
    pub a_km: f64,
    /// Eccentricity.
    pub ecc: f64,
    /// Inclination, deg, in [0, 180].
    pub inc_deg: f64,
    /// Right ascension of the ascending node, deg, in [0, 360).
    pub raan_deg: f64,
    /// Argument of perigee, deg, in [0, 360).
    pub argp_deg: f64,
    /// Mean anomaly, deg, in [0, 360).
    pub mean_anomaly_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct ElementsRaw {
    a_km: f64,
    ecc: f64,
    inc_deg: f64,
    raan_deg: f64,
    argp_deg: f64,
    mean_anomaly_deg: f64,
}

impl From<OrbitalElements> for ElementsRaw {
    fn from(e: OrbitalElements) -> Self {
        Self {
            a_km: e.a_km,
            ecc: e.ecc,
            inc_deg: e.inc_deg,
            raan_deg: e.raan_deg,
            argp_deg: e.argp_deg,
            mean_anomaly_deg: e.mean_anomaly_deg,
        }
    }
}

impl TryFrom<ElementsRaw> for OrbitalElements {
    type Error = Error;
    fn try_from(raw: ElementsRaw) -> Result<Self> {
        OrbitalElements::new(
            raw.a_km,
            raw.ecc,
            raw.inc_deg,
            raw.raan_deg,
            raw.argp_deg,
            raw.mean_anomaly_deg,
        )
    }
}

fn wrap_deg(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    if a == 360.0 {
        0.0
    } else {
        a
    }
}

impl OrbitalElements {
    pub fn new(
        a_km: f64,
        ecc: f64,
        inc_deg: f64,
        raan_deg: f64,
        argp_deg: f64,
        mean_anomaly_deg: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("a_km", a_km),
            ("ecc", ecc),
            ("inc_deg", inc_deg),
            ("raan_deg", raan_deg),
            ("argp_deg", argp_deg),
            ("mean_anomaly_deg", mean_anomaly_deg),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} is not finite")));
            }
        }
        if a_km <= 0.0 {
            return Err(Error::invalid(format!(
                "semi-major axis must be positive, got {a_km}"
            )));
        }
        if !(0.0..1.0).contains(&ecc) {
            return Err(Error::Eccentricity(ecc));
        }
        if !(0.0..=180.0).contains(&inc_deg) {
            return Err(Error::invalid(format!(
                "inclination must be in [0, 180] deg, got {inc_deg}"
            )));
        }
        Ok(Self {
            a_km,
            ecc,
            inc_deg,
            raan_deg: wrap_deg(raan_deg),
            argp_deg: wrap_deg(argp_deg),
            mean_anomaly_deg: wrap_deg(mean_anomaly_deg),
        })
    }

    /// Orbital period, seconds.
    pub fn period_s(&self, gravity: &GravityModel) -> f64 {
        2.0 * std::f64::consts::PI * (self.a_km.powi(3) / gravity.mu).sqrt()
    }

    /// Mean motion, rad/s.
    pub fn mean_motion_rad_s(&self, gravity: &GravityModel) -> f64 {
        (gravity.mu / self.a_km.powi(3)).sqrt()
    }
}

/// Solves Kepler's equation `E - e sin E = M` for the eccentric anomaly.
///
/// Newton iteration from `E0 = M`, with a bisection fallback on the bracket
/// `[M - e, M + e]` if Newton stalls. The residual is driven below 1e-12 rad.
pub fn solve_kepler(mean_anomaly_rad: f64, ecc: f64) -> Result<f64> {
    if !mean_anomaly_rad.is_finite() {
        return Err(Error::NonFinite("mean anomaly"));
    }
    if !(0.0..1.0).contains(&ecc) {
        return Err(Error::Eccentricity(ecc));
    }
    // Reduce to [-pi, pi]; the 2*pi multiple is restored afterwards so the
    // residual identity holds for the caller's M.
    let two_pi = 2.0 * std::f64::consts::PI;
    let turns = (mean_anomaly_rad / two_pi).round();
    let m = mean_anomaly_rad - turns * two_pi;

    let mut e_anom = m;
    for _ in 0..KEPLER_MAX_NEWTON {
        let f = e_anom - ecc * e_anom.sin() - m;
        if f.abs() < KEPLER_TOL_RAD {
            return Ok(e_anom + turns * two_pi);
        }
        let fp = 1.0 - ecc * e_anom.cos();
        e_anom -= f / fp;
    }

    // f(E) = E - e sin E - m is strictly increasing, so the bracket is safe.
    let (mut lo, mut hi) = (m - ecc, m + ecc);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = mid - ecc * mid.sin() - m;
        if f.abs() < KEPLER_TOL_RAD {
            return Ok(mid + turns * two_pi);
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi) + turns * two_pi)
}

fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_x(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Converts orbital elements to an inertial state.
pub fn elements_to_eci(el: &OrbitalElements, gravity: &GravityModel) -> Result<EciState> {
    let ecc = el.ecc;
    if !(0.0..1.0).contains(&ecc) {
        return Err(Error::Eccentricity(ecc));
    }
    let e_anom = solve_kepler(el.mean_anomaly_deg.to_radians(), ecc)?;
    let (sin_e, cos_e) = e_anom.sin_cos();
    let a = el.a_km;
    let r = a * (1.0 - ecc * cos_e);
    let beta = (1.0 - ecc * ecc).sqrt();

    let pos_pqw = Vector3::new(a * (cos_e - ecc), a * beta * sin_e, 0.0);
    let v_scale = (gravity.mu * a).sqrt() / r;
    let vel_pqw = Vector3::new(-v_scale * sin_e, v_scale * beta * cos_e, 0.0);

    let rot = rot_z(el.raan_deg.to_radians())
        * rot_x(el.inc_deg.to_radians())
        * rot_z(el.argp_deg.to_radians());
    EciState::new(rot * pos_pqw, rot * vel_pqw)
}

/// Recovers orbital elements from an inertial state.
///
/// Rejects rectilinear states (zero angular momentum) and non-elliptic
/// orbits. For circular or equatorial orbits the undefined angles are set to
/// zero and the anomaly is measured from the surviving reference direction,
/// so `elements_to_eci` inverts this function on all accepted states.
pub fn eci_to_elements(state: &EciState, gravity: &GravityModel) -> Result<OrbitalElements> {
    let pos = state.position();
    let vel = state.velocity();
    let r = pos.norm();
    let speed2 = vel.norm_squared();
    let mu = gravity.mu;

    let h_vec = pos.cross(&vel);
    let h = h_vec.norm();
    if h <= 1e-12 * r * speed2.sqrt().max(1.0) {
        return Err(Error::Rectilinear);
    }

    let energy = 0.5 * speed2 - mu / r;
    if energy >= 0.0 {
        return Err(Error::Eccentricity(1.0));
    }
    let a = -mu / (2.0 * energy);

    let e_vec = ((speed2 - mu / r) * pos - pos.dot(&vel) * vel) / mu;
    let ecc = e_vec.norm();
    if ecc >= 1.0 {
        return Err(Error::Eccentricity(ecc));
    }

    let inc = (h_vec.z / h).clamp(-1.0, 1.0).acos();

    let node = Vector3::new(-h_vec.y, h_vec.x, 0.0);
    let n_norm = node.norm();
    let equatorial = n_norm < 1e-11 * h;
    let circular = ecc < 1e-11;

    let raan = if equatorial {
        0.0
    } else {
        node.y.atan2(node.x)
    };

    let (argp, true_anom) = match (circular, equatorial) {
        (true, true) => {
            // True longitude measured from +x.
            (0.0, pos.y.atan2(pos.x))
        }
        (true, false) => {
            // Argument of latitude measured from the node.
            let cos_u = (node.dot(&pos) / (n_norm * r)).clamp(-1.0, 1.0);
            let u = if pos.z >= 0.0 {
                cos_u.acos()
            } else {
                -cos_u.acos()
            };
            (0.0, u)
        }
        (false, eq) => {
            let argp = if eq {
                let w = e_vec.y.atan2(e_vec.x);
                if h_vec.z >= 0.0 {
                    w
                } else {
                    -w
                }
            } else {
                let cos_w = (node.dot(&e_vec) / (n_norm * ecc)).clamp(-1.0, 1.0);
                if e_vec.z >= 0.0 {
                    cos_w.acos()
                } else {
                    -cos_w.acos()
                }
            };
            let cos_nu = (e_vec.dot(&pos) / (ecc * r)).clamp(-1.0, 1.0);
            let nu = if pos.dot(&vel) >= 0.0 {
                cos_nu.acos()
            } else {
                -cos_nu.acos()
            };
            (argp, nu)
        }
    };

    // Eccentric anomaly from the true anomaly, then the mean anomaly.
    let (sin_nu, cos_nu) = true_anom.sin_cos();
    let denom = 1.0 + ecc * cos_nu;
    let sin_e = (1.0 - ecc * ecc).sqrt() * sin_nu / denom;
    let cos_e = (ecc + cos_nu) / denom;
    let e_anom = sin_e.atan2(cos_e);
    let mean_anom = e_anom - ecc * sin_e;

    OrbitalElements::new(
        a,
        ecc,
        inc.to_degrees(),
        raan.to_degrees(),
        argp.to_degrees(),
        mean_anom.to_degrees(),
    )
}

/// Propagates a state forward (or backward, for negative `dt_s`) along its
/// two-body orbit.
pub fn propagate(state: &EciState, dt_s: f64, gravity: &GravityModel) -> Result<EciState> {
    if !dt_s.is_finite() {
        return Err(Error::NonFinite("propagation interval"));
    }
    let mut el = eci_to_elements(state, gravity)?;
    let n = el.mean_motion_rad_s(gravity);
    el.mean_anomaly_deg = wrap_deg(el.mean_anomaly_deg + (n * dt_s).to_degrees());
    elements_to_eci(&el, gravity)
}

/// Unit vector along the velocity (the along-track thrust axis).
pub fn along_track_unit(state: &EciState) -> Result<Vector3<f64>> {
    let speed = state.speed();
    if speed <= 0.0 {
        return Err(Error::ZeroVelocity);
    }
    Ok(state.velocity() / speed)
}

/// Radial / transverse / normal frame at a state; columns are the R, T, N
/// unit vectors expressed in ECI.
pub fn rtn_basis(state: &EciState) -> Result<Matrix3<f64>> {
    let r_hat = state.position() / state.radius();
    let w = state.position().cross(&state.velocity());
    let w_norm = w.norm();
    if w_norm <= 1e-12 * state.radius() * state.speed().max(1.0) {
        return Err(Error::Rectilinear);
    }
    let n_hat = w / w_norm;
    let t_hat = n_hat.cross(&r_hat);
    Ok(Matrix3::from_columns(&[r_hat, t_hat, n_hat]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn g() -> GravityModel {
        GravityModel::default()
    }

    #[test]
    fn kepler_circular_returns_mean_anomaly() {
        assert_eq!(solve_kepler(1.3, 0.0).unwrap(), 1.3);
    }

    #[test]
    fn kepler_symmetry_at_pi() {
        let e = solve_kepler(std::f64::consts::PI, 0.5).unwrap();
        assert_abs_diff_eq!(e, std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn kepler_residual_small() {
        for (m, ecc) in [(0.5, 0.3), (6.1, 0.7), (-4.0, 0.11), (123.456, 0.79)] {
            let e = solve_kepler(m, ecc).unwrap();
            assert!((e - ecc * e.sin() - m).abs() < 1e-12, "m={m} e={ecc}");
        }
    }

    #[test]
    fn kepler_rejects_hyperbolic() {
        assert!(matches!(solve_kepler(0.4, 1.2), Err(Error::Eccentricity(_))));
    }

    #[test]
    fn circular_equatorial_at_ascending_node() {
        let el = OrbitalElements::new(7000.0, 0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        assert_relative_eq!(s.position().x, 7000.0, max_relative = 1e-12);
        assert_abs_diff_eq!(s.position().y, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.position().z, 0.0, epsilon = 1e-9);
        assert_relative_eq!(s.speed(), (g().mu / 7000.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn elements_rejects_parabolic() {
        assert!(OrbitalElements::new(7000.0, 1.2, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn specific_energy_matches_vis_viva() {
        let el = OrbitalElements::new(6878.0, 0.05, 51.6, 120.0, 80.0, 30.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        let energy = 0.5 * s.speed().powi(2) - g().mu / s.radius();
        assert_relative_eq!(energy, -g().mu / (2.0 * el.a_km), max_relative = 1e-9);
    }

    #[test]
    fn round_trip_elements() {
        let el = OrbitalElements::new(6778.137, 0.01, 80.0, 60.0, 45.0, 120.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        let back = eci_to_elements(&s, &g()).unwrap();
        assert_relative_eq!(back.a_km, el.a_km, max_relative = 1e-10);
        assert_abs_diff_eq!(back.ecc, el.ecc, epsilon = 1e-12);
        assert_abs_diff_eq!(back.inc_deg, el.inc_deg, epsilon = 1e-8);
        assert_abs_diff_eq!(back.raan_deg, el.raan_deg, epsilon = 1e-8);
        assert_abs_diff_eq!(back.argp_deg, el.argp_deg, epsilon = 1e-8);
        assert_abs_diff_eq!(back.mean_anomaly_deg, el.mean_anomaly_deg, epsilon = 1e-8);
    }

    #[test]
    fn circular_state_recovers_circular_elements() {
        let v = (g().mu / 7000.0).sqrt();
        let s = EciState::new(
            Vector3::new(7000.0, 0.0, 0.0),
            Vector3::new(0.0, v, 0.0),
        )
        .unwrap();
        let el = eci_to_elements(&s, &g()).unwrap();
        assert_relative_eq!(el.a_km, 7000.0, max_relative = 1e-9);
        assert!(el.ecc < 1e-9);
    }

    #[test]
    fn parallel_position_velocity_is_rectilinear() {
        let s = EciState::new(
            Vector3::new(7000.0, 0.0, 0.0),
            Vector3::new(3.0, 0.0, 0.0),
        )
        .unwrap();
        assert!(matches!(eci_to_elements(&s, &g()), Err(Error::Rectilinear)));
        assert!(matches!(propagate(&s, 10.0, &g()), Err(Error::Rectilinear)));
    }

    #[test]
    fn propagate_zero_is_identity() {
        let el = OrbitalElements::new(6900.0, 0.08, 88.0, 70.0, 40.0, 200.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        let p = propagate(&s, 0.0, &g()).unwrap();
        assert!((p.position() - s.position()).norm() < 1e-6);
        assert!((p.velocity() - s.velocity()).norm() < 1e-9);
    }

    #[test]
    fn propagate_one_period_closes_orbit() {
        let el = OrbitalElements::new(6878.137, 0.0, 75.0, 50.0, 0.0, 0.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        let p = propagate(&s, el.period_s(&g()), &g()).unwrap();
        assert!((p.position() - s.position()).norm() < 1e-6);
    }

    #[test]
    fn propagate_back_and_forward_identity() {
        let el = OrbitalElements::new(6828.0, 0.06, 82.0, 55.0, 44.0, 310.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        let there = propagate(&s, 72.0 * 3600.0, &g()).unwrap();
        let back = propagate(&there, -72.0 * 3600.0, &g()).unwrap();
        assert!((back.position() - s.position()).norm() < 1e-6);
        assert!((back.velocity() - s.velocity()).norm() < 1e-9);
    }

    #[test]
    fn propagate_preserves_shape_elements() {
        let el = OrbitalElements::new(6950.0, 0.1, 79.0, 48.0, 59.0, 10.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        let p = propagate(&s, 12_345.6, &g()).unwrap();
        let back = eci_to_elements(&p, &g()).unwrap();
        assert_relative_eq!(back.a_km, el.a_km, max_relative = 1e-9);
        assert_relative_eq!(back.ecc, el.ecc, max_relative = 1e-9);
        assert_relative_eq!(back.inc_deg, el.inc_deg, max_relative = 1e-9);
    }

    #[test]
    fn along_track_examples() {
        let s = EciState::new(Vector3::new(7000.0, 0.0, 0.0), Vector3::new(0.0, 7.5, 0.0))
            .unwrap();
        assert_eq!(along_track_unit(&s).unwrap(), Vector3::new(0.0, 1.0, 0.0));

        let s = EciState::new(Vector3::new(0.0, 7000.0, 0.0), Vector3::new(3.0, 4.0, 0.0))
            .unwrap();
        let u = along_track_unit(&s).unwrap();
        assert_abs_diff_eq!(u.x, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(u.y, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(u.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn along_track_rejects_zero_velocity() {
        let s = EciState::new(Vector3::new(7000.0, 0.0, 0.0), Vector3::zeros()).unwrap();
        assert!(matches!(along_track_unit(&s), Err(Error::ZeroVelocity)));
    }

    #[test]
    fn rtn_basis_is_orthonormal() {
        let el = OrbitalElements::new(6900.0, 0.04, 85.0, 60.0, 35.0, 77.0).unwrap();
        let s = elements_to_eci(&el, &g()).unwrap();
        let q = rtn_basis(&s).unwrap();
        let should_be_identity = q.transpose() * q;
        assert!((should_be_identity - Matrix3::identity()).norm() < 1e-12);
        // T close to the velocity direction for a near-circular orbit.
        let t = q.column(1);
        assert!(t.dot(&along_track_unit(&s).unwrap()) > 0.99);
    }

    #[test]
    fn eci_state_validation() {
        assert!(EciState::new(Vector3::zeros(), Vector3::zeros()).is_err());
        assert!(EciState::new(
            Vector3::new(f64::NAN, 0.0, 0.0),
            Vector3::zeros()
        )
        .is_err());
    }
}

//! Probability of collision at closest approach.
//!
//! The miss distribution is the combined chief + deputy position covariance
//! projected onto the encounter plane (the plane through the deputy normal to
//! the relative velocity). `collision_probability` integrates the resulting
//! 2D Gaussian over the combined-hardbody disk; `pc_sampling_oracle` estimates
//! the same probability by direct sampling and is kept as an independent
//! validation route.

use nalgebra::{Matrix2, Matrix3, Matrix6, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::linalg::{adaptive_simpson, normal_cdf_diff, psd_factor3, sym_eigen2};
use crate::mdp::MdpState;
use crate::orbital::EciState;
use crate::seeds::rng_from;
use crate::{Error, Result};

/// Variance floor applied to the encounter-plane covariance eigenvalues, km^2.
pub const MIN_PLANE_VARIANCE_KM2: f64 = 1e-12;

/// Absolute tolerance of the collision-probability quadrature.
const PC_QUAD_TOL: f64 = 1e-12;

/// 6x6 state covariance; position block km^2, velocity block km^2/s^2.
///
/// Stored symmetrized. The position block must be positive semi-definite.
/// The velocity block is carried for CDM fidelity but unused by the
/// collision-probability computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 6]; 6]", into = "[[f64; 6]; 6]")]
pub struct Covariance {
    m: Matrix6<f64>,
}

impl From<Covariance> for [[f64; 6]; 6] {
    fn from(c: Covariance) -> Self {
        let mut out = [[0.0; 6]; 6];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = c.m[(i, j)];
            }
        }
        out
    }
}

impl TryFrom<[[f64; 6]; 6]> for Covariance {
    type Error = Error;
    fn try_from(rows: [[f64; 6]; 6]) -> Result<Self> {
        Covariance::from_matrix(Matrix6::from_fn(|i, j| rows[i][j]))
    }
}

impl Covariance {
    pub fn from_matrix(m: Matrix6<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("covariance"));
        }
        let scale = m.amax().max(1.0);
        if (m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::AsymmetricCovariance);
        }
        let sym = 0.5 * (m + m.transpose());
        let pos = sym.fixed_view::<3, 3>(0, 0).into_owned();
        let min_eig = pos
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-12 * scale {
            return Err(Error::NotPositiveSemiDefinite);
        }
        Ok(Self { m: sym })
    }

    /// All-zero covariance (exactly known state).
    pub fn zero() -> Self {
        Self {
            m: Matrix6::zeros(),
        }
    }

    /// Diagonal position variances (km^2), zero velocity block.
    pub fn from_position_diagonal(var_km2: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix6::zeros();
        for i in 0..3 {
            m[(i, i)] = var_km2[i];
        }
        Self::from_matrix(m)
    }

    /// Dense position covariance (km^2), zero velocity block.
    pub fn from_position_matrix(pos: Matrix3<f64>) -> Result<Self> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&pos);
        Self::from_matrix(m)
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.m
    }

    pub fn position_block(&self) -> Matrix3<f64> {
        self.m.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Covariance scaled by a non-negative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(Error::invalid(format!(
                "covariance scale factor must be non-negative, got {factor}"
            )));
        }
        Ok(Self { m: self.m * factor })
    }

    pub fn position_determinant(&self) -> f64 {
        self.position_block().determinant()
    }
}

/// Physical radii of the two objects, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HardbodyRaw", into = "HardbodyRaw")]
pub struct HardbodyRadii {
    chief_m: f64,
    deputy_m: f64,
}

#[derive(Serialize, Deserialize)]
struct HardbodyRaw {
    chief_m: f64,
    deputy_m: f64,
}

impl From<HardbodyRadii> for HardbodyRaw {
    fn from(r: HardbodyRadii) -> Self {
        Self {
            chief_m: r.chief_m,
            deputy_m: r.deputy_m,
        }
    }
}

impl TryFrom<HardbodyRaw> for HardbodyRadii {
    type Error = Error;
    fn try_from(raw: HardbodyRaw) -> Result<Self> {
        HardbodyRadii::new(raw.chief_m, raw.deputy_m)
    }
}

impl HardbodyRadii {
    pub fn new(chief_m: f64, deputy_m: f64) -> Result<Self> {
        if !(chief_m > 0.0 && chief_m.is_finite()) || !(deputy_m > 0.0 && deputy_m.is_finite()) {
            return Err(Error::invalid(format!(
                "hardbody radii must be positive, got ({chief_m}, {deputy_m}) m"
            )));
        }
        Ok(Self { chief_m, deputy_m })
    }

    pub fn chief_m(&self) -> f64 {
        self.chief_m
    }

    pub fn deputy_m(&self) -> f64 {
        self.deputy_m
    }

    /// Combined hardbody radius in km (radii are stored in meters).
    pub fn combined_km(&self) -> f64 {
        (self.chief_m + self.deputy_m) / 1000.0
    }
}

/// Relative geometry at closest approach.
#[derive(Clone, Copy, Debug)]
pub struct EncounterGeometry {
    /// Deputy position minus chief position, km.
    pub miss_km: Vector3<f64>,
    /// Deputy velocity minus chief velocity, km/s.
    pub relative_velocity_km_s: Vector3<f64>,
    /// Orthonormal basis of the plane normal to the relative velocity.
    pub plane_basis: [Vector3<f64>; 2],
}

impl EncounterGeometry {
    /// Miss vector projected onto the encounter plane.
    pub fn projected_miss(&self) -> Vector2<f64> {
        Vector2::new(
            self.miss_km.dot(&self.plane_basis[0]),
            self.miss_km.dot(&self.plane_basis[1]),
        )
    }
}

/// Builds the encounter plane from the two states at closest approach.
pub fn encounter_geometry(chief: &EciState, deputy: &EciState) -> Result<EncounterGeometry> {
    let rel_v = deputy.velocity() - chief.velocity();
    let speed_scale = chief.speed().max(deputy.speed()).max(1.0);
    if rel_v.norm() <= 1e-12 * speed_scale {
        return Err(Error::ZeroRelativeVelocity);
    }
    let v_hat = rel_v / rel_v.norm();
    let miss = deputy.position() - chief.position();

    // First basis vector: the in-plane part of the miss vector when it is
    // non-degenerate, otherwise any direction normal to v_hat.
    let miss_perp = miss - miss.dot(&v_hat) * v_hat;
    let e1 = if miss_perp.norm() > 1e-9 * miss.norm().max(1.0) {
        miss_perp / miss_perp.norm()
    } else {
        let helper = if v_hat.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let p = helper - helper.dot(&v_hat) * v_hat;
        p / p.norm()
    };
    let e2 = v_hat.cross(&e1);

    Ok(EncounterGeometry {
        miss_km: miss,
        relative_velocity_km_s: rel_v,
        plane_basis: [e1, e2],
    })
}

/// Combined position covariance projected onto the encounter plane:
/// `B^T (Sigma_c_pos + Sigma_d_pos) B` for the plane basis `B`.
pub fn combined_plane_covariance(
    sigma_c: &Covariance,
    sigma_d: &Covariance,
    geom: &EncounterGeometry,
) -> Matrix2<f64> {
    let combined = sigma_c.position_block() + sigma_d.position_block();
    let [e1, e2] = geom.plane_basis;
    let c11 = (combined * e1).dot(&e1);
    let c22 = (combined * e2).dot(&e2);
    let c12 = (combined * e2).dot(&e1);
    Matrix2::new(c11, c12, c12, c22)
}

/// Probability of collision for a conjunction state.
///
/// Integrates the encounter-plane Gaussian over the combined-hardbody disk.
/// The integral is reduced to one dimension: the disk is sliced along the
/// major covariance axis and each slice's cross integral is evaluated in
/// closed form. Near-singular plane covariances are regularized by flooring
/// the eigenvalues at [`MIN_PLANE_VARIANCE_KM2`].
pub fn collision_probability(state: &MdpState) -> Result<f64> {
    let geom = encounter_geometry(state.chief(), state.deputy())?;
    let plane_cov = combined_plane_covariance(state.sigma_c(), state.sigma_d(), &geom);
    let radius_km = state.radii().combined_km();
    pc_from_plane(&geom.projected_miss(), &plane_cov, radius_km)
}

/// Foster integral on an already-projected encounter plane.
pub fn pc_from_plane(miss: &Vector2<f64>, plane_cov: &Matrix2<f64>, radius_km: f64) -> Result<f64> {
    if !(radius_km > 0.0) {
        return Err(Error::invalid("combined hardbody radius must be positive"));
    }
    let (l_max, l_min, u_max) = sym_eigen2(plane_cov);
    if l_max < -1e-12 || l_min < -1e-12 * l_max.abs().max(1.0) {
        return Err(Error::NotPositiveSemiDefinite);
    }
    let sigma_x = l_max.max(MIN_PLANE_VARIANCE_KM2).sqrt();
    let sigma_y = l_min.max(MIN_PLANE_VARIANCE_KM2).sqrt();

    // Miss components in the covariance eigenframe; x is the wide axis.
    let u_min = Vector2::new(-u_max.y, u_max.x);
    let mx = miss.dot(&u_max);
    let my = miss.dot(&u_min);

    // Far miss: the disk is tens of sigmas away from the mean in every
    // direction, so the probability underflows to zero.
    let dist = miss.norm();
    if dist - radius_km > 40.0 * sigma_x {
        return Ok(0.0);
    }

    let r = radius_km;
    let norm = r / ((2.0 * std::f64::consts::PI).sqrt() * sigma_x);
    let integrand = |t: f64| {
        let (sin_t, cos_t) = t.sin_cos();
        let x = mx + r * sin_t;
        let half_width = r * cos_t;
        let gauss = (-0.5 * (x / sigma_x).powi(2)).exp();
        let cross = normal_cdf_diff((my - half_width) / sigma_y, (my + half_width) / sigma_y);
        norm * cos_t * gauss * cross
    };

    // Panel boundaries: a uniform split plus, when the covariance is much
    // narrower than the disk, extra nodes bracketing the Gaussian ridge so
    // the adaptive pass cannot step over it.
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut nodes: Vec<f64> = (0..=8).map(|k| -half_pi + k as f64 * half_pi / 4.0).collect();
    if sigma_x < r / 8.0 && mx.abs() < r {
        let t0 = (-mx / r).clamp(-1.0, 1.0).asin();
        let slope = (r * r - mx * mx).sqrt().max(sigma_x);
        let width = sigma_x / slope;
        for k in [-30.0, -10.0, -3.0, -1.0, 1.0, 3.0, 10.0, 30.0] {
            let t = t0 + k * width;
            if t > -half_pi && t < half_pi {
                nodes.push(t);
            }
        }
        nodes.push(t0);
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let total_len: f64 = std::f64::consts::PI;
    let mut pc = 0.0;
    for pair in nodes.windows(2) {
        let seg_tol = PC_QUAD_TOL * ((pair[1] - pair[0]) / total_len).max(1e-3);
        pc += adaptive_simpson(&integrand, pair[0], pair[1], seg_tol);
    }
    Ok(pc.clamp(0.0, 1.0))
}

/// Monte Carlo estimate of the collision probability with its standard error.
///
/// Draws `n` relative positions from the combined 3D position Gaussian
/// centered on the miss vector, projects them onto the encounter plane, and
/// counts the fraction inside the combined-hardbody disk.
pub fn pc_sampling_oracle(state: &MdpState, n: u64, seed: u64) -> Result<(f64, f64)> {
    if n < 1000 {
        return Err(Error::invalid(format!(
            "sampling oracle needs at least 1000 samples, got {n}"
        )));
    }
    let geom = encounter_geometry(state.chief(), state.deputy())?;
    let combined = state.sigma_c().position_block() + state.sigma_d().position_block();
    let factor = psd_factor3(&combined);
    let [e1, e2] = geom.plane_basis;
    let miss = geom.miss_km;
    let r2 = state.radii().combined_km().powi(2);

    let mut rng = rng_from(seed);
    let mut hits: u64 = 0;
    for _ in 0..n {
        let p = crate::linalg::sample_gaussian3(&miss, &factor, &mut rng);
        let x = p.dot(&e1);
        let y = p.dot(&e2);
        if x * x + y * y <= r2 {
            hits += 1;
        }
    }
    let estimate = hits as f64 / n as f64;
    let se = (estimate * (1.0 - estimate) / n as f64).sqrt();
    Ok((estimate, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpState;
    use crate::orbital::{EciState, GravityModel};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn chief_circular() -> EciState {
        let g = GravityModel::default();
        let v = (g.mu / 6878.137_f64).sqrt();
        EciState::new(Vector3::new(6878.137, 0.0, 0.0), Vector3::new(0.0, v, 0.0)).unwrap()
    }

    /// Crossing deputy with an in-plane miss offset; relative velocity is
    /// along z so the encounter plane is spanned by x and y.
    fn crossing_state(miss_x_km: f64, miss_y_km: f64, sigma_km: f64, radius_m: f64) -> MdpState {
        let chief = chief_circular();
        let deputy = EciState::new(
            chief.position() + Vector3::new(miss_x_km, miss_y_km, 0.0),
            chief.velocity() + Vector3::new(0.0, 0.0, 5.0),
        )
        .unwrap();
        let var = sigma_km * sigma_km;
        let sigma = Covariance::from_position_diagonal(Vector3::new(var, var, var)).unwrap();
        MdpState::new(
            0,
            chief,
            deputy,
            sigma,
            Covariance::zero(),
            HardbodyRadii::new(radius_m / 2.0, radius_m / 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn geometry_rejects_equal_velocities() {
        let chief = chief_circular();
        let deputy = EciState::new(chief.position() + Vector3::new(0.0, 0.0, 1.0), chief.velocity())
            .unwrap();
        assert!(matches!(
            encounter_geometry(&chief, &deputy),
            Err(Error::ZeroRelativeVelocity)
        ));
    }

    #[test]
    fn geometry_miss_and_basis() {
        let chief = chief_circular();
        let deputy = EciState::new(
            chief.position() + Vector3::new(0.0, 0.0, 1.0),
            chief.velocity() + Vector3::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        let geom = encounter_geometry(&chief, &deputy).unwrap();
        assert_eq!(geom.miss_km, Vector3::new(0.0, 0.0, 1.0));
        for e in &geom.plane_basis {
            assert_abs_diff_eq!(e.dot(&geom.relative_velocity_km_s), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(e.norm(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            geom.plane_basis[0].dot(&geom.plane_basis[1]),
            0.0,
            epsilon = 1e-12
        );
        // Basis spans the y-z plane (normal to the x relative velocity).
        assert_abs_diff_eq!(geom.plane_basis[0].x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(geom.plane_basis[1].x, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn combined_covariance_trivial_cases() {
        let chief = chief_circular();
        let deputy = EciState::new(
            chief.position() + Vector3::new(0.0, 0.0, 1.0),
            chief.velocity() + Vector3::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        let geom = encounter_geometry(&chief, &deputy).unwrap();

        let zero = combined_plane_covariance(&Covariance::zero(), &Covariance::zero(), &geom);
        assert!(zero.amax() == 0.0);

        let c = Covariance::from_position_diagonal(Vector3::new(4.0, 4.0, 4.0)).unwrap();
        let d = Covariance::from_position_diagonal(Vector3::new(9.0, 9.0, 9.0)).unwrap();
        let proj = combined_plane_covariance(&c, &d, &geom);
        assert!((proj - Matrix2::new(13.0, 0.0, 0.0, 13.0)).amax() < 1e-12);
    }

    #[test]
    fn combined_covariance_matches_dense_product() {
        let chief = chief_circular();
        let deputy = EciState::new(
            chief.position() + Vector3::new(0.3, -0.1, 1.0),
            chief.velocity() + Vector3::new(0.9, -2.0, 3.0),
        )
        .unwrap();
        let geom = encounter_geometry(&chief, &deputy).unwrap();
        let pos_c = Matrix3::new(4.0, 0.5, 0.1, 0.5, 9.0, -0.2, 0.1, -0.2, 1.0);
        let pos_d = Matrix3::new(2.0, -0.3, 0.0, -0.3, 16.0, 0.4, 0.0, 0.4, 0.5);
        let sc = Covariance::from_position_matrix(pos_c).unwrap();
        let sd = Covariance::from_position_matrix(pos_d).unwrap();
        let got = combined_plane_covariance(&sc, &sd, &geom);

        // Index-by-index oracle for B^T (C + D) B.
        let total = pos_c + pos_d;
        let basis = [geom.plane_basis[0], geom.plane_basis[1]];
        for i in 0..2 {
            for j in 0..2 {
                let mut expect = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        expect += basis[i][p] * total[(p, q)] * basis[j][q];
                    }
                }
                assert_abs_diff_eq!(got[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pc_far_miss_is_zero() {
        let s = crossing_state(100.0, 0.0, 0.1, 10.0);
        assert_eq!(collision_probability(&s).unwrap(), 0.0);
    }

    #[test]
    fn pc_centered_isotropic_closed_form() {
        for (sigma_km, radius_m) in [(0.05, 10.0), (0.3, 12.5), (1.0, 15.0), (0.01, 5.0)] {
            let s = crossing_state(0.0, 0.0, sigma_km, radius_m);
            let r_km = radius_m / 1000.0;
            let expect = 1.0 - (-r_km * r_km / (2.0 * sigma_km * sigma_km)).exp();
            let got = collision_probability(&s).unwrap();
            assert_abs_diff_eq!(got, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn pc_offcenter_isotropic_matches_quadrature_scale() {
        // Sanity: off-center probabilities decrease with distance.
        let near = collision_probability(&crossing_state(0.0, 0.0, 0.2, 10.0)).unwrap();
        let mid = collision_probability(&crossing_state(0.2, 0.0, 0.2, 10.0)).unwrap();
        let far = collision_probability(&crossing_state(0.8, 0.0, 0.2, 10.0)).unwrap();
        assert!(near > mid && mid > far && far > 0.0);
    }

    #[test]
    fn pc_zero_covariance_inside_and_outside() {
        // Zero covariance regularizes to millimeter sigmas; the disk either
        // contains the mean (Pc = 1) or it does not (Pc = 0).
        let inside = crossing_state(0.004, 0.0, 0.0, 10.0);
        let got = collision_probability(&inside).unwrap();
        assert_relative_eq!(got, 1.0, max_relative = 1e-9);

        let outside = crossing_state(0.05, 0.0, 0.0, 10.0);
        assert_abs_diff_eq!(collision_probability(&outside).unwrap(), 0.0, epsilon = 1e-30);
    }

    #[test]
    fn pc_anisotropic_ridge_not_missed() {
        // Narrow covariance across the disk: the integrand is a sharp ridge.
        let chief = chief_circular();
        let deputy = EciState::new(
            chief.position() + Vector3::new(0.005, 0.0, 0.0),
            chief.velocity() + Vector3::new(0.0, 0.0, 5.0),
        )
        .unwrap();
        let sigma =
            Covariance::from_position_diagonal(Vector3::new(1e-6, 1e-10, 1e-10)).unwrap();
        let s = MdpState::new(
            0,
            chief,
            deputy,
            sigma,
            Covariance::zero(),
            HardbodyRadii::new(5.0, 5.0).unwrap(),
        )
        .unwrap();
        // Miss 5 m with sigma_x = 1 m along x and ~0 along y: essentially all
        // mass crosses the disk along the x ridge => Pc ~ Phi band around 5m.
        let got = collision_probability(&s).unwrap();
        let expect = normal_cdf_diff((-0.01 - 0.005) / 1e-3, (0.01 - 0.005) / 1e-3);
        assert_relative_eq!(got, expect, max_relative = 1e-6);
    }

    #[test]
    fn oracle_exact_when_deterministic() {
        let inside = crossing_state(0.004, 0.0, 0.0, 10.0);
        let (p, se) = pc_sampling_oracle(&inside, 1000, 7).unwrap();
        assert_eq!(p, 1.0);
        assert_eq!(se, 0.0);

        let outside = crossing_state(0.05, 0.0, 0.0, 10.0);
        let (p, _) = pc_sampling_oracle(&outside, 1000, 7).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn oracle_matches_half_probability_construction() {
        // Centered isotropic with R^2/(2 sigma^2) = ln 2 gives Pc = 1/2.
        let r_km: f64 = 0.0125;
        let sigma = r_km / (2.0 * std::f64::consts::LN_2).sqrt();
        let s = crossing_state(0.0, 0.0, sigma, 12.5);
        let (p, se) = pc_sampling_oracle(&s, 200_000, 99).unwrap();
        assert!((p - 0.5).abs() <= 3.0 * se, "p={p} se={se}");
        let foster = collision_probability(&s).unwrap();
        assert!((foster - p).abs() <= 3.0 * se);
        assert_abs_diff_eq!(foster, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn oracle_rejects_small_n() {
        let s = crossing_state(0.0, 0.0, 0.1, 10.0);
        assert!(pc_sampling_oracle(&s, 10, 1).is_err());
    }

    #[test]
    fn covariance_validation() {
        let mut bad = Matrix6::zeros();
        bad[(0, 1)] = 1.0;
        assert!(matches!(
            Covariance::from_matrix(bad),
            Err(Error::AsymmetricCovariance)
        ));

        let mut neg = Matrix6::zeros();
        neg[(0, 0)] = -1.0;
        assert!(matches!(
            Covariance::from_matrix(neg),
            Err(Error::NotPositiveSemiDefinite)
        ));
    }
}

//! Scaffold of the non-unique ("wild") solution emanating from the 1-shock
//! Riemann data, and the two-atom Young measure built from it.
//!
//! The second solution is only known through a few macroscopic quantities.
//! Regions whose state is fixed by the construction are `Resolved`; Ω₂ carries
//! a cited state with `|v|²` pinned at its limit value; Ω₁ is `Unresolved`.
//! All closed forms assume `c_v = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler_states::{entropy, lift_primitive, ExtendedState, GalileanShift, GasModel, PrimitiveState};
use crate::measure::{Atom, AtomicYoungMeasure, Region, RegionStatus};
use crate::riemann_shock::{
    jump_defect, self_similar_shock, shock_constants, slope_serde, FanSolution, InterfaceJumpReport, RiemannData,
};
use crate::wave_cone::{cone_membership, difference_symbol_euler, submatrix_determinant, RankTolerance};

/// Relative tolerance on the gaps `|p₂ − p₊|` and the condition gap.
pub const GAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStates {
    pub p_delta: f64,
    pub delta_v: f64,
    pub rho_delta: f64,
}

pub fn perturbation_states(rho_k: f64, p_plus: f64, delta_p: f64) -> Result<PerturbationStates> {
    if !(rho_k > 0.0 && p_plus > 0.0 && rho_k.is_finite() && p_plus.is_finite()) {
        return Err(Error::InvalidData(format!("need rho_K > 0 and p_plus > 0, got {rho_k}, {p_plus}")));
    }
    if !(delta_p >= 0.0 && delta_p.is_finite()) {
        return Err(Error::InvalidData(format!("delta_p must be finite and >= 0, got {delta_p}")));
    }
    let p_delta = p_plus + delta_p;
    let delta_v = delta_p * (2.0 / (rho_k * (4.0 * p_plus + 3.0 * delta_p))).sqrt();
    let rho_delta = rho_k * (3.0 * p_delta + p_plus) / (3.0 * p_plus + p_delta);
    Ok(PerturbationStates { p_delta, delta_v, rho_delta })
}

/// Speed of the 3-shock between Ω_δ and Ω₊ in the original frame.
///
/// Mass conservation gives `ρ_δ δ_v / (ρ_δ − ρ_K)`; substituting the closed
/// forms simplifies this to `√((4p₊ + 3δ_p)/(2ρ_K))`, which stays regular at
/// `δ_p = 0` where it equals the sound speed of the right state.
pub fn three_shock_speed(rho_k: f64, p_plus: f64, delta_p: f64) -> f64 {
    ((4.0 * p_plus + 3.0 * delta_p) / (2.0 * rho_k)).sqrt()
}

/// Limit of `|v|²` on Ω₂.
pub fn omega2_speed_squared_limit(d: &RiemannData) -> Result<f64> {
    d.validate()?;
    let (rm, pm, pp) = (d.rho_minus, d.p_minus, d.p_plus);
    Ok(4.0 * (pp - pm) * (pp + pm).powi(2) / (rm * (3.0 * pp + pm) * (3.0 * pm + pp)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P2Limit {
    pub p2: f64,
    /// `|p₂ − p₊|`.
    pub gap: f64,
}

/// `p₂ = p₋(ρ_K/ρ₋)²`, taken as the exact limit value.
pub fn p2_limit(d: &RiemannData) -> Result<P2Limit> {
    let k = shock_constants(d)?;
    let p2 = p2_isentropic(d, k.rho_k);
    Ok(P2Limit { p2, gap: (p2 - d.p_plus).abs() })
}

/// Pressure on the isentrope through `(ρ₋, p₋)` of the `c_v = 1` gas.
pub fn p2_isentropic(d: &RiemannData, rho2: f64) -> f64 {
    d.p_minus * (rho2 / d.rho_minus).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankVerdict {
    pub rho2: f64,
    pub p2: f64,
    pub speed2: f64,
    /// `(p₂−p₊)((ρ₂−ρ_K)(p₂−p₊) − ρ₂ρ_K|v|²)`.
    pub determinant: f64,
    /// `|p₂ − p₊|`.
    pub pressure_gap: f64,
    /// `(ρ₂−ρ_K)(p₂−p₊)/(ρ₂ρ_K)`.
    pub condition_rhs: f64,
    /// `| |v|² − condition_rhs |`.
    pub condition_gap: f64,
    pub full_rank: bool,
}

pub fn rank_condition(d: &RiemannData, rho2: f64, p2: f64, speed2: f64) -> Result<RankVerdict> {
    let rho_k = shock_constants(d)?.rho_k;
    if !(rho2 > 0.0 && p2 > 0.0 && speed2 >= 0.0) || !(rho2.is_finite() && p2.is_finite() && speed2.is_finite()) {
        return Err(Error::InvalidData(format!("need rho2 > 0, p2 > 0, speed2 >= 0, got {rho2}, {p2}, {speed2}")));
    }
    let dp = p2 - d.p_plus;
    let a = rho2 - rho_k;
    let determinant = dp * (a * dp - rho2 * rho_k * speed2);
    let condition_rhs = a * dp / (rho2 * rho_k);
    let condition_gap = (speed2 - condition_rhs).abs();
    let pressure_gap = dp.abs();
    let full_rank = pressure_gap > GAP_TOL * p2.max(d.p_plus)
        && condition_gap > GAP_TOL * speed2.max(condition_rhs.abs()).max(f64::MIN_POSITIVE);
    Ok(RankVerdict { rho2, p2, speed2, determinant, pressure_gap, condition_rhs, condition_gap, full_rank })
}

/// The two lifted states on the overlap: `z^α` is the right shock state,
/// `z^β` the Ω₂ state with velocity `velocity`.
pub fn overlap_states(
    d: &RiemannData,
    rho2: f64,
    p2: f64,
    velocity: [f64; 2],
) -> Result<(ExtendedState, ExtendedState)> {
    let k = shock_constants(d)?;
    let gas = GasModel::default();
    let alpha = PrimitiveState::new(k.rho_k, 0.0, 0.0, d.p_plus)?;
    let beta = PrimitiveState::new(rho2, velocity[0], velocity[1], p2)?;
    Ok((lift_primitive(&alpha, &gas), lift_primitive(&beta, &gas)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminantCrossCheck {
    pub closed_form: f64,
    pub cofactor: f64,
    pub relative_difference: f64,
    pub svd_rank: usize,
    pub marginal: bool,
}

/// Closed-form determinant against the cofactor determinant of the assembled
/// symbol `Z(z^β − z^α)`, plus the SVD rank of the full 4×3 symbol.
pub fn cross_check_determinant(
    d: &RiemannData,
    rho2: f64,
    p2: f64,
    velocity: [f64; 2],
) -> Result<DeterminantCrossCheck> {
    let speed2 = velocity[0] * velocity[0] + velocity[1] * velocity[1];
    let closed_form = rank_condition(d, rho2, p2, speed2)?.determinant;
    let (za, zb) = overlap_states(d, rho2, p2, velocity)?;
    let sym = difference_symbol_euler(&zb, &za);
    let cofactor = submatrix_determinant(&sym, [0, 1, 2])?;
    let v = cone_membership(&sym, RankTolerance::default());
    let relative_difference = (closed_form - cofactor).abs() / closed_form.abs().max(f64::MIN_POSITIVE);
    Ok(DeterminantCrossCheck { closed_form, cofactor, relative_difference, svd_rank: v.rank, marginal: v.marginal })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSample {
    pub angle: f64,
    pub rank: usize,
    pub determinant: f64,
}

/// SVD rank of the Ω₂ symbol as the velocity direction turns through a full circle.
pub fn angle_sweep(d: &RiemannData, rho2: f64, p2: f64, speed2: f64, samples: usize) -> Result<Vec<AngleSample>> {
    (0..samples)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
            let s = speed2.sqrt();
            let c = cross_check_determinant(d, rho2, p2, [s * angle.cos(), s * angle.sin()])?;
            Ok(AngleSample { angle, rank: c.svd_rank, determinant: c.cofactor })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WildParameters {
    pub base: RiemannData,
    pub delta_p: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Boundaries Ω₋|Ω₁, Ω₁|Ω₂, Ω₂|Ω_δ, Ω_δ|Ω₊ in the original frame.
    pub slopes: [f64; 4],
    /// Direction of the Ω₂ velocity in the shifted frame, radians.
    #[serde(default)]
    pub omega2_angle: f64,
}

impl WildParameters {
    /// Ω₁ spans slopes `(1.25 s, 0.5 s)` by default.
    pub const OMEGA1_FACTORS: [f64; 2] = [1.25, 0.5];

    pub fn new(base: RiemannData, delta_p: f64) -> Result<Self> {
        let k = shock_constants(&base)?;
        let pert = perturbation_states(k.rho_k, base.p_plus, delta_p)?;
        let s = k.shock_speed;
        let w = Self {
            base,
            delta_p,
            rho1: k.rho_k,
            rho2: k.rho_k,
            slopes: [
                Self::OMEGA1_FACTORS[0] * s,
                Self::OMEGA1_FACTORS[1] * s,
                pert.delta_v,
                three_shock_speed(k.rho_k, base.p_plus, delta_p),
            ],
            omega2_angle: 0.0,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.delta_p >= 0.0 && self.delta_p.is_finite()) {
            return Err(Error::InvalidData(format!("delta_p must be finite and >= 0, got {}", self.delta_p)));
        }
        if !(self.rho1 > 0.0 && self.rho2 > 0.0 && self.rho1.is_finite() && self.rho2.is_finite()) {
            return Err(Error::InvalidData("rho1 and rho2 must be positive".into()));
        }
        if !self.omega2_angle.is_finite() {
            return Err(Error::InvalidData("omega2_angle must be finite".into()));
        }
        if self.slopes.iter().any(|s| !s.is_finite()) || self.slopes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidData(format!(
                "slopes must be finite and strictly increasing, got {:?}",
                self.slopes
            )));
        }
        Ok(())
    }
}

/// Ω₁ and Ω₂ are known only through some of their macroscopic quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialState {
    pub rho: f64,
    pub p: Option<f64>,
    pub speed_squared: Option<f64>,
}

/// States of the wild solution in the frame moving with `δ_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonStates {
    pub omega_minus: PrimitiveState,
    pub omega1: PartialState,
    pub omega2: PartialState,
    pub omega_delta: PrimitiveState,
    pub omega_plus: PrimitiveState,
    pub perturbation: PerturbationStates,
}

pub fn skeleton_states(w: &WildParameters) -> Result<SkeletonStates> {
    w.validate()?;
    let d = &w.base;
    let k = shock_constants(d)?;
    let pert = perturbation_states(k.rho_k, d.p_plus, w.delta_p)?;
    let dv = pert.delta_v;
    Ok(SkeletonStates {
        omega_minus: PrimitiveState::new(d.rho_minus, k.v_k - dv, 0.0, d.p_minus)?,
        omega1: PartialState { rho: w.rho1, p: None, speed_squared: None },
        omega2: PartialState {
            rho: w.rho2,
            p: Some(p2_isentropic(d, w.rho2)),
            speed_squared: Some(omega2_speed_squared_limit(d)?),
        },
        omega_delta: PrimitiveState::new(pert.rho_delta, 0.0, 0.0, pert.p_delta)?,
        omega_plus: PrimitiveState::new(k.rho_k, -dv, 0.0, d.p_plus)?,
        perturbation: pert,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonRegion {
    pub name: String,
    #[serde(with = "slope_serde")]
    pub sigma_left: f64,
    #[serde(with = "slope_serde")]
    pub sigma_right: f64,
    pub status: RegionStatus,
    pub state: Option<PrimitiveState>,
}

/// The five-region fan of the second solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanSkeleton {
    pub regions: Vec<SkeletonRegion>,
}

impl FanSkeleton {
    pub fn galilean(&self, shift: GalileanShift) -> Self {
        Self {
            regions: self
                .regions
                .iter()
                .map(|r| SkeletonRegion {
                    name: r.name.clone(),
                    sigma_left: shift.apply_slope(r.sigma_left),
                    sigma_right: shift.apply_slope(r.sigma_right),
                    status: r.status,
                    state: r.state.map(|s| shift.apply_state(&s)),
                })
                .collect(),
        }
    }

    pub fn region(&self, name: &str) -> Option<&SkeletonRegion> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Dirac measure on every region with a known state; unresolved regions stay empty.
    pub fn to_measure(&self, gas: &GasModel) -> Result<AtomicYoungMeasure> {
        let regions = self
            .regions
            .iter()
            .map(|r| Region {
                sigma_left: r.sigma_left,
                sigma_right: r.sigma_right,
                status: r.status,
                label: r.name.clone(),
                atoms: match (r.status, r.state) {
                    (RegionStatus::Unresolved, _) | (_, None) => Vec::new(),
                    (_, Some(s)) => vec![Atom { weight: 1.0, state: lift_primitive(&s, gas) }],
                },
            })
            .collect();
        AtomicYoungMeasure::new(regions, "wild solution skeleton")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledFans {
    pub fan_alpha: FanSolution,
    /// Original frame.
    pub fan_beta: FanSkeleton,
    /// Frame moving with `δ_v`.
    pub fan_beta_shifted: FanSkeleton,
    pub states: SkeletonStates,
    /// Slopes of `Ω₂ ∩ {x₁ > s t}`.
    pub overlap: [f64; 2],
    pub z_alpha: ExtendedState,
    pub z_beta: ExtendedState,
    /// RH defect of the 3-shock Ω_δ | Ω₊.
    pub three_shock: InterfaceJumpReport,
}

pub fn assemble_fans(w: &WildParameters, gas: &GasModel) -> Result<AssembledFans> {
    gas.require_unit()?;
    let d = &w.base;
    let k = shock_constants(d)?;
    let states = skeleton_states(w)?;
    let dv = states.perturbation.delta_v;
    let [s1, s2, s3, s4] = w.slopes;

    let lo = k.shock_speed.max(s2);
    if !(lo < s3) {
        return Err(Error::EmptyOverlap { left: lo, right: s3 });
    }

    let speed2 = states.omega2.speed_squared.expect("omega2 speed is pinned");
    let p2 = states.omega2.p.expect("omega2 pressure is pinned");
    let vs = speed2.sqrt();
    let omega2 = PrimitiveState::new(w.rho2, vs * w.omega2_angle.cos(), vs * w.omega2_angle.sin(), p2)?;

    let shift = GalileanShift::new(dv);
    let region = |name: &str, a: f64, b: f64, status, state| SkeletonRegion {
        name: name.to_string(),
        sigma_left: shift.apply_slope(a),
        sigma_right: shift.apply_slope(b),
        status,
        state,
    };
    let shifted = FanSkeleton {
        regions: vec![
            region("omega_minus", f64::NEG_INFINITY, s1, RegionStatus::Resolved, Some(states.omega_minus)),
            region("omega1", s1, s2, RegionStatus::Unresolved, None),
            region("omega2", s2, s3, RegionStatus::Cited, Some(omega2)),
            region("omega_delta", s3, s4, RegionStatus::Resolved, Some(states.omega_delta)),
            region("omega_plus", s4, f64::INFINITY, RegionStatus::Resolved, Some(states.omega_plus)),
        ],
    };
    let original = shifted.galilean(shift.inverse());

    let fan_alpha = self_similar_shock(d)?;
    let alpha_state = *fan_alpha.state_at(0.5 * (lo + s3));
    let beta_state = original.region("omega2").and_then(|r| r.state).expect("omega2 has a state");
    let z_alpha = lift_primitive(&alpha_state, gas);
    let z_beta = lift_primitive(&beta_state, gas);

    let left = original.region("omega_delta").and_then(|r| r.state).expect("resolved");
    let right = original.region("omega_plus").and_then(|r| r.state).expect("resolved");
    let three_shock = jump_defect(s4, &left, &right, gas);

    Ok(AssembledFans {
        fan_alpha,
        fan_beta: original,
        fan_beta_shifted: shifted,
        states,
        overlap: [lo, s3],
        z_alpha,
        z_beta,
        three_shock,
    })
}

/// `½ δ_α + ½ δ_β` region by region.
pub fn build_final_measure(
    fan_alpha: &FanSolution,
    fan_beta: &FanSkeleton,
    gas: &GasModel,
) -> Result<AtomicYoungMeasure> {
    let alpha = AtomicYoungMeasure::dirac(fan_alpha, gas);
    let beta = fan_beta.to_measure(gas)?;
    alpha.check_same_initial_data(&beta)?;
    let mut nu = AtomicYoungMeasure::convex_combination(0.5, &alpha, &beta)?;
    nu.label = "half-half combination of the shock and the wild solution".into();
    Ok(nu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyGap {
    pub alpha: f64,
    pub beta: f64,
    /// `|s(α) − s(β)|`.
    pub difference: f64,
}

/// Entropy `log(p/ρ²)` of the two atoms on the overlap.
pub fn entropy_gap(fans: &AssembledFans) -> Result<EntropyGap> {
    let gas = GasModel::default();
    let a = fans.z_alpha.conservative()?.to_primitive(&gas)?;
    let b = fans.z_beta.conservative()?.to_primitive(&gas)?;
    let (ea, eb) = (entropy(&a, &gas), entropy(&b, &gas));
    Ok(EntropyGap { alpha: ea, beta: eb, difference: (ea - eb).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceMargins {
    /// Largest `δ` with full rank and a fixed determinant sign for every
    /// `δ_p ∈ (0, δ]` and every Ω₂ direction.
    pub delta_star: f64,
    pub delta_capped: bool,
    /// Largest `η` with full rank for `|ρ₂ − ρ_K| ≤ η` (`ρ₁` does not enter the symbol).
    pub eta_star: f64,
    pub eta_capped: bool,
    /// Condition gap at the limit point.
    pub speed_margin: f64,
    pub pressure_margin: f64,
    pub limit_determinant: f64,
}

const MARGIN_ANGLES: usize = 16;
const MARGIN_GRID: usize = 32;
const BISECTION_STEPS: usize = 60;

fn largest_passing(cap: f64, pass: impl Fn(f64) -> bool) -> (f64, bool) {
    let grid_pass = |x: f64| (1..=MARGIN_GRID).all(|k| pass(x * k as f64 / MARGIN_GRID as f64));
    if grid_pass(cap) {
        return (cap, true);
    }
    let mut hi = cap;
    let mut lo = cap;
    while !grid_pass(lo) {
        hi = lo;
        lo *= 0.5;
        if lo < cap * 1e-12 {
            return (0.0, false);
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if grid_pass(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, false)
}

pub fn persistence_margins(d: &RiemannData) -> Result<PersistenceMargins> {
    let k = shock_constants(d)?;
    let speed2 = omega2_speed_squared_limit(d)?;
    let p2 = p2_limit(d)?.p2;
    let limit = rank_condition(d, k.rho_k, p2, speed2)?;
    let sign = limit.determinant.signum();
    let ok = |v: &RankVerdict| v.full_rank && v.determinant.signum() == sign;

    let vs = speed2.sqrt();
    let (delta_star, delta_capped) = largest_passing(10.0 * d.p_plus, |dp| {
        let dv = match perturbation_states(k.rho_k, d.p_plus, dp) {
            Ok(p) => p.delta_v,
            Err(_) => return false,
        };
        // |v' + δ_v e₁|² is smallest at θ = π, where it equals (√S − δ_v)²;
        // the signed value must not cross zero.
        let worst = vs - dv;
        worst > 0.0
            && rank_condition(d, k.rho_k, p2, worst * worst).is_ok_and(|v| ok(&v))
            && (0..MARGIN_ANGLES).all(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / MARGIN_ANGLES as f64;
                let (vx, vy) = (vs * th.cos() + dv, vs * th.sin());
                rank_condition(d, k.rho_k, p2, vx * vx + vy * vy).is_ok_and(|v| ok(&v))
            })
    });

    let (eta_star, eta_capped) = largest_passing(0.5 * k.rho_k, |eta| {
        [k.rho_k - eta, k.rho_k + eta]
            .iter()
            .all(|&r2| rank_condition(d, r2, p2_isentropic(d, r2), speed2).is_ok_and(|v| ok(&v)))
    });

    Ok(PersistenceMargins {
        delta_star,
        delta_capped,
        eta_star,
        eta_capped,
        speed_margin: limit.condition_gap,
        pressure_margin: limit.pressure_gap,
        limit_determinant: limit.determinant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base() -> RiemannData {
        RiemannData::new(1.0, 1.0, 2.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn perturbation_at_zero() {
        let p = perturbation_states(1.4, 2.0, 0.0).unwrap();
        assert_eq!(p, PerturbationStates { p_delta: 2.0, delta_v: 0.0, rho_delta: 1.4 });
    }

    #[test]
    fn perturbation_example() {
        let p = perturbation_states(1.4, 2.0, 0.1).unwrap();
        assert!((p.p_delta - 2.1).abs() < 1e-15);
        // 0.1·√(2/(1.4·(8 + 0.3)))
        let want = 0.1 * (2.0f64 / 11.62).sqrt();
        assert!(rel(p.delta_v, want) < 1e-15);
        assert!((p.delta_v - 0.0414868).abs() < 1e-6);
        assert!(rel(p.rho_delta, 1.4 * 8.3 / 8.1) < 1e-15);
        assert!((p.rho_delta - 1.4345679).abs() < 1e-7);
        assert!(perturbation_states(1.4, 2.0, -0.1).is_err());
    }

    #[test]
    fn perturbation_is_smooth_and_monotone() {
        let dv = |x: f64| perturbation_states(1.4, 2.0, x).unwrap().delta_v;
        let mut prev = 0.0;
        for k in 1..=200 {
            let x = k as f64 / 200.0;
            let v = dv(x);
            assert!(v > prev);
            prev = v;
        }
        // derivative at 0 is √(2/(4 ρ_K p₊))
        let h = 1e-6;
        let fd = (dv(h) - dv(0.0)) / h;
        assert!((fd - (2.0f64 / (4.0 * 1.4 * 2.0)).sqrt()).abs() < 1e-6);
        let c = (dv(2.0 * h) - 2.0 * dv(h) + dv(0.0)) / (h * h);
        assert!(c.abs() < 10.0);
    }

    #[test]
    fn three_shock_is_a_rankine_hugoniot_discontinuity() {
        let gas = GasModel::default();
        for dp in [1e-6, 0.01, 0.1, 1.0, 5.0] {
            let p = perturbation_states(1.4, 2.0, dp).unwrap();
            let sigma = three_shock_speed(1.4, 2.0, dp);
            let mass = p.rho_delta * p.delta_v / (p.rho_delta - 1.4);
            assert!(rel(sigma, mass) < 1e-9, "dp={dp}");
            let left = PrimitiveState::new(p.rho_delta, p.delta_v, 0.0, p.p_delta).unwrap();
            let right = PrimitiveState::new(1.4, 0.0, 0.0, 2.0).unwrap();
            let j = jump_defect(sigma, &left, &right, &gas);
            assert!(j.normalized.iter().all(|x| x.abs() < 1e-14), "dp={dp} {:?}", j.normalized);
        }
        assert!(rel(three_shock_speed(1.4, 2.0, 0.0), (4.0f64 / 1.4).sqrt()) < 1e-15);
    }

    #[test]
    fn speed_limit_values() {
        assert!(rel(omega2_speed_squared_limit(&base()).unwrap(), 36.0 / 35.0) < 1e-15);
        let near = RiemannData::new(1.0, 1.0, 1.0 + 1e-9).unwrap();
        assert!(omega2_speed_squared_limit(&near).unwrap() < 1e-8);
        for rm in [0.1, 1.0, 10.0] {
            for pm in [0.1, 1.0, 10.0] {
                for x in [1.01, 2.0, 100.0] {
                    let d = RiemannData::new(rm, pm, pm * x).unwrap();
                    assert!(omega2_speed_squared_limit(&d).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn p2_limit_values_and_isentrope() {
        let l = p2_limit(&base()).unwrap();
        assert!(rel(l.p2, 1.96) < 1e-15);
        assert!((l.gap - 0.04).abs() < 1e-15);
        let gas = GasModel::default();
        for (rm, pm, pp) in [(1.0, 1.0, 2.0), (0.3, 2.0, 7.0), (5.0, 0.1, 0.2)] {
            let d = RiemannData::new(rm, pm, pp).unwrap();
            let rk = shock_constants(&d).unwrap().rho_k;
            let l = p2_limit(&d).unwrap();
            let a = entropy(&PrimitiveState::new(rm, 0.0, 0.0, pm).unwrap(), &gas);
            let b = entropy(&PrimitiveState::new(rk, 0.0, 0.0, l.p2).unwrap(), &gas);
            assert!((a - b).abs() < 1e-14);
            // closed form of the gap: p₋(x−1)³/(3+x)²
            let x = pp / pm;
            assert!(rel(l.gap, pm * (x - 1.0).powi(3) / (3.0 + x).powi(2)) < 1e-12);
        }
    }

    #[test]
    fn rank_condition_at_the_limit_point() {
        let v = rank_condition(&base(), 1.4, 1.96, 36.0 / 35.0).unwrap();
        assert!(rel(v.determinant, 0.080640) < 1e-12, "{}", v.determinant);
        assert!(v.full_rank);
        assert!(v.condition_rhs.abs() < 1e-15);
        assert!(rel(v.condition_gap, 36.0 / 35.0) < 1e-15);

        let v = rank_condition(&base(), 1.4, 1.96, 0.0).unwrap();
        assert_eq!(v.determinant, 0.0);
        assert!(!v.full_rank);
        let v = rank_condition(&base(), 1.5, 2.0, 1.0).unwrap();
        assert!(!v.full_rank);
    }

    #[test]
    fn closed_form_matches_cofactor_and_svd() {
        let c = cross_check_determinant(&base(), 1.4, 1.96, [(36.0f64 / 35.0).sqrt(), 0.0]).unwrap();
        assert!(c.relative_difference < 1e-12);
        assert_eq!(c.svd_rank, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let pm = rng.gen_range(0.2..5.0);
            let d = RiemannData::new(rng.gen_range(0.2..5.0), pm, pm * rng.gen_range(1.2..5.0)).unwrap();
            let rk = shock_constants(&d).unwrap().rho_k;
            let rho2 = rk * (1.0 + rng.gen_range(-0.01..0.01));
            let p2 = p2_isentropic(&d, rho2);
            let s = omega2_speed_squared_limit(&d).unwrap().sqrt() * (1.0 + rng.gen_range(-0.05..0.05));
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let c = cross_check_determinant(&d, rho2, p2, [s * th.cos(), s * th.sin()]).unwrap();
            assert!(c.relative_difference <= 1e-12, "{c:?}");
        }
    }

    #[test]
    fn rank_is_three_for_every_direction() {
        let sweep = angle_sweep(&base(), 1.4, 1.96, 36.0 / 35.0, 32).unwrap();
        assert!(sweep.iter().all(|s| s.rank == 3));
        assert!(sweep.iter().all(|s| rel(s.determinant, 0.080640) < 1e-12));
    }

    #[test]
    fn default_parameters_and_states() {
        let w = WildParameters::new(base(), 0.1).unwrap();
        let s = -5.0 / 14f64.sqrt();
        assert!(rel(w.slopes[0], 1.25 * s) < 1e-15);
        let st = skeleton_states(&w).unwrap();
        let dv = st.perturbation.delta_v;
        assert_eq!(st.omega_minus.v, (2.0f64 / 7.0).sqrt() - dv);
        assert_eq!(st.omega_delta.v, 0.0);
        assert!(rel(st.omega_delta.p, 2.1) < 1e-15);
        assert_eq!(st.omega_plus.v, -dv);
        let mut bad = w;
        bad.slopes.swap(0, 1);
        assert!(bad.validate().is_err());
        assert!(WildParameters::new(base(), -1.0).is_err());
    }

    #[test]
    fn assembled_overlap_and_states() {
        let gas = GasModel::default();
        let w = WildParameters::new(base(), 0.1).unwrap();
        let f = assemble_fans(&w, &gas).unwrap();
        let s = -5.0 / 14f64.sqrt();
        assert!(f.overlap[0] >= s && f.overlap[0] < f.overlap[1]);
        assert!(rel(f.overlap[1], 0.1 * (2.0f64 / 11.62).sqrt()) < 1e-15);
        let za = lift_primitive(&PrimitiveState::new(1.4, 0.0, 0.0, 2.0).unwrap(), &gas);
        assert_eq!(f.z_alpha, za);
        assert!(f.three_shock.normalized.iter().all(|x| x.abs() < 1e-14));
        // original frame: outer states equal the Riemann data
        let om = f.fan_beta.region("omega_minus").unwrap().state.unwrap();
        assert!((om.v - (2.0f64 / 7.0).sqrt()).abs() < 1e-15);
        let op = f.fan_beta.region("omega_plus").unwrap().state.unwrap();
        assert_eq!(op.v, 0.0);
        // the shifted frame moves the Ω₂|Ω_δ interface to x₁ = 0
        assert_eq!(f.fan_beta_shifted.region("omega2").unwrap().sigma_right, 0.0);

        let mut w0 = WildParameters::new(base(), 0.0).unwrap();
        w0.omega2_angle = 0.0;
        let f0 = assemble_fans(&w0, &gas).unwrap();
        let b = f0.z_beta.conservative().unwrap();
        // E = ½·1.4·(36/35) + 1.96 = 2.68
        assert!(rel(b.energy, 2.68) < 1e-14);

        let mut empty = w;
        empty.slopes = [-5.0, -4.0, -3.0, 2.0];
        assert!(matches!(assemble_fans(&empty, &gas), Err(Error::EmptyOverlap { .. })));
        assert!(matches!(assemble_fans(&w, &GasModel::new(2.0).unwrap()), Err(Error::UnsupportedGas(_))));
    }

    #[test]
    fn final_measure_layout() {
        let gas = GasModel::default();
        let w = WildParameters::new(base(), 0.1).unwrap();
        let f = assemble_fans(&w, &gas).unwrap();
        let nu = build_final_measure(&f.fan_alpha, &f.fan_beta, &gas).unwrap();
        nu.validate().unwrap();
        let far_left = &nu.regions[0];
        assert_eq!(far_left.atoms.len(), 1);
        assert_eq!(far_left.atoms[0].weight, 1.0);
        let mid = 0.5 * (f.overlap[0] + f.overlap[1]);
        let r = &nu.regions[nu.region_index(mid)];
        assert_eq!(r.status, RegionStatus::Cited);
        assert_eq!(r.atoms.len(), 2);
        assert!(r.atoms.iter().all(|a| a.weight == 0.5));
        assert!(rel(r.barycenter()[0], 0.5 * (1.4 + w.rho2)) < 1e-15);
        let last = nu.regions.last().unwrap();
        assert_eq!(last.atoms.len(), 1);
        assert_eq!(last.status, RegionStatus::Resolved);
        assert!(nu.regions.iter().any(|r| r.status == RegionStatus::Unresolved));

        let other = self_similar_shock(&RiemannData::new(1.0, 1.0, 3.0).unwrap()).unwrap();
        assert!(matches!(build_final_measure(&other, &f.fan_beta, &gas), Err(Error::InitialDataMismatch(_))));
    }

    #[test]
    fn entropy_differs_on_overlap() {
        let f = assemble_fans(&WildParameters::new(base(), 0.01).unwrap(), &GasModel::default()).unwrap();
        let e = entropy_gap(&f).unwrap();
        assert!(rel(e.difference, (2.0f64 / 1.96).ln()) < 1e-12);
    }

    #[test]
    fn margins_are_positive_on_a_grid() {
        for rm in [0.5, 1.0, 2.0] {
            for pm in [0.5, 1.0, 2.0] {
                for x in [1.5, 2.0, 4.0] {
                    let d = RiemannData::new(rm, pm, pm * x).unwrap();
                    let m = persistence_margins(&d).unwrap();
                    assert!(m.delta_star > 0.0 && m.eta_star > 0.0, "{d:?} {m:?}");
                }
            }
        }
        let m = persistence_margins(&base()).unwrap();
        // η* ends where p₂(ρ₂) = p₊, i.e. ρ₂ = ρ₋√(p₊/p₋)
        assert!((m.eta_star - (2f64.sqrt() - 1.4)).abs() < 1e-9, "{m:?}");
        // δ* ends where the Ω₂ speed can vanish: δ_v(δ*) = √S
        let dv = perturbation_states(1.4, 2.0, m.delta_star).unwrap().delta_v;
        assert!((dv - (36.0f64 / 35.0).sqrt()).abs() < 1e-6, "{m:?} dv={dv}");
    }
}

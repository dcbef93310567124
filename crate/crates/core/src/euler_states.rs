//! Ideal-gas state algebra for the 2-D full Euler system.
//!
//! Three representations of the same fluid state are used throughout:
//!
//! * [`PrimitiveState`]: density, velocity `(v, u)` and pressure,
//! * [`ConservativeState`]: density, momentum `m = ρ(v, u)` and total energy `E`,
//! * [`ExtendedState`]: the 8-vector `(ρ, m₁, m₂, U₁₁, U₁₂, E, r₁, r₂)` in which the
//!   system becomes a linear divergence-free condition, subject to
//!   `U = m⊗m/ρ − ½|m|²/ρ·I` and `r = (2E − ½|m|²/ρ)·m/ρ`.
//!
//! The gas is `p = ρθ`, `e = c_v θ`, so `E = ½ρ|v|² + c_v p`.
//!
//! Note on naming: the physical entropy is [`entropy`]; the speed of a
//! discontinuity is always called `shock_speed` (or `sigma` for generic
//! interfaces) so the two are never confused.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riemann_shock::FanSolution;

/// Density, pressure and internal energy must exceed this value.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Relative tolerance used when an 8-vector read from outside is checked
/// against the constraint.
pub const CONSTRAINT_TOL: f64 = 1e-12;

/// Ideal gas with dimensionless specific heat `c_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasModel {
    pub c_v: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        Self { c_v: 1.0 }
    }
}

impl GasModel {
    pub fn new(c_v: f64) -> Result<Self> {
        if !(c_v.is_finite() && c_v > 0.0) {
            return Err(Error::UnsupportedGas(format!("c_v must be positive, got {c_v}")));
        }
        Ok(Self { c_v })
    }

    /// Adiabatic exponent `1 + 1/c_v` (2 for the default gas).
    pub fn gamma(&self) -> f64 {
        1.0 + 1.0 / self.c_v
    }

    pub fn is_unit(&self) -> bool {
        self.c_v == 1.0
    }

    /// Rejects anything but `c_v = 1`, the only case for which the closed
    /// forms of the shock/wild-solution construction hold.
    pub fn require_unit(&self) -> Result<()> {
        if self.is_unit() {
            Ok(())
        } else {
            Err(Error::UnsupportedGas(format!("closed-form construction requires c_v = 1, got {}", self.c_v)))
        }
    }

    pub fn sound_speed(&self, s: &PrimitiveState) -> f64 {
        (self.gamma() * s.p / s.rho).sqrt()
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > POSITIVITY_FLOOR {
        Ok(())
    } else {
        Err(Error::NonPhysical(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPhysical(format!("{name} must be finite, got {x}")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrimitive {
    rho: f64,
    v: f64,
    u: f64,
    p: f64,
}

/// Density, velocity `(v, u)` and pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrimitive")]
pub struct PrimitiveState {
    pub rho: f64,
    pub v: f64,
    pub u: f64,
    pub p: f64,
}

impl TryFrom<RawPrimitive> for PrimitiveState {
    type Error = Error;
    fn try_from(r: RawPrimitive) -> Result<Self> {
        PrimitiveState::new(r.rho, r.v, r.u, r.p)
    }
}

impl PrimitiveState {
    pub fn new(rho: f64, v: f64, u: f64, p: f64) -> Result<Self> {
        positive("density", rho)?;
        positive("pressure", p)?;
        finite("velocity v", v)?;
        finite("velocity u", u)?;
        Ok(Self { rho, v, u, p })
    }

    /// Temperature `θ = p/ρ`.
    pub fn temperature(&self) -> f64 {
        self.p / self.rho
    }

    pub fn speed_squared(&self) -> f64 {
        self.v * self.v + self.u * self.u
    }

    pub fn to_conservative(&self, gas: &GasModel) -> ConservativeState {
        primitive_to_conservative(self, gas)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConservative {
    rho: f64,
    m1: f64,
    m2: f64,
    #[serde(rename = "E")]
    energy: f64,
}

/// Density, momentum and total energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConservative")]
pub struct ConservativeState {
    pub rho: f64,
    pub m1: f64,
    pub m2: f64,
    #[serde(rename = "E")]
    pub energy: f64,
}

impl TryFrom<RawConservative> for ConservativeState {
    type Error = Error;
    fn try_from(r: RawConservative) -> Result<Self> {
        ConservativeState::new(r.rho, r.m1, r.m2, r.energy)
    }
}

impl ConservativeState {
    /// Validates density and internal energy `E − ½|m|²/ρ`.
    pub fn new(rho: f64, m1: f64, m2: f64, energy: f64) -> Result<Self> {
        positive("density", rho)?;
        finite("momentum m1", m1)?;
        finite("momentum m2", m2)?;
        finite("energy", energy)?;
        let c = Self { rho, m1, m2, energy };
        let internal = c.internal_energy();
        if !(internal > POSITIVITY_FLOOR) {
            return Err(Error::NonPhysical(format!("internal energy E - |m|^2/(2 rho) = {internal} is not positive")));
        }
        Ok(c)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.rho, self.m1, self.m2, self.energy]
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * (self.m1 * self.m1 + self.m2 * self.m2) / self.rho
    }

    /// `ρe = E − ½|m|²/ρ`.
    pub fn internal_energy(&self) -> f64 {
        self.energy - self.kinetic_energy()
    }

    pub fn pressure(&self, gas: &GasModel) -> f64 {
        self.internal_energy() / gas.c_v
    }

    /// x₁-flux `(m₁, m₁²/ρ + p, m₁m₂/ρ, (E + p)m₁/ρ)`.
    pub fn flux_x1(&self, gas: &GasModel) -> [f64; 4] {
        let p = self.pressure(gas);
        let v = self.m1 / self.rho;
        [self.m1, self.m1 * v + p, self.m2 * v, (self.energy + p) * v]
    }

    pub fn to_primitive(&self, gas: &GasModel) -> Result<PrimitiveState> {
        conservative_to_primitive(self, gas)
    }
}

/// `(ρ, v, u, p) ↦ (ρ, ρv, ρu, ½ρ|v|² + c_v p)`.
pub fn primitive_to_conservative(s: &PrimitiveState, gas: &GasModel) -> ConservativeState {
    ConservativeState {
        rho: s.rho,
        m1: s.rho * s.v,
        m2: s.rho * s.u,
        energy: 0.5 * s.rho * s.speed_squared() + gas.c_v * s.p,
    }
}

/// Inverse of [`primitive_to_conservative`]; `p = (E − ½|m|²/ρ)/c_v`.
pub fn conservative_to_primitive(c: &ConservativeState, gas: &GasModel) -> Result<PrimitiveState> {
    positive("density", c.rho)?;
    let internal = c.internal_energy();
    if !(internal > POSITIVITY_FLOOR) {
        return Err(Error::NonPhysical(format!("internal energy E - |m|^2/(2 rho) = {internal} is not positive")));
    }
    PrimitiveState::new(c.rho, c.m1 / c.rho, c.m2 / c.rho, internal / gas.c_v)
}

/// Thermodynamic entropy `log(θ^{c_v}/ρ)` with `θ = p/ρ`.
pub fn entropy(s: &PrimitiveState, gas: &GasModel) -> f64 {
    gas.c_v * s.temperature().ln() - s.rho.ln()
}

/// Index of each component inside the 8-vector.
pub mod idx {
    pub const RHO: usize = 0;
    pub const M1: usize = 1;
    pub const M2: usize = 2;
    pub const U11: usize = 3;
    pub const U12: usize = 4;
    pub const E: usize = 5;
    pub const R1: usize = 6;
    pub const R2: usize = 7;
}

pub const EXTENDED_DIM: usize = 8;

/// The 8-vector `(ρ, m₁, m₂, U₁₁, U₁₂, E, r₁, r₂)`; `U₂₂ = −U₁₁` is implicit.
///
/// `constrained` is set only when `U` and `r` were produced by
/// [`lift_extended`] (or verified against it on input).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedState {
    pub z: [f64; EXTENDED_DIM],
    pub constrained: bool,
}

impl ExtendedState {
    /// An arbitrary 8-vector of the linear system, with no constraint attached.
    pub fn unconstrained(z: [f64; EXTENDED_DIM]) -> Self {
        Self { z, constrained: false }
    }

    pub fn rho(&self) -> f64 {
        self.z[idx::RHO]
    }

    pub fn energy(&self) -> f64 {
        self.z[idx::E]
    }

    pub fn u22(&self) -> f64 {
        -self.z[idx::U11]
    }

    pub fn conservative(&self) -> Result<ConservativeState> {
        ConservativeState::new(self.z[idx::RHO], self.z[idx::M1], self.z[idx::M2], self.z[idx::E])
    }

    pub fn sub(&self, other: &ExtendedState) -> [f64; EXTENDED_DIM] {
        let mut out = [0.0; EXTENDED_DIM];
        for (o, (a, b)) in out.iter_mut().zip(self.z.iter().zip(&other.z)) {
            *o = a - b;
        }
        out
    }

    /// Re-derives the flag: if `U`, `r` match the constraint evaluated at
    /// `(ρ, m, E)` to [`CONSTRAINT_TOL`] relative, the state is replaced by
    /// the exact lift and flagged.
    pub fn recheck_constraint(z: [f64; EXTENDED_DIM]) -> Self {
        let candidate = ConservativeState::new(z[idx::RHO], z[idx::M1], z[idx::M2], z[idx::E]);
        if let Ok(c) = candidate {
            let lifted = lift_extended(&c);
            let scale = z.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
            let ok = lifted.z.iter().zip(&z).all(|(a, b)| (a - b).abs() <= CONSTRAINT_TOL * scale);
            if ok {
                return lifted;
            }
        }
        Self::unconstrained(z)
    }

    /// Residual of the constraint, max-norm over the four `U`, `r` slots.
    pub fn constraint_defect(&self) -> f64 {
        match self.conservative() {
            Ok(c) => {
                let l = lift_extended(&c);
                [idx::U11, idx::U12, idx::R1, idx::R2].iter().map(|&k| (l.z[k] - self.z[k]).abs()).fold(0.0, f64::max)
            }
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExtended {
    z: [f64; EXTENDED_DIM],
}

impl Serialize for ExtendedState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawExtended { z: self.z }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExtendedState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawExtended::deserialize(d)?;
        if raw.z.iter().any(|x| !x.is_finite()) {
            return Err(serde::de::Error::custom("extended state entries must be finite"));
        }
        Ok(ExtendedState::recheck_constraint(raw.z))
    }
}

/// Lifts `(ρ, m, E)` to the constrained 8-vector.
pub fn lift_extended(c: &ConservativeState) -> ExtendedState {
    let rho = c.rho;
    let (m1, m2) = (c.m1, c.m2);
    let half_m2_over_rho = 0.5 * (m1 * m1 + m2 * m2) / rho;
    let u11 = (m1 * m1 - m2 * m2) / (2.0 * rho);
    let u12 = m1 * m2 / rho;
    let enthalpy_like = 2.0 * c.energy - half_m2_over_rho;
    ExtendedState {
        z: [rho, m1, m2, u11, u12, c.energy, enthalpy_like * m1 / rho, enthalpy_like * m2 / rho],
        constrained: true,
    }
}

/// Lifts a primitive state through its conservative form.
pub fn lift_primitive(s: &PrimitiveState, gas: &GasModel) -> ExtendedState {
    lift_extended(&primitive_to_conservative(s, gas))
}

/// Frame shift by `dv` along `e₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalileanShift {
    pub dv: f64,
}

impl GalileanShift {
    pub fn new(dv: f64) -> Self {
        Self { dv }
    }

    pub fn inverse(&self) -> Self {
        Self { dv: -self.dv }
    }

    pub fn apply_state(&self, s: &PrimitiveState) -> PrimitiveState {
        PrimitiveState { v: s.v - self.dv, ..*s }
    }

    /// Wedge slope in the new frame; `±∞` is fixed.
    pub fn apply_slope(&self, sigma: f64) -> f64 {
        if sigma.is_finite() {
            sigma - self.dv
        } else {
            sigma
        }
    }
}

/// `(ρ, (v, u), p)(t, x) ↦ (ρ, (v − dv, u), p)(t, x + dv·t·e₁)`.
///
/// Every wedge slope `σ` becomes `σ − dv`, every state velocity `v` becomes
/// `v − dv`.
pub fn galilean_transform(sol: &FanSolution, shift: GalileanShift) -> FanSolution {
    sol.map_frame(|s| shift.apply_slope(s), |st| shift.apply_state(st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann_shock::{rh_residual, self_similar_shock, RiemannData};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> GasModel {
        GasModel::default()
    }

    #[test]
    fn rest_state_energy_equals_pressure() {
        let s = PrimitiveState::new(1.0, 0.0, 0.0, 1.0).unwrap();
        let c = primitive_to_conservative(&s, &unit());
        assert_eq!(c.as_array(), [1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn left_shock_state_energy() {
        let v = (2.0_f64 / 7.0).sqrt();
        let s = PrimitiveState::new(1.0, v, 0.0, 1.0).unwrap();
        let c = primitive_to_conservative(&s, &unit());
        assert_eq!(c.rho, 1.0);
        assert!((c.m1 - v).abs() < 1e-16);
        assert_eq!(c.m2, 0.0);
        assert!((c.energy - 8.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn conservative_to_primitive_examples() {
        let p = conservative_to_primitive(&ConservativeState::new(1.0, 0.0, 0.0, 1.0).unwrap(), &unit()).unwrap();
        assert_eq!((p.rho, p.v, p.u, p.p), (1.0, 0.0, 0.0, 1.0));
        let p = conservative_to_primitive(&ConservativeState::new(1.4, 0.0, 0.0, 2.0).unwrap(), &unit()).unwrap();
        assert_eq!((p.rho, p.v, p.u, p.p), (1.4, 0.0, 0.0, 2.0));
    }

    #[test]
    fn negative_internal_energy_is_rejected() {
        let err = ConservativeState::new(1.0, 1.0, 0.0, 0.4).unwrap_err();
        assert!(matches!(err, Error::NonPhysical(_)));
        let raw = ConservativeState { rho: 1.0, m1: 1.0, m2: 0.0, energy: 0.4 };
        assert!(matches!(conservative_to_primitive(&raw, &unit()), Err(Error::NonPhysical(_))));
    }

    #[test]
    fn vacuum_is_rejected_not_clamped() {
        assert!(PrimitiveState::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(PrimitiveState::new(1.0, 0.0, 0.0, 1e-301).is_err());
        assert!(PrimitiveState::new(1e-299, 0.0, 0.0, 1.0).is_ok());
        assert!(GasModel::new(0.0).is_err());
    }

    #[test]
    fn round_trip_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let gas = GasModel::new(rng.gen_range(0.5..3.0)).unwrap();
            let s = PrimitiveState::new(
                10f64.powf(rng.gen_range(-2.0..2.0)),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                10f64.powf(rng.gen_range(-2.0..2.0)),
            )
            .unwrap();
            let back = conservative_to_primitive(&primitive_to_conservative(&s, &gas), &gas).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
            assert!(rel(back.rho, s.rho) <= 1e-13);
            // Pressure is recovered from E - kinetic; its error scales with E.
            let e = primitive_to_conservative(&s, &gas).energy;
            assert!(gas.c_v * (back.p - s.p).abs() <= 1e-13 * e, "{} vs {}", back.p, s.p);
            assert!((back.v - s.v).abs() <= 1e-13 * s.v.abs().max(1.0));
            assert!((back.u - s.u).abs() <= 1e-13 * s.u.abs().max(1.0));
        }
    }

    #[test]
    fn lift_matches_constant_state_example() {
        let z = lift_extended(&ConservativeState::new(1.0, 1.0, 0.0, 1.5).unwrap());
        assert_eq!(z.z, [1.0, 1.0, 0.0, 0.5, 0.0, 1.5, 2.5, 0.0]);
        assert!(z.constrained);

        let g = 2.0;
        let z = lift_extended(&ConservativeState::new(g, 1.0, 0.0, 3.0 / (2.0 * g)).unwrap());
        assert_eq!(z.z, [2.0, 1.0, 0.0, 0.25, 0.0, 0.75, 0.625, 0.0]);
    }

    #[test]
    fn lift_at_rest_has_zero_flux_slots() {
        let z = lift_extended(&ConservativeState::new(3.0, 0.0, 0.0, 2.0).unwrap());
        assert_eq!(&z.z[3..5], &[0.0, 0.0]);
        assert_eq!(&z.z[6..8], &[0.0, 0.0]);
        assert_eq!(z.z[idx::U11] + z.u22(), 0.0);
    }

    #[test]
    fn entropy_examples() {
        let s = PrimitiveState::new(1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(entropy(&s, &unit()), 0.0);
        let s = PrimitiveState::new(1.4, 0.0, 0.0, 2.0).unwrap();
        assert!((entropy(&s, &unit()) - (2.0_f64 / 1.96).ln()).abs() < 1e-15);
        assert!((entropy(&s, &unit()) - 0.020202707317519466).abs() < 1e-12);
        let k = 0.7;
        let e0 = entropy(&PrimitiveState::new(1.0, 0.0, 0.0, k).unwrap(), &unit());
        for rho in [0.1, 0.5, 2.0, 9.0] {
            let s = PrimitiveState::new(rho, 0.3, 0.0, k * rho * rho).unwrap();
            assert!((entropy(&s, &unit()) - e0).abs() < 1e-13);
        }
    }

    #[test]
    fn galilean_identity_and_inverse() {
        let fan = self_similar_shock(&RiemannData::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        assert_eq!(galilean_transform(&fan, GalileanShift::new(0.0)), fan);
        let dv = 0.731;
        let back = galilean_transform(&galilean_transform(&fan, GalileanShift::new(dv)), GalileanShift::new(-dv));
        for (a, b) in back.wedges.iter().zip(&fan.wedges) {
            assert!((a.state.v - b.state.v).abs() <= 1e-15);
            assert_eq!(a.state.rho, b.state.rho);
            if a.sigma_left.is_finite() {
                assert!((a.sigma_left - b.sigma_left).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn galilean_shift_keeps_shock_exact() {
        let fan = self_similar_shock(&RiemannData::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        let moved = galilean_transform(&fan, GalileanShift::new(-3.2));
        for r in rh_residual(&moved, &unit()) {
            assert!(r.residual.iter().all(|x| x.abs() <= 1e-12), "{:?}", r.residual);
        }
        for (a, b) in moved.wedges.iter().zip(&fan.wedges) {
            assert_eq!((a.state.rho, a.state.u, a.state.p), (b.state.rho, b.state.u, b.state.p));
        }
    }

    #[test]
    fn extended_json_reflags_constraint() {
        let z = lift_extended(&ConservativeState::new(1.0, 1.0, 0.0, 1.5).unwrap());
        let s = serde_json::to_string(&z).unwrap();
        assert_eq!(s, r#"{"z":[1.0,1.0,0.0,0.5,0.0,1.5,2.5,0.0]}"#);
        let back: ExtendedState = serde_json::from_str(&s).unwrap();
        assert!(back.constrained);
        let free: ExtendedState = serde_json::from_str(r#"{"z":[1,0,0,0,0,1,3,0]}"#).unwrap();
        assert!(!free.constrained);
    }

    #[test]
    fn primitive_json_field_names() {
        let s = PrimitiveState::new(1.0, 0.5, 0.0, 2.0).unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"rho":1.0,"v":0.5,"u":0.0,"p":2.0}"#);
        let c: ConservativeState = serde_json::from_str(r#"{"rho":1,"m1":0,"m2":0,"E":2}"#).unwrap();
        assert_eq!(c.energy, 2.0);
        assert!(serde_json::from_str::<PrimitiveState>(r#"{"rho":-1,"v":0,"u":0,"p":1}"#).is_err());
        assert!(serde_json::from_str::<PrimitiveState>(r#"{"rho":1,"v":0,"u":0,"p":1,"T":3}"#).is_err());
    }
}

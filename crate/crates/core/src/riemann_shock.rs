//! The self-similar 1-shock and Rankine–Hugoniot checks for piecewise
//! constant fans.
//!
//! A fan is a sequence of wedges `{σ_left < x₁/t < σ_right}` in the upper
//! half plane `t > 0`, each carrying one constant state. It is a weak solution
//! on `t > 0` iff every interface satisfies `σ[q] = [F(q)]`, where `q = (ρ, m, E)`
//! and `F` is the x₁-flux. Interfaces are lines `x₁ = σt`, whose normal has no
//! x₂ component, so only the x₁-flux enters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler_states::{primitive_to_conservative, GasModel, PrimitiveState};

/// Data of the shock problem: left density and the two pressures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiemannData {
    pub rho_minus: f64,
    pub p_minus: f64,
    pub p_plus: f64,
}

impl RiemannData {
    pub fn new(rho_minus: f64, p_minus: f64, p_plus: f64) -> Result<Self> {
        let d = Self { rho_minus, p_minus, p_plus };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.rho_minus, self.p_minus, self.p_plus].iter().all(|x| x.is_finite());
        if !all_finite || self.rho_minus <= 0.0 || self.p_minus <= 0.0 {
            return Err(Error::InvalidData(format!("rho_minus and p_minus must be positive and finite, got {self:?}")));
        }
        if !(self.p_plus > self.p_minus) {
            return Err(Error::InvalidData(format!(
                "p_plus must exceed p_minus, got p_minus = {}, p_plus = {}",
                self.p_minus, self.p_plus
            )));
        }
        Ok(())
    }
}

/// Closed-form constants of the 1-shock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockConstants {
    pub rho_k: f64,
    pub v_k: f64,
    pub shock_speed: f64,
}

/// `ρ_K = ρ₋(p₋ + 3p₊)/(3p₋ + p₊)`, `v_K = √2 (p₊ − p₋)/(√ρ₋ √(p₋ + 3p₊))`,
/// `shock_speed = −(p₊ + 3p₋)/√(2ρ₋(p₋ + 3p₊))`.
pub fn shock_constants(d: &RiemannData) -> Result<ShockConstants> {
    d.validate()?;
    let (rm, pm, pp) = (d.rho_minus, d.p_minus, d.p_plus);
    let rho_k = rm * (pm + 3.0 * pp) / (3.0 * pm + pp);
    let v_k = std::f64::consts::SQRT_2 / rm.sqrt() * (pp - pm) / (pm + 3.0 * pp).sqrt();
    let shock_speed = -(pp + 3.0 * pm) / (2.0 * rm * (pm + 3.0 * pp)).sqrt();
    Ok(ShockConstants { rho_k, v_k, shock_speed })
}

pub(crate) mod slope_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_str("inf")
        } else if *x == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Slope {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Slope::deserialize(d)? {
            Slope::Num(x) if x.is_finite() => Ok(x),
            Slope::Num(x) => Err(de::Error::custom(format!("non-finite slope {x}"))),
            Slope::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("expected \"inf\" or \"-inf\", got {other:?}"))),
            },
        }
    }
}

/// One wedge `{sigma_left < x₁/t < sigma_right}` carrying a constant state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wedge {
    #[serde(with = "slope_serde")]
    pub sigma_left: f64,
    #[serde(with = "slope_serde")]
    pub sigma_right: f64,
    pub state: PrimitiveState,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFan {
    wedges: Vec<Wedge>,
    #[serde(default)]
    label: String,
}

/// Piecewise constant self-similar solution on `t > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFan")]
pub struct FanSolution {
    pub wedges: Vec<Wedge>,
    pub label: String,
}

impl TryFrom<RawFan> for FanSolution {
    type Error = Error;
    fn try_from(r: RawFan) -> Result<Self> {
        FanSolution::new(r.wedges, r.label)
    }
}

impl FanSolution {
    pub fn new(wedges: Vec<Wedge>, label: impl Into<String>) -> Result<Self> {
        let fan = Self { wedges, label: label.into() };
        fan.validate()?;
        Ok(fan)
    }

    /// Builds the wedges from interior slopes and one state per wedge.
    pub fn from_slopes(slopes: &[f64], states: &[PrimitiveState], label: impl Into<String>) -> Result<Self> {
        if states.len() != slopes.len() + 1 {
            return Err(Error::InvalidFan(format!(
                "{} slopes need {} states, got {}",
                slopes.len(),
                slopes.len() + 1,
                states.len()
            )));
        }
        let mut edges = Vec::with_capacity(slopes.len() + 2);
        edges.push(f64::NEG_INFINITY);
        edges.extend_from_slice(slopes);
        edges.push(f64::INFINITY);
        let wedges = states
            .iter()
            .enumerate()
            .map(|(k, s)| Wedge { sigma_left: edges[k], sigma_right: edges[k + 1], state: *s })
            .collect();
        Self::new(wedges, label)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.wedges;
        if w.is_empty() {
            return Err(Error::InvalidFan("a fan needs at least one wedge".into()));
        }
        if w[0].sigma_left != f64::NEG_INFINITY || w[w.len() - 1].sigma_right != f64::INFINITY {
            return Err(Error::InvalidFan("wedges must cover (-inf, inf)".into()));
        }
        for (k, wedge) in w.iter().enumerate() {
            if !(wedge.sigma_left < wedge.sigma_right) {
                return Err(Error::InvalidFan(format!("wedge {k} has non-increasing slopes")));
            }
            if k + 1 < w.len() && wedge.sigma_right != w[k + 1].sigma_left {
                return Err(Error::InvalidFan(format!("wedges {k} and {} are not contiguous", k + 1)));
            }
            PrimitiveState::new(wedge.state.rho, wedge.state.v, wedge.state.u, wedge.state.p)?;
        }
        Ok(())
    }

    /// Interior interface slopes, increasing.
    pub fn interfaces(&self) -> Vec<f64> {
        self.wedges[..self.wedges.len() - 1].iter().map(|w| w.sigma_right).collect()
    }

    /// State at similarity coordinate `x₁/t`; on an interface the left state wins.
    pub fn state_at(&self, xi: f64) -> &PrimitiveState {
        for w in &self.wedges {
            if xi <= w.sigma_right {
                return &w.state;
            }
        }
        &self.wedges[self.wedges.len() - 1].state
    }

    /// State at a point `(t, x₁)` with `t > 0`.
    pub fn state_at_point(&self, t: f64, x1: f64) -> &PrimitiveState {
        self.state_at(x1 / t)
    }

    /// The `t → 0⁺` trace: left state for `x₁ < 0`, right state for `x₁ > 0`.
    pub fn initial_trace(&self) -> (PrimitiveState, PrimitiveState) {
        (self.wedges[0].state, self.wedges[self.wedges.len() - 1].state)
    }

    pub(crate) fn map_frame(
        &self,
        slope: impl Fn(f64) -> f64,
        state: impl Fn(&PrimitiveState) -> PrimitiveState,
    ) -> Self {
        Self {
            wedges: self
                .wedges
                .iter()
                .map(|w| Wedge {
                    sigma_left: slope(w.sigma_left),
                    sigma_right: slope(w.sigma_right),
                    state: state(&w.state),
                })
                .collect(),
            label: self.label.clone(),
        }
    }

    /// Reflection `x₁ ↦ −x₁`: wedge order and slopes flip, `v ↦ −v`.
    pub fn mirrored(&self) -> Self {
        let wedges = self
            .wedges
            .iter()
            .rev()
            .map(|w| Wedge {
                sigma_left: -w.sigma_right,
                sigma_right: -w.sigma_left,
                state: PrimitiveState { v: -w.state.v, ..w.state },
            })
            .collect();
        Self { wedges, label: format!("{} (mirrored)", self.label) }
    }
}

/// Rankine–Hugoniot defect of one interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceJumpReport {
    pub sigma: f64,
    /// `σ[q] − [F(q)]` in the order (mass, momentum₁, momentum₂, energy).
    pub residual: [f64; 4],
    pub normalized: [f64; 4],
}

/// `σ[q] − [F(q)]` with `[·] = right − left`.
pub fn jump_defect(sigma: f64, left: &PrimitiveState, right: &PrimitiveState, gas: &GasModel) -> InterfaceJumpReport {
    let ql = primitive_to_conservative(left, gas);
    let qr = primitive_to_conservative(right, gas);
    let (al, ar) = (ql.as_array(), qr.as_array());
    let (fl, fr) = (ql.flux_x1(gas), qr.flux_x1(gas));
    let mut residual = [0.0; 4];
    let mut normalized = [0.0; 4];
    let norm = |v: &[f64; 4]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = 1.0 + norm(&fl).max(norm(&fr)).max(sigma.abs() * norm(&al).max(norm(&ar)));
    for k in 0..4 {
        residual[k] = sigma * (ar[k] - al[k]) - (fr[k] - fl[k]);
        normalized[k] = residual[k] / scale;
    }
    InterfaceJumpReport { sigma, residual, normalized }
}

/// One report per interior interface of `fan`.
pub fn rh_residual(fan: &FanSolution, gas: &GasModel) -> Vec<InterfaceJumpReport> {
    fan.wedges.windows(2).map(|w| jump_defect(w[0].sigma_right, &w[0].state, &w[1].state, gas)).collect()
}

pub fn max_abs_residual(reports: &[InterfaceJumpReport]) -> f64 {
    reports.iter().flat_map(|r| r.residual.iter()).fold(0.0, |m, x| m.max(x.abs()))
}

/// The 1-shock fan: `(ρ₋, (v_K, 0), p₋)` for `x₁ < st`, `(ρ_K, (0,0), p₊)` for `x₁ > st`.
pub fn self_similar_shock(d: &RiemannData) -> Result<FanSolution> {
    let k = shock_constants(d)?;
    let left = PrimitiveState::new(d.rho_minus, k.v_k, 0.0, d.p_minus)?;
    let right = PrimitiveState::new(k.rho_k, 0.0, 0.0, d.p_plus)?;
    FanSolution::from_slopes(&[k.shock_speed], &[left, right], "self-similar 1-shock")
}

/// Classification of one interface by the Lax characteristic inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaxVerdict {
    /// `v_l − c_l > σ > v_r − c_r`.
    OneShock,
    /// `v_l + c_l > σ > v_r + c_r`.
    ThreeShock,
    NotAShock,
    /// No jump across the interface; skipped.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaxReport {
    pub sigma: f64,
    pub verdict: LaxVerdict,
    pub left_char: f64,
    pub right_char: f64,
}

/// Lax inequalities for every interface, with sound speed `√(γp/ρ)`.
pub fn lax_admissibility(fan: &FanSolution, gas: &GasModel) -> Vec<LaxReport> {
    fan.wedges
        .windows(2)
        .map(|w| {
            let (l, r, sigma) = (&w[0].state, &w[1].state, w[0].sigma_right);
            let (cl, cr) = (gas.sound_speed(l), gas.sound_speed(r));
            if l == r {
                return LaxReport { sigma, verdict: LaxVerdict::Degenerate, left_char: l.v - cl, right_char: r.v - cr };
            }
            if l.v - cl > sigma && sigma > r.v - cr {
                LaxReport { sigma, verdict: LaxVerdict::OneShock, left_char: l.v - cl, right_char: r.v - cr }
            } else if l.v + cl > sigma && sigma > r.v + cr {
                LaxReport { sigma, verdict: LaxVerdict::ThreeShock, left_char: l.v + cl, right_char: r.v + cr }
            } else {
                LaxReport { sigma, verdict: LaxVerdict::NotAShock, left_char: l.v - cl, right_char: r.v - cr }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> GasModel {
        GasModel::default()
    }

    #[test]
    fn constants_for_reference_data() {
        let k = shock_constants(&RiemannData::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        assert!((k.rho_k - 1.4).abs() <= 1.4 * 1e-15);
        assert!((k.v_k - (2.0_f64 / 7.0).sqrt()).abs() <= 1e-15);
        assert!((k.shock_speed + 5.0 / 14f64.sqrt()).abs() <= 1.4 * 1e-15);
        assert!((k.v_k - 0.5345225).abs() < 1e-7);
        assert!((k.shock_speed + 1.3363062).abs() < 1e-7);
    }

    #[test]
    fn constants_second_example_and_weak_limit() {
        let k = shock_constants(&RiemannData::new(2.0, 1.0, 4.0).unwrap()).unwrap();
        assert!((k.rho_k - 26.0 / 7.0).abs() < 1e-14);
        let k = shock_constants(&RiemannData::new(1.3, 1.0, 1.0 + 1e-9).unwrap()).unwrap();
        assert!(k.v_k < 1e-9 && k.v_k > 0.0);
        assert!((k.rho_k - 1.3).abs() < 1e-8);
    }

    #[test]
    fn invalid_pressures_rejected() {
        assert!(matches!(RiemannData::new(1.0, 2.0, 2.0), Err(Error::InvalidData(_))));
        assert!(matches!(RiemannData::new(1.0, 2.0, 1.0), Err(Error::InvalidData(_))));
        assert!(RiemannData::new(0.0, 1.0, 2.0).is_err());
        let bad = RiemannData { rho_minus: 1.0, p_minus: 3.0, p_plus: 2.0 };
        assert!(self_similar_shock(&bad).is_err());
    }

    #[test]
    fn fan_layout() {
        let d = RiemannData::new(1.0, 1.0, 2.0).unwrap();
        let fan = self_similar_shock(&d).unwrap();
        assert_eq!(fan.wedges.len(), 2);
        let k = shock_constants(&d).unwrap();
        assert_eq!(fan.interfaces(), vec![k.shock_speed]);
        let l = fan.wedges[0].state;
        assert_eq!((l.rho, l.v, l.u, l.p), (1.0, k.v_k, 0.0, 1.0));
        let r = fan.wedges[1].state;
        assert_eq!((r.rho, r.v, r.u, r.p), (k.rho_k, 0.0, 0.0, 2.0));
    }

    #[test]
    fn reference_shock_residual_vanishes() {
        let fan = self_similar_shock(&RiemannData::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        let r = rh_residual(&fan, &unit());
        assert_eq!(r.len(), 1);
        assert!(r[0].residual.iter().all(|x| x.abs() < 1e-15), "{:?}", r[0].residual);
    }

    #[test]
    fn corrupted_speed_gives_affine_residual() {
        let fan = self_similar_shock(&RiemannData::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        let s = fan.interfaces()[0];
        let mut bad = fan.clone();
        bad.wedges[0].sigma_right = s + 0.1;
        bad.wedges[1].sigma_left = s + 0.1;
        let r = rh_residual(&bad, &unit());
        assert!((r[0].residual[0] - 0.04).abs() < 1e-15);
        // residual(σ+δ) − residual(σ) = δ[q]
        let good = rh_residual(&fan, &unit())[0];
        let ql = primitive_to_conservative(&fan.wedges[0].state, &unit()).as_array();
        let qr = primitive_to_conservative(&fan.wedges[1].state, &unit()).as_array();
        for k in 0..4 {
            let want = 0.1 * (qr[k] - ql[k]);
            let got = r[0].residual[k] - good.residual[k];
            assert!((got - want).abs() <= 4.0 * f64::EPSILON * want.abs().max(1.0));
        }
    }

    #[test]
    fn constant_fan_has_no_interfaces() {
        let s = PrimitiveState::new(1.0, 0.2, 0.1, 3.0).unwrap();
        let fan = FanSolution::from_slopes(&[], &[s], "const").unwrap();
        assert!(rh_residual(&fan, &unit()).is_empty());
        assert!(lax_admissibility(&fan, &unit()).is_empty());
    }

    #[test]
    fn lax_verdicts() {
        let fan = self_similar_shock(&RiemannData::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        let v = lax_admissibility(&fan, &unit());
        assert_eq!(v[0].verdict, LaxVerdict::OneShock);
        assert!((v[0].left_char - (0.5345224838248488 - 2f64.sqrt())).abs() < 1e-12);
        assert!((v[0].right_char + (4.0_f64 / 1.4).sqrt()).abs() < 1e-12);

        let mirrored = fan.mirrored();
        let m = lax_admissibility(&mirrored, &unit());
        assert_ne!(m[0].verdict, LaxVerdict::OneShock);
        assert_eq!(m[0].verdict, LaxVerdict::ThreeShock);

        let s = PrimitiveState::new(1.0, 0.0, 0.0, 1.0).unwrap();
        let flat = FanSolution::from_slopes(&[0.3], &[s, s], "flat").unwrap();
        assert_eq!(lax_admissibility(&flat, &unit())[0].verdict, LaxVerdict::Degenerate);
    }

    #[test]
    fn fan_json_encodes_infinities() {
        let fan = self_similar_shock(&RiemannData::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        let s = serde_json::to_string(&fan).unwrap();
        assert!(s.contains(r#""sigma_left":"-inf""#));
        assert!(s.contains(r#""sigma_right":"inf""#));
        let back: FanSolution = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fan);
        let gap = s.replacen(r#""sigma_right":"inf""#, r#""sigma_right":5.0"#, 1);
        assert!(serde_json::from_str::<FanSolution>(&gap).is_err());
    }
}

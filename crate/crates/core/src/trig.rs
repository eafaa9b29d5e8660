//! Exact algebra of finite plane-wave sums on the torus `[0, 2π)³`.
//!
//! A field is a finite collection of modes `C(t) · trig(k·x)` with integer
//! wave vector `k`, parity cos/sin and a vector of [`ExpPoly`] time
//! coefficients. Heat flow, Leray projection, advection products and the
//! Duhamel integral are all closed operations on this class, so first Picard
//! iterates of plane-wave data can be evaluated with no discretization error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expoly::{ExpPoly, UNDERFLOW_EXP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Cos,
    Sin,
}

pub type WaveVec = [i64; 3];

/// |k|² as f64 (exact for every representable integer vector; saturates at
/// f64::MAX, never infinite).
pub fn norm_sq(k: WaveVec) -> f64 {
    let s = k[0] as i128 * k[0] as i128 + k[1] as i128 * k[1] as i128 + k[2] as i128 * k[2] as i128;
    let v = s as f64;
    if v > f64::MAX {
        f64::MAX
    } else {
        v
    }
}

pub fn is_zero_vec(k: WaveVec) -> bool {
    k == [0, 0, 0]
}

fn neg(k: WaveVec) -> WaveVec {
    [-k[0], -k[1], -k[2]]
}

fn add_vec(a: WaveVec, b: WaveVec) -> WaveVec {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub_vec(a: WaveVec, b: WaveVec) -> WaveVec {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Canonical orientation: the first nonzero component of k is positive.
/// Returns the canonical vector and the sign that a sin amplitude picks up.
fn canonical(k: WaveVec) -> (WaveVec, f64) {
    for &c in &k {
        if c > 0 {
            return (k, 1.0);
        }
        if c < 0 {
            return (neg(k), -1.0);
        }
    }
    (k, 1.0)
}

/// A single scalar wave `coeff(t) · parity(k·x)`, the operand of
/// [`mode_product`].
#[derive(Debug, Clone)]
pub struct ScalarWave {
    pub k: WaveVec,
    pub parity: Parity,
    pub coeff: ExpPoly,
}

/// Result of a product-to-sum expansion: at most two waves plus a mean part
/// (the zero-frequency cos residue, reported separately).
#[derive(Debug, Clone, Default)]
pub struct ProductTerms {
    pub waves: Vec<ScalarWave>,
    pub mean: ExpPoly,
}

/// Exact product-to-sum expansion of two scalar waves:
/// `cos A cos B = ½cos(A−B) + ½cos(A+B)`, etc. Output coefficients are the
/// product of the input coefficients; zero-frequency sin terms vanish and
/// zero-frequency cos terms go to `mean`.
pub fn mode_product(f: &ScalarWave, g: &ScalarWave) -> ProductTerms {
    let coeff = f.coeff.mul(&g.coeff);
    let half = coeff.scale(0.5);
    let diff = sub_vec(f.k, g.k);
    let sum = add_vec(f.k, g.k);
    // (parity, sign on diff term, sign on sum term, output parity)
    let (s_diff, s_sum, parity) = match (f.parity, g.parity) {
        (Parity::Cos, Parity::Cos) => (1.0, 1.0, Parity::Cos),
        (Parity::Sin, Parity::Sin) => (1.0, -1.0, Parity::Cos),
        // sin A cos B = ½ sin(A−B) + ½ sin(A+B)
        (Parity::Sin, Parity::Cos) => (1.0, 1.0, Parity::Sin),
        // cos A sin B = ½ sin(A+B) − ½ sin(A−B)
        (Parity::Cos, Parity::Sin) => (-1.0, 1.0, Parity::Sin),
    };
    let mut out = ProductTerms::default();
    for (k, sign) in [(diff, s_diff), (sum, s_sum)] {
        if is_zero_vec(k) {
            match parity {
                Parity::Cos => out.mean = out.mean.add(&half.scale(sign)),
                Parity::Sin => {} // sin(0) = 0
            }
            continue;
        }
        let (kc, flip) = canonical(k);
        let sign = match parity {
            Parity::Cos => sign,
            Parity::Sin => sign * flip,
        };
        out.waves.push(ScalarWave {
            k: kc,
            parity,
            coeff: half.scale(sign),
        });
    }
    out
}

/// One mode in the construction interface and in serialized documents:
/// amplitude direction `a` times a scalar time coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrigMode {
    pub k: WaveVec,
    pub parity: Parity,
    pub a: [f64; 3],
    pub coeff: ExpPoly,
}

#[derive(Debug, Clone, Copy)]
pub struct FieldConfig {
    /// Terms below `prune_rel · (largest coefficient in the field)` are dropped.
    pub prune_rel: f64,
    /// Hard cap on stored modes; exceeding it is an error, never truncation.
    pub mode_cap: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            prune_rel: 1e-15,
            mode_cap: 200_000,
        }
    }
}

type ModeKey = (WaveVec, Parity);
type VecCoeff = [ExpPoly; 3];

/// A finite plane-wave sum with vector [`ExpPoly`] coefficients, at most one
/// entry per canonical `(k, parity)` key. Mean-zero by construction: k = 0
/// cannot be stored.
#[derive(Debug, Clone, Default)]
pub struct ModeField {
    modes: BTreeMap<ModeKey, VecCoeff>,
    divergence_free: bool,
    config: FieldConfig,
}

impl ModeField {
    pub fn new() -> Self {
        Self::with_config(FieldConfig::default())
    }

    pub fn with_config(config: FieldConfig) -> Self {
        ModeField {
            modes: BTreeMap::new(),
            divergence_free: false,
            config,
        }
    }

    pub fn from_modes(
        modes: impl IntoIterator<Item = TrigMode>,
        divergence_free: bool,
    ) -> Result<Self> {
        let mut f = ModeField::new();
        for m in modes {
            f.insert_mode(m.k, m.parity, m.a, &m.coeff)?;
        }
        f.divergence_free = divergence_free;
        Ok(f)
    }

    pub fn config(&self) -> FieldConfig {
        self.config
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn set_divergence_free(&mut self, claim: bool) {
        self.divergence_free = claim;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModeKey, &VecCoeff)> {
        self.modes.iter()
    }

    /// Accumulate `a ⊗ coeff` into the mode at the canonical `(k, parity)` key.
    pub fn insert_mode(
        &mut self,
        k: WaveVec,
        parity: Parity,
        a: [f64; 3],
        coeff: &ExpPoly,
    ) -> Result<()> {
        if is_zero_vec(k) {
            return Err(Error::ZeroFrequencyMode(
                "cannot store a zero-frequency mode in a ModeField".into(),
            ));
        }
        let (kc, flip) = canonical(k);
        let sign = match parity {
            Parity::Cos => 1.0,
            Parity::Sin => flip,
        };
        let entry = self
            .modes
            .entry((kc, parity))
            .or_insert_with(|| [ExpPoly::zero(), ExpPoly::zero(), ExpPoly::zero()]);
        for j in 0..3 {
            let add = coeff.scale(sign * a[j]);
            entry[j] = entry[j].add(&add);
        }
        if self.modes.len() > self.config.mode_cap {
            return Err(Error::ModeCapExceeded {
                count: self.modes.len(),
                cap: self.config.mode_cap,
            });
        }
        Ok(())
    }

    fn insert_vec_coeff(&mut self, key: ModeKey, vc: &VecCoeff) -> Result<()> {
        let entry = self
            .modes
            .entry(key)
            .or_insert_with(|| [ExpPoly::zero(), ExpPoly::zero(), ExpPoly::zero()]);
        for j in 0..3 {
            entry[j] = entry[j].add(&vc[j]);
        }
        if self.modes.len() > self.config.mode_cap {
            return Err(Error::ModeCapExceeded {
                count: self.modes.len(),
                cap: self.config.mode_cap,
            });
        }
        Ok(())
    }

    /// Largest |term coefficient| across all modes and components.
    pub fn max_coeff(&self) -> f64 {
        self.modes
            .values()
            .flat_map(|vc| vc.iter())
            .fold(0.0f64, |acc, p| acc.max(p.max_coeff()))
    }

    /// Drop modes and terms below the configured relative tolerance.
    pub fn pruned(mut self) -> Self {
        let cut = self.max_coeff() * self.config.prune_rel;
        if cut == 0.0 {
            self.modes.retain(|_, vc| vc.iter().any(|p| !p.is_zero()));
            return self;
        }
        self.modes.retain(|_, vc| {
            for p in vc.iter_mut() {
                if p.max_coeff() < cut {
                    *p = ExpPoly::zero();
                }
            }
            vc.iter().any(|p| !p.is_zero())
        });
        self
    }

    pub fn add(&self, other: &ModeField) -> Result<ModeField> {
        let mut out = self.clone();
        out.divergence_free = self.divergence_free && other.divergence_free;
        for (key, vc) in &other.modes {
            out.insert_vec_coeff(*key, vc)?;
        }
        Ok(out.pruned())
    }

    pub fn sub(&self, other: &ModeField) -> Result<ModeField> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> ModeField {
        let mut out = self.clone();
        if c == 0.0 {
            out.modes.clear();
            return out;
        }
        for vc in out.modes.values_mut() {
            for p in vc.iter_mut() {
                *p = p.scale(c);
            }
        }
        out
    }

    /// Evaluate the field at a point and time.
    pub fn eval(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let mut out = [0.0f64; 3];
        for ((k, parity), vc) in &self.modes {
            let phase = k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2];
            let w = match parity {
                Parity::Cos => phase.cos(),
                Parity::Sin => phase.sin(),
            };
            for j in 0..3 {
                if !vc[j].is_zero() {
                    out[j] += vc[j].eval(t) * w;
                }
            }
        }
        out
    }

    pub fn eval_many(&self, points: &[([f64; 3], f64)]) -> Vec<[f64; 3]> {
        points.iter().map(|&(x, t)| self.eval(x, t)).collect()
    }

    /// Symbolic heat flow `e^{tΔ}`: shifts every mode's decay rate by |k|².
    pub fn heat_propagate(&self) -> ModeField {
        let mut out = self.clone();
        for ((k, _), vc) in out.modes.iter_mut() {
            let mu = norm_sq(*k);
            for p in vc.iter_mut() {
                *p = p.shift_decay(mu);
            }
        }
        out
    }

    /// Numeric heat shift by a fixed time `s`: multiplies each mode's
    /// coefficient by the constant `e^{-|k|² s}`.
    pub fn heat_propagate_by(&self, s: f64) -> ModeField {
        debug_assert!(s >= 0.0);
        let mut out = self.clone();
        for ((k, _), vc) in out.modes.iter_mut() {
            let x = norm_sq(*k) * s;
            let damp = if x.is_nan() {
                1.0
            } else if x > UNDERFLOW_EXP {
                0.0
            } else {
                (-x).exp()
            };
            for p in vc.iter_mut() {
                *p = p.scale(damp);
            }
        }
        out.pruned()
    }

    /// Freeze the time dependence: returns the static spatial field at `t0`.
    pub fn at_time(&self, t0: f64) -> ModeField {
        let mut out = ModeField::with_config(self.config);
        out.divergence_free = self.divergence_free;
        for (key, vc) in &self.modes {
            let frozen = [
                ExpPoly::constant(vc[0].eval(t0)),
                ExpPoly::constant(vc[1].eval(t0)),
                ExpPoly::constant(vc[2].eval(t0)),
            ];
            out.modes.insert(*key, frozen);
        }
        out.pruned()
    }

    /// Leray projection: per mode, `C ← C − k (k·C)/|k|²`. The output claims
    /// (and exactly satisfies) divergence freeness.
    pub fn leray_project(&self) -> ModeField {
        let mut out = self.clone();
        for ((k, _), vc) in out.modes.iter_mut() {
            let ksq = norm_sq(*k);
            let kdot = dot_k(*k, vc);
            for j in 0..3 {
                let corr = kdot.scale(k[j] as f64 / ksq);
                vc[j] = vc[j].sub(&corr);
            }
        }
        out.divergence_free = true;
        out.pruned()
    }

    /// max over modes of ‖k·C‖ / ‖C‖ (coefficient norms), the exact
    /// divergence test.
    pub fn divergence_rel(&self) -> f64 {
        let mut worst = 0.0f64;
        for ((k, _), vc) in &self.modes {
            let amp = vc.iter().fold(0.0f64, |a, p| a.max(p.max_coeff()));
            if amp == 0.0 {
                continue;
            }
            let knorm = norm_sq(*k).sqrt();
            let div = dot_k(*k, vc).max_coeff() / knorm;
            worst = worst.max(div / amp);
        }
        worst
    }

    /// Duhamel integral against the heat semigroup:
    /// per mode, `C ← ∫₀ᵗ e^{-|k|²(t-τ)} C(τ) dτ`. Value at t = 0 is zero.
    pub fn duhamel_heat_integral(&self) -> ModeField {
        let mut out = self.clone();
        for ((k, _), vc) in out.modes.iter_mut() {
            let mu = norm_sq(*k);
            for p in vc.iter_mut() {
                *p = p.duhamel(mu);
            }
        }
        out.divergence_free = self.divergence_free;
        out.pruned()
    }

    /// Exact Laplacian: `Δ trig(k·x) = -|k|² trig(k·x)` per mode.
    pub fn laplacian(&self) -> ModeField {
        let mut out = self.clone();
        for ((k, _), vc) in out.modes.iter_mut() {
            let ksq = norm_sq(*k);
            for p in vc.iter_mut() {
                *p = p.scale(-ksq);
            }
        }
        out.divergence_free = self.divergence_free;
        out
    }

    /// Pointwise time derivative minus Laplacian, `(∂_t - Δ) f`, exact.
    /// Useful for residual identities on closed forms.
    pub fn heat_operator(&self) -> ModeField {
        let mut out = self.clone();
        for ((k, _), vc) in out.modes.iter_mut() {
            let ksq = norm_sq(*k);
            for p in vc.iter_mut() {
                // Δ trig(k·x) = -|k|² trig(k·x)
                *p = p.derivative().add(&p.scale(ksq));
            }
        }
        out.divergence_free = false;
        out.pruned()
    }
}

fn dot_k(k: WaveVec, vc: &VecCoeff) -> ExpPoly {
    let mut acc = ExpPoly::zero();
    for j in 0..3 {
        if k[j] != 0 && !vc[j].is_zero() {
            acc = acc.add(&vc[j].scale(k[j] as f64));
        }
    }
    acc
}

/// Exact expansion of the advection `(u·∇)v`. The vector mean residue of the
/// product (zero for divergence-free `u` against periodic `v`) is returned
/// separately — it cannot live in a `ModeField`.
pub fn advect(u: &ModeField, v: &ModeField) -> Result<(ModeField, [ExpPoly; 3])> {
    let mut out = ModeField::with_config(u.config);
    let mut mean = [ExpPoly::zero(), ExpPoly::zero(), ExpPoly::zero()];
    for ((ku, pu), cu) in &u.modes {
        for ((kv, pv), cv) in &v.modes {
            // u·∇ of this v-mode: scalar coefficient (k_v · C_u), gradient
            // flips the parity: ∂(cos) = -k sin, ∂(sin) = +k cos.
            let s = dot_k(*kv, cu);
            if s.is_zero() {
                continue;
            }
            let (grad_parity, grad_sign) = match pv {
                Parity::Cos => (Parity::Sin, -1.0),
                Parity::Sin => (Parity::Cos, 1.0),
            };
            let left = ScalarWave {
                k: *ku,
                parity: *pu,
                coeff: s.scale(grad_sign),
            };
            let right = ScalarWave {
                k: *kv,
                parity: grad_parity,
                coeff: ExpPoly::constant(1.0),
            };
            let prod = mode_product(&left, &right);
            for wave in &prod.waves {
                let vc = [
                    wave.coeff.mul(&cv[0]),
                    wave.coeff.mul(&cv[1]),
                    wave.coeff.mul(&cv[2]),
                ];
                out.insert_vec_coeff((wave.k, wave.parity), &vc)?;
            }
            if !prod.mean.is_zero() {
                for j in 0..3 {
                    mean[j] = mean[j].add(&prod.mean.mul(&cv[j]));
                }
            }
        }
    }
    Ok((out.pruned(), mean))
}

// ---------------------------------------------------------------------------
// serialization: {"modes": [TrigMode...], "divergence_free": bool}
// Vector coefficients are decomposed onto the coordinate axes so the
// round-trip is bit-exact.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModeFieldDoc {
    modes: Vec<TrigMode>,
    divergence_free: bool,
}

impl ModeField {
    pub fn to_json(&self) -> Result<String> {
        let mut modes = Vec::new();
        for ((k, parity), vc) in &self.modes {
            for j in 0..3 {
                if vc[j].is_zero() {
                    continue;
                }
                let mut a = [0.0; 3];
                a[j] = 1.0;
                modes.push(TrigMode {
                    k: *k,
                    parity: *parity,
                    a,
                    coeff: vc[j].clone(),
                });
            }
        }
        let doc = ModeFieldDoc {
            modes,
            divergence_free: self.divergence_free,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<ModeField> {
        let doc: ModeFieldDoc = serde_json::from_str(s)?;
        ModeField::from_modes(doc.modes, doc.divergence_free)
    }
}

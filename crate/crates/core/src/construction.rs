//! The plane-wave cascade: parameter resolution, wave/amplitude vectors,
//! initial data, closed-form first Picard iterates, and the time-step
//! schedule.
//!
//! Geometry conventions on the torus: the cascade direction is e₁, the
//! resonance direction is η = (0,1,0) (the only unit lattice vectors are
//! ±eᵢ), v_s = v = (0,0,1), and
//! `v_s' = (1/(2m_s), 1/2, sqrt(3/4 − 1/(4m_s²)))`, which satisfies all
//! constraints exactly and tends to (0, 1/2, √3/2).
//!
//! Two cascade laws: the doubling-product law `|k_s| = 2^s |k₀| |k_{s-1}|`
//! (astronomically large — kept exact as big integers with floating log₂),
//! and the tempered law `|k_s| = 2^s |k₀|` that fits on grids. Every report
//! records which law produced it.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expoly::ExpPoly;
use crate::trig::{norm_sq, ModeField, Parity, TrigMode, WaveVec};

pub const ETA: WaveVec = [0, 1, 0];
pub const V_FIXED: [f64; 3] = [0.0, 0.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CascadeLaw {
    /// `m_s = 2^s k₀ m_{s-1}` — the doubling-product cascade.
    Paper,
    /// `m_s = 2^s k₀` — grid-friendly deviation, recorded in every report.
    Tempered,
}

/// Exact wave magnitude plus its floating log₂ (the only representation that
/// survives the paper-law growth).
#[derive(Debug, Clone)]
pub struct Magnitude {
    pub exact: BigUint,
    pub log2: f64,
}

impl Magnitude {
    fn from_u64(v: u64) -> Self {
        Magnitude {
            exact: BigUint::from(v),
            log2: (v as f64).log2(),
        }
    }

    /// Saturating conversion; never infinite.
    pub fn as_f64(&self) -> f64 {
        if self.log2 >= 1023.0 {
            return f64::MAX;
        }
        let mut v = 0.0f64;
        for d in self.exact.to_u64_digits().iter().rev() {
            v = v * 1.844_674_407_370_955_2e19 + *d as f64;
        }
        v
    }

    pub fn as_i64(&self) -> Option<i64> {
        if self.log2 < 62.0 {
            Some(self.as_f64() as i64)
        } else {
            None
        }
    }

    /// |k'|² = m² + 1 as saturating f64.
    pub fn prime_norm_sq(&self) -> f64 {
        let m = self.as_f64();
        let sq = m * m;
        if sq >= f64::MAX {
            f64::MAX
        } else {
            sq + 1.0
        }
    }
}

/// One cascade pair `(k_s, k_s')` with its amplitude vectors.
#[derive(Debug, Clone)]
pub struct WavePair {
    pub m: Magnitude,
    pub v: [f64; 3],
    pub v_prime: [f64; 3],
}

impl WavePair {
    pub fn k(&self) -> Option<WaveVec> {
        self.m.as_i64().map(|m| [m, 0, 0])
    }

    pub fn k_prime(&self) -> Option<WaveVec> {
        self.m.as_i64().map(|m| [m, -1, 0])
    }
}

#[derive(Debug, Clone)]
pub struct WaveSystem {
    pub pairs: Vec<WavePair>,
    pub k0_mag: u64,
    pub eta: WaveVec,
    pub law: CascadeLaw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BPParams {
    pub delta: Option<f64>,
    pub q: u64,
    pub r: u64,
    pub k0_mag: u64,
    pub law: CascadeLaw,
    pub t_horizon: f64,
}

impl BPParams {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 || self.r == 0 || self.k0_mag == 0 {
            return Err(Error::invalid("Q, r, k0 must be positive"));
        }
        if !(self.t_horizon > 0.0) {
            return Err(Error::invalid("T must be positive"));
        }
        Ok(())
    }

    pub fn beta(&self) -> u64 {
        self.q * self.q * self.q
    }
}

/// `δ → Q → T → k₀, Q → r`, with every derived inequality re-checked.
pub fn resolve_parameters(delta: f64, law: CascadeLaw) -> Result<BPParams> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta = {delta} outside (0, 1)")));
    }
    // ceil with a hair of slack so δ → 1⁻ degenerates to Q = 1
    let q = (delta.powf(-0.5) - 1e-12).ceil().max(1.0) as u64;
    let qf = q as f64;
    let beta = q * q * q;
    let r_min = (2.0 * qf.powf(2.5)).max(2.0 * qf * qf / (delta * delta));
    let mut r = beta * ((r_min / beta as f64).ceil().max(1.0) as u64);
    if (r as f64) < r_min {
        r += beta;
    }
    let t = 0.5 * delta.min(qf.powi(-5));
    let m1 = |k0: u64| -> f64 {
        match law {
            CascadeLaw::Paper => 2.0 * (k0 as f64) * (k0 as f64),
            CascadeLaw::Tempered => 2.0 * k0 as f64,
        }
    };
    let mut k0 = (10.0 / t.sqrt()).ceil().max(1.0) as u64;
    while 1.0 / (m1(k0) * m1(k0)) > t / 100.0 {
        k0 += 1;
        if k0 > 1 << 40 {
            return Err(Error::invalid("could not satisfy the k0 constraints"));
        }
    }
    let params = BPParams {
        delta: Some(delta),
        q,
        r,
        k0_mag: k0,
        law,
        t_horizon: t,
    };
    check_qrt(&params)?;
    if !(t < delta) {
        return Err(Error::invalid("derived T ≥ delta"));
    }
    Ok(params)
}

/// The smallness constraints `Q²/r < Q^{-1/2}` and `Q²√T < Q^{-1/2}`.
pub fn check_qrt(p: &BPParams) -> Result<()> {
    let q = p.q as f64;
    let lhs1 = q * q / p.r as f64;
    let lhs2 = q * q * p.t_horizon.sqrt();
    let rhs = q.powf(-0.5);
    if lhs1 >= rhs {
        return Err(Error::invalid(format!(
            "Q²/r = {lhs1} is not below Q^(-1/2) = {rhs}"
        )));
    }
    if lhs2 >= rhs {
        return Err(Error::invalid(format!(
            "Q²√T = {lhs2} is not below Q^(-1/2) = {rhs}"
        )));
    }
    Ok(())
}

fn v_prime_for(m: &Magnitude) -> [f64; 3] {
    let mf = m.as_f64();
    let inv2m = if mf >= f64::MAX { 0.0 } else { 1.0 / (2.0 * mf) };
    let vz = (0.75 - inv2m * inv2m).sqrt();
    [inv2m, 0.5, vz]
}

/// Magnitudes `m_1..m_r` for the requested law.
pub fn cascade_magnitudes(law: CascadeLaw, k0: u64, r: u64) -> Vec<Magnitude> {
    let mut out = Vec::with_capacity(r as usize);
    let k0_big = BigUint::from(k0);
    let log2_k0 = (k0 as f64).log2();
    let mut prev = Magnitude::from_u64(k0); // m_0 = |k_0|
    for s in 1..=r {
        let m = match law {
            CascadeLaw::Paper => Magnitude {
                exact: (BigUint::from(1u64) << s as usize) * &k0_big * &prev.exact,
                log2: s as f64 + log2_k0 + prev.log2,
            },
            CascadeLaw::Tempered => Magnitude {
                exact: (BigUint::from(1u64) << s as usize) * &k0_big,
                log2: s as f64 + log2_k0,
            },
        };
        prev = m.clone();
        out.push(m);
    }
    out
}

pub fn build_wave_system(params: &BPParams) -> Result<WaveSystem> {
    params.validate()?;
    let mags = cascade_magnitudes(params.law, params.k0_mag, params.r);
    let pairs = mags
        .into_iter()
        .map(|m| {
            let v_prime = v_prime_for(&m);
            WavePair {
                m,
                v: V_FIXED,
                v_prime,
            }
        })
        .collect();
    Ok(WaveSystem {
        pairs,
        k0_mag: params.k0_mag,
        eta: ETA,
        law: params.law,
    })
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Sum `Σ_i 2^(log2_i - log2_ref)` — a partial-sum comparison that survives
/// magnitudes far beyond f64.
fn log_domain_ratio(logs: &[f64], log_ref: f64) -> f64 {
    logs.iter()
        .map(|&l| {
            let d = l - log_ref;
            if d < -1060.0 {
                0.0
            } else {
                d.exp2()
            }
        })
        .sum()
}

/// Lemma-level facts about a wave system, with explicit derived constants:
/// (a) `Σ_{l<s}|k_l| ≤ 2|k_{s-1}|`, (b) `sup_t √t Σ|k_s|e^{-|k_s|²t} ≤ √π`,
/// (c) exact orthogonality identities, (d) `Σ|k_i|e^{-|k_i|²/|k_0|²} ≤ 1`.
pub fn validate_wave_system(ws: &WaveSystem) -> ValidationReport {
    let mut checks = Vec::new();
    let logs: Vec<f64> = ws.pairs.iter().map(|p| p.m.log2).collect();

    // (a) prefix sums against the previous magnitude
    let mut worst_a = 0.0f64;
    for s in 1..logs.len() {
        let ratio = log_domain_ratio(&logs[..s], logs[s - 1]);
        worst_a = worst_a.max(ratio);
    }
    checks.push(Check {
        name: "prefix_sum_vs_previous".into(),
        measured: worst_a,
        bound: 2.0,
        pass: logs.len() < 2 || worst_a <= 2.0,
    });

    // (b) sup over a log t grid of √t Σ m e^{-m² t}
    let ln2 = std::f64::consts::LN_2;
    let log_mr = logs.last().copied().unwrap_or(0.0);
    let log_m1 = logs.first().copied().unwrap_or(0.0);
    let t_lo = (-2.0 * log_mr * ln2 - 5.0).exp().max(1e-300);
    let t_hi = (-2.0 * log_m1 * ln2 + 5.0).exp().min(1e300);
    let mut sup_b = 0.0f64;
    let npts = 600;
    for i in 0..npts {
        let lt = t_lo.ln() + (t_hi.ln() - t_lo.ln()) * i as f64 / (npts - 1) as f64;
        let t = lt.exp();
        let mut sum = 0.0;
        for &lm in &logs {
            // ln term = ln m − m² t
            let m_sq_t = if 2.0 * lm > 1023.0 {
                f64::INFINITY
            } else {
                (2.0 * lm).exp2() * t
            };
            let ln_term = lm * ln2 - m_sq_t;
            if ln_term > -700.0 {
                sum += ln_term.exp();
            }
        }
        sup_b = sup_b.max(t.sqrt() * sum);
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    checks.push(Check {
        name: "caloric_sum_vs_sqrt_pi".into(),
        measured: sup_b,
        bound: sqrt_pi,
        pass: sup_b <= sqrt_pi,
    });

    // (c) orthogonality identities, exact on representable systems
    let mut worst_c = 0.0f64;
    for p in &ws.pairs {
        let eta_f = [ws.eta[0] as f64, ws.eta[1] as f64, ws.eta[2] as f64];
        let dot_v_eta = p.v[0] * eta_f[0] + p.v[1] * eta_f[1] + p.v[2] * eta_f[2];
        worst_c = worst_c.max(dot_v_eta.abs());
        if let (Some(k), Some(kp)) = (p.k(), p.k_prime()) {
            for q in &ws.pairs {
                let dk = q.v[0] * k[0] as f64 + q.v[1] * k[1] as f64 + q.v[2] * k[2] as f64;
                let dkp =
                    q.v[0] * kp[0] as f64 + q.v[1] * kp[1] as f64 + q.v[2] * kp[2] as f64;
                worst_c = worst_c.max(dk.abs()).max(dkp.abs());
            }
        }
    }
    checks.push(Check {
        name: "orthogonality_identities".into(),
        measured: worst_c,
        bound: 0.0,
        pass: worst_c == 0.0,
    });

    // (d) Σ m e^{-m²/m0²}
    let log_m0 = (ws.k0_mag as f64).log2();
    let mut sum_d = 0.0;
    for &lm in &logs {
        let ratio_sq = if 2.0 * (lm - log_m0) > 1023.0 {
            f64::INFINITY
        } else {
            (2.0 * (lm - log_m0)).exp2()
        };
        let ln_term = lm * ln2 - ratio_sq;
        if ln_term > -700.0 {
            sum_d += ln_term.exp();
        }
    }
    checks.push(Check {
        name: "diffused_sum_at_base_frequency".into(),
        measured: sum_d,
        bound: 1.0,
        pass: sum_d <= 1.0,
    });

    let all_pass = checks.iter().all(|c| c.pass);
    ValidationReport { checks, all_pass }
}

impl WaveSystem {
    /// Arbitrary magnitudes with the standard geometry — lets tests inject
    /// designed counterexamples.
    pub fn from_magnitudes(mags: Vec<u64>, k0_mag: u64, law: CascadeLaw) -> Self {
        let pairs = mags
            .into_iter()
            .map(|m| {
                let m = Magnitude::from_u64(m);
                let v_prime = v_prime_for(&m);
                WavePair {
                    m,
                    v: V_FIXED,
                    v_prime,
                }
            })
            .collect();
        WaveSystem {
            pairs,
            k0_mag,
            eta: ETA,
            law,
        }
    }

    pub fn representable(&self) -> bool {
        self.pairs.iter().all(|p| p.m.as_i64().is_some())
    }
}

// ---------------------------------------------------------------------------
// initial data and first iterates
// ---------------------------------------------------------------------------

/// `u0 = (Q/√r) Σ |k_s| v_s cos(k_s·x)`, `b0` likewise with primes. Exactly
/// divergence-free and mean-zero.
pub fn build_initial_data(ws: &WaveSystem, q: u64) -> Result<(ModeField, ModeField)> {
    let r = ws.pairs.len();
    if r == 0 {
        return Err(Error::invalid("empty wave system"));
    }
    let amp = q as f64 / (r as f64).sqrt();
    let mut u_modes = Vec::with_capacity(r);
    let mut b_modes = Vec::with_capacity(r);
    for p in &ws.pairs {
        let (k, kp) = match (p.k(), p.k_prime()) {
            (Some(k), Some(kp)) => (k, kp),
            _ => {
                return Err(Error::invalid(
                    "wave magnitudes exceed the mode engine's integer range; \
                     use the tempered law or the closed-form evaluators",
                ))
            }
        };
        let m = p.m.as_f64();
        let mp = p.m.prime_norm_sq().sqrt();
        u_modes.push(TrigMode {
            k,
            parity: Parity::Cos,
            a: [amp * m * p.v[0], amp * m * p.v[1], amp * m * p.v[2]],
            coeff: ExpPoly::constant(1.0),
        });
        b_modes.push(TrigMode {
            k: kp,
            parity: Parity::Cos,
            a: [
                amp * mp * p.v_prime[0],
                amp * mp * p.v_prime[1],
                amp * mp * p.v_prime[2],
            ],
            coeff: ExpPoly::constant(1.0),
        });
    }
    let u0 = ModeField::from_modes(u_modes, true)?;
    let b0 = ModeField::from_modes(b_modes, true)?;
    Ok((u0, b0))
}

/// Combined family `(Q/√r) Σ (|k_i| v_i cos(k_i·x) + |k_i'| v_i' cos(k_i'·x))`
/// — the zero-velocity scenario's magnetic data (the collisions live entirely
/// inside one field).
pub fn build_combined_data(ws: &WaveSystem, q: u64) -> Result<ModeField> {
    let (u0, b0) = build_initial_data(ws, q)?;
    u0.add(&b0)
}

pub struct FirstIterates {
    pub u1: ModeField,
    pub b1_0: ModeField,
    pub b1_1: ModeField,
}

impl FirstIterates {
    pub fn b1(&self) -> Result<ModeField> {
        self.b1_0.add(&self.b1_1)
    }
}

fn leray_apply(k: WaveVec, w: [f64; 3]) -> [f64; 3] {
    let ksq = norm_sq(k);
    let dot = k[0] as f64 * w[0] + k[1] as f64 * w[1] + k[2] as f64 * w[2];
    [
        w[0] - k[0] as f64 * dot / ksq,
        w[1] - k[1] as f64 * dot / ksq,
        w[2] - k[2] as f64 * dot / ksq,
    ]
}

/// Duhamel factor `∫₀ᵗ e^{-μ(t-τ)} e^{-λτ} dτ` as an ExpPoly.
fn duhamel_factor(lambda: f64, mu: f64) -> ExpPoly {
    ExpPoly::exp(1.0, lambda).duhamel(mu)
}

/// Closed-form first Picard iterates, transcribed from the explicit double
/// sums (the paper-facing route; `mild::bilinear_B` is the independent
/// generic route that must agree to 1e-10).
///
/// `u1 = -B(e^{tΔ}b0, e^{tΔ}b0)` since the u0 family self-advects to zero;
/// `b1 = -∫ e^{(t-τ)Δ} P[(e^{τΔ}b0·∇) e^{τΔ}u0] dτ`, split into the resonant
/// η-mode `b1_0` and the rest `b1_1`.
pub fn closed_form_first_iterates(ws: &WaveSystem, q: u64) -> Result<FirstIterates> {
    let r = ws.pairs.len();
    if !ws.representable() {
        return Err(Error::invalid(
            "closed-form iterates need integer-representable wave vectors",
        ));
    }
    let pref = (q as f64) * (q as f64) / (2.0 * r as f64);
    let mut u1 = ModeField::new();
    let mut b1_0 = ModeField::new();
    let mut b1_1 = ModeField::new();

    for (i, pi) in ws.pairs.iter().enumerate() {
        let kpi = pi.k_prime().unwrap();
        let norm_kpi = pi.m.prime_norm_sq().sqrt();
        let lam_i_prime = norm_sq(kpi);
        for (j, pj) in ws.pairs.iter().enumerate() {
            let kpj = pj.k_prime().unwrap();
            let kj = pj.k().unwrap();
            let norm_kpj = pj.m.prime_norm_sq().sqrt();
            let norm_kj = pj.m.as_f64();
            let lam_j_prime = norm_sq(kpj);
            let lam_j = norm_sq(kj);

            // u1 = (Q²/2r) Σ_{ij} |k_i'||k_j'| (v_i'·k_j')
            //      [P sin((k_j'+k_i')·x) D + P sin((k_j'−k_i')·x) D]
            let dot_vp_kj = pi.v_prime[0] * kpj[0] as f64
                + pi.v_prime[1] * kpj[1] as f64
                + pi.v_prime[2] * kpj[2] as f64;
            if dot_vp_kj != 0.0 {
                let c = pref * norm_kpi * norm_kpj * dot_vp_kj;
                let lam_src = lam_i_prime + lam_j_prime;
                for k_out in [
                    [kpj[0] + kpi[0], kpj[1] + kpi[1], kpj[2] + kpi[2]],
                    [kpj[0] - kpi[0], kpj[1] - kpi[1], kpj[2] - kpi[2]],
                ] {
                    if k_out == [0, 0, 0] {
                        continue;
                    }
                    let proj = leray_apply(k_out, pj.v_prime);
                    let d = duhamel_factor(lam_src, norm_sq(k_out)).scale(c);
                    u1.insert_mode(k_out, Parity::Sin, proj, &d)?;
                }
            }

            // b1 = (Q²/2r) Σ_{ij} |k_i'||k_j| (v_i'·k_j)
            //      [P sin((k_j+k_i')·x) D + P sin((k_j−k_i')·x) D]
            let dot_vp_k = pi.v_prime[0] * kj[0] as f64
                + pi.v_prime[1] * kj[1] as f64
                + pi.v_prime[2] * kj[2] as f64;
            if dot_vp_k != 0.0 {
                let c = pref * norm_kpi * norm_kj * dot_vp_k;
                let lam_src = lam_i_prime + lam_j;
                for (which, k_out) in [
                    (0, [kj[0] + kpi[0], kj[1] + kpi[1], kj[2] + kpi[2]]),
                    (1, [kj[0] - kpi[0], kj[1] - kpi[1], kj[2] - kpi[2]]),
                ] {
                    if k_out == [0, 0, 0] {
                        continue;
                    }
                    let proj = leray_apply(k_out, pj.v);
                    let d = duhamel_factor(lam_src, norm_sq(k_out)).scale(c);
                    let resonant = which == 1 && i == j; // k_i − k_i' = η
                    if resonant {
                        debug_assert_eq!(k_out, ws.eta);
                        b1_0.insert_mode(k_out, Parity::Sin, proj, &d)?;
                    } else {
                        b1_1.insert_mode(k_out, Parity::Sin, proj, &d)?;
                    }
                }
            }
        }
    }
    u1.set_divergence_free(true);
    b1_0.set_divergence_free(true);
    b1_1.set_divergence_free(true);
    Ok(FirstIterates {
        u1: u1.pruned(),
        b1_0: b1_0.pruned(),
        b1_1: b1_1.pruned(),
    })
}

/// The η-mode coefficient of `b1_0` as an ExpPoly, computed in a form that
/// stays finite at any cascade scale:
/// `(Q²/4r) Σ ρ_i (e^{-t} − e^{-(2m_i²+1)t})` with
/// `ρ_i = m_i √(m_i²+1) / (2m_i²) = √(1 + 1/m_i²)/2 → 1/2`.
pub fn resonant_amplitude(ws: &WaveSystem, q: u64) -> ExpPoly {
    let r = ws.pairs.len() as f64;
    let pref = (q as f64) * (q as f64) / (4.0 * r);
    let mut acc = ExpPoly::zero();
    for p in &ws.pairs {
        let mf = p.m.as_f64();
        let inv_m_sq = if mf >= f64::MAX { 0.0 } else { 1.0 / (mf * mf) };
        let rho = 0.5 * (1.0 + inv_m_sq).sqrt();
        let lam = if mf >= 1e150 {
            f64::MAX
        } else {
            2.0 * mf * mf + 1.0
        };
        let c = pref * rho;
        acc = acc.add(&ExpPoly::exp(c, 1.0));
        acc = acc.add(&ExpPoly::exp(-c, lam));
    }
    acc
}

/// Peak of the resonant amplitude over a log t grid — the plateau value.
pub fn resonant_plateau(ws: &WaveSystem, q: u64) -> f64 {
    let p = resonant_amplitude(ws, q);
    let mut best = 0.0f64;
    for i in 0..2000 {
        let t = (1e-8f64.ln() + (4.0 - 1e-8f64.ln()) * i as f64 / 1999.0).exp();
        best = best.max(p.eval(t).abs());
    }
    best
}

// ---------------------------------------------------------------------------
// two-wave interaction
// ---------------------------------------------------------------------------

pub struct TwoWaveInteraction {
    pub b1_0: ModeField,
    pub b1_1: ModeField,
}

/// Closed-form interaction of `u0 = scale·v1 cos(k1·x)`,
/// `b0 = scale·v2 cos(k2·x)` under the simplifying constraints
/// `k1·v1 = k2·v2 = k2·v1 = 0`, `k1·v2 = 1/2`:
///
/// `b1_0 = (scale²/4) v1 sin((k1−k2)·x) (e^{-|k1−k2|²t} − e^{-(|k1|²+|k2|²)t})/(2 k1·k2)`
/// `b1_1 = (scale²/4) v1 sin((k1+k2)·x) (e^{-(|k1|²+|k2|²)t} − e^{-|k1+k2|²t})/(2 k1·k2)`
///
/// The resonant case `k1·k2 = 0` falls out of the ExpPoly Duhamel branch.
pub fn two_wave_interaction(
    k1: WaveVec,
    k2: WaveVec,
    v1: [f64; 3],
    v2: [f64; 3],
    scale: f64,
) -> Result<TwoWaveInteraction> {
    let dot =
        |k: WaveVec, v: [f64; 3]| k[0] as f64 * v[0] + k[1] as f64 * v[1] + k[2] as f64 * v[2];
    let tol = 1e-12;
    if dot(k1, v1).abs() > tol || dot(k2, v2).abs() > tol {
        return Err(Error::ConstraintViolation(
            "divergence constraints k1·v1 = k2·v2 = 0 violated".into(),
        ));
    }
    if dot(k2, v1).abs() > tol {
        return Err(Error::ConstraintViolation("k2·v1 must vanish".into()));
    }
    if (dot(k1, v2) - 0.5).abs() > tol {
        return Err(Error::ConstraintViolation("k1·v2 must equal 1/2".into()));
    }
    let lam = norm_sq(k1) + norm_sq(k2);
    let s2 = scale * scale;
    let k_diff = [k1[0] - k2[0], k1[1] - k2[1], k1[2] - k2[2]];
    let k_sum = [k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2]];
    let mut b1_0 = ModeField::new();
    if k_diff != [0, 0, 0] {
        let d = duhamel_factor(lam, norm_sq(k_diff)).scale(0.25 * s2);
        b1_0.insert_mode(k_diff, Parity::Sin, v1, &d)?;
    }
    let mut b1_1 = ModeField::new();
    if k_sum != [0, 0, 0] {
        let d = duhamel_factor(lam, norm_sq(k_sum)).scale(0.25 * s2);
        b1_1.insert_mode(k_sum, Parity::Sin, v1, &d)?;
    }
    b1_0.set_divergence_free(true);
    b1_1.set_divergence_free(true);
    Ok(TwoWaveInteraction { b1_0, b1_1 })
}

// ---------------------------------------------------------------------------
// time-step schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub alpha: u64,
    pub r_alpha: u64,
    pub t_alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl TimeSchedule {
    pub fn beta(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn t_beta(&self) -> f64 {
        self.entries.last().map(|e| e.t_alpha).unwrap_or(0.0)
    }
}

/// `T_α = |k_{r_α}|^{-2}` with `r_α = r − α r/Q³`, α = 1..β = Q³.
/// `r_β = 0` makes `T_β = |k_0|^{-2}`.
pub fn build_schedule(params: &BPParams, ws: &WaveSystem) -> Result<TimeSchedule> {
    let beta = params.beta();
    if params.r % beta != 0 {
        return Err(Error::Schedule(format!(
            "r = {} is not a multiple of Q³ = {beta}",
            params.r
        )));
    }
    if ws.pairs.len() as u64 != params.r {
        return Err(Error::Schedule("wave system size does not match r".into()));
    }
    let step = params.r / beta;
    let mut entries = Vec::with_capacity(beta as usize);
    let mut prev_t = 0.0f64;
    for alpha in 1..=beta {
        let r_alpha = params.r - alpha * step;
        let m = if r_alpha == 0 {
            params.k0_mag as f64
        } else {
            ws.pairs[(r_alpha - 1) as usize].m.as_f64()
        };
        let t_alpha = if m >= 1e154 { 0.0 } else { 1.0 / (m * m) };
        if t_alpha <= prev_t {
            return Err(Error::Schedule(format!(
                "window times not strictly increasing at alpha = {alpha} \
                 (magnitudes too large for f64 scheduling)"
            )));
        }
        prev_t = t_alpha;
        entries.push(ScheduleEntry {
            alpha,
            r_alpha,
            t_alpha,
        });
    }
    Ok(TimeSchedule { entries })
}

//! Mild-solution machinery: the bilinear Duhamel operator, Picard iteration,
//! the remainder decomposition `u = e^{tΔ}u₀ − u₁ + y` (and its magnetic
//! twin), the source-term assembly for the remainder equations, residual
//! verification, pressure recovery, and the windowed-norm / growth audits.

use serde::{Deserialize, Serialize};

use crate::construction::{BPParams, TimeSchedule, WaveSystem};
use crate::error::{Error, Result};
use crate::expoly::ExpPoly;
use crate::grid::{advection, sample, GridField, RhsScratch, Spectral};
use crate::norms::{xt_norm, xt_norm_window, QuadSpec};
use crate::trig::{advect, ModeField};

/// Tolerance for the mean residue of an advection of divergence-free fields
/// (it must vanish; roundoff only).
const MEAN_RESIDUE_REL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// bilinear operator
// ---------------------------------------------------------------------------

/// `B(u, v) = ∫₀ᵗ e^{(t-τ)Δ} P[(u·∇)v] dτ` on the exact engine. Inputs are
/// mode trajectories (ExpPoly time dependence built in). The zero-frequency
/// residue of the advection must vanish (true for divergence-free `u`);
/// a nonzero mean is an error since it cannot be projected.
pub fn bilinear_b(u: &ModeField, v: &ModeField) -> Result<ModeField> {
    let (adv, mean) = advect(u, v)?;
    let scale = u.max_coeff().max(1.0) * v.max_coeff().max(1.0);
    for m in &mean {
        if m.max_coeff() > MEAN_RESIDUE_REL * scale {
            return Err(Error::ZeroFrequencyMode(format!(
                "advection has a mean part of size {:.3e}; B is defined for divergence-free u",
                m.max_coeff()
            )));
        }
    }
    Ok(adv.leray_project().duhamel_heat_integral())
}

/// Grid-engine `B(e^{tΔ}u₀, e^{tΔ}v₀)(t)`: composite Gauss–Legendre in τ with
/// the integrating factor, Richardson-checked to `tol` by panel doubling.
pub fn bilinear_b_grid_heat(
    sp: &Spectral,
    u0: &GridField,
    v0: &GridField,
    t: f64,
    tol: f64,
    scratch: &mut RhsScratch,
) -> Result<GridField> {
    let n = u0.n();
    if t == 0.0 {
        return Ok(GridField::zeros(n));
    }
    let (nodes, weights) = crate::norms::gauss_legendre(4);
    let mut eval_panels = |panels: usize, scratch: &mut RhsScratch| -> Result<GridField> {
        let mut acc = GridField::zeros(n);
        let h = t / panels as f64;
        for p in 0..panels {
            let a = p as f64 * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let tau = a + 0.5 * h * (x + 1.0);
                let jac = 0.5 * h * w;
                let mut u = u0.clone();
                u.apply_heat(tau);
                let mut v = v0.clone();
                v.apply_heat(tau);
                let mut s = advection(sp, &u, &v, scratch)?;
                s.leray_project();
                s.apply_heat(t - tau);
                acc.add_scaled(&s, jac);
            }
        }
        Ok(acc)
    };
    let mut panels = 4usize;
    let mut prev = eval_panels(panels, scratch)?;
    loop {
        panels *= 2;
        let next = eval_panels(panels, scratch)?;
        let mut diff = next.clone();
        diff.add_scaled(&prev, -1.0);
        let err = diff.max_abs();
        let scale = next.max_abs();
        if err <= tol * scale.max(1.0) {
            return Ok(next);
        }
        if panels >= 64 {
            return Err(Error::QuadratureNonConvergence(format!(
                "B quadrature at t = {t}: rel change {:.3e} after {panels} panels",
                err / scale.max(1e-300)
            )));
        }
        prev = next;
    }
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum PicardStop {
    Depth(usize),
    Tolerance(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    /// X_T size of the n-th increment (u and b parts summed).
    pub increments: Vec<f64>,
    pub depth: usize,
}

pub struct PicardResult {
    pub u: ModeField,
    pub b: ModeField,
    pub record: ConvergenceRecord,
}

/// Fixed-point iteration of the mild formulation:
/// `u ← e^{tΔ}u₀ − B(u,u) + B(b,b)`, `b ← e^{tΔ}b₀ − B(u,b) + B(b,u)`.
/// Divergence (increment ratio ≥ 1 three times in a row) aborts with the
/// record embedded in the error.
pub fn picard_solve(
    u0: &ModeField,
    b0: &ModeField,
    big_t: f64,
    stop: PicardStop,
    quad: &QuadSpec,
) -> Result<PicardResult> {
    let heat_u = u0.heat_propagate();
    let heat_b = b0.heat_propagate();
    let mut u = heat_u.clone();
    let mut b = heat_b.clone();
    let mut increments = Vec::new();
    let max_depth = match stop {
        PicardStop::Depth(d) => d,
        PicardStop::Tolerance(_) => 16,
    };
    let mut bad_streak = 0usize;
    for depth in 1..=max_depth {
        let buu = bilinear_b(&u, &u)?;
        let bbb = bilinear_b(&b, &b)?;
        let bub = bilinear_b(&u, &b)?;
        let bbu = bilinear_b(&b, &u)?;
        let u_next = heat_u.sub(&buu)?.add(&bbb)?;
        let b_next = heat_b.sub(&bub)?.add(&bbu)?;
        let du = u_next.sub(&u)?;
        let db = b_next.sub(&b)?;
        let inc = xt_norm(&du, big_t, quad)?.total() + xt_norm(&db, big_t, quad)?.total();
        u = u_next;
        b = b_next;
        if let Some(&last) = increments.last() {
            if inc >= last && last > 0.0 {
                bad_streak += 1;
                if bad_streak >= 3 {
                    increments.push(inc);
                    let n = increments.len();
                    let ratios = increments
                        .windows(2)
                        .map(|w| w[1] / w[0].max(1e-300))
                        .collect();
                    return Err(Error::PicardDivergence { iters: n, ratios });
                }
            } else {
                bad_streak = 0;
            }
        }
        increments.push(inc);
        if let PicardStop::Tolerance(tol) = stop {
            if inc < tol {
                return Ok(PicardResult {
                    u,
                    b,
                    record: ConvergenceRecord { increments, depth },
                });
            }
        }
    }
    let depth = increments.len();
    Ok(PicardResult {
        u,
        b,
        record: ConvergenceRecord { increments, depth },
    })
}

// ---------------------------------------------------------------------------
// decomposition and sources
// ---------------------------------------------------------------------------

/// The rewriting `u = e^{tΔ}u₀ − u₁ + y`, `b = e^{tΔ}b₀ − b₁ + z`, all parts
/// as mode trajectories.
pub struct Decomposition {
    pub heat_u: ModeField,
    pub heat_b: ModeField,
    pub u1: ModeField,
    pub b1: ModeField,
    pub y: ModeField,
    pub z: ModeField,
}

/// First iterates via the generic bilinear route:
/// `u1 = B(e u0, e u0) − B(e b0, e b0)`, `b1 = B(e u0, e b0) − B(e b0, e u0)`.
pub fn first_iterates_generic(u0: &ModeField, b0: &ModeField) -> Result<(ModeField, ModeField)> {
    let hu = u0.heat_propagate();
    let hb = b0.heat_propagate();
    let u1 = bilinear_b(&hu, &hu)?.sub(&bilinear_b(&hb, &hb)?)?;
    let b1 = bilinear_b(&hu, &hb)?.sub(&bilinear_b(&hb, &hu)?)?;
    Ok((u1, b1))
}

/// `y = u − e^{tΔ}u₀ + u₁`, `z = b − e^{tΔ}b₀ + b₁`.
pub fn decompose(
    u: &ModeField,
    b: &ModeField,
    u0: &ModeField,
    b0: &ModeField,
) -> Result<Decomposition> {
    let heat_u = u0.heat_propagate();
    let heat_b = b0.heat_propagate();
    let (u1, b1) = first_iterates_generic(u0, b0)?;
    let y = u.sub(&heat_u)?.add(&u1)?;
    let z = b.sub(&heat_b)?.add(&b1)?;
    Ok(Decomposition {
        heat_u,
        heat_b,
        u1,
        b1,
        y,
        z,
    })
}

/// Grid-side remainder at one time: `y(t) = u(t) − e^{tΔ}u₀ + u₁(t)` with the
/// first iterate sampled from the exact engine.
pub fn grid_remainder(
    u_t: &GridField,
    t: f64,
    u0: &GridField,
    u1: &ModeField,
) -> Result<GridField> {
    let mut heat = u0.clone();
    heat.apply_heat(t);
    let mut y = u_t.clone();
    y.add_scaled(&heat, -1.0);
    let u1_g = sample(u1, u_t.n(), t)?;
    y.add_scaled(&u1_g, 1.0);
    Ok(y)
}

/// The six source groups of the remainder equations
/// `y_t − Δy + G₀ + G₁ + G₂ = 0`, `z_t − Δz + K₀ + K₁ + K₂ = 0`.
pub struct SourceTerms {
    pub g0: ModeField,
    pub g1: ModeField,
    pub g2: ModeField,
    pub k0: ModeField,
    pub k1: ModeField,
    pub k2: ModeField,
}

impl SourceTerms {
    pub fn g_total(&self) -> Result<ModeField> {
        self.g0.add(&self.g1)?.add(&self.g2)
    }

    pub fn k_total(&self) -> Result<ModeField> {
        self.k0.add(&self.k1)?.add(&self.k2)
    }
}

fn padv(u: &ModeField, v: &ModeField) -> Result<ModeField> {
    let (a, _) = advect(u, v)?;
    Ok(a.leray_project())
}

/// Assemble the twelve projected advection groups. Signs come from
/// substituting `u = e^{tΔ}u₀ − u₁ + y` into the quadratic terms: every
/// occurrence of u₁/b₁ carries the minus sign of the decomposition, so the
/// groups linear in the first iterates enter negatively while the quadratic
/// ones enter positively. G₀/K₀ are independent of (y, z); G₁/K₁ are linear;
/// G₂/K₂ quadratic — covered by the scaling tests.
pub fn assemble_sources(dec: &Decomposition) -> Result<SourceTerms> {
    let (hu, hb, u1, b1, y, z) = (
        &dec.heat_u,
        &dec.heat_b,
        &dec.u1,
        &dec.b1,
        &dec.y,
        &dec.z,
    );
    let g0 = padv(hu, u1)?
        .scale(-1.0)
        .sub(&padv(u1, hu)?)?
        .add(&padv(u1, u1)?)?
        .sub(
            &padv(hb, b1)?
                .scale(-1.0)
                .sub(&padv(b1, hb)?)?
                .add(&padv(b1, b1)?)?,
        )?;
    let g1 = padv(hu, y)?
        .add(&padv(y, hu)?)?
        .sub(&padv(u1, y)?)?
        .sub(&padv(y, u1)?)?
        .sub(
            &padv(hb, z)?
                .add(&padv(z, hb)?)?
                .sub(&padv(b1, z)?)?
                .sub(&padv(z, b1)?)?,
        )?;
    let g2 = padv(y, y)?.sub(&padv(z, z)?)?;
    let k0 = padv(hu, b1)?
        .scale(-1.0)
        .sub(&padv(u1, hb)?)?
        .add(&padv(u1, b1)?)?
        .sub(
            &padv(hb, u1)?
                .scale(-1.0)
                .sub(&padv(b1, hu)?)?
                .add(&padv(b1, u1)?)?,
        )?;
    let k1 = padv(hu, z)?
        .add(&padv(y, hb)?)?
        .sub(&padv(u1, z)?)?
        .sub(&padv(y, b1)?)?
        .sub(
            &padv(hb, y)?
                .add(&padv(z, hu)?)?
                .sub(&padv(b1, y)?)?
                .sub(&padv(z, u1)?)?,
        )?;
    let k2 = padv(y, z)?.sub(&padv(z, y)?)?;
    Ok(SourceTerms {
        g0,
        g1,
        g2,
        k0,
        k1,
        k2,
    })
}

// ---------------------------------------------------------------------------
// residual verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_residual_y: f64,
    pub max_residual_z: f64,
    /// Field scale used for normalization.
    pub scale: f64,
}

impl ResidualReport {
    pub fn worst(&self) -> f64 {
        self.max_residual_y.max(self.max_residual_z)
    }
}

/// Max over samples of `|∂_t y − Δy + G₀+G₁+G₂|` (and the z analogue),
/// normalized by the trajectory scale. `∂_t` by central finite differences,
/// `Δ` exactly per mode.
pub fn residual_check(
    dec: &Decomposition,
    sources: &SourceTerms,
    samples: &[([f64; 3], f64)],
) -> Result<ResidualReport> {
    let g = sources.g_total()?;
    let k = sources.k_total()?;
    let lap_y = dec.y.laplacian();
    let lap_z = dec.z.laplacian();
    let mut scale = 0.0f64;
    for &(x, t) in samples {
        for f in [&dec.y, &dec.z, &g, &k] {
            for v in f.eval(x, t) {
                scale = scale.max(v.abs());
            }
        }
    }
    let scale = scale.max(1e-300);
    let mut worst_y = 0.0f64;
    let mut worst_z = 0.0f64;
    for &(x, t) in samples {
        let h = 1e-5 * t.max(0.01);
        let t0 = t.max(1.5 * h);
        for comp in 0..3 {
            let dy_dt = (dec.y.eval(x, t0 + h)[comp] - dec.y.eval(x, t0 - h)[comp]) / (2.0 * h);
            let ry = dy_dt - lap_y.eval(x, t0)[comp] + g.eval(x, t0)[comp];
            worst_y = worst_y.max(ry.abs());
            let dz_dt = (dec.z.eval(x, t0 + h)[comp] - dec.z.eval(x, t0 - h)[comp]) / (2.0 * h);
            let rz = dz_dt - lap_z.eval(x, t0)[comp] + k.eval(x, t0)[comp];
            worst_z = worst_z.max(rz.abs());
        }
    }
    Ok(ResidualReport {
        max_residual_y: worst_y / scale,
        max_residual_z: worst_z / scale,
        scale,
    })
}

// ---------------------------------------------------------------------------
// pressure recovery
// ---------------------------------------------------------------------------

/// Mean-zero spectral scalar field.
pub struct ScalarField {
    pub n: usize,
    pub data: Vec<rustfft::num_complex::Complex64>,
}

impl ScalarField {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, c| a.max(c.norm()))
    }

    pub fn coeff(&self, k: [i64; 3]) -> rustfft::num_complex::Complex64 {
        let n = self.n as i64;
        let idx = |c: i64| if c >= 0 { c as usize } else { (c + n) as usize };
        self.data[(idx(k[2]) * self.n + idx(k[1])) * self.n + idx(k[0])]
    }
}

/// Pressure from `−Δp = div((u·∇)u − (b·∇)b)`, solved spectrally:
/// `p̂ = i (k·N̂)/|k|²`, mean-zero by construction.
pub fn recover_pressure(
    sp: &Spectral,
    u: &GridField,
    b: &GridField,
    scratch: &mut RhsScratch,
) -> Result<ScalarField> {
    use crate::grid::wavenumber;
    use rustfft::num_complex::Complex64;
    let n = u.n();
    let uu = advection(sp, u, u, scratch)?;
    let bb = advection(sp, b, b, scratch)?;
    let mut p = vec![Complex64::new(0.0, 0.0); n * n * n];
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let k = [
                    wavenumber(ix, n) as f64,
                    wavenumber(iy, n) as f64,
                    wavenumber(iz, n) as f64,
                ];
                let ksq = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if ksq == 0.0 {
                    continue;
                }
                let i = (iz * n + iy) * n + ix;
                let nx = uu.component(0)[i] - bb.component(0)[i];
                let ny = uu.component(1)[i] - bb.component(1)[i];
                let nz = uu.component(2)[i] - bb.component(2)[i];
                let kdot = nx * k[0] + ny * k[1] + nz * k[2];
                p[i] = Complex64::new(0.0, 1.0) * kdot / ksq;
            }
        }
    }
    Ok(ScalarField { n, data: p })
}

// ---------------------------------------------------------------------------
// audits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowRow {
    pub alpha: u64,
    pub window: (f64, f64),
    pub value_u: f64,
    pub value_b: f64,
    /// value ÷ Q^{-1/2} (interior windows) or ÷ Q/√r (tail window).
    pub ratio_u: f64,
    pub ratio_b: f64,
    /// diagnostics: the low/active/diffused wave-group splits for u
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub is_tail: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowedXtReport {
    pub rows: Vec<WindowRow>,
    pub q: u64,
    pub r: u64,
}

/// Windowed X-norms of the heat flows `e^{tΔ}u₀`, `e^{tΔ}b₀` over the
/// schedule, with the wave-group split diagnostics. Interior windows are
/// measured against `Q^{-1/2}`, the tail window `[T_β, T]` against `Q/√r`.
pub fn audit_windowed_xt(
    ws: &WaveSystem,
    params: &BPParams,
    schedule: &TimeSchedule,
    quad: &QuadSpec,
) -> Result<WindowedXtReport> {
    let (u0, b0) = crate::construction::build_initial_data(ws, params.q)?;
    let hu = u0.heat_propagate();
    let hb = b0.heat_propagate();
    let q = params.q as f64;
    let r = params.r as f64;
    let t_end = params.t_horizon;

    // partial heat flows for the L1/L2/L3 split (1-based wave index s)
    let partial = |lo: usize, hi: usize| -> Result<ModeField> {
        let mut f = ModeField::new();
        for (s, pair) in ws.pairs.iter().enumerate() {
            let s1 = s + 1;
            if s1 < lo || s1 > hi {
                continue;
            }
            let k = pair
                .k()
                .ok_or_else(|| Error::invalid("windowed audit needs representable magnitudes"))?;
            let amp = q / r.sqrt() * pair.m.as_f64();
            f.insert_mode(
                k,
                crate::trig::Parity::Cos,
                [amp * pair.v[0], amp * pair.v[1], amp * pair.v[2]],
                &ExpPoly::constant(1.0),
            )?;
        }
        Ok(f.heat_propagate())
    };

    let entries = &schedule.entries;
    let mut windows: Vec<(u64, f64, f64, Option<(u64, u64)>)> = Vec::new();
    if let Some(first) = entries.first() {
        windows.push((0, 0.0, first.t_alpha, None));
    }
    for w in entries.windows(2) {
        windows.push((
            w[0].alpha,
            w[0].t_alpha,
            w[1].t_alpha,
            Some((w[1].r_alpha, w[0].r_alpha)),
        ));
    }
    let t_beta = schedule.t_beta();
    let has_tail = t_end > t_beta;
    if has_tail {
        windows.push((entries.len() as u64, t_beta, t_end, None));
    }

    let mut rows = Vec::new();
    for (alpha, w0, w1, groups) in windows {
        let big_t = w1;
        let xu = xt_norm_window(&hu, big_t, (w0, w1), quad)?;
        let xb = xt_norm_window(&hb, big_t, (w0, w1), quad)?;
        let is_tail = has_tail && w0 == t_beta;
        let denom = if is_tail { q / r.sqrt() } else { q.powf(-0.5) };
        let (l1, l2, l3) = if let Some((r_next, r_this)) = groups {
            // L1: s < r_{α+1}; L2: r_{α+1} ≤ s ≤ r_α; L3: s > r_α
            let f1 = partial(1, r_next.saturating_sub(1) as usize)?;
            let f2 = partial(r_next.max(1) as usize, r_this as usize)?;
            let f3 = partial(r_this as usize + 1, ws.pairs.len())?;
            (
                xt_norm_window(&f1, big_t, (w0, w1), quad)?.total(),
                xt_norm_window(&f2, big_t, (w0, w1), quad)?.total(),
                xt_norm_window(&f3, big_t, (w0, w1), quad)?.total(),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        rows.push(WindowRow {
            alpha,
            window: (w0, w1),
            value_u: xu.total(),
            value_b: xb.total(),
            ratio_u: xu.total() / denom,
            ratio_b: xb.total() / denom,
            l1,
            l2,
            l3,
            is_tail,
        });
    }
    Ok(WindowedXtReport {
        rows,
        q: params.q,
        r: params.r,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthRow {
    pub t: f64,
    pub y_xt: f64,
    pub z_xt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
    /// `Q³ (1/r + √T_β)` — the single-window comparison quantity.
    pub window_budget: f64,
    /// `Q^{β+2} (1/r + √T_β)` — the iterated comparison quantity.
    pub iterated_budget: f64,
    /// `4 Q⁴ T` and `4 Q⁴ √T`.
    pub four_q4_t: f64,
    pub four_q4_sqrt_t: f64,
    pub y_final_sup: f64,
    pub z_final_sup: f64,
    pub resonant_amplitude_at_t: f64,
    /// The desk-scale consistency condition that makes inflation visible:
    /// `‖y(T)‖_∞ + ‖z(T)‖_∞ ≤ 0.1 · |b₁₀ amplitude|(T)`.
    pub remainder_below_tenth_of_resonant: bool,
}

/// X-norm growth of the remainders over the window ends, with the comparison
/// quantities evaluated alongside.
pub fn audit_growth(
    dec: &Decomposition,
    params: &BPParams,
    schedule: &TimeSchedule,
    ws: &WaveSystem,
    quad: &QuadSpec,
) -> Result<GrowthTable> {
    let q = params.q as f64;
    let r = params.r as f64;
    let t_end = params.t_horizon;
    let t_beta = schedule.t_beta();
    let beta = schedule.beta() as f64;
    let mut rows = Vec::new();
    let mut ts: Vec<f64> = schedule
        .entries
        .iter()
        .map(|e| e.t_alpha)
        .filter(|&t| t < t_end)
        .collect();
    ts.push(t_end);
    for t in ts {
        let y_xt = xt_norm(&dec.y, t, quad)?.total();
        let z_xt = xt_norm(&dec.z, t, quad)?.total();
        rows.push(GrowthRow { t, y_xt, z_xt });
    }
    let amp = crate::construction::resonant_amplitude(ws, params.q);
    let resonant_at_t = amp.eval(t_end).abs();
    let y_final = crate::norms::linf_mode(&dec.y, t_end);
    let z_final = crate::norms::linf_mode(&dec.z, t_end);
    Ok(GrowthTable {
        rows,
        window_budget: q.powi(3) * (1.0 / r + t_beta.sqrt()),
        iterated_budget: q.powf(beta + 2.0) * (1.0 / r + t_beta.sqrt()),
        four_q4_t: 4.0 * q.powi(4) * t_end,
        four_q4_sqrt_t: 4.0 * q.powi(4) * t_end.sqrt(),
        y_final_sup: y_final,
        z_final_sup: z_final,
        resonant_amplitude_at_t: resonant_at_t,
        remainder_below_tenth_of_resonant: y_final + z_final <= 0.1 * resonant_at_t,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
    pub seed: u64,
}

/// Empirical boundedness constant of B in the X-norm surrogate:
/// max over random band-limited caloric trajectories of
/// `‖B(u,v)‖ / (‖u‖·‖v‖)`. Deterministic per seed.
pub fn probe_bilinear_boundedness(
    samples: usize,
    seed: u64,
    big_t: f64,
    quad: &QuadSpec,
) -> Result<ProbeReport> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut gen_field = |rng: &mut ChaCha8Rng| -> Result<ModeField> {
            let mut f = ModeField::new();
            for _ in 0..rng.gen_range(1..4) {
                let k = [
                    rng.gen_range(-4i64..=4),
                    rng.gen_range(-4..=4),
                    rng.gen_range(-4..=4),
                ];
                if k == [0, 0, 0] {
                    continue;
                }
                let a = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                let parity = if rng.gen_bool(0.5) {
                    crate::trig::Parity::Cos
                } else {
                    crate::trig::Parity::Sin
                };
                f.insert_mode(k, parity, a, &ExpPoly::constant(1.0))?;
            }
            Ok(f.leray_project())
        };
        let u0 = gen_field(&mut rng)?;
        let v0 = gen_field(&mut rng)?;
        if u0.is_empty() || v0.is_empty() {
            continue;
        }
        let u = u0.heat_propagate();
        let v = v0.heat_propagate();
        let nu = xt_norm(&u, big_t, quad)?.total();
        let nv = xt_norm(&v, big_t, quad)?.total();
        if nu == 0.0 || nv == 0.0 {
            continue;
        }
        let b = bilinear_b(&u, &v)?;
        let nb = xt_norm(&b, big_t, quad)?.total();
        ratios.push(nb / (nu * nv));
    }
    let max_ratio = ratios.iter().fold(0.0f64, |a, &x| a.max(x));
    Ok(ProbeReport {
        max_ratio,
        ratios,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{
        build_initial_data, build_schedule, build_wave_system, closed_form_first_iterates,
        two_wave_interaction, BPParams, CascadeLaw,
    };
    use crate::trig::{Parity, TrigMode};

    fn quad() -> QuadSpec {
        QuadSpec {
            centers_per_dim: 8,
            n_radii: 8,
            r_min_frac: 1e-3,
        }
    }

    fn two_wave_data(scale: f64) -> (ModeField, ModeField) {
        let u0 = ModeField::from_modes(
            vec![TrigMode {
                k: [2, 0, 0],
                parity: Parity::Cos,
                a: [0.0, 0.0, scale],
                coeff: ExpPoly::constant(1.0),
            }],
            true,
        )
        .unwrap();
        let s11 = (11.0f64).sqrt() / 4.0;
        let b0 = ModeField::from_modes(
            vec![TrigMode {
                k: [2, -1, 0],
                parity: Parity::Cos,
                a: [0.25 * scale, 0.5 * scale, s11 * scale],
                coeff: ExpPoly::constant(1.0),
            }],
            true,
        )
        .unwrap();
        (u0, b0)
    }

    fn max_diff_at_samples(a: &ModeField, b: &ModeField) -> f64 {
        let mut worst = 0.0f64;
        for &(x, t) in &[
            ([0.3, 1.1, 2.0], 0.05),
            ([2.0, 0.2, 4.4], 0.3),
            ([5.5, 3.3, 0.1], 1.0),
            ([1.0, 1.0, 1.0], 0.01),
        ] {
            let va = a.eval(x, t);
            let vb = b.eval(x, t);
            for j in 0..3 {
                worst = worst.max((va[j] - vb[j]).abs());
            }
        }
        worst
    }

    #[test]
    fn bilinear_b_vanishes_on_cascade_velocity_family() {
        let p = BPParams {
            delta: None,
            q: 1,
            r: 3,
            k0_mag: 2,
            law: CascadeLaw::Tempered,
            t_horizon: 0.05,
        };
        let ws = build_wave_system(&p).unwrap();
        let (u0, _) = build_initial_data(&ws, 1).unwrap();
        let hu = u0.heat_propagate();
        let b = bilinear_b(&hu, &hu).unwrap();
        assert!(b.is_empty(), "u0 family must self-advect to zero");
    }

    #[test]
    fn bilinear_b_zero_and_homogeneity() {
        let (u0, b0) = two_wave_data(1.0);
        let hu = u0.heat_propagate();
        let hb = b0.heat_propagate();
        assert!(bilinear_b(&ModeField::new(), &hu).unwrap().is_empty());
        assert!(bilinear_b(&hu, &ModeField::new()).unwrap().is_empty());
        let b1 = bilinear_b(&hb.scale(2.0), &hu).unwrap();
        let b2 = bilinear_b(&hb, &hu).unwrap().scale(2.0);
        assert!(max_diff_at_samples(&b1, &b2) < 1e-12);
    }

    #[test]
    fn generic_b_matches_two_wave_closed_form() {
        let (u0, b0) = two_wave_data(1.0);
        let (_, b1_generic) = first_iterates_generic(&u0, &b0).unwrap();
        let tw = two_wave_interaction(
            [2, 0, 0],
            [2, -1, 0],
            [0.0, 0.0, 1.0],
            [0.25, 0.5, (11.0f64).sqrt() / 4.0],
            1.0,
        )
        .unwrap();
        let closed = tw.b1_0.add(&tw.b1_1).unwrap();
        assert!(
            max_diff_at_samples(&b1_generic, &closed) < 1e-10,
            "generic vs closed form: {}",
            max_diff_at_samples(&b1_generic, &closed)
        );
    }

    #[test]
    fn generic_b_matches_cascade_closed_forms() {
        let p = BPParams {
            delta: None,
            q: 1,
            r: 2,
            k0_mag: 2,
            law: CascadeLaw::Tempered,
            t_horizon: 0.05,
        };
        let ws = build_wave_system(&p).unwrap();
        let (u0, b0) = build_initial_data(&ws, p.q).unwrap();
        let (u1_g, b1_g) = first_iterates_generic(&u0, &b0).unwrap();
        let cf = closed_form_first_iterates(&ws, p.q).unwrap();
        let scale = u1_g.max_coeff().max(b1_g.max_coeff()).max(1.0);
        assert!(
            max_diff_at_samples(&u1_g, &cf.u1) < 1e-10 * scale,
            "u1 mismatch {}",
            max_diff_at_samples(&u1_g, &cf.u1)
        );
        let b1_closed = cf.b1().unwrap();
        assert!(
            max_diff_at_samples(&b1_g, &b1_closed) < 1e-10 * scale,
            "b1 mismatch {}",
            max_diff_at_samples(&b1_g, &b1_closed)
        );
    }

    #[test]
    fn antisymmetry_cancellation_for_equal_data() {
        let p = BPParams {
            delta: None,
            q: 1,
            r: 2,
            k0_mag: 2,
            law: CascadeLaw::Tempered,
            t_horizon: 0.05,
        };
        let ws = build_wave_system(&p).unwrap();
        let b0 = crate::construction::build_combined_data(&ws, 1).unwrap();
        let (u1, b1) = first_iterates_generic(&b0, &b0).unwrap();
        assert!(u1.is_empty(), "u1 must cancel exactly for u0 = b0");
        assert!(b1.is_empty(), "b1 must cancel exactly for u0 = b0");
    }

    #[test]
    fn picard_depth_one_reproduces_first_iterates() {
        let (u0, b0) = two_wave_data(0.1);
        let res = picard_solve(&u0, &b0, 0.5, PicardStop::Depth(1), &quad()).unwrap();
        let (u1, b1) = first_iterates_generic(&u0, &b0).unwrap();
        let expect_u = u0.heat_propagate().sub(&u1).unwrap();
        let expect_b = b0.heat_propagate().sub(&b1).unwrap();
        assert!(max_diff_at_samples(&res.u, &expect_u) < 1e-10);
        assert!(max_diff_at_samples(&res.b, &expect_b) < 1e-10);
    }

    #[test]
    fn picard_fixed_point_on_exact_solution() {
        let f = ModeField::from_modes(
            vec![TrigMode {
                k: [1, 0, 0],
                parity: Parity::Sin,
                a: [0.0, 0.0, 0.01],
                coeff: ExpPoly::constant(1.0),
            }],
            true,
        )
        .unwrap();
        let res = picard_solve(&f, &f, 0.5, PicardStop::Depth(3), &quad()).unwrap();
        let heat = f.heat_propagate();
        assert!(max_diff_at_samples(&res.u, &heat) < 1e-14);
        assert!(max_diff_at_samples(&res.b, &heat) < 1e-14);
        for &inc in &res.record.increments {
            assert!(inc < 1e-14);
        }
    }

    #[test]
    fn picard_contracts_geometrically_on_small_data() {
        let (u0, b0) = two_wave_data(1e-3);
        let res = picard_solve(&u0, &b0, 0.25, PicardStop::Depth(4), &quad()).unwrap();
        let inc = &res.record.increments;
        assert!(inc.len() >= 4);
        for w in inc.windows(2) {
            if w[0] > 1e-300 {
                let ratio = w[1] / w[0];
                assert!(ratio <= 0.1, "increment ratio {ratio} too large: {inc:?}");
            }
        }
    }

    #[test]
    fn decompose_depth_one_gives_zero_remainder() {
        let (u0, b0) = two_wave_data(0.05);
        let res = picard_solve(&u0, &b0, 0.5, PicardStop::Depth(1), &quad()).unwrap();
        let dec = decompose(&res.u, &res.b, &u0, &b0).unwrap();
        let scale = res.u.max_coeff();
        assert!(dec.y.max_coeff() <= 1e-10 * scale);
        assert!(dec.z.max_coeff() <= 1e-10 * scale);
        let zdec = decompose(
            &ModeField::new(),
            &ModeField::new(),
            &ModeField::new(),
            &ModeField::new(),
        )
        .unwrap();
        assert!(zdec.y.is_empty() && zdec.z.is_empty() && zdec.u1.is_empty());
    }

    #[test]
    fn sources_vanish_without_remainder_and_scale_correctly() {
        let (u0, b0) = two_wave_data(0.1);
        let res = picard_solve(&u0, &b0, 0.5, PicardStop::Depth(2), &quad()).unwrap();
        let mut dec = decompose(&res.u, &res.b, &u0, &b0).unwrap();
        let y_saved = dec.y.clone();
        let z_saved = dec.z.clone();
        dec.y = ModeField::new();
        dec.z = ModeField::new();
        let s0 = assemble_sources(&dec).unwrap();
        assert!(s0.g1.is_empty() && s0.g2.is_empty());
        assert!(s0.k1.is_empty() && s0.k2.is_empty());
        assert!(!s0.g0.is_empty() || !s0.k0.is_empty());

        dec.y = y_saved;
        dec.z = z_saved;
        let s1 = assemble_sources(&dec).unwrap();
        let c = 2.0;
        dec.y = dec.y.scale(c);
        dec.z = dec.z.scale(c);
        let s2 = assemble_sources(&dec).unwrap();
        let scale = s1.g1.max_coeff().max(s1.g2.max_coeff()).max(1.0);
        assert!(max_diff_at_samples(&s2.g1, &s1.g1.scale(c)) <= 1e-12 * scale);
        assert!(max_diff_at_samples(&s2.g2, &s1.g2.scale(c * c)) <= 1e-12 * scale);
        assert!(max_diff_at_samples(&s2.k1, &s1.k1.scale(c)) <= 1e-12 * scale);
        assert!(max_diff_at_samples(&s2.k2, &s1.k2.scale(c * c)) <= 1e-12 * scale);
        assert!(max_diff_at_samples(&s2.g0, &s1.g0) <= 1e-14 * scale);
    }

    #[test]
    fn k0_cancels_pairwise_for_equal_data() {
        let p = BPParams {
            delta: None,
            q: 1,
            r: 2,
            k0_mag: 2,
            law: CascadeLaw::Tempered,
            t_horizon: 0.05,
        };
        let ws = build_wave_system(&p).unwrap();
        let d0 = crate::construction::build_combined_data(&ws, 1).unwrap();
        let res = picard_solve(&d0, &d0, 0.05, PicardStop::Depth(2), &quad()).unwrap();
        let dec = decompose(&res.u, &res.b, &d0, &d0).unwrap();
        let s = assemble_sources(&dec).unwrap();
        assert!(s.k0.is_empty(), "K0 must cancel for u0 = b0");
        assert!(s.g0.is_empty(), "G0 must cancel for u0 = b0");
    }

    #[test]
    fn residuals_shrink_with_picard_depth() {
        let (u0, b0) = two_wave_data(0.05);
        let samples: Vec<([f64; 3], f64)> = vec![
            ([0.5, 1.0, 2.0], 0.05),
            ([1.5, 0.1, 3.0], 0.1),
            ([4.0, 2.0, 0.7], 0.2),
            ([0.1, 5.0, 1.0], 0.15),
        ];
        let mut worst = Vec::new();
        for depth in [2usize, 3] {
            let res = picard_solve(&u0, &b0, 0.25, PicardStop::Depth(depth), &quad()).unwrap();
            let dec = decompose(&res.u, &res.b, &u0, &b0).unwrap();
            let s = assemble_sources(&dec).unwrap();
            let rep = residual_check(&dec, &s, &samples).unwrap();
            worst.push(rep.worst());
        }
        assert!(
            worst[1] * 10.0 <= worst[0],
            "depth-3 residual {} not 10x below depth-2 {}",
            worst[1],
            worst[0]
        );
    }

    #[test]
    fn residual_floor_on_exact_solution() {
        let f = ModeField::from_modes(
            vec![TrigMode {
                k: [1, 0, 0],
                parity: Parity::Sin,
                a: [0.0, 0.0, 0.5],
                coeff: ExpPoly::constant(1.0),
            }],
            true,
        )
        .unwrap();
        let res = picard_solve(&f, &f, 0.5, PicardStop::Depth(2), &quad()).unwrap();
        let dec = decompose(&res.u, &res.b, &f, &f).unwrap();
        let s = assemble_sources(&dec).unwrap();
        let samples = vec![([0.5, 1.0, 2.0], 0.1), ([2.5, 0.3, 1.0], 0.3)];
        let rep = residual_check(&dec, &s, &samples).unwrap();
        assert!(rep.worst() <= 1e-6, "residual {}", rep.worst());
        let zdec = decompose(
            &ModeField::new(),
            &ModeField::new(),
            &ModeField::new(),
            &ModeField::new(),
        )
        .unwrap();
        let zs = assemble_sources(&zdec).unwrap();
        let zrep = residual_check(&zdec, &zs, &samples).unwrap();
        assert_eq!(zrep.max_residual_y, 0.0);
        assert_eq!(zrep.max_residual_z, 0.0);
    }

    #[test]
    fn pressure_vanishes_for_equal_single_wave() {
        let f = ModeField::from_modes(
            vec![TrigMode {
                k: [1, 0, 0],
                parity: Parity::Sin,
                a: [0.0, 0.0, 1.0],
                coeff: ExpPoly::constant(1.0),
            }],
            true,
        )
        .unwrap();
        let n = 16;
        let u = sample(&f, n, 0.0).unwrap();
        let b = u.clone();
        let sp = Spectral::new(n);
        let mut scratch = RhsScratch::new(n);
        let p = recover_pressure(&sp, &u, &b, &mut scratch).unwrap();
        assert!(p.max_abs() < 1e-14);
        let z = GridField::zeros(n);
        let pz = recover_pressure(&sp, &z, &z, &mut scratch).unwrap();
        assert_eq!(pz.max_abs(), 0.0);
    }

    #[test]
    fn pressure_matches_taylor_green_closed_form() {
        // u = (cos x sin y, −sin x cos y, 0), b = 0: p = −(cos 2x + cos 2y)/4
        let mut f = ModeField::new();
        // cos x sin y = ½[sin(x+y) − sin(x−y)]
        f.insert_mode(
            [1, 1, 0],
            Parity::Sin,
            [0.5, 0.0, 0.0],
            &ExpPoly::constant(1.0),
        )
        .unwrap();
        f.insert_mode(
            [1, -1, 0],
            Parity::Sin,
            [-0.5, 0.0, 0.0],
            &ExpPoly::constant(1.0),
        )
        .unwrap();
        // −sin x cos y = −½[sin(x+y) + sin(x−y)]
        f.insert_mode(
            [1, 1, 0],
            Parity::Sin,
            [0.0, -0.5, 0.0],
            &ExpPoly::constant(1.0),
        )
        .unwrap();
        f.insert_mode(
            [1, -1, 0],
            Parity::Sin,
            [0.0, -0.5, 0.0],
            &ExpPoly::constant(1.0),
        )
        .unwrap();
        let n = 16;
        let u = sample(&f, n, 0.0).unwrap();
        assert!(u.divergence_rel() < 1e-14);
        let b = GridField::zeros(n);
        let sp = Spectral::new(n);
        let mut scratch = RhsScratch::new(n);
        let p = recover_pressure(&sp, &u, &b, &mut scratch).unwrap();
        for k in [[2i64, 0, 0], [0, 2, 0]] {
            let c = p.coeff(k);
            assert!(
                (c.re + 0.125).abs() < 1e-10 && c.im.abs() < 1e-12,
                "pressure coefficient at {k:?} is {c}"
            );
        }
        assert_eq!(p.coeff([0, 0, 0]).norm(), 0.0);
    }

    #[test]
    fn windowed_audit_interior_ratios_bounded() {
        let p = BPParams {
            delta: None,
            q: 2,
            r: 8,
            k0_mag: 4,
            law: CascadeLaw::Paper,
            t_horizon: 0.05,
        };
        let ws = build_wave_system(&p).unwrap();
        let schedule = build_schedule(&p, &ws).unwrap();
        let rep = audit_windowed_xt(&ws, &p, &schedule, &quad()).unwrap();
        for row in &rep.rows {
            if !row.is_tail && row.alpha > 0 {
                assert!(
                    row.ratio_u <= 10.0 && row.ratio_b <= 10.0,
                    "window {} ratio too large: {row:?}",
                    row.alpha
                );
            }
        }
        let tail = rep.rows.iter().find(|r| r.is_tail).expect("tail window");
        assert!(tail.ratio_u <= 10.0 && tail.ratio_b <= 10.0);
    }

    #[test]
    fn windowed_audit_single_window_equals_full_norm() {
        let p = BPParams {
            delta: None,
            q: 1,
            r: 2,
            k0_mag: 2,
            law: CascadeLaw::Tempered,
            t_horizon: 0.3,
        };
        let ws = build_wave_system(&p).unwrap();
        let schedule = build_schedule(&p, &ws).unwrap();
        let rep = audit_windowed_xt(&ws, &p, &schedule, &quad()).unwrap();
        let (u0, _) = build_initial_data(&ws, p.q).unwrap();
        let full = xt_norm(&u0.heat_propagate(), p.t_horizon, &quad())
            .unwrap()
            .total();
        let max_window = rep.rows.iter().map(|r| r.value_u).fold(0.0f64, f64::max);
        assert!(
            (max_window - full).abs() <= 0.1 * full,
            "windowed {max_window} vs full {full}"
        );
    }

    #[test]
    fn growth_table_zero_for_cancellation_data() {
        let p = BPParams {
            delta: None,
            q: 1,
            r: 2,
            k0_mag: 2,
            law: CascadeLaw::Tempered,
            t_horizon: 0.1,
        };
        let ws = build_wave_system(&p).unwrap();
        let schedule = build_schedule(&p, &ws).unwrap();
        let d0 = crate::construction::build_combined_data(&ws, 1).unwrap();
        let res = picard_solve(&d0, &d0, p.t_horizon, PicardStop::Depth(1), &quad()).unwrap();
        let dec = decompose(&res.u, &res.b, &d0, &d0).unwrap();
        let table = audit_growth(&dec, &p, &schedule, &ws, &quad()).unwrap();
        for row in &table.rows {
            assert!(row.y_xt <= 1e-12);
            assert!(row.z_xt <= 1e-12);
        }
    }

    #[test]
    fn probe_is_deterministic_and_stable() {
        let a = probe_bilinear_boundedness(6, 42, 0.5, &quad()).unwrap();
        let b = probe_bilinear_boundedness(6, 42, 0.5, &quad()).unwrap();
        assert_eq!(a.max_ratio, b.max_ratio);
        assert_eq!(a.ratios, b.ratios);
        assert!(a.max_ratio.is_finite() && a.max_ratio > 0.0);
        let c = probe_bilinear_boundedness(6, 43, 0.5, &quad()).unwrap();
        let hi = a.max_ratio.max(c.max_ratio);
        let lo = a.max_ratio.min(c.max_ratio);
        assert!(
            hi / lo <= 2.0,
            "seed instability: {} vs {}",
            a.max_ratio,
            c.max_ratio
        );
    }

    #[test]
    fn probe_invariant_under_amplitude_scaling() {
        let (u0, b0) = two_wave_data(0.1);
        let hu = u0.heat_propagate();
        let hb = b0.heat_propagate();
        let q = quad();
        let ratio = |hu: &ModeField, hb: &ModeField| -> f64 {
            let nb = xt_norm(&bilinear_b(hu, hb).unwrap(), 0.5, &q)
                .unwrap()
                .total();
            nb / (xt_norm(hu, 0.5, &q).unwrap().total() * xt_norm(hb, 0.5, &q).unwrap().total())
        };
        let r1 = ratio(&hu, &hb);
        let r2 = ratio(&hu.scale(2.0), &hb.scale(2.0));
        assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
    }

    #[test]
    fn grid_bilinear_matches_mode_closed_form() {
        // two-wave configuration: grid-engine B vs exact engine; the
        // acceptance suite runs the full tolerance sweep
        let (u0, b0) = two_wave_data(1.0);
        let n = 32;
        let sp = Spectral::new(n);
        let mut scratch = RhsScratch::new(n);
        let u0g = sample(&u0, n, 0.0).unwrap();
        let b0g = sample(&b0, n, 0.0).unwrap();
        let b_mode = bilinear_b(&b0.heat_propagate(), &u0.heat_propagate()).unwrap();
        for &t in &[0.05, 0.3] {
            let b_grid = bilinear_b_grid_heat(&sp, &b0g, &u0g, t, 1e-9, &mut scratch).unwrap();
            let b_ref = sample(&b_mode.at_time(t), n, 0.0).unwrap();
            let mut diff = b_grid.clone();
            diff.add_scaled(&b_ref, -1.0);
            assert!(
                diff.max_abs() <= 1e-7,
                "t={t}: grid/mode mismatch {}",
                diff.max_abs()
            );
        }
    }
}

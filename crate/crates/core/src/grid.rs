//! Pseudo-spectral solver for the incompressible MHD system on an N³
//! periodic grid.
//!
//! State lives in spectral space (full complex lattice, conjugate-symmetric
//! for real fields). The quadratic terms are evaluated in physical space and
//! dealiased by the 2/3 rule; diffusion is exact through the integrating
//! factor `e^{-|k|² dt}`, so stiffness at large |k|² never constrains the
//! step. Time stepping is RK4 on the integrating-factor form.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expoly::ExpPoly;
use crate::trig::{norm_sq, ModeField, Parity, TrigMode};

/// Spectral representation of a real 3-vector field on the dual lattice
/// `{-N/2 .. N/2-1}³`, stored as `[comp][z][y][x]` with x fastest.
#[derive(Debug, Clone)]
pub struct GridField {
    n: usize,
    data: Vec<Complex64>,
}

/// Signed wavenumber of FFT index `i` for grid size `n`.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 - 1 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// FFT index of a signed wavenumber.
#[inline]
fn index_of(k: i64, n: usize) -> usize {
    if k >= 0 {
        k as usize
    } else {
        (k + n as i64) as usize
    }
}

/// 2/3-rule keep test: every component strictly below N/3 in magnitude.
#[inline]
pub fn in_dealias_band(k: [i64; 3], n: usize) -> bool {
    let lim = n as f64 / 3.0;
    k.iter().all(|&c| (c.abs() as f64) < lim)
}

impl GridField {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0, "grid size must be even and >= 4");
        GridField {
            n,
            data: vec![Complex64::new(0.0, 0.0); 3 * n * n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, comp: usize, ix: usize, iy: usize, iz: usize) -> usize {
        ((comp * self.n + iz) * self.n + iy) * self.n + ix
    }

    pub fn coeff(&self, comp: usize, k: [i64; 3]) -> Complex64 {
        let n = self.n;
        self.data[self.idx(
            comp,
            index_of(k[0], n),
            index_of(k[1], n),
            index_of(k[2], n),
        )]
    }

    pub fn coeff_mut(&mut self, comp: usize, k: [i64; 3]) -> &mut Complex64 {
        let n = self.n;
        let i = self.idx(
            comp,
            index_of(k[0], n),
            index_of(k[1], n),
            index_of(k[2], n),
        );
        &mut self.data[i]
    }

    pub fn component(&self, comp: usize) -> &[Complex64] {
        let n3 = self.n * self.n * self.n;
        &self.data[comp * n3..(comp + 1) * n3]
    }

    fn component_mut(&mut self, comp: usize) -> &mut [Complex64] {
        let n3 = self.n * self.n * self.n;
        &mut self.data[comp * n3..(comp + 1) * n3]
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    pub fn add_scaled(&mut self, other: &GridField, c: f64) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * c;
        }
    }

    /// Largest spectral coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, c| a.max(c.norm()))
    }

    /// `max_k |k·û(k)| / max_k |û(k)|`, the discrete divergence test.
    pub fn divergence_rel(&self) -> f64 {
        let n = self.n;
        let n3 = n * n * n;
        let mut worst = 0.0f64;
        let mut amp = 0.0f64;
        for iz in 0..n {
            let kz = wavenumber(iz, n) as f64;
            for iy in 0..n {
                let ky = wavenumber(iy, n) as f64;
                for ix in 0..n {
                    let kx = wavenumber(ix, n) as f64;
                    let i = (iz * n + iy) * n + ix;
                    let v = [self.data[i], self.data[n3 + i], self.data[2 * n3 + i]];
                    let mag = (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr()).sqrt();
                    amp = amp.max(mag);
                    let div = (v[0] * kx + v[1] * ky + v[2] * kz).norm();
                    worst = worst.max(div);
                }
            }
        }
        if amp == 0.0 {
            0.0
        } else {
            worst / amp
        }
    }

    /// Zero every mode outside the 2/3 band (and the mean mode).
    pub fn dealias(&mut self) {
        let n = self.n;
        for comp in 0..3 {
            for iz in 0..n {
                for iy in 0..n {
                    for ix in 0..n {
                        let k = [wavenumber(ix, n), wavenumber(iy, n), wavenumber(iz, n)];
                        if !in_dealias_band(k, n) || k == [0, 0, 0] {
                            let i = self.idx(comp, ix, iy, iz);
                            self.data[i] = Complex64::new(0.0, 0.0);
                        }
                    }
                }
            }
        }
    }

    /// True if no coefficient outside the 2/3 band exceeds `tol` relative to
    /// the field maximum.
    pub fn is_dealiased(&self, tol: f64) -> bool {
        let n = self.n;
        let cut = self.max_abs() * tol;
        for comp in 0..3 {
            for iz in 0..n {
                for iy in 0..n {
                    for ix in 0..n {
                        let k = [wavenumber(ix, n), wavenumber(iy, n), wavenumber(iz, n)];
                        if !in_dealias_band(k, n)
                            && self.data[self.idx(comp, ix, iy, iz)].norm() > cut
                        {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Multiply every mode by `e^{-|k|² t}` (exact heat flow).
    pub fn apply_heat(&mut self, t: f64) {
        debug_assert!(t >= 0.0);
        let n = self.n;
        let n3 = n * n * n;
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    let k = [wavenumber(ix, n), wavenumber(iy, n), wavenumber(iz, n)];
                    let x = norm_sq(k) * t;
                    let damp = if x > 700.0 { 0.0 } else { (-x).exp() };
                    let i = (iz * n + iy) * n + ix;
                    for comp in 0..3 {
                        self.data[comp * n3 + i] *= damp;
                    }
                }
            }
        }
    }

    /// Leray projection in spectral space: `û ← û − k (k·û)/|k|²`.
    pub fn leray_project(&mut self) {
        let n = self.n;
        let n3 = n * n * n;
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
                    let dot = self.data[i] * k[0]
                        + self.data[n3 + i] * k[1]
                        + self.data[2 * n3 + i] * k[2];
                    let f = dot / ksq;
                    self.data[i] -= f * k[0];
                    self.data[n3 + i] -= f * k[1];
                    self.data[2 * n3 + i] -= f * k[2];
                }
            }
        }
    }

    /// Total `Σ_k |û(k)|²` (kinetic energy up to the volume factor).
    pub fn spectral_energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Extract significant in-band modes into an exact-engine field with
    /// constant coefficients. Modes below `rel_tol` of the maximum are
    /// dropped; at most `cap` modes are returned (largest first).
    pub fn to_mode_field(&self, rel_tol: f64, cap: usize) -> Result<ModeField> {
        let n = self.n;
        let n3 = n * n * n;
        let cut = self.max_abs() * rel_tol;
        let mut picks: Vec<([i64; 3], [Complex64; 3], f64)> = Vec::new();
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    let k = [wavenumber(ix, n), wavenumber(iy, n), wavenumber(iz, n)];
                    if k == [0, 0, 0] {
                        continue;
                    }
                    // one representative per conjugate pair
                    match k.iter().find(|&&c| c != 0) {
                        Some(&c) if c > 0 => {}
                        _ => continue,
                    }
                    if k.iter().any(|&c| c == -(n as i64) / 2) {
                        continue; // Nyquist rows carry no clean pair
                    }
                    let i = (iz * n + iy) * n + ix;
                    let v = [self.data[i], self.data[n3 + i], self.data[2 * n3 + i]];
                    let mag = v.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
                    if mag > cut {
                        picks.push((k, v, mag));
                    }
                }
            }
        }
        picks.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
        picks.truncate(cap);
        let mut modes = Vec::new();
        for (k, v, _) in picks {
            // û(k) = (a - i b)/2 for a contribution a cos(k·x) + b sin(k·x)
            let a = [2.0 * v[0].re, 2.0 * v[1].re, 2.0 * v[2].re];
            let b = [-2.0 * v[0].im, -2.0 * v[1].im, -2.0 * v[2].im];
            if a.iter().any(|&c| c != 0.0) {
                modes.push(TrigMode {
                    k,
                    parity: Parity::Cos,
                    a,
                    coeff: ExpPoly::constant(1.0),
                });
            }
            if b.iter().any(|&c| c != 0.0) {
                modes.push(TrigMode {
                    k,
                    parity: Parity::Sin,
                    a: b,
                    coeff: ExpPoly::constant(1.0),
                });
            }
        }
        ModeField::from_modes(modes, false)
    }
}

// ---------------------------------------------------------------------------
// transforms
// ---------------------------------------------------------------------------

/// Cached 1D plans for one grid size; all 3D transforms run through it.
pub struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    /// In-place 3D transform of one scalar component.
    fn transform3(&self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * n * n);
        let plan = if forward { &self.fwd } else { &self.inv };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // x lines (contiguous)
        for line in data.chunks_exact_mut(n) {
            plan.process_with_scratch(line, &mut scratch);
        }
        // y lines (stride n)
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for iz in 0..n {
            for ix in 0..n {
                for iy in 0..n {
                    buf[iy] = data[(iz * n + iy) * n + ix];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for iy in 0..n {
                    data[(iz * n + iy) * n + ix] = buf[iy];
                }
            }
        }
        // z lines (stride n²)
        for iy in 0..n {
            for ix in 0..n {
                for iz in 0..n {
                    buf[iz] = data[(iz * n + iy) * n + ix];
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for iz in 0..n {
                    data[(iz * n + iy) * n + ix] = buf[iz];
                }
            }
        }
    }

    /// Unnormalized inverse 3D transform, exposed for evaluating trig sums on
    /// tensor grids of centers.
    pub fn transform3_inverse(&self, data: &mut [Complex64]) {
        self.transform3(data, false);
    }

    /// Physical samples of one spectral component (real parts; the imaginary
    /// residue of a conjugate-symmetric field is rounding noise).
    pub fn to_physical(&self, spec: &[Complex64], out: &mut [f64]) {
        let mut tmp = spec.to_vec();
        self.transform3(&mut tmp, false);
        for (o, c) in out.iter_mut().zip(&tmp) {
            *o = c.re;
        }
    }

    /// Spectral coefficients of one real physical component
    /// (with the 1/N³ normalization).
    pub fn to_spectral(&self, phys: &[f64], out: &mut [Complex64]) {
        let n3 = self.n * self.n * self.n;
        debug_assert_eq!(phys.len(), n3);
        for (o, &p) in out.iter_mut().zip(phys) {
            *o = Complex64::new(p, 0.0);
        }
        self.transform3(out, true);
        let scale = 1.0 / n3 as f64;
        for o in out.iter_mut() {
            *o *= scale;
        }
    }

    /// Physical samples of the spectral derivative `∂_dir` of a component.
    fn derivative_physical(&self, spec: &[Complex64], dir: usize, out: &mut [f64]) {
        let n = self.n;
        let mut tmp = vec![Complex64::new(0.0, 0.0); spec.len()];
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    let k = [wavenumber(ix, n), wavenumber(iy, n), wavenumber(iz, n)];
                    let i = (iz * n + iy) * n + ix;
                    tmp[i] = spec[i] * Complex64::new(0.0, k[dir] as f64);
                }
            }
        }
        self.transform3(&mut tmp, false);
        for (o, c) in out.iter_mut().zip(&tmp) {
            *o = c.re;
        }
    }

    /// L∞ of the physical field (vector magnitude over grid nodes).
    pub fn linf(&self, f: &GridField) -> f64 {
        let n3 = self.n * self.n * self.n;
        let mut phys = vec![0.0f64; n3];
        let mut sq = vec![0.0f64; n3];
        for comp in 0..3 {
            self.to_physical(f.component(comp), &mut phys);
            for (s, p) in sq.iter_mut().zip(&phys) {
                *s += p * p;
            }
        }
        sq.iter().fold(0.0f64, |a, &s| a.max(s)).sqrt()
    }
}

/// Inject an exact-engine field, evaluated at time `t`, into spectral
/// coefficients. Every component of every wave vector must lie strictly
/// inside the 2/3 band.
pub fn sample(f: &ModeField, n: usize, t: f64) -> Result<GridField> {
    let mut g = GridField::zeros(n);
    for ((k, parity), vc) in f.iter() {
        if !in_dealias_band(*k, n) {
            return Err(Error::OutsideBand(k[0], k[1], k[2], n));
        }
        let c = [vc[0].eval(t), vc[1].eval(t), vc[2].eval(t)];
        for comp in 0..3 {
            if c[comp] == 0.0 {
                continue;
            }
            match parity {
                Parity::Cos => {
                    *g.coeff_mut(comp, *k) += Complex64::new(0.5 * c[comp], 0.0);
                    *g.coeff_mut(comp, [-k[0], -k[1], -k[2]]) +=
                        Complex64::new(0.5 * c[comp], 0.0);
                }
                Parity::Sin => {
                    *g.coeff_mut(comp, *k) += Complex64::new(0.0, -0.5 * c[comp]);
                    *g.coeff_mut(comp, [-k[0], -k[1], -k[2]]) +=
                        Complex64::new(0.0, 0.5 * c[comp]);
                }
            }
        }
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// nonlinear right-hand side
// ---------------------------------------------------------------------------

/// Scratch buffers for RHS evaluation, reused across steps.
pub struct RhsScratch {
    phys_u: [Vec<f64>; 3],
    phys_b: [Vec<f64>; 3],
    acc_du: [Vec<f64>; 3],
    acc_db: [Vec<f64>; 3],
    deriv: Vec<f64>,
}

impl RhsScratch {
    pub fn new(n: usize) -> Self {
        let z = || vec![0.0f64; n * n * n];
        RhsScratch {
            phys_u: [z(), z(), z()],
            phys_b: [z(), z(), z()],
            acc_du: [z(), z(), z()],
            acc_db: [z(), z(), z()],
            deriv: z(),
        }
    }
}

/// `(u·∇)v` on the grid, dealiased (no projection, no sign).
pub fn advection(
    sp: &Spectral,
    u: &GridField,
    v: &GridField,
    scratch: &mut RhsScratch,
) -> Result<GridField> {
    let n = u.n;
    if !u.is_dealiased(1e-13) || !v.is_dealiased(1e-13) {
        return Err(Error::invalid(
            "input modes touch the dealias boundary (resolution overflow)",
        ));
    }
    for comp in 0..3 {
        sp.to_physical(u.component(comp), &mut scratch.phys_u[comp]);
        scratch.acc_du[comp].fill(0.0);
    }
    let n3 = n * n * n;
    for j in 0..3 {
        for c in 0..3 {
            sp.derivative_physical(v.component(j), c, &mut scratch.deriv);
            for i in 0..n3 {
                scratch.acc_du[j][i] += scratch.phys_u[c][i] * scratch.deriv[i];
            }
        }
    }
    let mut out = GridField::zeros(n);
    for comp in 0..3 {
        sp.to_spectral(&scratch.acc_du[comp], out.component_mut(comp));
    }
    out.dealias();
    Ok(out)
}

/// `du = -P[(u·∇)u - (b·∇)b]`, `db = -[(u·∇)b - (b·∇)u]`, both dealiased.
/// The magnetic RHS is divergence-free automatically; this is asserted.
pub fn nonlinear_rhs(
    sp: &Spectral,
    u: &GridField,
    b: &GridField,
    scratch: &mut RhsScratch,
) -> Result<(GridField, GridField)> {
    let n = u.n;
    if !u.is_dealiased(1e-13) || !b.is_dealiased(1e-13) {
        return Err(Error::invalid(
            "input modes touch the dealias boundary (resolution overflow)",
        ));
    }
    for comp in 0..3 {
        sp.to_physical(u.component(comp), &mut scratch.phys_u[comp]);
        sp.to_physical(b.component(comp), &mut scratch.phys_b[comp]);
        scratch.acc_du[comp].fill(0.0);
        scratch.acc_db[comp].fill(0.0);
    }
    let n3 = n * n * n;
    for j in 0..3 {
        for c in 0..3 {
            // ∂_c u_j : feeds (u·∇u)_j and (b·∇u)_j
            sp.derivative_physical(u.component(j), c, &mut scratch.deriv);
            for i in 0..n3 {
                let d = scratch.deriv[i];
                scratch.acc_du[j][i] += scratch.phys_u[c][i] * d;
                scratch.acc_db[j][i] -= scratch.phys_b[c][i] * d;
            }
            // ∂_c b_j : feeds (b·∇b)_j and (u·∇b)_j
            sp.derivative_physical(b.component(j), c, &mut scratch.deriv);
            for i in 0..n3 {
                let d = scratch.deriv[i];
                scratch.acc_du[j][i] -= scratch.phys_b[c][i] * d;
                scratch.acc_db[j][i] += scratch.phys_u[c][i] * d;
            }
        }
    }
    let mut du = GridField::zeros(n);
    let mut db = GridField::zeros(n);
    for comp in 0..3 {
        sp.to_spectral(&scratch.acc_du[comp], du.component_mut(comp));
        sp.to_spectral(&scratch.acc_db[comp], db.component_mut(comp));
    }
    du.dealias();
    db.dealias();
    du.leray_project();
    du.scale(-1.0);
    db.scale(-1.0);
    // The magnetic RHS is divergence-free by the cross-term identity; check
    // against the quadratic input scale (db itself may be exactly zero).
    if cfg!(debug_assertions) {
        let scale = u.max_abs() * b.max_abs() * n as f64;
        let div_db = db.divergence_rel() * db.max_abs();
        debug_assert!(
            div_db <= 1e-10 * scale.max(f64::MIN_POSITIVE),
            "magnetic nonlinearity lost divergence freeness: {div_db} vs scale {scale}"
        );
    }
    Ok((du, db))
}

// ---------------------------------------------------------------------------
// time integration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub t_end: f64,
    /// Fixed step; `None` selects `cfl_safety · dx / max|u,b|` clamped to
    /// `[dt_floor, dt_ceil]`.
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    pub dt_floor: f64,
    pub dt_ceil: f64,
    /// Times at which the trajectory is sampled (hit exactly).
    pub sample_times: Vec<f64>,
}

impl SolveConfig {
    pub fn new(t_end: f64, sample_times: Vec<f64>) -> Self {
        SolveConfig {
            t_end,
            dt: None,
            cfl_safety: 0.25,
            dt_floor: 1e-7,
            dt_ceil: 0.05,
            sample_times,
        }
    }
}

/// Heat multipliers for half and full steps of size h.
fn heat_multipliers(n: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let mut e1 = vec![0.0f64; n * n * n];
    let mut e2 = vec![0.0f64; n * n * n];
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                let k = [wavenumber(ix, n), wavenumber(iy, n), wavenumber(iz, n)];
                let ksq = norm_sq(k);
                let i = (iz * n + iy) * n + ix;
                let x = ksq * h;
                e2[i] = if x > 700.0 { 0.0 } else { (-x).exp() };
                let xh = 0.5 * x;
                e1[i] = if xh > 700.0 { 0.0 } else { (-xh).exp() };
            }
        }
    }
    (e1, e2)
}

fn apply_multiplier(f: &mut GridField, m: &[f64]) {
    for comp in 0..3 {
        let s = f.component_mut(comp);
        for (v, &d) in s.iter_mut().zip(m) {
            *v *= d;
        }
    }
}

/// One integrating-factor RK4 step of size `h` for the coupled (u, b) state.
fn ifrk4_step(
    sp: &Spectral,
    u: &mut GridField,
    b: &mut GridField,
    h: f64,
    scratch: &mut RhsScratch,
) -> Result<()> {
    let n = u.n;
    let (e1, e2) = heat_multipliers(n, h);

    let (k1u, k1b) = nonlinear_rhs(sp, u, b, scratch)?;

    let mut su = u.clone();
    let mut sb = b.clone();
    su.add_scaled(&k1u, 0.5 * h);
    sb.add_scaled(&k1b, 0.5 * h);
    apply_multiplier(&mut su, &e1);
    apply_multiplier(&mut sb, &e1);
    let (k2u, k2b) = nonlinear_rhs(sp, &su, &sb, scratch)?;

    su = u.clone();
    sb = b.clone();
    apply_multiplier(&mut su, &e1);
    apply_multiplier(&mut sb, &e1);
    su.add_scaled(&k2u, 0.5 * h);
    sb.add_scaled(&k2b, 0.5 * h);
    let (k3u, k3b) = nonlinear_rhs(sp, &su, &sb, scratch)?;

    su = u.clone();
    sb = b.clone();
    apply_multiplier(&mut su, &e2);
    apply_multiplier(&mut sb, &e2);
    let mut k3u_e = k3u.clone();
    let mut k3b_e = k3b.clone();
    apply_multiplier(&mut k3u_e, &e1);
    apply_multiplier(&mut k3b_e, &e1);
    su.add_scaled(&k3u_e, h);
    sb.add_scaled(&k3b_e, h);
    let (k4u, k4b) = nonlinear_rhs(sp, &su, &sb, scratch)?;

    // u⁺ = E2 u + h/6 (E2 k1 + 2 E1 (k2+k3) + k4)
    apply_multiplier(u, &e2);
    apply_multiplier(b, &e2);
    let mut k1u_e = k1u;
    let mut k1b_e = k1b;
    apply_multiplier(&mut k1u_e, &e2);
    apply_multiplier(&mut k1b_e, &e2);
    u.add_scaled(&k1u_e, h / 6.0);
    b.add_scaled(&k1b_e, h / 6.0);
    let mut k23u = k2u;
    k23u.add_scaled(&k3u, 1.0);
    let mut k23b = k2b;
    k23b.add_scaled(&k3b, 1.0);
    apply_multiplier(&mut k23u, &e1);
    apply_multiplier(&mut k23b, &e1);
    u.add_scaled(&k23u, h / 3.0);
    b.add_scaled(&k23b, h / 3.0);
    u.add_scaled(&k4u, h / 6.0);
    b.add_scaled(&k4b, h / 6.0);
    Ok(())
}

/// Integrate the MHD system, invoking `on_sample(t, u, b)` at t = 0, at every
/// requested sample time and at `t_end`. Deterministic for fixed inputs.
pub fn integrate_with(
    u0: &GridField,
    b0: &GridField,
    cfg: &SolveConfig,
    mut on_sample: impl FnMut(f64, &GridField, &GridField) -> Result<()>,
) -> Result<()> {
    assert_eq!(u0.n, b0.n);
    let n = u0.n;
    let sp = Spectral::new(n);
    let mut scratch = RhsScratch::new(n);

    let du0 = u0.divergence_rel();
    let db0 = b0.divergence_rel();
    if du0 > 1e-10 || db0 > 1e-10 {
        return Err(Error::invalid(format!(
            "initial data not divergence-free: {du0:.2e}, {db0:.2e}"
        )));
    }

    let dx = std::f64::consts::TAU / n as f64;
    let vmax = sp.linf(u0).max(sp.linf(b0));
    let bound = if vmax > 0.0 {
        cfg.cfl_safety * dx / vmax
    } else {
        f64::INFINITY
    };
    let dt = match cfg.dt {
        Some(dt) => {
            if dt > bound {
                return Err(Error::CflViolation { dt, bound });
            }
            dt
        }
        None => bound.clamp(cfg.dt_floor, cfg.dt_ceil).min(cfg.t_end),
    };

    let mut samples: Vec<f64> = cfg
        .sample_times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t <= cfg.t_end)
        .collect();
    samples.push(cfg.t_end);
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut u = u0.clone();
    let mut b = b0.clone();
    let mut t = 0.0f64;
    on_sample(0.0, &u, &b)?;

    let mut next_sample = 0usize;
    while next_sample < samples.len() {
        let target = samples[next_sample];
        let h = dt.min(target - t);
        if h <= 0.0 {
            on_sample(target, &u, &b)?;
            next_sample += 1;
            continue;
        }
        ifrk4_step(&sp, &mut u, &mut b, h, &mut scratch)?;
        t += h;
        let m = u.max_abs().max(b.max_abs());
        if !m.is_finite() || m > 1e150 {
            return Err(Error::Blowup {
                t,
                what: format!("spectral magnitude {m:.3e}"),
            });
        }
        if (t - target).abs() < 1e-14 || t >= target {
            t = target;
            on_sample(t, &u, &b)?;
            next_sample += 1;
        }
    }
    Ok(())
}

/// Convenience wrapper collecting full snapshots at the sample times.
pub fn solve_grid(
    u0: &GridField,
    b0: &GridField,
    cfg: &SolveConfig,
) -> Result<Vec<(f64, GridField, GridField)>> {
    let mut out = Vec::new();
    integrate_with(u0, b0, cfg, |t, u, b| {
        out.push((t, u.clone(), b.clone()));
        Ok(())
    })?;
    Ok(out)
}

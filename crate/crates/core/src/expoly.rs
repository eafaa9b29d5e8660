//! Exponential polynomials in time: finite sums of `c · t^m · e^{-λt}`.
//!
//! This class of functions is closed under addition, multiplication, heat
//! decay shifts and the Duhamel integral `∫₀ᵗ e^{-μ(t-τ)} p(τ) dτ`, which is
//! what lets the plane-wave engine stay exact through arbitrarily many
//! bilinear interactions.

use serde::{Deserialize, Serialize};

/// Exponent threshold past which `e^{-x}` underflows f64; such terms
/// evaluate to exactly zero.
pub const UNDERFLOW_EXP: f64 = 745.0;

/// Relative prune tolerance applied when terms are merged.
pub const DEFAULT_PRUNE_REL: f64 = 1e-15;

/// One term `c · t^m · e^{-lambda t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub c: f64,
    pub m: u32,
    pub lambda: f64,
}

/// A finite sum of terms, unique per `(m, lambda)` pair, sorted by
/// `(m, lambda)` so that equal polynomials have identical representations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExpPoly {
    terms: Vec<Term>,
}

/// Decay rates are kept finite: anything past f64::MAX saturates, which
/// keeps JSON round-trips exact while still evaluating to zero for t > 0.
fn clamp_rate(lambda: f64) -> f64 {
    if lambda > f64::MAX {
        f64::MAX
    } else {
        lambda
    }
}

impl ExpPoly {
    pub fn zero() -> Self {
        ExpPoly { terms: Vec::new() }
    }

    /// The constant polynomial `c`.
    pub fn constant(c: f64) -> Self {
        ExpPoly::from_terms(vec![Term {
            c,
            m: 0,
            lambda: 0.0,
        }])
    }

    /// `c · e^{-lambda t}`.
    pub fn exp(c: f64, lambda: f64) -> Self {
        ExpPoly::from_terms(vec![Term {
            c,
            m: 0,
            lambda: clamp_rate(lambda),
        }])
    }

    /// `c · t^m · e^{-lambda t}`.
    pub fn term(c: f64, m: u32, lambda: f64) -> Self {
        ExpPoly::from_terms(vec![Term {
            c,
            m,
            lambda: clamp_rate(lambda),
        }])
    }

    /// Merge duplicates, sort, and prune relatively tiny terms.
    pub fn from_terms(mut terms: Vec<Term>) -> Self {
        for t in &mut terms {
            t.lambda = clamp_rate(t.lambda);
            debug_assert!(t.lambda >= 0.0, "negative decay rate");
        }
        terms.sort_by(|a, b| {
            (a.m, a.lambda)
                .partial_cmp(&(b.m, b.lambda))
                .expect("NaN decay rate")
        });
        let mut merged: Vec<Term> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.m == t.m && last.lambda == t.lambda => last.c += t.c,
                _ => merged.push(t),
            }
        }
        let max_c = merged.iter().fold(0.0f64, |a, t| a.max(t.c.abs()));
        let cut = max_c * DEFAULT_PRUNE_REL;
        merged.retain(|t| t.c != 0.0 && t.c.abs() >= cut);
        ExpPoly { terms: merged }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest |c| over the terms.
    pub fn max_coeff(&self) -> f64 {
        self.terms.iter().fold(0.0f64, |a, t| a.max(t.c.abs()))
    }

    /// Evaluate at `t >= 0`. Finite for all valid inputs: exponents past the
    /// underflow threshold yield exactly 0, and `lambda · t` of the form
    /// `MAX · 0` is treated as exponent 0 so that t = 0 is the identity.
    pub fn eval(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0, "ExpPoly evaluated at negative time");
        let mut acc = 0.0;
        for term in &self.terms {
            let mut x = term.lambda * t;
            if x.is_nan() {
                x = 0.0;
            }
            if x > UNDERFLOW_EXP {
                continue;
            }
            let tp = match term.m {
                0 => 1.0,
                1 => t,
                2 => t * t,
                m => t.powi(m as i32),
            };
            acc += term.c * tp * (-x).exp();
        }
        acc
    }

    pub fn add(&self, other: &ExpPoly) -> ExpPoly {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        ExpPoly::from_terms(terms)
    }

    pub fn sub(&self, other: &ExpPoly) -> ExpPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> ExpPoly {
        if c == 0.0 {
            return ExpPoly::zero();
        }
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                c: t.c * c,
                m: t.m,
                lambda: t.lambda,
            })
            .collect();
        ExpPoly::from_terms(terms)
    }

    pub fn mul(&self, other: &ExpPoly) -> ExpPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Term {
                    c: a.c * b.c,
                    m: a.m + b.m,
                    lambda: clamp_rate(a.lambda + b.lambda),
                });
            }
        }
        ExpPoly::from_terms(terms)
    }

    /// Multiply by `e^{-mu t}` (symbolic heat decay).
    pub fn shift_decay(&self, mu: f64) -> ExpPoly {
        debug_assert!(mu >= 0.0);
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                c: t.c,
                m: t.m,
                lambda: clamp_rate(t.lambda + mu),
            })
            .collect();
        ExpPoly::from_terms(terms)
    }

    /// `∫₀ᵗ e^{-mu (t-τ)} p(τ) dτ` in closed form.
    ///
    /// The resonant case `lambda == mu` raises the power (`t^{m+1}` term);
    /// otherwise with `a = mu - lambda`:
    ///
    /// `∫₀ᵗ τ^m e^{aτ} dτ · e^{-mu t}
    ///   = Σ_{j=0..m} (-1)^j (m!/(m-j)!) a^{-(j+1)} t^{m-j} e^{-lambda t}
    ///     - (-1)^m m! a^{-(m+1)} e^{-mu t}`.
    pub fn duhamel(&self, mu: f64) -> ExpPoly {
        debug_assert!(mu >= 0.0);
        let mu = clamp_rate(mu);
        let mut out: Vec<Term> = Vec::new();
        for term in &self.terms {
            if term.lambda == f64::MAX {
                // Source already identically zero for t > 0.
                continue;
            }
            if term.lambda == mu {
                out.push(Term {
                    c: term.c / (term.m as f64 + 1.0),
                    m: term.m + 1,
                    lambda: mu,
                });
                continue;
            }
            let a = mu - term.lambda;
            let m = term.m;
            let mut falling = 1.0; // m! / (m-j)!
            let mut sign = 1.0;
            let mut apow = 1.0 / a; // a^{-(j+1)}
            let mut last = 0.0;
            for j in 0..=m {
                last = term.c * sign * falling * apow;
                out.push(Term {
                    c: last,
                    m: m - j,
                    lambda: term.lambda,
                });
                if j < m {
                    falling *= (m - j) as f64;
                    sign = -sign;
                    apow /= a;
                }
            }
            // Boundary term at τ = 0 reuses the j = m coefficient so the two
            // constant terms cancel exactly at t = 0.
            out.push(Term {
                c: -last,
                m: 0,
                lambda: mu,
            });
        }
        ExpPoly::from_terms(out)
    }

    /// `∫₀^R p(t) dt` as a number, via the stable downward recursion
    /// `I_m = (m · I_{m-1} - R^m e^{-λR}) / λ`, `I_0 = (1 - e^{-λR})/λ`.
    pub fn integral_0_to(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        let mut acc = 0.0;
        for term in &self.terms {
            if term.lambda == 0.0 {
                acc += term.c * r.powi(term.m as i32 + 1) / (term.m as f64 + 1.0);
                continue;
            }
            let x = term.lambda * r;
            let tail = if x > UNDERFLOW_EXP { 0.0 } else { (-x).exp() };
            let mut i_m = (1.0 - tail) / term.lambda;
            let mut rp = 1.0;
            for m in 1..=term.m {
                rp *= r;
                i_m = (m as f64 * i_m - rp * tail) / term.lambda;
            }
            acc += term.c * i_m;
        }
        acc
    }

    /// `∫_a^b p(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.integral_0_to(b) - self.integral_0_to(a)
    }

    /// Symbolic time derivative.
    pub fn derivative(&self) -> ExpPoly {
        let mut terms = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            if t.m > 0 {
                terms.push(Term {
                    c: t.c * t.m as f64,
                    m: t.m - 1,
                    lambda: t.lambda,
                });
            }
            if t.lambda != 0.0 {
                terms.push(Term {
                    c: -t.c * t.lambda,
                    m: t.m,
                    lambda: t.lambda,
                });
            }
        }
        ExpPoly::from_terms(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature, used as the independent oracle for the
    /// closed-form Duhamel integral.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn go<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = rule(f, a, m);
            let right = rule(f, m, b);
            if depth > 40 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                go(f, a, m, left, tol / 2.0, depth + 1) + go(f, m, b, right, tol / 2.0, depth + 1)
            }
        }
        go(&f, a, b, rule(&f, a, b), tol, 0)
    }

    fn duhamel_quadrature(p: &ExpPoly, mu: f64, t: f64) -> f64 {
        simpson(|tau| (-mu * (t - tau)).exp() * p.eval(tau), 0.0, t, 1e-13)
    }

    #[test]
    fn duhamel_distinct_rates_closed_form() {
        // p = e^{-a t}, mu = b  ->  (e^{-bt} - e^{-at}) / (a - b)
        let (a, b) = (9.0, 1.0);
        let p = ExpPoly::exp(1.0, a);
        let d = p.duhamel(b);
        for &t in &[0.0, 0.1, 0.5, 2.0] {
            let expect = if t == 0.0 {
                0.0
            } else {
                ((-b * t).exp() - (-a * t).exp()) / (a - b)
            };
            assert!((d.eval(t) - expect).abs() < 1e-15);
        }
        // frozen value from the quadrature oracle at t = 0.5
        let q = duhamel_quadrature(&p, b, 0.5);
        assert!((q - 0.0744278).abs() < 1e-6);
        assert!((d.eval(0.5) - q).abs() < 1e-10);
    }

    #[test]
    fn duhamel_resonant_limit() {
        // p = e^{-a t}, mu = a  ->  t e^{-a t}
        let a = 3.0;
        let d = ExpPoly::exp(1.0, a).duhamel(a);
        assert_eq!(d.terms().len(), 1);
        for &t in &[0.0, 0.25, 1.0, 4.0] {
            assert!((d.eval(t) - t * (-a * t).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn duhamel_matches_quadrature_on_mixed_terms() {
        let p = ExpPoly::from_terms(vec![
            Term {
                c: 0.7,
                m: 0,
                lambda: 2.0,
            },
            Term {
                c: -1.3,
                m: 1,
                lambda: 5.0,
            },
            Term {
                c: 0.21,
                m: 2,
                lambda: 0.0,
            },
        ]);
        for &mu in &[0.0, 1.0, 5.0, 17.5] {
            let d = p.duhamel(mu);
            for &t in &[0.01, 0.1, 1.0] {
                let q = duhamel_quadrature(&p, mu, t);
                assert!(
                    (d.eval(t) - q).abs() < 1e-10,
                    "mu={mu} t={t}: {} vs {}",
                    d.eval(t),
                    q
                );
            }
        }
    }

    #[test]
    fn duhamel_is_zero_at_t_zero() {
        // single-term sources cancel bitwise at t = 0
        for &(c, m, lambda) in &[(2.0, 0, 4.0), (-0.5, 3, 1.0)] {
            let p = ExpPoly::term(c, m, lambda);
            for &mu in &[0.0, 0.7, 4.0] {
                assert_eq!(p.duhamel(mu).eval(0.0), 0.0);
            }
        }
        // multi-term sources cancel to rounding of the merged buckets
        let p = ExpPoly::from_terms(vec![
            Term {
                c: 2.0,
                m: 0,
                lambda: 4.0,
            },
            Term {
                c: -0.5,
                m: 3,
                lambda: 1.0,
            },
        ]);
        for &mu in &[0.0, 0.7, 4.0] {
            let d = p.duhamel(mu);
            assert!(d.eval(0.0).abs() <= 1e-12 * d.max_coeff());
        }
    }

    #[test]
    fn merging_and_pruning() {
        let p = ExpPoly::from_terms(vec![
            Term {
                c: 1.0,
                m: 0,
                lambda: 2.0,
            },
            Term {
                c: 3.0,
                m: 0,
                lambda: 2.0,
            },
            Term {
                c: 1e-30,
                m: 1,
                lambda: 2.0,
            },
        ]);
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.terms()[0].c, 4.0);
    }

    #[test]
    fn underflow_guard() {
        let p = ExpPoly::exp(1.0, 1e9);
        assert_eq!(p.eval(1.0), 0.0);
        assert_eq!(p.eval(0.0), 1.0);
        let q = ExpPoly::exp(1.0, f64::INFINITY);
        assert_eq!(q.terms()[0].lambda, f64::MAX);
        assert_eq!(q.eval(0.0), 1.0); // identity at t = 0
        assert_eq!(q.eval(1e-300), 0.0); // immediately zero after
        assert!(q.eval(3.7).is_finite());
    }

    #[test]
    fn integral_0_to_matches_quadrature() {
        let p = ExpPoly::from_terms(vec![
            Term {
                c: 1.4,
                m: 0,
                lambda: 3.0,
            },
            Term {
                c: -0.2,
                m: 2,
                lambda: 0.5,
            },
            Term {
                c: 0.05,
                m: 1,
                lambda: 0.0,
            },
        ]);
        for &r in &[0.01, 0.3, 2.0] {
            let q = simpson(|t| p.eval(t), 0.0, r, 1e-13);
            assert!((p.integral_0_to(r) - q).abs() < 1e-11);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = ExpPoly::from_terms(vec![
            Term {
                c: 1.0,
                m: 2,
                lambda: 1.5,
            },
            Term {
                c: -2.0,
                m: 0,
                lambda: 4.0,
            },
        ]);
        let dp = p.derivative();
        let h = 1e-6;
        for &t in &[0.1, 0.8, 2.0] {
            let fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
            assert!((dp.eval(t) - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn serialization_round_trip_is_bit_exact() {
        let p = ExpPoly::from_terms(vec![
            Term {
                c: 0.1 + 0.2,
                m: 3,
                lambda: 1.0 / 3.0,
            },
            Term {
                c: -7.25e-200,
                m: 0,
                lambda: f64::MAX,
            },
        ]);
        let s = serde_json::to_string(&p).unwrap();
        let back: ExpPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_poly() -> impl Strategy<Value = ExpPoly> {
            proptest::collection::vec(
                (-10.0f64..10.0, 0u32..3, 0.0f64..20.0).prop_map(|(c, m, lambda)| Term {
                    c,
                    m,
                    lambda,
                }),
                0..6,
            )
            .prop_map(ExpPoly::from_terms)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn add_is_pointwise(a in arb_poly(), b in arb_poly(), t in 0.0f64..5.0) {
                let lhs = a.add(&b).eval(t);
                let rhs = a.eval(t) + b.eval(t);
                let scale = a.max_coeff().max(b.max_coeff()).max(1.0);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }

            #[test]
            fn mul_is_pointwise(a in arb_poly(), b in arb_poly(), t in 0.0f64..3.0) {
                let lhs = a.mul(&b).eval(t);
                let rhs = a.eval(t) * b.eval(t);
                let scale = (a.max_coeff() * b.max_coeff()).max(1.0) * 30.0;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
            }

            #[test]
            fn duhamel_linear(a in arb_poly(), b in arb_poly(), mu in 0.0f64..10.0, t in 0.0f64..3.0) {
                let lhs = a.add(&b).duhamel(mu).eval(t);
                let rhs = a.duhamel(mu).eval(t) + b.duhamel(mu).eval(t);
                let scale = a.max_coeff().max(b.max_coeff()).max(1.0) * 10.0;
                prop_assert!((lhs - rhs).abs() <= 1e-11 * scale);
            }
        }
    }
}

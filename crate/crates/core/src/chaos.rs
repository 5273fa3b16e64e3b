//! Exact Wiener-chaos / Fock-space algebra on polynomials in the Gaussian
//! coordinates `xi_k = A_{e_k}(w)`, `k = 1..K`.
//!
//! `D_phi` is the directional derivative `sum_k c_k d/dxi_k`, `A_phi` is
//! multiplication by `sum_k c_k xi_k`, and the creation/annihilation pair is
//! `a^+ = A - D`, `a = D`. Expectations use i.i.d. standard normal `xi_k`
//! (probabilists' Hermite normalization).

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::{sample, RngStream};
use crate::paths::{div_a, sample_brownian, Grid, Shift};
use crate::poly::{monomials_up_to, Exponents, Poly};
use crate::report::{Check, Side, Thresholds, VerificationReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosPoly {
    poly: Poly,
}

impl ChaosPoly {
    /// The vacuum, the constant functional 1.
    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            poly: Poly::one(n_modes),
        }
    }

    pub fn zero(n_modes: usize) -> Self {
        Self {
            poly: Poly::zero(n_modes),
        }
    }

    /// `xi_k`, `k` one-based.
    pub fn coordinate(n_modes: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n_modes {
            return Err(Error::InvalidArgument(format!(
                "mode {k} outside 1..={n_modes}"
            )));
        }
        Ok(Self {
            poly: Poly::var(n_modes, k - 1),
        })
    }

    pub fn from_poly(poly: Poly) -> Result<Self> {
        if poly.nvars() == 0 {
            return Err(Error::InvalidArgument("need at least one mode".into()));
        }
        Ok(Self { poly })
    }

    pub fn monomial(exponents: Exponents, coeff: f64) -> Result<Self> {
        Self::from_poly(Poly::monomial(exponents, coeff))
    }

    pub fn n_modes(&self) -> usize {
        self.poly.nvars()
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn degree(&self) -> Option<u32> {
        self.poly.degree()
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero()
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.poly.eval(xi)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_modes(self.n_modes(), other.n_modes())?;
        Ok(Self {
            poly: &self.poly + &other.poly,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        same_modes(self.n_modes(), other.n_modes())?;
        Ok(Self {
            poly: &self.poly - &other.poly,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        same_modes(self.n_modes(), other.n_modes())?;
        Ok(Self {
            poly: &self.poly * &other.poly,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            poly: self.poly.scale(s),
        }
    }
}

/// Coefficients `c_k = (phi | e_k)` of a direction truncated to `K` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    coeffs: Vec<f64>,
}

impl ModeVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument(
                "mode vector needs at least one mode".into(),
            ));
        }
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite mode coefficient {c}"
            )));
        }
        Ok(Self { coeffs })
    }

    /// `e_k`, `k` one-based.
    pub fn basis(n_modes: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n_modes {
            return Err(Error::InvalidArgument(format!(
                "mode {k} outside 1..={n_modes}"
            )));
        }
        let mut c = vec![0.0; n_modes];
        c[k - 1] = 1.0;
        Ok(Self { coeffs: c })
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        same_modes(self.n_modes(), other.n_modes())?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum())
    }
}

fn same_modes(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ModeMismatch { expected, found });
    }
    Ok(())
}

/// `D_phi P = sum_k c_k dP/dxi_k`.
pub fn apply_d(phi: &ModeVector, p: &ChaosPoly) -> Result<ChaosPoly> {
    same_modes(p.n_modes(), phi.n_modes())?;
    let mut out = Poly::zero(p.n_modes());
    for (k, &c) in phi.coeffs.iter().enumerate() {
        if c != 0.0 {
            out = &out + &p.poly.derivative(k).scale(c);
        }
    }
    Ok(ChaosPoly { poly: out })
}

/// `A_phi P = (sum_k c_k xi_k) P`.
pub fn apply_a(phi: &ModeVector, p: &ChaosPoly) -> Result<ChaosPoly> {
    same_modes(p.n_modes(), phi.n_modes())?;
    let mut lin = Poly::zero(p.n_modes());
    for (k, &c) in phi.coeffs.iter().enumerate() {
        lin = &lin + &Poly::var(p.n_modes(), k).scale(c);
    }
    Ok(ChaosPoly {
        poly: &lin * &p.poly,
    })
}

/// `a^+(phi) = A_phi - D_phi`.
pub fn creation(phi: &ModeVector, p: &ChaosPoly) -> Result<ChaosPoly> {
    apply_a(phi, p)?.sub(&apply_d(phi, p)?)
}

/// `a(phi) = D_phi`.
pub fn annihilation(phi: &ModeVector, p: &ChaosPoly) -> Result<ChaosPoly> {
    apply_d(phi, p)
}

fn double_factorial_odd(k: u32) -> f64 {
    // (k - 1)!! for even k.
    (1..k).step_by(2).map(|j| j as f64).product()
}

/// `E[P]` for i.i.d. standard normal coordinates.
pub fn gaussian_expectation(p: &ChaosPoly) -> f64 {
    p.poly
        .terms()
        .filter(|(e, _)| e.iter().all(|a| a % 2 == 0))
        .map(|(e, c)| c * e.iter().map(|&a| double_factorial_odd(a)).product::<f64>())
        .sum()
}

/// `<P, Q> = E[P Q]`.
pub fn inner(p: &ChaosPoly, q: &ChaosPoly) -> Result<f64> {
    Ok(gaussian_expectation(&p.mul(q)?))
}

/// Sparse random polynomial with small integer coefficients.
pub fn random_poly<R: Rng + ?Sized>(n_modes: usize, max_degree: u32, rng: &mut R) -> ChaosPoly {
    let basis = monomials_up_to(n_modes, max_degree);
    let mut p = Poly::zero(n_modes);
    let n_terms = rng.random_range(1..=6);
    for _ in 0..n_terms {
        let e = basis[rng.random_range(0..basis.len())].clone();
        let c = rng.random_range(-4i32..=4) as f64;
        p.add_term(e, c);
    }
    ChaosPoly { poly: p }
}

/// Random direction with small integer coefficients (exact inner products).
pub fn random_mode_vector<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> ModeVector {
    ModeVector {
        coeffs: (0..n_modes)
            .map(|_| rng.random_range(-3i32..=3) as f64)
            .collect(),
    }
}

fn residual_check(label: &str, residuals: &[(ChaosPoly, String)]) -> (Check, Option<String>) {
    let worst = residuals
        .iter()
        .map(|(r, _)| r.poly.max_abs_coeff())
        .fold(0.0, f64::max);
    let counterexample = residuals
        .iter()
        .find(|(r, _)| !r.is_zero())
        .map(|(r, ctx)| format!("{label}: {ctx} leaves residual {}", r.poly));
    (Check::exact(label, worst, 0.0, 0.0), counterexample)
}

/// Exact commutation relations on random directions and polynomials:
/// `[D, D] = 0`, `[A, A] = 0`, `[D_1, A_2] = (phi_1|phi_2)`, and the same
/// for `a`, `a^+`.
pub fn verify_commutators(
    n_modes: usize,
    degree_cap: u32,
    n_cases: usize,
    stream: &RngStream,
) -> Result<VerificationReport> {
    if n_modes == 0 {
        return Err(Error::InvalidArgument("need at least one mode".into()));
    }
    let mut dd = Vec::new();
    let mut aa = Vec::new();
    let mut da = Vec::new();
    let mut ccr = Vec::new();
    let mut cc = Vec::new();
    for case in 0..n_cases {
        let mut rng = stream.draw_rng(case as u64);
        let p1 = random_mode_vector(n_modes, &mut rng);
        let p2 = random_mode_vector(n_modes, &mut rng);
        let p = random_poly(n_modes, degree_cap, &mut rng);
        let ctx = format!(
            "case {case}, phi1 = {:?}, phi2 = {:?}, P = {}",
            p1.coeffs, p2.coeffs, p.poly
        );
        let s = p1.inner(&p2)?;

        let r = apply_d(&p1, &apply_d(&p2, &p)?)?.sub(&apply_d(&p2, &apply_d(&p1, &p)?)?)?;
        dd.push((r, ctx.clone()));
        let r = apply_a(&p1, &apply_a(&p2, &p)?)?.sub(&apply_a(&p2, &apply_a(&p1, &p)?)?)?;
        aa.push((r, ctx.clone()));
        let r = apply_d(&p1, &apply_a(&p2, &p)?)?
            .sub(&apply_a(&p2, &apply_d(&p1, &p)?)?)?
            .sub(&p.scale(s))?;
        da.push((r, ctx.clone()));
        let r = annihilation(&p1, &creation(&p2, &p)?)?
            .sub(&creation(&p2, &annihilation(&p1, &p)?)?)?
            .sub(&p.scale(s))?;
        ccr.push((r, ctx.clone()));
        let r = creation(&p1, &creation(&p2, &p)?)?.sub(&creation(&p2, &creation(&p1, &p)?)?)?;
        cc.push((r, ctx));
    }
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    for (label, res) in [
        ("[D_phi1, D_phi2] = 0", &dd),
        ("[A_phi1, A_phi2] = 0", &aa),
        ("[D_phi1, A_phi2] = (phi1|phi2)", &da),
        ("[a(phi1), a+(phi2)] = (phi1|phi2)", &ccr),
        ("[a+(phi1), a+(phi2)] = 0", &cc),
    ] {
        let (c, n) = residual_check(label, res);
        checks.push(c);
        notes.extend(n);
    }
    let mut report =
        VerificationReport::from_checks("chaos.commutators", "ccr", checks).with_seed(stream.seed);
    for n in notes {
        report = report.with_note(n);
    }
    Ok(report)
}

/// `E[(D_phi F1) F2] = E[F1 (A_phi F2 - D_phi F2)]`, exactly.
pub fn verify_adjointness(
    f1: &ChaosPoly,
    f2: &ChaosPoly,
    phi: &ModeVector,
) -> Result<VerificationReport> {
    let lhs = inner(&apply_d(phi, f1)?, f2)?;
    let rhs = inner(f1, &creation(phi, f2)?)?;
    let check = Check::exact("E[(D F1) F2] vs E[F1 a+(phi) F2]", lhs, rhs, 0.0);
    Ok(VerificationReport::from_checks(
        "chaos.adjointness",
        "adjoint",
        vec![check],
    ))
}

/// Adjointness over `n_cases` random polynomial pairs and directions.
pub fn verify_adjointness_random(
    n_modes: usize,
    degree_cap: u32,
    n_cases: usize,
    stream: &RngStream,
) -> Result<VerificationReport> {
    let mut checks = Vec::new();
    for case in 0..n_cases {
        let mut rng = stream.draw_rng(case as u64);
        let phi = random_mode_vector(n_modes, &mut rng);
        let f1 = random_poly(n_modes, degree_cap, &mut rng);
        let f2 = random_poly(n_modes, degree_cap, &mut rng);
        let mut c = verify_adjointness(&f1, &f2, &phi)?.checks.remove(0);
        c.label = format!("case {case}");
        checks.push(c);
    }
    Ok(
        VerificationReport::from_checks("chaos.adjointness", "adjoint", checks)
            .with_seed(stream.seed),
    )
}

/// Monte Carlo of each `P(xi)` with `xi_k = A_{e_k}(w)` on shared sampled
/// paths, against the exact Gaussian expectation.
pub fn mc_bridge(
    polys: &[ChaosPoly],
    grid: Grid,
    n_samples: u64,
    stream: &RngStream,
    t: &Thresholds,
) -> Result<VerificationReport> {
    let k = polys
        .iter()
        .map(ChaosPoly::n_modes)
        .max()
        .ok_or_else(|| Error::InvalidArgument("no polynomials".into()))?;
    if let Some(p) = polys.iter().find(|p| p.n_modes() != k) {
        return Err(Error::ModeMismatch {
            expected: k,
            found: p.n_modes(),
        });
    }
    if grid.steps() < 16 * k {
        return Err(Error::GridTooCoarse {
            n: grid.steps(),
            modes: k,
        });
    }
    let basis: Vec<Shift> = (1..=k)
        .map(|j| Shift::basis(grid, j))
        .collect::<Result<_>>()?;
    let samples = sample(n_samples, polys.len(), stream, |rng, out| {
        let w = sample_brownian(grid, rng);
        let xi: Vec<f64> = basis.iter().map(|e| div_a(e, &w)).collect::<Result<_>>()?;
        for (o, p) in out.iter_mut().zip(polys) {
            *o = p.eval(&xi);
        }
        Ok(())
    })?;
    let checks = polys
        .iter()
        .enumerate()
        .map(|(j, p)| {
            Ok(Check::compare(
                format!("E[{}]", p.poly),
                samples.estimate(j)?.into(),
                Side::Exact(gaussian_expectation(p)),
                t,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(
        VerificationReport::from_checks("chaos.bridge", "twofour", checks)
            .with_seed(stream.seed)
            .with_grid(grid.steps()),
    )
}

/// Probabilists' Hermite polynomial from the three-term recurrence
/// `He_{k+1} = x He_k - k He_{k-1}`.
pub fn hermite_recurrence(k: u32) -> Poly {
    let x = Poly::var(1, 0);
    let mut prev = Poly::zero(1);
    let mut cur = Poly::one(1);
    for j in 0..k {
        let next = &(&x * &cur) - &prev.scale(j as f64);
        prev = cur;
        cur = next;
    }
    cur
}

/// `a^+(e_1)^k 1 = He_k(xi_1)` for `k <= max_k`, exactly.
pub fn verify_hermite_ladder(max_k: u32) -> Result<VerificationReport> {
    let mut checks = Vec::new();
    for k in 0..=max_k {
        let p = creation_power_on_vacuum(1, k)?;
        let r = &p.poly - &hermite_recurrence(k);
        checks.push(Check::exact(
            format!("a+^{k} 1 = He_{k}"),
            r.max_abs_coeff(),
            0.0,
            0.0,
        ));
    }
    Ok(VerificationReport::from_checks(
        "chaos.hermite",
        "hermite",
        checks,
    ))
}

/// The vacuum is the only solution of `(a^+(e_k) F, P) = 0` up to degree
/// `degree_cap`, and both ladders span all polynomials of that degree.
pub fn verify_vacuum_totality(n_modes: usize, degree_cap: u32) -> Result<VerificationReport> {
    let mut checks = vec![Check::exact(
        "vacuum solution dimension",
        vacuum_solution_dimension(n_modes, degree_cap)? as f64,
        1.0,
        0.0,
    )];
    for (name, ladder) in [
        ("multiplication", Ladder::Multiplication),
        ("creation", Ladder::Creation),
    ] {
        let (r, n) = span_rank(n_modes, degree_cap, ladder)?;
        checks.push(Check::exact(
            format!("{name} span rank"),
            r as f64,
            n as f64,
            0.0,
        ));
    }
    Ok(VerificationReport::from_checks(
        "chaos.vacuum",
        "vacuum",
        checks,
    ))
}

/// `a^+(e_1)^k 1`.
pub fn creation_power_on_vacuum(n_modes: usize, k: u32) -> Result<ChaosPoly> {
    let e1 = ModeVector::basis(n_modes, 1)?;
    (0..k).try_fold(ChaosPoly::vacuum(n_modes), |p, _| creation(&e1, &p))
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * m.nrows().max(m.ncols()) as f64;
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

/// Dimension of the space of polynomials of degree `<= degree_cap`
/// orthogonal to every `a^+(e_k) F` with `deg F < degree_cap`. The vacuum
/// characterization says this is 1 (the constants).
pub fn vacuum_solution_dimension(n_modes: usize, degree_cap: u32) -> Result<usize> {
    let cols = monomials_up_to(n_modes, degree_cap);
    let tests = if degree_cap == 0 {
        Vec::new()
    } else {
        monomials_up_to(n_modes, degree_cap - 1)
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for k in 1..=n_modes {
        let e = ModeVector::basis(n_modes, k)?;
        for f in &tests {
            let af = creation(&e, &ChaosPoly::monomial(f.clone(), 1.0)?)?;
            let row = cols
                .iter()
                .map(|m| inner(&ChaosPoly::monomial(m.clone(), 1.0)?, &af))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
    }
    let m = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][j]);
    Ok(cols.len() - rank(&m))
}

/// Which ladder builds the spanning products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Multiplication,
    Creation,
}

/// Rank of `{L_{e_k1} ... L_{e_kj} 1 : j <= max_degree}` on the monomial
/// basis, and the number of monomials of degree `<= max_degree`.
pub fn span_rank(n_modes: usize, max_degree: u32, ladder: Ladder) -> Result<(usize, usize)> {
    let basis = monomials_up_to(n_modes, max_degree);
    let mut layer = vec![(ChaosPoly::vacuum(n_modes), 0usize)];
    let mut all = layer.clone();
    for _ in 0..max_degree {
        let mut next = Vec::new();
        for (p, last) in &layer {
            // Non-decreasing mode indices: operators commute, so this covers all products.
            for k in *last..n_modes {
                let e = ModeVector::basis(n_modes, k + 1)?;
                let q = match ladder {
                    Ladder::Multiplication => apply_a(&e, p)?,
                    Ladder::Creation => creation(&e, p)?,
                };
                next.push((q, k));
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
    }
    let m = DMatrix::from_fn(all.len(), basis.len(), |i, j| {
        all[i].0.poly.coeff(&basis[j])
    });
    Ok((rank(&m), basis.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi(k: usize, n: usize) -> ChaosPoly {
        ChaosPoly::coordinate(n, k).unwrap()
    }

    #[test]
    fn d_kills_vacuum() {
        let r = apply_d(&ModeVector::basis(3, 2).unwrap(), &ChaosPoly::vacuum(3)).unwrap();
        assert!(r.is_zero());
    }

    #[test]
    fn d_of_coordinate_is_one() {
        let r = apply_d(&ModeVector::basis(2, 1).unwrap(), &xi(1, 2)).unwrap();
        assert_eq!(r, ChaosPoly::vacuum(2));
    }

    #[test]
    fn d_of_monomial() {
        let p = ChaosPoly::monomial(vec![2, 1], 1.0).unwrap();
        let r = apply_d(&ModeVector::basis(2, 2).unwrap(), &p).unwrap();
        assert_eq!(r, ChaosPoly::monomial(vec![2, 0], 1.0).unwrap());
    }

    #[test]
    fn a_examples() {
        let e1 = ModeVector::basis(2, 1).unwrap();
        assert_eq!(apply_a(&e1, &ChaosPoly::vacuum(2)).unwrap(), xi(1, 2));
        assert_eq!(
            apply_a(&e1, &xi(1, 2)).unwrap(),
            ChaosPoly::monomial(vec![2, 0], 1.0).unwrap()
        );
        let p = ChaosPoly::monomial(vec![1, 2], 3.0).unwrap();
        assert_eq!(apply_a(&e1, &p).unwrap().degree(), Some(4));
    }

    #[test]
    fn creation_builds_hermite() {
        let e1 = ModeVector::basis(1, 1).unwrap();
        let h1 = creation(&e1, &ChaosPoly::vacuum(1)).unwrap();
        assert_eq!(h1, xi(1, 1));
        let h2 = creation(&e1, &h1).unwrap();
        let expect = ChaosPoly::monomial(vec![2], 1.0)
            .unwrap()
            .sub(&ChaosPoly::vacuum(1))
            .unwrap();
        assert_eq!(h2, expect);
    }

    #[test]
    fn orthogonal_modes_commute() {
        let e1 = ModeVector::basis(2, 1).unwrap();
        let e2 = ModeVector::basis(2, 2).unwrap();
        let p = ChaosPoly::monomial(vec![2, 3], 1.0).unwrap();
        let l = annihilation(&e1, &creation(&e2, &p).unwrap()).unwrap();
        let r = creation(&e2, &annihilation(&e1, &p).unwrap()).unwrap();
        assert!(l.sub(&r).unwrap().is_zero());
    }

    #[test]
    fn single_mode_commutator_is_identity() {
        let e1 = ModeVector::basis(1, 1).unwrap();
        let p = xi(1, 1);
        let c = apply_d(&e1, &apply_a(&e1, &p).unwrap())
            .unwrap()
            .sub(&apply_a(&e1, &apply_d(&e1, &p).unwrap()).unwrap())
            .unwrap();
        assert_eq!(c, p);
    }

    #[test]
    fn expectations() {
        assert_eq!(gaussian_expectation(&ChaosPoly::vacuum(2)), 1.0);
        assert_eq!(
            gaussian_expectation(&ChaosPoly::monomial(vec![2, 0], 1.0).unwrap()),
            1.0
        );
        assert_eq!(
            gaussian_expectation(&ChaosPoly::monomial(vec![4, 2], 1.0).unwrap()),
            3.0
        );
        assert_eq!(
            gaussian_expectation(&ChaosPoly::monomial(vec![3, 2], 1.0).unwrap()),
            0.0
        );
        assert_eq!(
            gaussian_expectation(&ChaosPoly::monomial(vec![6], 2.0).unwrap()),
            30.0
        );
    }

    #[test]
    fn mode_mismatch_errors() {
        let r = apply_d(&ModeVector::basis(3, 1).unwrap(), &ChaosPoly::vacuum(2));
        assert_eq!(
            r.unwrap_err(),
            Error::ModeMismatch {
                expected: 2,
                found: 3
            }
        );
        assert!(apply_a(&ModeVector::basis(1, 1).unwrap(), &ChaosPoly::vacuum(2)).is_err());
        assert!(creation(&ModeVector::basis(1, 1).unwrap(), &ChaosPoly::vacuum(2)).is_err());
    }

    #[test]
    fn adjointness_examples() {
        let e1 = ModeVector::basis(1, 1).unwrap();
        let one = ChaosPoly::vacuum(1);
        let r = verify_adjointness(&one, &one, &e1).unwrap();
        assert!(r.pass);
        assert_eq!(r.lhs.value(), 0.0);
        let r = verify_adjointness(&xi(1, 1), &one, &e1).unwrap();
        assert!(r.pass);
        assert_eq!(r.lhs.value(), 1.0);
        assert_eq!(r.rhs.value(), 1.0);
    }

    #[test]
    fn commutator_report_passes_small() {
        let r = verify_commutators(2, 3, 10, &RngStream::new(7, 0)).unwrap();
        assert!(r.pass, "{:?}", r.notes);
        assert_eq!(r.checks.len(), 5);
    }

    #[test]
    fn vacuum_is_unique() {
        for (k, d) in [(1, 4), (2, 3), (3, 2)] {
            assert_eq!(vacuum_solution_dimension(k, d).unwrap(), 1, "K={k} d={d}");
        }
    }

    #[test]
    fn products_are_total() {
        for ladder in [Ladder::Multiplication, Ladder::Creation] {
            let (r, n) = span_rank(3, 3, ladder).unwrap();
            assert_eq!(r, n);
        }
    }

    #[test]
    fn hermite_ladder_matches_recurrence() {
        let r = verify_hermite_ladder(6).unwrap();
        assert!(r.pass);
        let he4 = hermite_recurrence(4);
        assert_eq!(he4.coeff(&[4]), 1.0);
        assert_eq!(he4.coeff(&[2]), -6.0);
        assert_eq!(he4.coeff(&[0]), 3.0);
    }

    #[test]
    fn vacuum_report_passes() {
        assert!(verify_vacuum_totality(2, 3).unwrap().pass);
    }

    #[test]
    fn bridge_rejects_coarse_grid() {
        let p = ChaosPoly::vacuum(4);
        let r = mc_bridge(
            &[p],
            Grid::new(32).unwrap(),
            10,
            &RngStream::new(0, 0),
            &Thresholds::default(),
        );
        assert_eq!(r.unwrap_err(), Error::GridTooCoarse { n: 32, modes: 4 });
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Seeds, sample sizes and tolerances are pinned here.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use volforms::chaos::{self, ChaosPoly};
use volforms::estimator::standard_normal;
use volforms::expr::Expr;
use volforms::gaussian::{self, Param};
use volforms::geometry::{self, Backend, ScalarField, VectorField};
use volforms::paths::{inner_21, DualMeasure, Grid, Shift};
use volforms::poly::{monomials_up_to, Poly};
use volforms::report::{Check, VerificationReport};
use volforms::sdyson::{self, SourcedAction};
use volforms::wiener::{self, CylinderFunctional};
use volforms::{RngStream, Thresholds};

const SEED: u64 = 42;
const N_STEPS: usize = 256;
const N_SAMPLES: u64 = 100_000;
const SIGMA: f64 = 3.0;

const CF_BUDGET: Duration = Duration::from_secs(30);
const ALL_BUDGET: Duration = Duration::from_secs(300);
const QUAD_VS_CLOSED_TOL: f64 = 1e-6;
const FRESNEL_TOL: f64 = 1e-12;
const SD_TOL: f64 = 1e-8;
const MU_TOL: f64 = 1e-10;
const GENERATING_TOL: f64 = 1e-8;
const ANALYTIC_TOL: f64 = 1e-7;
const FD_TOL: f64 = 1e-5;
const INVARIANT_TOL: f64 = 1e-9;
const PFAFFIAN_TOL: f64 = 1e-10;
const ALGEBRA_TOL: f64 = 1e-7;

/// Running verdict for one criterion.
#[derive(Default)]
struct Tally {
    checks: usize,
    failures: Vec<String>,
    worst_sigma: f64,
    worst_exact: f64,
}

impl Tally {
    fn ok(&mut self, pass: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !pass {
            self.failures.push(what());
        }
    }

    /// Statistical checks: `sigma_units <= SIGMA`. Exact checks: discrepancy
    /// within `tol * scale`.
    fn report(&mut self, ctx: &str, r: &VerificationReport, tol: f64) {
        for c in &r.checks {
            self.check(ctx, c, tol);
        }
    }

    fn check(&mut self, ctx: &str, c: &Check, tol: f64) {
        match c.sigma_units {
            Some(s) if c.lhs.is_statistical() || c.rhs.is_statistical() => {
                self.worst_sigma = self.worst_sigma.max(s);
                self.ok(s <= SIGMA, || format!("{ctx}: {} at {s:.2} sigma", c.label));
            }
            _ => {
                let scale = 1.0 + c.lhs.value().abs().max(c.rhs.value().abs());
                self.worst_exact = self.worst_exact.max(c.discrepancy / scale);
                self.ok(c.discrepancy <= tol * scale, || {
                    format!("{ctx}: {} off by {:e}", c.label, c.discrepancy)
                });
            }
        }
    }

    fn exact(&mut self, ctx: &str, lhs: f64, rhs: f64, tol: f64) {
        let d = (lhs - rhs).abs();
        self.worst_exact = self.worst_exact.max(d);
        self.ok(d <= tol, || format!("{ctx}: {lhs} vs {rhs}"));
    }

    fn summary(self) -> (bool, String) {
        let mut s = format!(
            "{} checks, worst {:.2} sigma, worst exact {:.1e}",
            self.checks, self.worst_sigma, self.worst_exact
        );
        if let Some(f) = self.failures.first() {
            s.push_str(&format!("; {} failed, first: {f}", self.failures.len()));
        }
        (self.failures.is_empty(), s)
    }
}

fn grid() -> Grid {
    Grid::new(N_STEPS).unwrap()
}

fn thresholds() -> Thresholds {
    Thresholds {
        sigma: SIGMA,
        abs_tol: 0.0,
    }
}

fn shifts(g: Grid) -> Vec<(&'static str, Shift)> {
    vec![
        ("e1", Shift::basis(g, 1).unwrap()),
        ("e2", Shift::basis(g, 2).unwrap()),
        ("t", Shift::linear(g, 1.0)),
    ]
}

fn functionals() -> Vec<(&'static str, CylinderFunctional)> {
    vec![
        (
            "w(1)",
            CylinderFunctional::new(vec![1.0], |w| w[0])
                .unwrap()
                .with_gradient(|_| vec![1.0]),
        ),
        (
            "w(1)^2",
            CylinderFunctional::new(vec![1.0], |w| w[0] * w[0])
                .unwrap()
                .with_gradient(|w| vec![2.0 * w[0]]),
        ),
        (
            "exp(-w(1)^2)",
            CylinderFunctional::new(vec![1.0], |w| (-w[0] * w[0]).exp())
                .unwrap()
                .with_gradient(|w| vec![-2.0 * w[0] * (-w[0] * w[0]).exp()]),
        ),
        (
            "w(0.5) w(1)",
            CylinderFunctional::new(vec![0.5, 1.0], |w| w[0] * w[1])
                .unwrap()
                .with_gradient(|w| vec![w[1], w[0]]),
        ),
    ]
}

fn characteristic_functional() -> (bool, String) {
    let measures = [
        vec![(1.0, 1.0)],
        vec![(0.5, 2.0)],
        vec![(0.25, 1.0), (1.0, -0.5)],
        vec![(0.5, 1.0), (0.75, 0.5)],
        vec![(0.125, -1.0), (0.5, 0.75), (1.0, 0.5)],
    ];
    let mut tally = Tally::default();
    let start = Instant::now();
    for (i, atoms) in measures.into_iter().enumerate() {
        let m = DualMeasure::new(atoms.clone()).unwrap();
        let r = wiener::verify_characteristic_functional(
            &m,
            grid(),
            N_SAMPLES,
            &RngStream::new(SEED, 100 + i as u64),
            &thresholds(),
        )
        .unwrap();
        tally.report(&format!("{atoms:?}"), &r, 0.0);
    }
    let elapsed = start.elapsed();
    tally.ok(elapsed <= CF_BUDGET, || format!("took {elapsed:?}"));
    tally.summary()
}

fn cameron_martin() -> (bool, String) {
    let g = grid();
    let mut tally = Tally::default();
    for (i, (pname, phi)) in shifts(g).iter().enumerate() {
        for (j, (fname, f)) in functionals().iter().enumerate() {
            let s = RngStream::new(SEED, 200 + 10 * i as u64 + j as u64);
            let r = wiener::verify_cameron_martin(f, phi, g, N_SAMPLES, &s, &thresholds()).unwrap();
            tally.report(&format!("phi = {pname}, F = {fname}"), &r, 0.0);
        }
        let r = wiener::verify_cm_normalization(
            phi,
            g,
            N_SAMPLES,
            &RngStream::new(SEED, 250 + i as u64),
            &thresholds(),
        )
        .unwrap();
        tally.report(&format!("E[J], phi = {pname}"), &r, 0.0);
    }
    tally.summary()
}

fn malliavin() -> (bool, String) {
    let g = grid();
    let mut tally = Tally::default();
    let all = shifts(g);
    for (i, (pname, phi)) in all.iter().enumerate() {
        for (j, (fname, f)) in functionals().iter().enumerate() {
            let s = RngStream::new(SEED, 300 + 10 * i as u64 + j as u64);
            let r = wiener::verify_malliavin(f, phi, g, N_SAMPLES, &s, &thresholds()).unwrap();
            tally.report(&format!("phi = {pname}, F = {fname}"), &r, 0.0);
        }
    }
    for (i, (n1, p1)) in all.iter().enumerate() {
        for (j, (n2, p2)) in all.iter().enumerate() {
            let s = RngStream::new(SEED, 350 + 10 * i as u64 + j as u64);
            let r = wiener::verify_isometry(p1, p2, g, N_SAMPLES, &s, &thresholds()).unwrap();
            let ctx = format!("isometry {n1}, {n2}");
            // The deterministic check carries its own O(dt^2) tolerance.
            tally.report(
                &ctx,
                &r,
                10.0 * g.dt().powi(2) * (1.0 + p1.norm_sq() + p2.norm_sq()),
            );
            let inner = inner_21(p1, p2).unwrap();
            let mc = r.checks[1].lhs.value();
            let se = r.checks[1].lhs.std_error();
            tally.ok((mc - inner).abs() <= SIGMA * se, || {
                format!("{ctx}: {mc} vs {inner}")
            });
        }
    }
    tally.summary()
}

fn chaos_algebra() -> (bool, String) {
    let mut tally = Tally::default();
    for k in 1..=4 {
        let r = chaos::verify_commutators(k, 4, 50, &RngStream::new(SEED, 400 + k as u64)).unwrap();
        tally.report(&format!("commutators K = {k}"), &r, 0.0);
        let r = chaos::verify_adjointness_random(k, 4, 50, &RngStream::new(SEED, 410 + k as u64))
            .unwrap();
        tally.report(&format!("adjointness K = {k}"), &r, 0.0);
    }
    // Oracle: He_k from the explicit sum, compared coefficient by coefficient.
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    for k in 0..=6u32 {
        let p = chaos::creation_power_on_vacuum(1, k).unwrap();
        let mut oracle = Poly::zero(1);
        for m in 0..=k / 2 {
            oracle.add_term(
                vec![k - 2 * m],
                (-1f64).powi(m as i32) * fact(k)
                    / (fact(m) * fact(k - 2 * m) * 2f64.powi(m as i32)),
            );
        }
        tally.ok(*p.poly() == oracle, || {
            format!("He_{k}: {} vs {oracle}", p.poly())
        });
    }
    let polys: Vec<ChaosPoly> = [
        "xi1^2",
        "xi1*xi2",
        "xi1^4",
        "xi1^2*xi2^2 - 2*xi2",
        "xi1^3*xi2 + xi2^2",
    ]
    .iter()
    .map(|s| ChaosPoly::from_poly(Expr::parse(s, "xi").unwrap().to_poly(2).unwrap()).unwrap())
    .collect();
    let r = chaos::mc_bridge(
        &polys,
        grid(),
        N_SAMPLES,
        &RngStream::new(SEED, 420),
        &thresholds(),
    )
    .unwrap();
    tally.report("bridge", &r, 0.0);
    tally.summary()
}

/// SPD matrix `O diag(l) O^T` with `l` log-uniform in `[10^-1.5, 10^1.5]`, so
/// the condition number stays below `10^3`.
fn random_spd(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| standard_normal(rng));
    let o = a.qr().q();
    let l = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| {
        10f64.powf(rng.random_range(-1.5..1.5))
    }));
    let q = &o * l * o.transpose();
    (&q + q.transpose()) * 0.5
}

fn gaussian_fourier() -> (bool, String) {
    let mut tally = Tally::default();
    let s = RngStream::new(SEED, 500);
    for case in 0..20u64 {
        let mut rng = s.draw_rng(case);
        let d = 1 + (case as usize % 3);
        let q = random_spd(d, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ctx = format!("case {case}, D = {d}");

        let one = gaussian::make_spec(q.clone(), Param::One).unwrap();
        let (quad, _) = gaussian::fourier_quadrature(&one, &x, QUAD_VS_CLOSED_TOL / 10.0).unwrap();
        let closed = gaussian::fourier_closed_form(&one, &x).unwrap();
        let rhs = one.fourier_rhs(&x).unwrap();
        tally.exact(
            &format!("{ctx}, s = 1, quadrature vs closed form"),
            (quad - closed).norm(),
            0.0,
            QUAD_VS_CLOSED_TOL,
        );
        tally.exact(
            &format!("{ctx}, s = 1, quadrature vs dual side"),
            (quad - rhs).norm(),
            0.0,
            QUAD_VS_CLOSED_TOL,
        );

        let fresnel = gaussian::make_spec(q, Param::I).unwrap();
        let lhs = gaussian::fourier_closed_form(&fresnel, &x).unwrap();
        let rhs = fresnel.fourier_rhs(&x).unwrap();
        tally.exact(
            &format!("{ctx}, s = i"),
            (lhs - rhs).norm(),
            0.0,
            FRESNEL_TOL,
        );
    }
    for case in 0..3u64 {
        let q = random_spd(1 + case as usize, &mut s.child(1).draw_rng(case));
        let spec = gaussian::make_spec(q, Param::One).unwrap();
        let r = gaussian::covariance_check(
            &spec,
            N_SAMPLES,
            &RngStream::new(SEED, 510 + case),
            &thresholds(),
        )
        .unwrap();
        tally.report(&format!("covariance case {case}"), &r, 0.0);
    }
    tally.summary()
}

/// Hessian of a polynomial straight from its exponents, then `|det|^{1/2}`
/// by the explicit 1x1 / 2x2 formula.
fn determinant_oracle(p: &Poly, x: &[f64]) -> f64 {
    let d = p.nvars();
    let mut h = vec![vec![0.0; d]; d];
    for (e, c) in p.terms() {
        for a in 0..d {
            for b in 0..d {
                let mut e2 = e.clone();
                let mut coef = c * f64::from(e2[a]);
                e2[a] = e2[a].saturating_sub(1);
                coef *= f64::from(e2[b]);
                e2[b] = e2[b].saturating_sub(1);
                if coef != 0.0 {
                    h[a][b] += coef
                        * e2.iter()
                            .zip(x)
                            .map(|(&k, &v)| v.powi(k as i32))
                            .product::<f64>();
                }
            }
        }
    }
    match d {
        1 => h[0][0].abs().sqrt(),
        2 => (h[0][0] * h[1][1] - h[0][1] * h[1][0]).abs().sqrt(),
        _ => unreachable!(),
    }
}

fn schwinger_dyson() -> (bool, String) {
    let mut tally = Tally::default();
    let s = RngStream::new(SEED, 600);
    for case in 0..5u64 {
        let d = if case % 2 == 0 { 1 } else { 2 };
        let action = sdyson::random_confining_quartic(d, &mut s.draw_rng(case)).unwrap();
        let ctx = format!("action {case}, D = {d}");
        for e in monomials_up_to(d, 4) {
            let f = Poly::monomial(e.clone(), 1.0);
            for a in 0..d {
                let r = sdyson::verify_schwinger_dyson(&action, &f, a).unwrap();
                let c = &r.checks[0];
                let scale = c.lhs.value().abs().max(c.rhs.value().abs()).max(1.0);
                tally.exact(
                    &format!("{ctx}, F = {f}, component {}", a + 1),
                    c.discrepancy / scale,
                    0.0,
                    SD_TOL,
                );
            }
        }
        let phi0 = sdyson::stationary_point(&action, &vec![0.0; d]).unwrap();
        let mu = sdyson::leading_mu(&action, &phi0).unwrap();
        let oracle = determinant_oracle(action.poly().unwrap(), &phi0);
        tally.exact(&format!("{ctx}, mu"), mu, oracle, MU_TOL * oracle.max(1.0));

        let mut rng = s.child(1).draw_rng(case);
        let j: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let sourced = SourcedAction::new(action, j).unwrap();
        let via_z = sdyson::generating_derivative(&sourced).unwrap();
        let direct = sdyson::direct_mean(&sourced).unwrap();
        for (k, (a, b)) in via_z.iter().zip(&direct).enumerate() {
            tally.exact(
                &format!("{ctx}, generating derivative {}", k + 1),
                *a,
                *b,
                GENERATING_TOL * b.abs().max(1.0),
            );
        }
    }
    tally.summary()
}

fn geometry() -> (bool, String) {
    let mut tally = Tally::default();
    for (i, name) in geometry::BUILTIN_MANIFOLDS.iter().enumerate() {
        let m = geometry::builtin(name).unwrap();
        let s = RngStream::new(SEED, 700 + i as u64);
        let v = geometry::random_poly_field(m.dim(), 2, &mut s.draw_rng(0));
        for (backend, tol) in [
            (Backend::Analytic, ANALYTIC_TOL),
            (Backend::FiniteDifference, FD_TOL),
        ] {
            let r =
                geometry::verify_divergence_identity(&m, &v, 100, &s.child(1), backend).unwrap();
            tally.report(&format!("{name}, {backend:?}"), &r, tol);
        }
    }
    let sphere = geometry::sphere2();
    for (i, k) in geometry::sphere_killing_fields().iter().enumerate() {
        let r = geometry::verify_invariant_field(
            &sphere,
            k,
            100,
            &RngStream::new(SEED, 720 + i as u64),
            Backend::Analytic,
            INVARIANT_TOL,
        )
        .unwrap();
        for c in &r.checks {
            tally.exact(
                &format!("sphere2 Killing field {}: {}", i + 1, c.label),
                c.lhs.value(),
                0.0,
                INVARIANT_TOL,
            );
        }
    }
    let darboux = geometry::darboux2();
    for case in 0..5u64 {
        let h = geometry::random_poly(2, 3, &mut RngStream::new(SEED, 730).draw_rng(case));
        let v = geometry::hamiltonian_field(&darboux, &h).unwrap();
        let r = geometry::verify_invariant_field(
            &darboux,
            &v,
            100,
            &RngStream::new(SEED, 740 + case),
            Backend::Analytic,
            INVARIANT_TOL,
        )
        .unwrap();
        for c in &r.checks {
            tally.exact(
                &format!("darboux2 H = {h}: {}", c.label),
                c.lhs.value(),
                0.0,
                INVARIANT_TOL,
            );
        }
    }
    let s = RngStream::new(SEED, 750);
    for (di, d) in [2usize, 4, 6].into_iter().enumerate() {
        for case in 0..20u64 {
            let a = geometry::random_antisymmetric(d, &mut s.child(di as u64).draw_rng(case));
            let pf = geometry::pfaffian(&a).unwrap();
            tally.exact(
                &format!("Pf^2 vs det, D = {d}, case {case}"),
                pf * pf,
                a.determinant(),
                PFAFFIAN_TOL,
            );
        }
    }
    for (i, name) in [
        "flat2",
        "sphere2",
        "conformal2",
        "darboux2",
        "nonconstant-symplectic2",
    ]
    .iter()
    .enumerate()
    {
        let m = geometry::builtin(name).unwrap();
        let s = RngStream::new(SEED, 760 + i as u64);
        for t in 0..50u64 {
            let mut rng = s.draw_rng(t);
            let x: VectorField = geometry::random_poly_field(2, 2, &mut rng);
            let y = geometry::random_poly_field(2, 2, &mut rng);
            let f = ScalarField::from_poly(geometry::random_poly(2, 2, &mut rng));
            let r = geometry::verify_dx_algebra(&m, &x, &y, &f, 2, &s.child(t)).unwrap();
            tally.report(&format!("{name} triple {t}"), &r, ALGEBRA_TOL);
        }
    }
    tally.summary()
}

fn without_timestamp(text: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

fn report_files(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "json").then(|| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read_to_string(&p).unwrap(),
                )
            })
        })
        .collect()
}

fn reproducibility() -> (bool, String) {
    let mut tally = Tally::default();
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let start = Instant::now();
        let code = volforms::cli::run([
            "volforms",
            "all",
            "--seed",
            "42",
            "--output",
            out.to_str().unwrap(),
        ]);
        let elapsed = start.elapsed();
        tally.ok(code == 0, || format!("run {k} exited with {code}"));
        tally.ok(elapsed <= ALL_BUDGET, || {
            format!("run {k} took {elapsed:?}")
        });
        runs.push(report_files(&out));
    }
    tally.ok(!runs[0].is_empty(), || "no reports written".into());
    tally.ok(runs[0].keys().eq(runs[1].keys()), || {
        "report sets differ".into()
    });
    for (name, a) in &runs[0] {
        let Some(b) = runs[1].get(name) else { continue };
        tally.ok(without_timestamp(a) == without_timestamp(b), || {
            format!("{name} differs")
        });
        // Byte-level: only the timestamp line may differ.
        let differing = a.lines().zip(b.lines()).filter(|(x, y)| x != y).count();
        let only_stamp = a
            .lines()
            .zip(b.lines())
            .filter(|(x, y)| x != y)
            .all(|(x, _)| x.trim_start().starts_with("\"timestamp\""));
        tally.ok(
            a.lines().count() == b.lines().count() && differing <= 1 && only_stamp,
            || format!("{name}: bytes differ beyond the timestamp"),
        );
    }
    tally.summary()
}

type Criterion = fn() -> (bool, String);

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("characteristic functional", characteristic_functional),
        ("Cameron-Martin", cameron_martin),
        ("Malliavin", malliavin),
        ("chaos algebra", chaos_algebra),
        ("Gaussian/Fresnel Fourier", gaussian_fourier),
        ("Schwinger-Dyson", schwinger_dyson),
        ("geometry", geometry),
        ("reproducibility", reproducibility),
    ];
    println!(
        "\nrunning {} acceptance criteria (seed {SEED})",
        criteria.len()
    );
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let (pass, detail) = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += usize::from(!pass);
        println!(
            "{} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed\n", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

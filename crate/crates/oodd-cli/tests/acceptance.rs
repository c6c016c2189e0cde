//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. Criteria 1-6 and 11 verify the operator-level
//! guarantees at analysis scale; criteria 7-10 reproduce the Monte-Carlo
//! studies at desk scale.

use std::sync::Arc;

use oodd::analysis::{
    check_stability_bounds, estimate_eta, patch_error_indicator, spectrum, EtaMode,
    OperatorSpectrum,
};
use oodd::coefficient::{
    build_model, patch_weights, rasterize, sample_realization, CoefficientModel, Geometry,
    Realization,
};
use oodd::mesh::{
    assemble_load, assemble_stiffness, energy_norm, MeshHierarchy, MeshLevel,
};
use oodd::patches::{build_patches, Patch};
use oodd::pcg::{pcg, theoretical_bound};
use oodd::precond::{
    apply_local_oo, assemble_coarse_matrix, build_direct_local, build_preconditioner,
    build_reference_dictionary, BuildContext, CoarseMode, NdCoarseMode, ReferenceDictionary,
    TwoLevelPrecond,
};
use oodd::rng::SplitMix64;
use oodd::sparse::CsrMatrix;

use oodd_cli::config::ExperimentConfig;
use oodd_cli::csv::write_csv;
use oodd_cli::experiment::{compare_operators, run_experiment, SampleRow};

struct Setup {
    hier: MeshHierarchy,
    model: CoefficientModel,
    patches: Vec<Patch>,
    dict: Arc<ReferenceDictionary>,
}

fn setup(h_exp: i32, coarse_exp: i32, eps_exp: i32, geometry: Geometry, beta: f64) -> Setup {
    let hier = MeshHierarchy::build(
        0.5f64.powi(h_exp),
        0.5f64.powi(coarse_exp),
        0.5f64.powi(eps_exp),
    )
    .unwrap();
    let model = build_model(geometry, 1.0, beta, hier.eps(), hier.cell_resolution()).unwrap();
    let patches = build_patches(&hier);
    let dict = Arc::new(build_reference_dictionary(&model, &hier).unwrap());
    Setup {
        hier,
        model,
        patches,
        dict,
    }
}

impl Setup {
    fn context<'a>(
        &'a self,
        realization: &'a Realization,
        field: &'a oodd::mesh::FineCoefficientField,
    ) -> BuildContext<'a> {
        BuildContext {
            model: &self.model,
            realization,
            hier: &self.hier,
            field,
            patches: &self.patches,
            dictionary: Some(self.dict.clone()),
            nd_coarse: NdCoarseMode::Frozen,
        }
    }

    fn build_all(&self, realization: &Realization) -> (TwoLevelPrecond, TwoLevelPrecond, TwoLevelPrecond, CsrMatrix) {
        let field = rasterize(&self.model, realization, &self.hier).unwrap();
        let k = assemble_stiffness(MeshLevel::Fine, &field, &self.hier).unwrap();
        let ctx = self.context(realization, &field);
        let direct = build_preconditioner("direct", &ctx).unwrap();
        let nd = build_preconditioner("nd", &ctx).unwrap();
        let oo = build_preconditioner("oo", &ctx).unwrap();
        (direct, nd, oo, k)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> (f64, f64) {
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    (diff, scale)
}

/// Criterion 1: with no defects the three variants coincide.
#[test]
fn criterion_01_exactness_without_defects() {
    let s = setup(5, 2, 3, Geometry::Erasure, 100.0);
    let real = sample_realization(&s.model, &s.hier, 0.0, 1).unwrap();
    let (direct, nd, oo, _) = s.build_all(&real);
    let mut rng = SplitMix64::new(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let r = rng.vector(s.hier.fine_dof_count());
        let zd = direct.apply(&r).unwrap();
        let zn = nd.apply(&r).unwrap();
        let zo = oo.apply(&r).unwrap();
        for pair in [(&zd, &zn), (&zd, &zo), (&zn, &zo)] {
            let (diff, scale) = max_abs_diff(pair.0, pair.1);
            worst = worst.max(diff / scale);
        }
    }
    assert!(worst <= 1e-12, "pairwise relative gap {worst}");
    println!("criterion 1: PASS - p=0 variants agree, worst relative gap {worst:.2e}");
}

/// Criterion 2: an isolated defect makes the OO local solve exact on every
/// patch.
#[test]
fn criterion_02_isolated_defect_exactness() {
    let s = setup(5, 2, 3, Geometry::Erasure, 100.0);
    // Exactly one defect in the whole domain.
    let real = Realization::from_defects(s.hier.n_cells_eps(), &[(3, 2)]);
    let field = rasterize(&s.model, &real, &s.hier).unwrap();
    let mut rng = SplitMix64::new(3);
    let mut worst: f64 = 0.0;
    for patch in &s.patches {
        let weights = patch_weights(&real, patch, &s.hier);
        assert!(weights.n_defects() <= 1);
        let exact = build_direct_local(patch, &field, &s.hier).unwrap();
        let r = rng.vector(patch.n_local());
        let want = exact.solve(&r).unwrap();
        let got = apply_local_oo(&s.dict, patch, &weights, &r, &s.hier).unwrap();
        let (diff, scale) = max_abs_diff(&want, &got);
        worst = worst.max(diff / scale);
    }
    assert!(worst <= 1e-12, "local relative gap {worst}");
    println!("criterion 2: PASS - isolated defect OO locals exact, worst gap {worst:.2e}");
}

/// Criterion 3: lambda-assembled coarse operator equals the Galerkin
/// product for 50 random realizations.
#[test]
fn criterion_03_coarse_offline_online_exactness() {
    let s = setup(6, 3, 4, Geometry::Erasure, 100.0);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let real = sample_realization(&s.model, &s.hier, 0.3, seed).unwrap();
        let lambda = assemble_coarse_matrix(&s.dict, &real, &s.hier, CoarseMode::Oo).unwrap();
        let galerkin =
            assemble_coarse_matrix(&s.dict, &real, &s.hier, CoarseMode::Direct).unwrap();
        let scale = galerkin.max_abs();
        for i in 0..lambda.nrows() {
            for j in 0..lambda.ncols() {
                worst = worst.max((lambda.get(i, j) - galerkin.get(i, j)).abs() / scale);
            }
        }
    }
    assert!(worst <= 1e-13, "entrywise relative gap {worst}");
    println!("criterion 3: PASS - lambda vs Galerkin coarse operators, worst entry gap {worst:.2e}");
}

/// Criterion 4: B~ is symmetric in the duality pairing and P~ in the energy
/// inner product.
#[test]
fn criterion_04_operator_symmetry() {
    let s = setup(5, 2, 3, Geometry::Shifted, 100.0);
    let real = sample_realization(&s.model, &s.hier, 0.2, 23).unwrap();
    let (_, _, oo, k) = s.build_all(&real);
    let n = s.hier.fine_dof_count();
    let mut rng = SplitMix64::new(17);
    let mut worst_duality: f64 = 0.0;
    let mut worst_energy: f64 = 0.0;
    for _ in 0..20 {
        let g1 = rng.vector(n);
        let g2 = rng.vector(n);
        let b1 = oo.apply(&g1).unwrap();
        let b2 = oo.apply(&g2).unwrap();
        let lhs: f64 = g1.iter().zip(&b2).map(|(a, b)| a * b).sum();
        let rhs: f64 = g2.iter().zip(&b1).map(|(a, b)| a * b).sum();
        worst_duality = worst_duality.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));

        let pv = oo.apply(&k.spmv(&g1).unwrap()).unwrap();
        let pw = oo.apply(&k.spmv(&g2).unwrap()).unwrap();
        let apv: f64 = k.spmv(&pv).unwrap().iter().zip(&g2).map(|(a, b)| a * b).sum();
        let apw: f64 = k.spmv(&pw).unwrap().iter().zip(&g1).map(|(a, b)| a * b).sum();
        let norms = energy_norm(&k, &g1).unwrap() * energy_norm(&k, &g2).unwrap();
        worst_energy = worst_energy.max((apv - apw).abs() / norms);
    }
    assert!(worst_duality <= 1e-10, "duality symmetry {worst_duality}");
    assert!(worst_energy <= 1e-10, "a-symmetry {worst_energy}");
    println!(
        "criterion 4: PASS - duality symmetry {worst_duality:.2e}, a-symmetry {worst_energy:.2e}"
    );
}

fn spectral_instance(
    geometry: Geometry,
    beta: f64,
    p: f64,
    seed: u64,
) -> (OperatorSpectrum, OperatorSpectrum, f64, f64, TwoLevelPrecond, CsrMatrix, Setup) {
    let s = setup(5, 2, 3, geometry, beta);
    let real = sample_realization(&s.model, &s.hier, p, seed).unwrap();
    let multi = s
        .patches
        .iter()
        .filter(|patch| patch_weights(&real, patch, &s.hier).n_defects() >= 2)
        .count();
    assert!(multi >= 1, "instance must contain multi-defect patches");
    let (direct, _, oo, k) = s.build_all(&real);
    let exact = spectrum(&k, |r| direct.apply(r).unwrap()).unwrap();
    let tilde = spectrum(&k, |r| oo.apply(r).unwrap()).unwrap();
    let eta = estimate_eta(
        &k,
        |r| direct.apply(r).unwrap(),
        |r| oo.apply(r).unwrap(),
        EtaMode::Dense,
    )
    .unwrap();
    let kappa = tilde.lambda_max / tilde.lambda_min;
    (exact, tilde, eta, kappa, oo, k, s)
}

const SPECTRAL_INSTANCES: [(Geometry, f64, f64, u64); 3] = [
    (Geometry::Erasure, 100.0, 0.10, 5),
    (Geometry::Erasure, 100.0, 0.25, 8),
    (Geometry::Shifted, 10.0, 0.15, 2),
];

/// Criterion 5: the spectrum of P~ is contained in the eta-widened spectrum
/// of P, and kappa obeys the perturbation bound whenever eta < C1.
#[test]
fn criterion_05_spectral_containment() {
    for (geometry, beta, p, seed) in SPECTRAL_INSTANCES {
        let (exact, tilde, eta, kappa, _, _, _) = spectral_instance(geometry, beta, p, seed);
        let check = check_stability_bounds(&exact, &tilde, eta);
        assert!(
            check.lower_ok && check.upper_ok,
            "{geometry:?} beta={beta} p={p}: containment failed: \
             [{}, {}] vs [{} - {eta}, {} + {eta}]",
            tilde.lambda_min,
            tilde.lambda_max,
            exact.lambda_min,
            exact.lambda_max
        );
        if check.applicable {
            assert!(
                check.kappa_bound_ok.unwrap(),
                "{geometry:?} beta={beta} p={p}: kappa {kappa} above bound {:?}",
                check.kappa_bound
            );
        }
        println!(
            "criterion 5: PASS - {geometry:?} beta={beta} p={p}: spectrum [{:.4}, {:.4}] in \
             [{:.4}, {:.4}] +/- eta={:.3e}, kappa={:.3} bound_applicable={}",
            tilde.lambda_min,
            tilde.lambda_max,
            exact.lambda_min,
            exact.lambda_max,
            eta,
            kappa,
            check.applicable
        );
    }
}

/// Criterion 6: PCG energy errors obey the classical bound with the
/// measured condition number of P~.
#[test]
fn criterion_06_pcg_bound_compliance() {
    for (geometry, beta, p, seed) in SPECTRAL_INSTANCES {
        let (_, tilde, _, kappa, oo, k, s) = spectral_instance(geometry, beta, p, seed);
        assert!(tilde.lambda_min > 0.0, "instance must be positive definite");
        let pi = std::f64::consts::PI;
        let b = assemble_load(|x, y| (pi * x).sin() * (pi * y).sin(), &s.hier);
        let k_factor = oodd::sparse::factorize_spd(&k).unwrap();
        let reference = k_factor.solve(&b).unwrap();
        let report = pcg(
            &k,
            &b,
            |r| oo.apply(r).unwrap(),
            1e-10,
            400,
            None,
            Some(&reference),
        )
        .unwrap();
        let history = report.energy_error_history.as_ref().unwrap();
        let e0 = history[0];
        let mut worst_ratio: f64 = 0.0;
        for (iter, &e) in history.iter().enumerate() {
            let bound = theoretical_bound(kappa, iter).unwrap() * e0;
            if iter > 0 {
                assert!(
                    e <= bound * (1.0 + 1e-9) + 1e-14 * e0,
                    "{geometry:?} p={p}: iteration {iter}: error {e} above bound {bound}"
                );
                if bound > 0.0 {
                    worst_ratio = worst_ratio.max(e / bound);
                }
            }
        }
        println!(
            "criterion 6: PASS - {geometry:?} beta={beta} p={p}: {} iterations, worst error/bound \
             ratio {worst_ratio:.3}",
            report.iterations
        );
    }
}

fn desk_config(geometry: &str, beta: f64, p_list: &str, samples: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.set("h", "1/64").unwrap();
    cfg.set("H", "1/8").unwrap();
    cfg.set("eps", "1/16").unwrap();
    cfg.set("model", geometry).unwrap();
    cfg.set("beta", &beta.to_string()).unwrap();
    cfg.set("p", p_list).unwrap();
    cfg.set("samples", &samples.to_string()).unwrap();
    cfg.set("seed", "7").unwrap();
    cfg
}

fn plain_mean(samples: &[SampleRow], variant: &str, p: f64) -> f64 {
    let iters: Vec<f64> = samples
        .iter()
        .filter(|r| r.variant == variant && r.p == p && r.converged)
        .map(|r| r.iterations as f64)
        .collect();
    iters.iter().sum::<f64>() / iters.len() as f64
}

fn convergence_fraction(samples: &[SampleRow], variant: &str, p: f64) -> f64 {
    let cell: Vec<&SampleRow> = samples
        .iter()
        .filter(|r| r.variant == variant && r.p == p)
        .collect();
    cell.iter().filter(|r| r.converged).count() as f64 / cell.len() as f64
}

/// Criterion 7: erasure-model trend at desk scale; ordering of the mean
/// iteration counts and a widening ND-OO gap in p.
#[test]
fn criterion_07_erasure_trend() {
    let cfg = desk_config("erasure", 100.0, "0.02,0.10", 50);
    let result = run_experiment(&cfg).unwrap();
    for &p in &[0.02, 0.10] {
        for variant in ["direct", "nd", "oo"] {
            assert_eq!(
                convergence_fraction(&result.samples, variant, p),
                1.0,
                "{variant} must converge on all samples at p={p}"
            );
        }
    }
    let mut gaps = Vec::new();
    for &p in &[0.02, 0.10] {
        let direct = plain_mean(&result.samples, "direct", p);
        let oo = plain_mean(&result.samples, "oo", p);
        let nd = plain_mean(&result.samples, "nd", p);
        assert!(
            direct <= oo && oo <= nd,
            "ordering violated at p={p}: direct {direct}, oo {oo}, nd {nd}"
        );
        gaps.push(nd - oo);
        println!(
            "criterion 7: p={p}: mean iterations direct {direct:.2} <= oo {oo:.2} <= nd {nd:.2}"
        );
    }
    assert!(
        gaps[1] > gaps[0],
        "ND-OO gap must widen: {} vs {}",
        gaps[0],
        gaps[1]
    );
    println!(
        "criterion 7: PASS - gap(nd - oo) widens from {:.2} to {:.2}",
        gaps[0], gaps[1]
    );
}

/// Criterion 8: the shifted model at contrast 100 defeats ND while OO keeps
/// converging on every sample.
#[test]
fn criterion_08_nd_robustness_failure_shifted() {
    let cfg = desk_config("shifted", 100.0, "0.06", 50);
    let result = run_experiment(&cfg).unwrap();
    let oo = convergence_fraction(&result.samples, "oo", 0.06);
    let nd = convergence_fraction(&result.samples, "nd", 0.06);
    assert_eq!(oo, 1.0, "OO must converge on all samples, got {oo}");
    assert!(nd < 0.5, "ND fraction must fall below 0.5, got {nd}");
    println!("criterion 8: PASS - shifted model: OO fraction {oo}, ND fraction {nd}");
}

/// Criterion 9: OO's operator deviation stays strictly below ND's for every
/// p, and ND's deviation grows with p.
#[test]
fn criterion_09_operator_deviation_trend() {
    let mut cfg = desk_config("erasure", 500.0, "0.02,0.06,0.10", 50);
    cfg.set("variants", "nd,oo").unwrap();
    let result = compare_operators(&cfg).unwrap();
    let value = |variant: &str, p: f64| -> f64 {
        result
            .deviations
            .iter()
            .find(|d| d.variant == variant && d.p == p)
            .unwrap()
            .rel_deviation_rmse
    };
    let ps = [0.02, 0.06, 0.10];
    for &p in &ps {
        let oo = value("oo", p);
        let nd = value("nd", p);
        assert!(oo < nd, "p={p}: OO deviation {oo} not below ND {nd}");
        println!("criterion 9: p={p}: deviation oo {oo:.3e} < nd {nd:.3e}");
    }
    for w in ps.windows(2) {
        assert!(
            value("nd", w[1]) > value("nd", w[0]),
            "ND deviation must increase in p"
        );
    }
    println!("criterion 9: PASS - OO below ND everywhere, ND monotone in p");
}

/// Criterion 10: identical configurations produce byte-identical CSVs.
#[test]
fn criterion_10_determinism() {
    let cfg = desk_config("erasure", 100.0, "0.02,0.06", 10);
    let dir_a = std::env::temp_dir().join("oodd_acceptance_det_a");
    let dir_b = std::env::temp_dir().join("oodd_acceptance_det_b");
    let result_a = run_experiment(&cfg).unwrap();
    write_csv(&result_a, &dir_a).unwrap();
    let result_b = run_experiment(&cfg).unwrap();
    write_csv(&result_b, &dir_b).unwrap();
    for name in ["samples.csv", "summary.csv", "rmse.csv", "deviation.csv"] {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let bytes = std::fs::read(dir_a.join("samples.csv")).unwrap().len();
    println!("criterion 10: PASS - repeated runs byte-identical ({bytes} bytes of samples.csv)");
}

/// Criterion 11: the global discrepancy bound through the patch error
/// indicators with the overlap constant 4.
#[test]
fn criterion_11_patch_indicator_bound() {
    let s = setup(5, 2, 3, Geometry::Erasure, 100.0);
    let mut rng = SplitMix64::new(2024);
    for seed in 0..5 {
        let real = sample_realization(&s.model, &s.hier, 0.3, 100 + seed).unwrap();
        let multi = s
            .patches
            .iter()
            .filter(|patch| patch_weights(&real, patch, &s.hier).n_defects() >= 2)
            .count();
        assert!(multi >= 1, "seed {seed}: needs multi-defect patches");
        let (direct, _, oo, k) = s.build_all(&real);
        let max_e = s
            .patches
            .iter()
            .map(|patch| patch_error_indicator(&s.dict, patch, &real, &s.hier).unwrap())
            .fold(0.0f64, f64::max);
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..20 {
            let v = rng.vector(s.hier.fine_dof_count());
            let kv = k.spmv(&v).unwrap();
            let pv = direct.apply(&kv).unwrap();
            let ptv = oo.apply(&kv).unwrap();
            let diff: Vec<f64> = pv.iter().zip(&ptv).map(|(a, b)| a - b).collect();
            let lhs = energy_norm(&k, &diff).unwrap();
            let rhs = 4.0 * max_e * energy_norm(&k, &v).unwrap();
            assert!(
                lhs <= rhs * (1.0 + 1e-8) + 1e-12,
                "seed {seed}: ||(P - P~)v||_a = {lhs} above 4 max E_i ||v||_a = {rhs}"
            );
            if rhs > 0.0 {
                worst_ratio = worst_ratio.max(lhs / rhs);
            }
        }
        println!(
            "criterion 11: seed {}: max E_i = {max_e:.3e}, worst lhs/rhs = {worst_ratio:.3}",
            100 + seed
        );
    }
    println!("criterion 11: PASS - discrepancy bounded by 4 max E_i on 5 realizations");
}

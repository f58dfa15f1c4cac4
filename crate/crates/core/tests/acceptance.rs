//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p dirichlet-core --test acceptance`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use dirichlet_core::chain::{path_rng, Chain, EstimatorData, EstimatorRegistry};
use dirichlet_core::fixed_point::{LadderConfig, LadderOrder};
use dirichlet_core::frac1d::checks::{trace_probes, trace_sequence as continuum_trace, NEST_DEPTH};
use dirichlet_core::frac1d::ops::{default_deltas, exit_time_slope, poisson_exponent_slope};
use dirichlet_core::frac1d::{solve_continuum, ContinuumProblem, ExteriorData, FracKernels, Grader, Quadrature};
use dirichlet_core::nonlinearity::{Nonlinearity, NonlinearityRegistry, NonlinearitySpec, Zero};
use dirichlet_core::potential::{dynkin_defect, exit_second_moment, GreenOperator};
use dirichlet_core::projection::{poisson_kernel, project};
use dirichlet_core::random::{
    random_domain, random_form, random_function, random_measure, random_nest, random_subset, RandomFormConfig,
};
use dirichlet_core::semilinear::{
    apriori_report, clamp_certificate, compare, default_weights, residual_probabilistic, solve, stability_gap,
    vd_check, verify_projective, very_weak_defect, GraphProblem,
};
use dirichlet_core::stats::Estimate;
use dirichlet_core::trace::trace_sequence;
use dirichlet_core::wos::exit_law_test;
use dirichlet_core::{FunctionVector, NodeSet, SignedMeasure};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn nonlinearity(kind: usize, b: f64) -> Arc<dyn Nonlinearity> {
    let spec = match kind % 4 {
        0 => NonlinearitySpec::power(b, 3.0),
        1 => NonlinearitySpec {
            kind: "exp".into(),
            params: json!({ "b": b }),
            source: None,
        },
        2 => NonlinearitySpec::power(b, 1.5),
        _ => NonlinearitySpec::power(b, 5.0),
    };
    NonlinearityRegistry::default().build(&spec).unwrap()
}

/// A random problem on a random transient form with a three-level nest.
fn instance(stream: u64, k: u64, kind: usize, cfg: &RandomFormConfig) -> GraphProblem {
    let mut rng = path_rng(stream, k);
    let form = random_form(&mut rng, cfg);
    let n = form.n();
    let d = random_domain(&mut rng, &form);
    let nest = random_nest(&mut rng, &d, 3);
    let g = random_function(&mut rng, n, -1.0, 1.0);
    let mu = random_measure(&mut rng, &d, -1.0, 1.0);
    let b = rng.random_range(0.5..2.0);
    GraphProblem::new(form, d, g, mu, nonlinearity(kind, b))
        .unwrap()
        .with_nest(nest)
        .unwrap()
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Exact identities on 100 random forms.
fn criterion_1() -> Verdict {
    let t = Instant::now();
    let worst: Vec<[f64; 4]> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = path_rng(101, s);
            let form = random_form(&mut rng, &RandomFormConfig::default());
            let n = form.n();
            let w = random_domain(&mut rng, &form);
            let v = random_subset(&mut rng, &w);
            let mu = random_measure(&mut rng, &NodeSet::full(n), -1.0, 1.0);
            let g = random_function(&mut rng, n, -1.0, 1.0);
            let u = random_function(&mut rng, n, -1.0, 1.0);
            let dynkin = dynkin_defect(&form, &v, &w, &mu).unwrap();
            let pv = poisson_kernel(&form, &v).unwrap();
            let pw = poisson_kernel(&form, &w).unwrap();
            let pwg = pw.apply(&g);
            let tower = max_abs(pv.apply(&pwg).iter().zip(pwg.iter()).map(|(a, b)| a - b));
            let composition = (pv.matrix() * pw.matrix() - pw.matrix()).amax();
            let proj = project(&form, &v, &u).unwrap();
            let diff: Vec<f64> = u.iter().zip(proj.iter()).map(|(a, b)| a - b).collect();
            let k = form.energy_matrix();
            let galerkin = max_abs(v.iter().map(|&y| (0..n).map(|z| k[(y, z)] * diff[z]).sum::<f64>()));
            let support = max_abs(v.complement().iter().map(|&y| proj[y]));
            let rows = pv
                .invariant_defect()
                .max(pw.invariant_defect())
                .max(GreenOperator::new(&form, &w).unwrap().invariant_defect());
            [dynkin, tower.max(composition), galerkin.max(support), rows]
        })
        .collect();
    let col = |i: usize| worst.iter().fold(0.0f64, |a, r| a.max(r[i]));
    let (dy, tc, ga, ro) = (col(0), col(1), col(2), col(3));
    let secs = t.elapsed().as_secs_f64();
    verdict(
        dy < 1e-10 && tc < 1e-10 && ga < 1e-10 && ro < 1e-10 && secs < 10.0,
        format!("dynkin {dy:.1e}, tower/composition {tc:.1e}, galerkin {ga:.1e}, rows {ro:.1e}, {secs:.1}s"),
    )
}

/// Every solver output passes both characterizations; violators fail both.
fn criterion_2(solved: &mut Vec<(GraphProblem, FunctionVector)>) -> Verdict {
    let t = Instant::now();
    let runs: Vec<_> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let p = instance(202, s, s as usize, &RandomFormConfig::default());
            let u = solve(&p).map(|s| s.u);
            (p, u)
        })
        .collect();
    let (mut worst_proj, mut worst_res, mut caught, mut failed_solves) = (0.0f64, 0.0f64, 0, 0);
    for (p, u) in runs {
        let Ok(u) = u else {
            failed_solves += 1;
            continue;
        };
        worst_proj = worst_proj.max(verify_projective(&p, &u).unwrap().max());
        worst_res = worst_res.max(residual_probabilistic(&p, &u).unwrap());
        let mut bad = u.clone();
        bad[p.domain.as_slice()[0]] += 1e-3;
        let vp = verify_projective(&p, &bad).unwrap().max();
        let vr = residual_probabilistic(&p, &bad).unwrap();
        if vp > 1e-8 && vr > 1e-8 {
            caught += 1;
        }
        solved.push((p, u));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        failed_solves == 0 && worst_proj < 1e-8 && worst_res < 1e-8 && caught == 50 && secs < 30.0,
        format!(
            "projective {worst_proj:.1e}, probabilistic {worst_res:.1e}, violators caught {caught}/50, \
             solve failures {failed_solves}, {secs:.1}s"
        ),
    )
}

/// Existence and uniqueness: two different ladder schedules meet.
fn criterion_3(solved: &mut Vec<(GraphProblem, FunctionVector)>) -> Verdict {
    let kinds = ["cubic", "exp", "power 1.5", "power 5"];
    let runs: Vec<_> = (0..40u64)
        .into_par_iter()
        .map(|s| {
            let kind = (s % 4) as usize;
            let p = instance(303, s, kind, &RandomFormConfig::default());
            let mut q = p.clone();
            q.ladder = LadderConfig {
                start: 0.5,
                factor: 3.0,
                order: LadderOrder::UpperOuter,
                inner: "newton".into(),
                ..LadderConfig::default()
            };
            let a = solve(&p);
            let b = solve(&q);
            (kind, p, a, b)
        })
        .collect();
    let mut per_kind = [0usize; 4];
    let (mut diff, mut clamp, mut resid) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    for (kind, p, a, b) in runs {
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let d = max_abs(a.u.iter().zip(b.u.iter()).map(|(x, y)| x - y));
                let c = clamp_certificate(&p.form, &p.domain, &a.u, &b.u).unwrap();
                diff = diff.max(d);
                clamp = clamp.max(c);
                resid = resid.max(a.ladder.residual).max(b.ladder.residual);
                if d <= 1e-8 && c <= 1e-10 {
                    per_kind[kind] += 1;
                }
                solved.push((p, a.u));
            }
            _ => failures += 1,
        }
    }
    let summary: Vec<String> = kinds.iter().zip(per_kind).map(|(k, n)| format!("{k} {n}/10")).collect();
    verdict(
        failures == 0 && per_kind.iter().all(|&n| n == 10),
        format!(
            "{}; max diff {diff:.1e}, clamp energy {clamp:.1e}, ladder residual {resid:.1e}",
            summary.join(", ")
        ),
    )
}

/// Ordered pair sharing form, domain and `f`.
fn ordered_pair(s: u64) -> (GraphProblem, GraphProblem) {
    let p = instance(404, s, s as usize, &RandomFormConfig::default());
    let mut rng = path_rng(405, s);
    let n = p.n();
    let dg = random_function(&mut rng, n, 0.0, 0.5);
    let dmu = random_measure(&mut rng, &p.domain, 0.0, 0.5);
    let mut q = p.clone();
    q.g = FunctionVector(p.g.iter().zip(dg.iter()).map(|(a, b)| a + b).collect());
    q.mu = SignedMeasure(p.mu.iter().zip(dmu.iter()).map(|(a, b)| a + b).collect());
    (p, q)
}

/// Comparison on 100 ordered pairs; stability slacks are collected for the
/// next criterion.
fn criterion_4(solved: &mut Vec<(GraphProblem, FunctionVector)>, stability: &mut Vec<f64>) -> Verdict {
    let runs: Vec<_> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let (p, q) = ordered_pair(s);
            let c = compare(&p, &q);
            (p, q, c)
        })
        .collect();
    let (mut violations, mut worst, mut errors) = (0, 0.0f64, 0);
    for (p, q, c) in runs {
        let Ok(c) = c else {
            errors += 1;
            continue;
        };
        worst = worst.max(c.violation);
        if c.violation > 1e-9 {
            violations += 1;
        }
        let st = stability_gap(&p, &c.u1, &q, &c.u2).unwrap();
        stability.push(st.slack);
        stability.extend(st.shared_f_slack);
        solved.push((p, c.u1));
        solved.push((q, c.u2));
    }
    verdict(
        violations == 0 && errors == 0,
        format!("violations {violations}/100, max u1 - u2 {worst:.1e}, solve failures {errors}"),
    )
}

fn criterion_5(solved: &[(GraphProblem, FunctionVector)], stability: &[f64]) -> Verdict {
    let apriori: Vec<f64> = solved
        .par_iter()
        .map(|(p, u)| {
            let w = default_weights(p).unwrap();
            apriori_report(p, u, &w).unwrap().min_slack()
        })
        .collect();
    let a = apriori.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let s = stability.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    verdict(
        a >= -1e-9 && s >= -1e-9,
        format!(
            "a-priori min slack {a:.2e} over {} solutions, stability min slack {s:.2e} over {} bounds",
            apriori.len(),
            stability.len()
        ),
    )
}

/// Exact second moments against the bound, and Monte Carlo against exact.
fn criterion_6() -> Verdict {
    let rows: Vec<(f64, Option<f64>)> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let p = instance(606, s, 0, &RandomFormConfig::default());
            let mu = p.mu.abs();
            let m = exit_second_moment(&p.form, &p.domain, &mu).unwrap();
            let z = (s < 10).then(|| {
                let x = p.domain.as_slice()[0];
                let data = EstimatorData {
                    mu: Some(&mu),
                    ..Default::default()
                };
                let e = dirichlet_core::chain::mc_estimate("second-moment", &p.form, &p.domain, &data, x, 100_000, s)
                    .unwrap();
                e.z_score(m.exact[x])
            });
            (m.slack(), z)
        })
        .collect();
    let slack = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.0));
    let zs: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
    let zmax = max_abs(zs.iter().copied());
    verdict(
        slack >= -1e-10 && zmax <= 3.0,
        format!("bound min slack {slack:.2e} on 100 instances, MC max |z| {zmax:.2} on {} instances", zs.len()),
    )
}

/// Chain estimators against linear algebra; every path is sampled once and
/// feeds all three functionals.
fn criterion_7() -> Verdict {
    const PATHS: u64 = 100_000;
    let kinds = ["PDg", "RDh", "FK-residual"];
    let t = Instant::now();
    let runs: Vec<[f64; 3]> = (0..100u64)
        .map(|s| {
            let p = instance(707, s, s as usize, &RandomFormConfig::default());
            let u = solve(&p).unwrap().u;
            let n = p.n();
            let mut rng = path_rng(708, s);
            let h = random_function(&mut rng, n, 0.0, 1.0);
            let x = p.domain.as_slice()[0];
            let exact_pdg = poisson_kernel(&p.form, &p.domain).unwrap().apply(&p.g)[x];
            let exact_rdh = dirichlet_core::potential::green_apply_density(&p.form, &p.domain, &h).unwrap()[x];
            let data = EstimatorData {
                g: Some(&p.g),
                h: Some(&h),
                mu: Some(&p.mu),
                u: Some(&u),
                f: Some(p.f.as_ref()),
            };
            let reg = EstimatorRegistry::default();
            let fs: Vec<_> = kinds
                .iter()
                .map(|k| reg.build(k, &p.form, &p.domain, &data).unwrap())
                .collect();
            let chain = Chain::new(&p.form, &p.domain).unwrap();
            let samples: Vec<[f64; 3]> = (0..PATHS)
                .into_par_iter()
                .map(|i| {
                    let path = chain.sample(x, &mut path_rng(s, i)).unwrap();
                    [fs[0].evaluate(&path), fs[1].evaluate(&path), fs[2].evaluate(&path)]
                })
                .collect();
            let exact = [exact_pdg, exact_rdh, 0.0];
            let mut z = [0.0; 3];
            for k in 0..3 {
                let col: Vec<f64> = samples.iter().map(|r| r[k]).collect();
                z[k] = Estimate::from_samples(&col).z_score(exact[k]);
            }
            z
        })
        .collect();
    let per_kind: Vec<usize> = (0..3).map(|k| runs.iter().filter(|z| z[k].abs() <= 3.0).count()).collect();
    let joint = runs.iter().filter(|z| z.iter().all(|v| v.abs() <= 3.0)).count();
    let chain_secs = t.elapsed().as_secs_f64();
    let mut chi = Vec::new();
    for (i, alpha) in [0.5, 1.0, 1.5].into_iter().enumerate() {
        let k = FracKernels::new(alpha).unwrap();
        let q = Quadrature::default();
        for (j, x) in [-0.5, 0.0, 0.7].into_iter().enumerate() {
            let r = exit_law_test(&k, &q, x, 100_000, 70 + (3 * i + j) as u64).unwrap();
            chi.push(r.chi_square.p_value);
        }
    }
    let pmin = chi.iter().fold(1.0f64, |a, &p| a.min(p));
    let summary: Vec<String> = kinds.iter().zip(&per_kind).map(|(k, n)| format!("{k} {n}/100")).collect();
    verdict(
        per_kind.iter().all(|&n| n >= 99) && pmin > 1e-3,
        format!(
            "{} (all three jointly {joint}/100, {chain_secs:.0}s); WoS exit law min p {pmin:.3} over 3 alphas x 3 probes",
            summary.join(", ")
        ),
    )
}

/// Boundary exponents of the mean exit time and of the Poisson density.
fn criterion_8() -> Verdict {
    let q = Quadrature::default();
    let deltas = default_deltas();
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 1.0, 1.5] {
        let t = Instant::now();
        let k = FracKernels::new(alpha).unwrap();
        let e = exit_time_slope(&k, &q, &deltas).slope;
        let p = poisson_exponent_slope(&k, &q, &deltas, 1.5, 3.0).unwrap().slope;
        let secs = t.elapsed();
        let target = alpha / 2.0;
        pass &= (e - target).abs() <= 0.05 && (p - target).abs() <= 0.05 && secs < Duration::from_secs(120);
        parts.push(format!(
            "alpha {alpha}: exit {e:.4}, poisson {p:.4} (target {target}), {:.1}s",
            secs.as_secs_f64()
        ));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_9() -> Verdict {
    let grader = Grader::new(12, 32);
    let mut parts = Vec::new();
    let mut pass = true;
    // discrete, nest = D: the trace is exactly zero
    let mut discrete = 0.0f64;
    for s in 0..20u64 {
        let p = instance(909, s, s as usize, &RandomFormConfig::default());
        let u = solve(&p).unwrap().u;
        let t = trace_sequence(&p.form, &p.domain, &[p.domain.clone()], &u).unwrap();
        discrete = discrete.max(t.max_abs_limit());
    }
    pass &= discrete == 0.0;
    parts.push(format!("discrete max |W| {discrete:e} on 20 instances"));
    for alpha in [0.5, 1.0, 1.5] {
        let cubic = NonlinearityRegistry::default().build(&NonlinearitySpec::power(1.0, 3.0)).unwrap();
        let p = ContinuumProblem::new(alpha, ExteriorData::Constant { value: 1.0 }, cubic).unwrap();
        let s = solve_continuum(&p).unwrap();
        let w = continuum_trace(&s, &grader, NEST_DEPTH, &trace_probes()).unwrap().max_abs_limit();
        let m = ContinuumProblem::new(alpha, ExteriorData::Zero, Arc::new(Zero))
            .unwrap()
            .with_martin(0.0, 1.0)
            .unwrap();
        let ms = solve_continuum(&m).unwrap();
        let mass = continuum_trace(&ms, &grader, NEST_DEPTH, &[0.0]).unwrap().limit[0];
        pass &= w < 1e-3 && (mass - 1.0).abs() <= 0.05;
        parts.push(format!("alpha {alpha}: cubic |W| {w:.1e}, Martin mass {mass:.4}"));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_10(solved: &[(GraphProblem, FunctionVector)]) -> Verdict {
    let cfg = RandomFormConfig {
        kill_prob: 0.0,
        ..RandomFormConfig::default()
    };
    let reports: Vec<_> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let mut p = instance(1010, s, 0, &cfg);
            p.f = Arc::new(Zero);
            let u = solve(&p).unwrap().u;
            let r = vd_check(&p, &u).unwrap();
            let vw = very_weak_defect(&p, &u).unwrap();
            (r, vw)
        })
        .collect();
    let identity = reports.iter().fold(0.0f64, |a, r| a.max(r.0.identity));
    let slack = reports
        .iter()
        .fold(f64::INFINITY, |a, r| a.min(r.0.bound_slack).min(r.0.extension_slack));
    let vw_all = solved
        .par_iter()
        .map(|(p, u)| very_weak_defect(p, u).unwrap())
        .reduce(|| 0.0, f64::max)
        .max(reports.iter().fold(0.0f64, |a, r| a.max(r.1)));
    verdict(
        identity < 1e-9 && slack >= -1e-9 && vw_all < 1e-9,
        format!(
            "identity {identity:.1e}, min bound slack {slack:.2e} on 50 killing-free instances; \
             very weak {vw_all:.1e} on {} solutions",
            solved.len() + reports.len()
        ),
    )
}

fn main() -> ExitCode {
    // libtest flags are ignored
    let mut solved = Vec::new();
    let mut stability = Vec::new();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    let mut report = |i: usize, name: &'static str, v: Verdict| {
        println!("{} criterion {i:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((i, name, v));
    };
    report(1, "exact identities", criterion_1());
    report(2, "equivalence", criterion_2(&mut solved));
    report(3, "existence/uniqueness", criterion_3(&mut solved));
    report(4, "comparison", criterion_4(&mut solved, &mut stability));
    report(5, "a-priori/stability", criterion_5(&solved, &stability));
    report(6, "second moment", criterion_6());
    report(7, "Monte Carlo oracles", criterion_7());
    report(8, "continuum scaling", criterion_8());
    report(9, "boundary trace", criterion_9());
    report(10, "weak/very weak", criterion_10(&solved));
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}

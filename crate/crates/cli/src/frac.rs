//! Fractional Laplacian backend on `(-1, 1)`: Nystrom solve, nest checks,
//! walk-on-spheres oracle and the boundary estimates.

use std::collections::BTreeMap;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use dirichlet_core::frac1d::checks::{
    dynkin_interval_defect, eta_measure, edge_exponent, nest_radius, projective_limit_sequence, trace_probes,
    trace_sequence, weighted_norms, NEST_DEPTH,
};
use dirichlet_core::frac1d::ops::{boundary_blowup, default_deltas, exit_time_slope, poisson_exponent_slope};
use dirichlet_core::frac1d::solve::off_grid_probes;
use dirichlet_core::frac1d::{apply_pd, solve_continuum, ContinuumSolution, ExteriorData, Grader, Quadrature};
use dirichlet_core::nonlinearity::NonlinearityRegistry;
use dirichlet_core::spec::Backend as SpecBackend;
use dirichlet_core::stats::Estimate;
use dirichlet_core::wos::{exit_law_test, one_step_exit_probability, one_step_frequency, wos_estimate, WosData};

use crate::backend::Backend;
use crate::config::RunConfig;
use crate::report::{Contracts, RunOutput};

pub struct FracBackend;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    sol: ContinuumSolution,
    q: Quadrature,
    grader: Grader,
}

#[derive(Default)]
struct SuiteOut {
    contracts: Contracts,
    trace_csv: Option<String>,
    mc: Vec<Value>,
    diagnostics: BTreeMap<String, Value>,
}

impl SuiteOut {
    fn new(suite: &str, c: &Ctx<'_>) -> Self {
        Self {
            contracts: Contracts::new(suite, &c.cfg.tol),
            ..Default::default()
        }
    }
}

fn mc_record(kind: &str, x: f64, e: &Estimate, exact: f64) -> Value {
    json!({
        "kind": kind,
        "x": x,
        "estimate": e.estimate,
        "stderr": e.stderr,
        "n_paths": e.n_paths,
        "exact": exact,
        "z": e.z_score(exact),
    })
}

fn verify(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut::new("verify", c);
    let k = c.sol.kernels();
    s.contracts.at_most("residual", c.sol.residual, 1e-6);
    match c.sol.collocation_residual(&c.q, &off_grid_probes()) {
        Ok(r) => s.contracts.at_most("collocation", r, 1e-6),
        Err(e) => s.contracts.error("collocation", &e),
    }
    match projective_limit_sequence(&c.sol, &c.grader, NEST_DEPTH, &trace_probes()) {
        Ok(seq) => {
            s.contracts.at_most("projective.limit", *seq.last().unwrap_or(&f64::NAN), 1e-3);
            s.diagnostics.insert("projective_limit_sequence".into(), json!(seq));
        }
        Err(e) => s.contracts.error("projective.limit", &e),
    }
    let inv = k.invariants(&c.grader);
    s.contracts.at_most("kernels.symmetry", inv.symmetry_defect, 1e-8);
    s.contracts.at_least("kernels.min_green", inv.min_green, 0.0);
    s.contracts.at_least("kernels.min_poisson", inv.min_poisson, 0.0);
    s.contracts.at_most("kernels.poisson_norm", inv.poisson_norm_defect, 1e-6);
    s.contracts.at_most("kernels.levy_symbol", inv.levy_symbol_defect, 1e-4);
    let mut dynkin = 0.0f64;
    for x in [0.0, 0.35] {
        match dynkin_interval_defect(k, &c.grader, 0.6, &[(0.1, 1.0), (-0.4, 0.5)], 0.7, x) {
            Ok(d) => dynkin = dynkin.max(d),
            Err(_) => dynkin = f64::NAN,
        }
    }
    s.contracts.at_most("nested_dynkin", dynkin, 1e-8);
    s
}

fn trace(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut::new("trace", c);
    let p = &c.sol.problem;
    match trace_sequence(&c.sol, &c.grader, NEST_DEPTH, &trace_probes()) {
        Ok(t) => {
            if p.has_martin() {
                // at the centre the normalised Martin kernels are 1, so the
                // trace there is the total boundary mass
                let mass = p.martin_gaps(1.0, 1.0);
                match trace_probes().iter().position(|&q| q == 0.0) {
                    Some(centre) => {
                        let rel = (t.limit[centre] - mass).abs() / mass.abs();
                        s.contracts.at_most("martin_mass_rel", rel, 0.05);
                    }
                    None => s.contracts.error("martin_mass_rel", &"no probe at the centre"),
                }
            } else {
                s.contracts.at_most("limit", t.max_abs_limit(), 1e-3);
            }
            s.trace_csv = Some(t.to_csv());
        }
        Err(e) => s.contracts.error("limit", &e),
    }
    let abs_u = |n: &dirichlet_core::frac1d::Node| c.sol.eval_node(n).abs();
    let eta = eta_measure(c.sol.kernels(), &c.grader, nest_radius(2), 0.0, &abs_u, edge_exponent(&c.sol));
    s.contracts
        .at_most("eta_identity", eta.defect(), 1e-6 * eta.kernel_formula.abs().max(1.0));
    s.diagnostics.insert("eta".into(), serde_json::to_value(&eta).unwrap_or(Value::Null));
    s
}

fn wos(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut::new("mc", c);
    let k = c.sol.kernels();
    let p = &c.sol.problem;
    let (n, seed) = (c.cfg.paths, c.cfg.seed);
    for (i, x) in [-0.5, 0.0, 0.7].into_iter().enumerate() {
        match exit_law_test(k, &c.q, x, n, seed.wrapping_add(i as u64)) {
            Ok(r) => {
                s.contracts.at_least(&format!("exit_law[{x}].p_value"), r.chi_square.p_value, 1e-3);
                s.mc.push(json!({ "kind": "exit-law", "x": x, "chi_square": r.chi_square }));
            }
            Err(e) => s.contracts.error("exit_law", &e),
        }
    }
    let mut z = |kind: &str, x: f64, est: dirichlet_core::Result<Estimate>, exact: f64| match est {
        Ok(e) => {
            s.contracts.at_most(&format!("{kind}.z"), e.z_score(exact).abs(), 3.0);
            s.mc.push(mc_record(kind, x, &e, exact));
        }
        Err(err) => s.contracts.error(kind, &err),
    };
    let none = WosData::default();
    // from 0 the first ball is D itself, so probe off-centre
    z(
        "mean_exit_time",
        0.5,
        wos_estimate("mean_exit_time", k, &none, 0.5, n, seed),
        k.mean_exit(0.5),
    );
    z(
        "one_step",
        0.5,
        one_step_frequency(k, 0.5, n, seed),
        one_step_exit_probability(k, &c.grader, 0.5),
    );
    // the problem's own data, plus a fixed indicator that is never trivial
    let probe = ExteriorData::Indicator { lo: 1.0, hi: 3.0 };
    let mut cases = vec![("PDg[probe]", &probe)];
    if !p.g.is_zero() {
        cases.push(("PDg", &p.g));
    }
    for (name, g) in cases {
        let d = WosData {
            g: Some(g),
            ..Default::default()
        };
        match apply_pd(k, &c.q, g, 0.3) {
            Ok(exact) => z(name, 0.3, wos_estimate("PDg", k, &d, 0.3, n, seed), exact.value),
            Err(e) => z(name, 0.3, Err(e), 0.0),
        }
    }
    if !p.has_martin() {
        let d = WosData {
            solution: Some(&c.sol),
            ..Default::default()
        };
        let fk_paths = (n / 5).max(100);
        z("FK_residual", 0.1, wos_estimate("FK_residual", k, &d, 0.1, fk_paths, seed), 0.0);
    }
    s
}

fn estimates(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut::new("estimates", c);
    let k = c.sol.kernels();
    let p = &c.sol.problem;
    let deltas = default_deltas();
    let e = exit_time_slope(k, &c.q, &deltas);
    s.contracts.at_most("exit_time_slope_error", (e.slope - k.a).abs(), 0.05);
    s.diagnostics.insert("exit_time_slope".into(), serde_json::to_value(&e).unwrap_or(Value::Null));
    match poisson_exponent_slope(k, &c.q, &deltas, 1.5, 3.0) {
        Ok(f) => {
            s.contracts.at_most("poisson_slope_error", (f.slope - k.a).abs(), 0.05);
            s.diagnostics.insert("poisson_slope".into(), serde_json::to_value(&f).unwrap_or(Value::Null));
        }
        Err(err) => s.contracts.error("poisson_slope_error", &err),
    }
    if let ExteriorData::BoundarySingular { .. } = p.g {
        // the exponent convention for singular data is open; record only
        match boundary_blowup(k, &c.q, &p.g, &deltas) {
            Ok(f) => {
                s.diagnostics.insert("singular_blowup".into(), serde_json::to_value(&f).unwrap_or(Value::Null));
            }
            Err(err) => {
                s.diagnostics.insert("singular_blowup".into(), json!(err.to_string()));
            }
        }
    }
    if p.has_martin() {
        for side in [-1.0, 1.0] {
            let m = k.martin_limit(0.5, side, 2.0);
            s.contracts.at_most(&format!("martin[{side}].tail_variation"), m.tail_variation, 1e-4);
            s.contracts
                .at_most(&format!("martin[{side}].closed_form"), (m.value - k.martin(0.5, side)).abs(), 1e-6);
        }
    }
    let w = weighted_norms(&c.sol, &c.grader);
    s.diagnostics.insert(
        "weighted_norms".into(),
        json!({
            "u_l1": w.u_l1,
            "f_weighted": w.f_weighted,
            "f0_weighted": w.f0_weighted,
            "atoms_weighted": w.atoms_weighted,
            "exterior_weighted": w.exterior_weighted,
            "ratio": if w.ratio().is_finite() { json!(w.ratio()) } else { json!("inf") },
        }),
    );
    s
}

type Suite = fn(&Ctx<'_>) -> SuiteOut;

impl Backend for FracBackend {
    fn name(&self) -> &'static str {
        "frac1d"
    }

    fn suites(&self) -> &'static [&'static str] {
        &["verify", "trace", "mc", "wos", "estimates"]
    }

    fn run(&self, cfg: &RunConfig) -> Result<RunOutput> {
        let SpecBackend::Frac1d(spec) = &cfg.spec.backend else {
            return Err(anyhow!("frac1d backend given a {} problem", cfg.spec.backend_name()));
        };
        let problem = spec.build(&NonlinearityRegistry::default())?;
        let mut out = RunOutput::default();
        let mut solve_contracts = Contracts::new("solve", &cfg.tol);
        let mut sol = match solve_continuum(&problem) {
            Ok(s) => s,
            Err(e) => {
                solve_contracts.error("ladder", &e);
                out.contracts = solve_contracts.items;
                return Ok(out);
            }
        };
        solve_contracts.at_most("residual", sol.residual, 1e-6);
        out.diagnostics.insert("ladder".into(), serde_json::to_value(&sol.ladder)?);
        out.diagnostics.insert("grid_nodes".into(), json!(sol.grid.len()));
        if let Some(inj) = &cfg.inject {
            sol = sol.perturbed(inj.eps);
            out.diagnostics.insert("injection".into(), json!({ "eps": inj.eps }));
        }
        out.solution_csv = sol.to_csv();
        let ctx = Ctx {
            cfg,
            sol,
            q: Quadrature::default(),
            grader: Grader::new(12, 32),
        };
        // "mc" and "wos" name the same walk-on-spheres suite here
        let mut picked: Vec<Suite> = Vec::new();
        if cfg.wants("verify") {
            picked.push(verify);
        }
        if cfg.wants("trace") {
            picked.push(trace);
        }
        if cfg.wants("mc") || cfg.wants("wos") {
            picked.push(wos);
        }
        if cfg.wants("estimates") {
            picked.push(estimates);
        }
        let results: Vec<SuiteOut> = picked.par_iter().map(|f| f(&ctx)).collect();
        out.contracts = solve_contracts.items;
        out.trace_csv = String::from("probe,n,w_n,extrapolated\n");
        for r in results {
            out.contracts.extend(r.contracts.items);
            if let Some(t) = r.trace_csv {
                out.trace_csv = t;
            }
            out.mc.extend(r.mc);
            out.diagnostics.extend(r.diagnostics);
        }
        Ok(out)
    }
}

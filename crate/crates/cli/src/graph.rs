//! Finite-state backend: exact solve, every verification layer, chain Monte
//! Carlo.

use std::collections::BTreeMap;

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use dirichlet_core::chain::{exit_law_test, mc_estimate, EstimatorData};
use dirichlet_core::fixed_point::LadderOrder;
use dirichlet_core::nonlinearity::NonlinearityRegistry;
use dirichlet_core::potential::{exit_second_moment, green_apply_density};
use dirichlet_core::projection::poisson_kernel;
use dirichlet_core::semilinear::{
    apriori_report, clamp_certificate, compare, default_weights, residual_probabilistic, solve, stability_gap,
    very_weak_defect, vd_check, verify_projective, GraphProblem,
};
use dirichlet_core::spec::Backend as SpecBackend;
use dirichlet_core::stats::Estimate;
use dirichlet_core::trace::{killing_normalization_defect, trace_sequence};
use dirichlet_core::{FunctionVector, SignedMeasure};

use crate::backend::Backend;
use crate::config::RunConfig;
use crate::report::{Contracts, RunOutput};

pub struct GraphBackend;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    problem: GraphProblem,
    pair: Option<GraphProblem>,
    /// Solver output, possibly perturbed by an injection.
    u: FunctionVector,
}

#[derive(Default)]
struct SuiteOut {
    contracts: Contracts,
    trace_csv: Option<String>,
    mc: Vec<Value>,
    diagnostics: BTreeMap<String, Value>,
}

fn mc_record(kind: &str, x: usize, e: &Estimate, exact: f64) -> Value {
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

fn is_zero_f(p: &GraphProblem) -> bool {
    p.sites().iter().all(|&s| {
        dirichlet_core::nonlinearity::default_probe_values()
            .iter()
            .all(|&y| p.f.eval(s, y) == 0.0)
    })
}

fn verify(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut {
        contracts: Contracts::new("verify", &c.cfg.tol),
        ..Default::default()
    };
    let k = &mut s.contracts;
    match residual_probabilistic(&c.problem, &c.u) {
        Ok(r) => k.at_most("residual", r, 1e-8),
        Err(e) => k.error("residual", &e),
    }
    match verify_projective(&c.problem, &c.u) {
        Ok(r) => {
            k.at_most("projective.variational", r.variational, 1e-8);
            k.at_most("projective.boundary", r.boundary, 1e-8);
            k.at_most("projective.limit", r.limit, 1e-8);
        }
        Err(e) => k.error("projective", &e),
    }
    match very_weak_defect(&c.problem, &c.u) {
        Ok(r) => k.at_most("very_weak", r, 1e-9),
        Err(e) => k.error("very_weak", &e),
    }
    if c.problem.form.kappa().iter().all(|&v| v == 0.0) && is_zero_f(&c.problem) {
        match vd_check(&c.problem, &c.u) {
            Ok(r) => {
                k.at_most("vd.identity", r.identity, 1e-9);
                k.at_least("vd.bound_slack", r.bound_slack, -1e-9);
                k.at_least("vd.extension_slack", r.extension_slack, -1e-9);
            }
            Err(e) => k.error("vd", &e),
        }
    }
    s
}

fn trace(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut {
        contracts: Contracts::new("trace", &c.cfg.tol),
        ..Default::default()
    };
    match trace_sequence(&c.problem.form, &c.problem.domain, &c.problem.nest, &c.u) {
        Ok(t) => {
            s.contracts.at_most("limit", t.max_abs_limit(), 1e-10);
            s.trace_csv = Some(t.to_csv());
        }
        Err(e) => s.contracts.error("limit", &e),
    }
    match killing_normalization_defect(&c.problem.form, &c.problem.domain) {
        Ok(d) => s.contracts.at_most("killing_normalization", d, 1e-10),
        Err(e) => s.contracts.error("killing_normalization", &e),
    }
    s
}

fn mc(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut {
        contracts: Contracts::new("mc", &c.cfg.tol),
        ..Default::default()
    };
    let p = &c.problem;
    let x = p.domain.as_slice()[0];
    let (n, seed) = (c.cfg.paths, c.cfg.seed);
    let one = FunctionVector::indicator(p.n(), &p.domain);
    let exact = poisson_kernel(&p.form, &p.domain)
        .map(|k| k.apply(&p.g)[x])
        .and_then(|pdg| green_apply_density(&p.form, &p.domain, &one).map(|r| (pdg, r[x])));
    let (exact_pdg, exact_r1) = match exact {
        Ok(v) => v,
        Err(e) => {
            s.contracts.error("exact", &e);
            return s;
        }
    };
    let cases: Vec<(&str, EstimatorData<'_>, f64)> = vec![
        (
            "PDg",
            EstimatorData {
                g: Some(&p.g),
                ..Default::default()
            },
            exact_pdg,
        ),
        (
            "RDh",
            EstimatorData {
                h: Some(&one),
                ..Default::default()
            },
            exact_r1,
        ),
        (
            "FK-residual",
            EstimatorData {
                g: Some(&p.g),
                mu: Some(&p.mu),
                u: Some(&c.u),
                f: Some(p.f.as_ref()),
                ..Default::default()
            },
            0.0,
        ),
    ];
    for (kind, data, exact) in cases {
        match mc_estimate(kind, &p.form, &p.domain, &data, x, n, seed) {
            Ok(e) => {
                s.contracts.at_most(&format!("{kind}.z"), e.z_score(exact).abs(), 3.0);
                s.mc.push(mc_record(kind, x, &e, exact));
            }
            Err(err) => s.contracts.error(kind, &err),
        }
    }
    match exit_law_test(&p.form, &p.domain, x, n, seed) {
        Ok(chi) => {
            s.contracts.at_least("exit_law.p_value", chi.p_value, 1e-3);
            s.mc.push(json!({ "kind": "exit-law", "x": x, "chi_square": chi }));
        }
        Err(err) => s.contracts.error("exit_law", &err),
    }
    let mu_plus = p.mu.positive_part();
    if mu_plus.iter().any(|&v| v > 0.0) {
        let data = EstimatorData {
            mu: Some(&mu_plus),
            ..Default::default()
        };
        let run = exit_second_moment(&p.form, &p.domain, &mu_plus).and_then(|m| {
            mc_estimate("second-moment", &p.form, &p.domain, &data, x, n, seed).map(|e| (m.exact[x], e))
        });
        match run {
            Ok((exact, e)) => {
                s.contracts.at_most("second-moment.z", e.z_score(exact).abs(), 3.0);
                s.mc.push(mc_record("second-moment", x, &e, exact));
            }
            Err(err) => s.contracts.error("second-moment", &err),
        }
    }
    s
}

fn estimates(c: &Ctx<'_>) -> SuiteOut {
    let mut s = SuiteOut {
        contracts: Contracts::new("estimates", &c.cfg.tol),
        ..Default::default()
    };
    let p = &c.problem;
    let k = &mut s.contracts;
    match default_weights(p).and_then(|w| apriori_report(p, &c.u, &w)) {
        Ok(r) => {
            k.at_least("apriori.pointwise_slack", r.pointwise, -1e-9);
            k.at_least("apriori.shifted_slack", r.shifted, -1e-9);
            k.at_least("apriori.weighted_slack", r.weighted, -1e-9);
        }
        Err(e) => k.error("apriori", &e),
    }
    let mu_plus: SignedMeasure = p.mu.positive_part();
    match exit_second_moment(&p.form, &p.domain, &mu_plus) {
        Ok(m) => k.at_least("second_moment_slack", m.slack(), -1e-10),
        Err(e) => k.error("second_moment", &e),
    }
    // uniqueness: the other ladder order reaches the same point
    let mut other = p.clone();
    other.ladder.order = match p.ladder.order {
        LadderOrder::LowerOuter => LadderOrder::UpperOuter,
        LadderOrder::UpperOuter => LadderOrder::LowerOuter,
    };
    match solve(&other) {
        Ok(s2) => {
            let diff = c.u.iter().zip(s2.u.iter()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            k.at_most("uniqueness.max_diff", diff, 1e-8);
            match clamp_certificate(&p.form, &p.domain, &c.u, &s2.u) {
                Ok(e) => k.at_most("uniqueness.clamp_energy", e, 1e-10),
                Err(e) => k.error("uniqueness.clamp_energy", &e),
            }
        }
        Err(e) => k.error("uniqueness", &e),
    }
    if let Some(q) = &c.pair {
        match compare(p, q) {
            Ok(cmp) => {
                k.at_most("comparison.violation", cmp.violation, 1e-9);
                match stability_gap(p, &cmp.u1, q, &cmp.u2) {
                    Ok(st) => {
                        k.at_least("stability.slack", st.slack, -1e-9);
                        if let Some(sh) = st.shared_f_slack {
                            k.at_least("stability.shared_f_slack", sh, -1e-9);
                        }
                    }
                    Err(e) => k.error("stability", &e),
                }
            }
            Err(e) => k.error("comparison", &e),
        }
    }
    s
}

type Suite = fn(&Ctx<'_>) -> SuiteOut;

const SUITES: [(&str, Suite); 4] = [("verify", verify), ("trace", trace), ("mc", mc), ("estimates", estimates)];

impl Backend for GraphBackend {
    fn name(&self) -> &'static str {
        "graph"
    }

    fn suites(&self) -> &'static [&'static str] {
        &["verify", "trace", "mc", "estimates"]
    }

    fn run(&self, cfg: &RunConfig) -> Result<RunOutput> {
        let SpecBackend::Graph(spec) = &cfg.spec.backend else {
            return Err(anyhow!("graph backend given a {} problem", cfg.spec.backend_name()));
        };
        let problem = spec.build(&NonlinearityRegistry::default())?;
        let pair = spec.build_pair(&problem)?;
        let mut out = RunOutput::default();
        let mut solve_contracts = Contracts::new("solve", &cfg.tol);
        let sol = match solve(&problem) {
            Ok(s) => s,
            Err(e) => {
                solve_contracts.error("ladder", &e);
                out.contracts = solve_contracts.items;
                return Ok(out);
            }
        };
        if let Ok(r) = residual_probabilistic(&problem, &sol.u) {
            solve_contracts.at_most("residual", r, 1e-8);
        }
        out.diagnostics.insert("ladder".into(), serde_json::to_value(&sol.ladder)?);
        let mut u = sol.u.clone();
        if let Some(inj) = &cfg.inject {
            let x = inj.state.unwrap_or(problem.domain.as_slice()[0]);
            if x >= u.len() {
                return Err(anyhow!("injection state {x} is out of range"));
            }
            u[x] += inj.eps;
            out.diagnostics.insert("injection".into(), json!({ "state": x, "eps": inj.eps }));
        }
        out.solution_csv = String::from("state,in_domain,u\n");
        for (x, v) in u.iter().enumerate() {
            out.solution_csv
                .push_str(&format!("{x},{},{v:.17e}\n", problem.domain.contains(x) as u8));
        }
        let ctx = Ctx { cfg, problem, pair, u };
        let picked: Vec<&(&str, Suite)> = SUITES.iter().filter(|(n, _)| cfg.wants(n)).collect();
        let results: Vec<SuiteOut> = picked.par_iter().map(|(_, f)| f(&ctx)).collect();
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

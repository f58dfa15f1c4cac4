//! Nonlinearities `f(x, y)`, nonincreasing in `y`, and the name-keyed
//! registry used by problem files.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Where a nonlinearity is evaluated: a state of the graph backend or a
/// point of the real line for the continuum backend.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Site {
    State(usize),
    Point(f64),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::State(i) => write!(f, "state {i}"),
            Site::Point(x) => write!(f, "x = {x}"),
        }
    }
}

pub trait Nonlinearity: Send + Sync {
    fn name(&self) -> &str;

    fn eval(&self, site: Site, y: f64) -> f64;

    /// A (generalised) derivative in `y`. The default is a central difference.
    fn derivative(&self, site: Site, y: f64) -> f64 {
        let h = 1e-6 * (1.0 + y.abs());
        (self.eval(site, y + h) - self.eval(site, y - h)) / (2.0 * h)
    }

    /// Asserts that `y -> f(x, y)` is nonincreasing for every `x`.
    fn monotone_flag(&self) -> bool {
        true
    }
}

/// Spatial coefficient `b(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    PerState(Vec<f64>),
    /// `c |x - center|^{-q}` on the continuum backend.
    PowerDistance {
        c: f64,
        q: f64,
        #[serde(default)]
        center: f64,
    },
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Constant(1.0)
    }
}

impl Coefficient {
    pub fn at(&self, site: Site) -> f64 {
        match (self, site) {
            (Coefficient::Constant(c), _) => *c,
            (Coefficient::PerState(v), Site::State(i)) => v[i],
            (Coefficient::PerState(_), Site::Point(x)) => {
                panic!("per-state coefficient evaluated at continuum point {x}")
            }
            (Coefficient::PowerDistance { c, q, center }, Site::Point(x)) => {
                c * (x - center).abs().powf(-q)
            }
            (Coefficient::PowerDistance { .. }, Site::State(i)) => {
                panic!("distance coefficient evaluated at graph state {i}")
            }
        }
    }

    pub fn validate_for_states(&self, n: usize) -> Result<()> {
        match self {
            Coefficient::Constant(_) => Ok(()),
            Coefficient::PerState(v) if v.len() == n => Ok(()),
            Coefficient::PerState(v) => Err(Error::Dimension {
                expected: n,
                got: v.len(),
            }),
            Coefficient::PowerDistance { .. } => Err(Error::Invalid(
                "distance coefficients only apply to the continuum backend".into(),
            )),
        }
    }

    pub fn validate_for_points(&self) -> Result<()> {
        match self {
            Coefficient::PerState(_) => Err(Error::Invalid(
                "per-state coefficients only apply to the graph backend".into(),
            )),
            _ => Ok(()),
        }
    }

    fn is_nonnegative(&self) -> bool {
        match self {
            Coefficient::Constant(c) => *c >= 0.0,
            Coefficient::PerState(v) => v.iter().all(|&c| c >= 0.0),
            Coefficient::PowerDistance { c, .. } => *c >= 0.0,
        }
    }
}

pub struct Zero;

impl Nonlinearity for Zero {
    fn name(&self) -> &str {
        "zero"
    }
    fn eval(&self, _: Site, _: f64) -> f64 {
        0.0
    }
    fn derivative(&self, _: Site, _: f64) -> f64 {
        0.0
    }
}

/// `f(x, y) = -b(x) y |y|^{p-1}` with `p >= 1`.
pub struct Power {
    pub b: Coefficient,
    pub p: f64,
}

impl Nonlinearity for Power {
    fn name(&self) -> &str {
        "power"
    }
    fn eval(&self, site: Site, y: f64) -> f64 {
        -self.b.at(site) * y * y.abs().powf(self.p - 1.0)
    }
    fn derivative(&self, site: Site, y: f64) -> f64 {
        -self.b.at(site) * self.p * y.abs().powf(self.p - 1.0)
    }
}

/// `f(x, y) = b(x) (1 - e^y)`.
pub struct Exponential {
    pub b: Coefficient,
}

impl Nonlinearity for Exponential {
    fn name(&self) -> &str {
        "exp"
    }
    fn eval(&self, site: Site, y: f64) -> f64 {
        self.b.at(site) * (1.0 - y.exp())
    }
    fn derivative(&self, site: Site, y: f64) -> f64 {
        -self.b.at(site) * y.exp()
    }
}

/// `f(x, y) = b(x) (1 - e^{y^2}) 1_{y >= 0}`.
pub struct ExpSquare {
    pub b: Coefficient,
}

impl Nonlinearity for ExpSquare {
    fn name(&self) -> &str {
        "exp-square"
    }
    fn eval(&self, site: Site, y: f64) -> f64 {
        if y >= 0.0 {
            self.b.at(site) * (1.0 - (y * y).exp())
        } else {
            0.0
        }
    }
    fn derivative(&self, site: Site, y: f64) -> f64 {
        if y > 0.0 {
            -self.b.at(site) * 2.0 * y * (y * y).exp()
        } else {
            0.0
        }
    }
}

/// Piecewise-linear `y -> f` table, extrapolated linearly with the end slopes
/// and scaled by `b(x)`.
pub struct Table {
    ys: Vec<f64>,
    fs: Vec<f64>,
    b: Coefficient,
}

impl Table {
    pub fn new(ys: Vec<f64>, fs: Vec<f64>, b: Coefficient) -> Result<Self> {
        if ys.len() < 2 || ys.len() != fs.len() {
            return Err(Error::Invalid("table needs at least two (y, f) pairs".into()));
        }
        if ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("table abscissae must increase".into()));
        }
        Ok(Self { ys, fs, b })
    }

    fn segment(&self, y: f64) -> usize {
        let last = self.ys.len() - 2;
        match self.ys.binary_search_by(|v| v.total_cmp(&y)) {
            Ok(i) | Err(i) => i.saturating_sub(1).min(last),
        }
    }

    fn slope(&self, i: usize) -> f64 {
        (self.fs[i + 1] - self.fs[i]) / (self.ys[i + 1] - self.ys[i])
    }
}

impl Nonlinearity for Table {
    fn name(&self) -> &str {
        "custom-table"
    }
    fn eval(&self, site: Site, y: f64) -> f64 {
        let i = self.segment(y);
        self.b.at(site) * (self.fs[i] + self.slope(i) * (y - self.ys[i]))
    }
    fn derivative(&self, site: Site, y: f64) -> f64 {
        self.b.at(site) * self.slope(self.segment(y))
    }
}

/// `f(x, y) + s(x)`: adds a `y`-independent source.
pub struct WithSource {
    pub inner: Arc<dyn Nonlinearity>,
    pub source: Coefficient,
}

impl Nonlinearity for WithSource {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn eval(&self, site: Site, y: f64) -> f64 {
        self.inner.eval(site, y) + self.source.at(site)
    }
    fn derivative(&self, site: Site, y: f64) -> f64 {
        self.inner.derivative(site, y)
    }
}

/// `f_h(x, y) = f(x, h(x) + y)`.
pub struct Shifted {
    pub inner: Arc<dyn Nonlinearity>,
    pub shift: Arc<dyn Fn(Site) -> f64 + Send + Sync>,
}

impl Nonlinearity for Shifted {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn eval(&self, site: Site, y: f64) -> f64 {
        self.inner.eval(site, (self.shift)(site) + y)
    }
    fn derivative(&self, site: Site, y: f64) -> f64 {
        self.inner.derivative(site, (self.shift)(site) + y)
    }
}

/// `f_{n,m} = max(min(f, n rho_n), -m rho_m)` with `rho_k = k rho / (1 + k rho)`.
pub struct Truncated<'a> {
    pub inner: &'a dyn Nonlinearity,
    pub upper_level: f64,
    pub lower_level: f64,
    pub rho: &'a Coefficient,
}

impl Truncated<'_> {
    fn bounds(&self, site: Site) -> (f64, f64) {
        let r = self.rho.at(site);
        let cap = |k: f64| {
            if k.is_infinite() {
                f64::INFINITY
            } else {
                k * (k * r / (1.0 + k * r))
            }
        };
        (-cap(self.lower_level), cap(self.upper_level))
    }
}

impl Nonlinearity for Truncated<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn eval(&self, site: Site, y: f64) -> f64 {
        let (lo, hi) = self.bounds(site);
        self.inner.eval(site, y).min(hi).max(lo)
    }
    fn derivative(&self, site: Site, y: f64) -> f64 {
        let (lo, hi) = self.bounds(site);
        let v = self.inner.eval(site, y);
        if v >= hi || v <= lo {
            0.0
        } else {
            self.inner.derivative(site, y)
        }
    }
}

/// Spot check of monotonicity on a grid of `y` values per site.
pub fn check_monotone(f: &dyn Nonlinearity, sites: &[Site], ys: &[f64]) -> Result<()> {
    if !f.monotone_flag() {
        return Err(Error::Precondition(format!(
            "nonlinearity `{}` is not flagged nonincreasing",
            f.name()
        )));
    }
    for &site in sites {
        let vals: Vec<f64> = ys.iter().map(|&y| f.eval(site, y)).collect();
        // f(., y) must be finite wherever it is sampled
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "nonlinearity `{}` is not finite at {site}, y = {}",
                f.name(),
                ys[i]
            )));
        }
        for i in 0..ys.len() {
            for j in i + 1..ys.len() {
                if vals[j] > vals[i] + 1e-12 * (1.0 + vals[i].abs()) {
                    return Err(Error::NotMonotone {
                        site: site.to_string(),
                        y1: ys[i],
                        y2: ys[j],
                        f1: vals[i],
                        f2: vals[j],
                    });
                }
            }
        }
    }
    Ok(())
}

pub fn default_probe_values() -> Vec<f64> {
    (0..=40).map(|k| -5.0 + 0.25 * k as f64).collect()
}

/// JSON description `{"kind": .., "params": {..}, "source": ..}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub kind: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Coefficient>,
}

impl NonlinearitySpec {
    pub fn zero() -> Self {
        Self {
            kind: "zero".into(),
            params: Value::Null,
            source: None,
        }
    }

    pub fn power(b: f64, p: f64) -> Self {
        Self {
            kind: "power".into(),
            params: serde_json::json!({ "b": b, "p": p }),
            source: None,
        }
    }

    pub fn coefficients(&self) -> Vec<Coefficient> {
        let mut out = Vec::new();
        if let Some(b) = self.params.get("b") {
            if let Ok(c) = serde_json::from_value::<Coefficient>(b.clone()) {
                out.push(c);
            }
        }
        if let Some(s) = &self.source {
            out.push(s.clone());
        }
        out
    }
}

type Builder = fn(&Value) -> Result<Arc<dyn Nonlinearity>>;

/// Name-keyed constructors for nonlinearity kinds.
pub struct NonlinearityRegistry {
    builders: BTreeMap<&'static str, Builder>,
}

fn coefficient(params: &Value, key: &str) -> Result<Coefficient> {
    match params.get(key) {
        None => Ok(Coefficient::default()),
        Some(v) => {
            let c: Coefficient = serde_json::from_value(v.clone())?;
            if !c.is_nonnegative() {
                return Err(Error::Invalid(format!("coefficient `{key}` must be nonnegative")));
            }
            Ok(c)
        }
    }
}

fn number(params: &Value, key: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Invalid(format!("missing numeric parameter `{key}`")))
}

impl Default for NonlinearityRegistry {
    fn default() -> Self {
        let mut r = Self {
            builders: BTreeMap::new(),
        };
        r.register("zero", |_| Ok(Arc::new(Zero)));
        r.register("linear", |p| {
            Ok(Arc::new(Power {
                b: coefficient(p, "c")?,
                p: 1.0,
            }))
        });
        r.register("power", |p| {
            let exponent = number(p, "p")?;
            if exponent < 1.0 {
                return Err(Error::Invalid("power nonlinearity needs p >= 1".into()));
            }
            Ok(Arc::new(Power {
                b: coefficient(p, "b")?,
                p: exponent,
            }))
        });
        r.register("exp", |p| {
            Ok(Arc::new(Exponential {
                b: coefficient(p, "b")?,
            }))
        });
        r.register("exp-square", |p| {
            Ok(Arc::new(ExpSquare {
                b: coefficient(p, "b")?,
            }))
        });
        r.register("custom-table", |p| {
            let ys: Vec<f64> = serde_json::from_value(p.get("y").cloned().unwrap_or_default())?;
            let fs: Vec<f64> = serde_json::from_value(p.get("f").cloned().unwrap_or_default())?;
            Ok(Arc::new(Table::new(ys, fs, coefficient(p, "b")?)?))
        });
        r
    }
}

impl NonlinearityRegistry {
    pub fn register(&mut self, name: &'static str, builder: Builder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(&self, spec: &NonlinearitySpec) -> Result<Arc<dyn Nonlinearity>> {
        let builder = self.builders.get(spec.kind.as_str()).ok_or_else(|| Error::Unknown {
            kind: "nonlinearity",
            name: spec.kind.clone(),
        })?;
        let f = builder(&spec.params)?;
        Ok(match &spec.source {
            None => f,
            Some(source) => Arc::new(WithSource {
                inner: f,
                source: source.clone(),
            }),
        })
    }
}

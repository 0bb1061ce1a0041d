//! Hyperparameter search spaces and the configurations drawn from them.
//!
//! A [`SearchSpace`] is an optional categorical *family* choice plus a list of
//! parameters, each of which may be restricted to a subset of families. A
//! [`Configuration`] is one point in a single family branch.
//!
//! Continuous parameters carry a declared [`Scale`]. Every numeric operation on
//! them (grid spacing, uniform sampling, derivative-free moves, density
//! estimation) happens in *scaled coordinates*: the value itself for
//! [`Scale::Linear`], its base-10 exponent for [`Scale::Log10`].

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Family label used when a space does not declare a family parameter.
pub const DEFAULT_FAMILY: &str = "logistic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log10,
}

impl Scale {
    pub fn to_scaled(self, value: f64) -> f64 {
        match self {
            Scale::Linear => value,
            Scale::Log10 => value.log10(),
        }
    }

    pub fn from_scaled(self, scaled: f64) -> f64 {
        match self {
            Scale::Linear => scaled,
            Scale::Log10 => 10f64.powf(scaled),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Continuous { lo: f64, hi: f64, scale: Scale },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64, scale: Scale) -> Result<Self> {
        let spec = ParamSpec {
            name: name.into(),
            kind: ParamKind::Continuous { lo, hi, scale },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self> {
        Self::continuous(name, lo, hi, Scale::Linear)
    }

    pub fn log10(name: impl Into<String>, lo: f64, hi: f64) -> Result<Self> {
        Self::continuous(name, lo, hi, Scale::Log10)
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let spec = ParamSpec {
            name: name.into(),
            kind: ParamKind::Categorical {
                choices: choices.into_iter().map(Into::into).collect(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidSpace("parameter with empty name".into()));
        }
        match &self.kind {
            ParamKind::Continuous { lo, hi, scale } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidSpace(format!(
                        "{}: bounds must satisfy lo < hi, got ({lo}, {hi})",
                        self.name
                    )));
                }
                if *scale == Scale::Log10 && *lo <= 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "{}: log10 scale needs lo > 0, got {lo}",
                        self.name
                    )));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return Err(Error::InvalidSpace(format!("{}: no choices", self.name)));
                }
                let mut seen = HashSet::new();
                for c in choices {
                    if !seen.insert(c.as_str()) {
                        return Err(Error::InvalidSpace(format!(
                            "{}: duplicate choice {c:?}",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ParamKind::Continuous { .. })
    }

    /// Bounds in scaled coordinates, for continuous parameters.
    pub fn scaled_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            ParamKind::Continuous { lo, hi, scale } => Some((scale.to_scaled(lo), scale.to_scaled(hi))),
            ParamKind::Categorical { .. } => None,
        }
    }

    /// Maps a scaled coordinate back to a value, clamped into bounds. The
    /// exact scaled bounds map to the exact declared bounds.
    pub fn value_from_scaled(&self, scaled: f64) -> Option<f64> {
        let ParamKind::Continuous { lo, hi, scale } = self.kind else {
            return None;
        };
        let (slo, shi) = (scale.to_scaled(lo), scale.to_scaled(hi));
        Some(if scaled <= slo {
            lo
        } else if scaled >= shi {
            hi
        } else {
            scale.from_scaled(scaled).clamp(lo, hi)
        })
    }

    fn contains(&self, value: &Value) -> bool {
        match (&self.kind, value) {
            (ParamKind::Continuous { lo, hi, .. }, Value::Real(x)) => *lo <= *x && *x <= *hi,
            (ParamKind::Categorical { choices }, Value::Label(l)) => choices.contains(l),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Label(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(x) => write!(f, "{x}"),
            Value::Label(l) => f.write_str(l),
        }
    }
}

/// One point of a search space: a family and the values of the parameters
/// active in that family's branch, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub family: String,
    pub values: Vec<(String, Value)>,
}

impl Configuration {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn real(&self, name: &str) -> Option<f64> {
        match self.get(name)? {
            Value::Real(x) => Some(*x),
            Value::Label(_) => None,
        }
    }

    pub fn label(&self, name: &str) -> Option<&str> {
        match self.get(name)? {
            Value::Label(l) => Some(l),
            Value::Real(_) => None,
        }
    }
}

/// Renders as `family=<f>;name=value;...`, the form used in report files.
impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "family={}", self.family)?;
        for (name, value) in &self.values {
            write!(f, ";{name}={value}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SpaceParam {
    spec: ParamSpec,
    /// `None` means active in every family.
    families: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    family: Option<ParamSpec>,
    params: Vec<SpaceParam>,
}

impl SearchSpace {
    /// A flat space with no family choice.
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let mut space = SearchSpace {
            family: None,
            params: Vec::new(),
        };
        for p in params {
            space.push(p, None)?;
        }
        Ok(space)
    }

    /// A space whose first decision is the model family.
    pub fn with_families<S: Into<String>>(families: impl IntoIterator<Item = S>) -> Result<Self> {
        Ok(SearchSpace {
            family: Some(ParamSpec::categorical("family", families)?),
            params: Vec::new(),
        })
    }

    /// Adds a parameter active in every family.
    pub fn param(mut self, spec: ParamSpec) -> Result<Self> {
        self.push(spec, None)?;
        Ok(self)
    }

    /// Adds a parameter active only in the listed families.
    pub fn conditional<S: Into<String>>(
        mut self,
        spec: ParamSpec,
        families: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let families = families.into_iter().map(Into::into).collect();
        self.push(spec, Some(families))?;
        Ok(self)
    }

    fn push(&mut self, spec: ParamSpec, families: Option<Vec<String>>) -> Result<()> {
        spec.validate()?;
        if spec.name == "family" {
            return Err(Error::InvalidSpace("`family` is reserved for the family choice".into()));
        }
        if let Some(fams) = &families {
            if fams.is_empty() {
                return Err(Error::InvalidSpace(format!("{}: empty family condition", spec.name)));
            }
            let known = self.families();
            for f in fams {
                if !known.contains(&f.as_str()) {
                    return Err(Error::InvalidSpace(format!(
                        "{}: condition references unknown family {f:?}",
                        spec.name
                    )));
                }
            }
        }
        let candidate = SpaceParam { spec, families };
        for family in self.families() {
            if candidate.active_in(family)
                && self
                    .params
                    .iter()
                    .any(|p| p.active_in(family) && p.spec.name == candidate.spec.name)
            {
                return Err(Error::InvalidSpace(format!(
                    "duplicate parameter {:?} in family {family:?}",
                    candidate.spec.name
                )));
            }
        }
        self.params.push(candidate);
        Ok(())
    }

    pub fn has_family_param(&self) -> bool {
        self.family.is_some()
    }

    pub fn families(&self) -> Vec<&str> {
        match &self.family {
            Some(ParamSpec {
                kind: ParamKind::Categorical { choices },
                ..
            }) => choices.iter().map(String::as_str).collect(),
            _ => vec![DEFAULT_FAMILY],
        }
    }

    /// Parameters active in `family`, in declaration order.
    pub fn active_params(&self, family: &str) -> Vec<&ParamSpec> {
        self.params
            .iter()
            .filter(|p| p.active_in(family))
            .map(|p| &p.spec)
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty() && self.family.is_none()
    }

    pub fn validate_config(&self, config: &Configuration) -> Result<()> {
        if !self.families().contains(&config.family.as_str()) {
            return Err(Error::InvalidSpace(format!("unknown family {:?}", config.family)));
        }
        let active = self.active_params(&config.family);
        if active.len() != config.values.len() {
            return Err(Error::InvalidSpace(format!(
                "family {:?} has {} active parameters, configuration has {}",
                config.family,
                active.len(),
                config.values.len()
            )));
        }
        for (spec, (name, value)) in active.iter().zip(&config.values) {
            if spec.name != *name || !spec.contains(value) {
                return Err(Error::InvalidSpace(format!(
                    "{name}={value} does not fit parameter {:?}",
                    spec.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: SpaceDocument = toml::from_str(text).map_err(|e| Error::Config {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        doc.into_space()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { message, .. } => Error::Config {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

impl SpaceParam {
    fn active_in(&self, family: &str) -> bool {
        self.families
            .as_ref()
            .is_none_or(|fams| fams.iter().any(|f| f == family))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamDocument {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    lo: Option<f64>,
    hi: Option<f64>,
    scale: Option<Scale>,
    choices: Option<Vec<String>>,
    families: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct SpaceDocument {
    families: Option<Vec<String>>,
    #[serde(default)]
    params: Vec<ParamDocument>,
}

impl SpaceDocument {
    fn into_space(self) -> Result<SearchSpace> {
        let mut space = match self.families {
            Some(f) => SearchSpace::with_families(f)?,
            None => SearchSpace::new(Vec::new())?,
        };
        for p in self.params {
            let spec = match p.kind.as_str() {
                "continuous" => {
                    let (Some(lo), Some(hi)) = (p.lo, p.hi) else {
                        return Err(Error::InvalidSpace(format!("{}: continuous needs lo and hi", p.name)));
                    };
                    ParamSpec::continuous(p.name, lo, hi, p.scale.unwrap_or(Scale::Linear))?
                }
                "categorical" => {
                    let Some(choices) = p.choices else {
                        return Err(Error::InvalidSpace(format!("{}: categorical needs choices", p.name)));
                    };
                    ParamSpec::categorical(p.name, choices)?
                }
                other => {
                    return Err(Error::InvalidSpace(format!("{}: unknown type {other:?}", p.name)));
                }
            };
            space.push(spec, p.families)?;
        }
        if space.is_empty() {
            return Err(Error::InvalidSpace("space declares no parameters".into()));
        }
        Ok(space)
    }
}

/// Largest `m >= 1` with `m^dims * combos <= budget`, or 1 when even that
/// does not fit.
fn points_per_dim(budget: usize, dims: u32, combos: usize) -> usize {
    if dims == 0 {
        return 1;
    }
    let fits = |m: usize| {
        m.checked_pow(dims)
            .and_then(|p| p.checked_mul(combos))
            .is_some_and(|total| total <= budget)
    };
    let mut m = 1;
    while fits(m + 1) {
        m += 1;
    }
    m
}

fn categorical_combos(params: &[&ParamSpec]) -> usize {
    params
        .iter()
        .map(|p| match &p.kind {
            ParamKind::Categorical { choices } => choices.len(),
            ParamKind::Continuous { .. } => 1,
        })
        .product()
}

/// Evenly spaced grid over every family branch, at most `budget` points.
///
/// The budget is split evenly across families. Within a branch, each
/// continuous dimension gets the largest `m` with `m^D` times the number of
/// categorical combinations fitting the branch budget; points include both
/// endpoints on the declared scale, and `m = 1` yields the lower bound. The
/// first declared parameter varies slowest.
pub fn grid_points(space: &SearchSpace, budget: usize) -> Result<Vec<Configuration>> {
    if space.is_empty() {
        return Err(Error::InvalidSpace("space has no parameters".into()));
    }
    if budget == 0 {
        return Err(Error::invalid_argument("grid budget must be at least 1"));
    }
    let families = space.families();
    let per_family = budget / families.len();
    let required = families.len()
        * families
            .iter()
            .map(|f| categorical_combos(&space.active_params(f)))
            .max()
            .unwrap_or(1);
    if budget < required {
        return Err(Error::InfeasibleGrid { budget, required });
    }

    let mut out = Vec::new();
    for family in families {
        let params = space.active_params(family);
        let combos = categorical_combos(&params);
        let dims = params.iter().filter(|p| p.is_continuous()).count() as u32;
        let m = points_per_dim(per_family, dims, combos);
        let axes: Vec<Vec<Value>> = params.iter().map(|p| grid_axis(p, m)).collect();

        let mut index = vec![0usize; axes.len()];
        'points: loop {
            let values = params
                .iter()
                .zip(&axes)
                .zip(&index)
                .map(|((p, axis), &i)| (p.name.clone(), axis[i].clone()))
                .collect();
            out.push(Configuration {
                family: family.to_string(),
                values,
            });
            // Odometer increment, last dimension fastest.
            let mut d = axes.len();
            loop {
                if d == 0 {
                    break 'points;
                }
                d -= 1;
                index[d] += 1;
                if index[d] < axes[d].len() {
                    continue 'points;
                }
                index[d] = 0;
            }
        }
    }
    Ok(out)
}

fn grid_axis(spec: &ParamSpec, m: usize) -> Vec<Value> {
    match &spec.kind {
        ParamKind::Categorical { choices } => choices.iter().cloned().map(Value::Label).collect(),
        ParamKind::Continuous { lo, hi, .. } => {
            if m == 1 {
                return vec![Value::Real(*lo)];
            }
            let (slo, shi) = spec.scaled_bounds().expect("continuous");
            (0..m)
                .map(|i| {
                    let x = if i == 0 {
                        *lo
                    } else if i == m - 1 {
                        *hi
                    } else {
                        let s = slo + (shi - slo) * i as f64 / (m - 1) as f64;
                        spec.value_from_scaled(s).expect("continuous")
                    };
                    Value::Real(x)
                })
                .collect()
        }
    }
}

/// Draws a configuration uniformly: family uniform over choices, continuous
/// values uniform in scaled coordinates, categorical values uniform.
pub fn sample_uniform<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> Configuration {
    let families = space.families();
    let family = if space.has_family_param() {
        families[rng.random_range(0..families.len())]
    } else {
        families[0]
    };
    let values = space
        .active_params(family)
        .into_iter()
        .map(|p| {
            let v = match &p.kind {
                ParamKind::Continuous { .. } => {
                    let (slo, shi) = p.scaled_bounds().expect("continuous");
                    let s = slo + (shi - slo) * rng.random::<f64>();
                    Value::Real(p.value_from_scaled(s).expect("continuous"))
                }
                ParamKind::Categorical { choices } => {
                    Value::Label(choices[rng.random_range(0..choices.len())].clone())
                }
            };
            (p.name.clone(), v)
        })
        .collect();
    Configuration {
        family: family.to_string(),
        values,
    }
}

/// Clamps a raw vector of scaled coordinates into the branch's bounds.
///
/// Returns the configuration and whether any coordinate was out of bounds.
/// Bounds are inclusive.
pub fn clip(space: &SearchSpace, raw: &[f64], family: &str) -> Result<(Configuration, bool)> {
    if !space.families().contains(&family) {
        return Err(Error::invalid_argument(format!("unknown family {family:?}")));
    }
    let params = space.active_params(family);
    if params.iter().any(|p| !p.is_continuous()) {
        return Err(Error::invalid_argument(format!(
            "family {family:?} has categorical parameters; clip needs a continuous branch"
        )));
    }
    if raw.len() != params.len() {
        return Err(Error::invalid_argument(format!(
            "expected {} coordinates, got {}",
            params.len(),
            raw.len()
        )));
    }
    let mut penalized = false;
    let values = params
        .iter()
        .zip(raw)
        .map(|(p, &x)| {
            let (slo, shi) = p.scaled_bounds().expect("continuous");
            if x.is_nan() || x < slo || x > shi {
                penalized = true;
            }
            let x = if x.is_nan() { slo } else { x };
            (p.name.clone(), Value::Real(p.value_from_scaled(x).expect("continuous")))
        })
        .collect();
    Ok((
        Configuration {
            family: family.to_string(),
            values,
        },
        penalized,
    ))
}

/// Scaled coordinates of a configuration's continuous values, in declaration
/// order.
pub fn to_scaled(space: &SearchSpace, config: &Configuration) -> Vec<f64> {
    space
        .active_params(&config.family)
        .into_iter()
        .filter_map(|p| match p.kind {
            ParamKind::Continuous { scale, .. } => config.real(&p.name).map(|x| scale.to_scaled(x)),
            ParamKind::Categorical { .. } => None,
        })
        .collect()
}

//! JSON wire forms. Every library type round-trips through these forms
//! bit-exactly; deserialization runs the same validation as the
//! constructors.
//!
//! - matrix: `{"rows": r, "cols": c, "data": [[re, im], …]}`, row-major
//! - factor shape: `{"dims": […], "mult": […]}`
//! - state: `{"dims": […], "matrix": M}` or `{"dims": […], "vector": [[re, im], …]}`
//! - scenario: `{"state": …, "povms": [site][setting][outcome] M, "outcomes": {"values": [[…], …]}}`
//! - functional: `{"settings": […], "outcomes": […], "coeffs": β[s_1]…[s_N][k_1]…[k_N]}`

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scenarios::{BellFunctional, OutcomeSpace, PovmFamily, Scenario};
use crate::source_ops::BuilderTag;
use crate::states::QuantumState;
use crate::tensor::{ComplexMatrix, FactorShape, C64};

type Pair = [f64; 2];

fn pairs(v: &[C64]) -> Vec<Pair> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn complexes(v: &[Pair]) -> Vec<C64> {
    v.iter().map(|&[re, im]| C64::new(re, im)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<Pair>,
}

impl From<ComplexMatrix> for MatrixJson {
    fn from(m: ComplexMatrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: pairs(m.data()),
        }
    }
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.data.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Argument("matrix entries must be finite".into()));
        }
        ComplexMatrix::new(j.rows, j.cols, complexes(&j.data))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ShapeJson {
    dims: Vec<usize>,
    mult: Vec<usize>,
}

impl From<FactorShape> for ShapeJson {
    fn from(s: FactorShape) -> Self {
        Self {
            dims: s.site_dims().to_vec(),
            mult: s.multiplicities().to_vec(),
        }
    }
}

impl TryFrom<ShapeJson> for FactorShape {
    type Error = Error;
    fn try_from(j: ShapeJson) -> Result<Self> {
        FactorShape::new(j.dims, j.mult)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct StateJson {
    dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<ComplexMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vector: Option<Vec<Pair>>,
}

impl From<QuantumState> for StateJson {
    fn from(s: QuantumState) -> Self {
        Self {
            dims: s.site_dims().to_vec(),
            matrix: Some(s.matrix().clone()),
            vector: None,
        }
    }
}

impl TryFrom<StateJson> for QuantumState {
    type Error = Error;
    fn try_from(j: StateJson) -> Result<Self> {
        match (j.matrix, j.vector) {
            (Some(m), None) => QuantumState::new(j.dims, m),
            (None, Some(v)) => QuantumState::from_vector(j.dims, &complexes(&v)),
            _ => Err(Error::Argument("a state needs exactly one of \"matrix\" or \"vector\"".into())),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct OutcomesJson {
    values: Vec<Vec<f64>>,
}

impl From<OutcomeSpace> for OutcomesJson {
    fn from(o: OutcomeSpace) -> Self {
        Self {
            values: o.values().to_vec(),
        }
    }
}

impl TryFrom<OutcomesJson> for OutcomeSpace {
    type Error = Error;
    fn try_from(j: OutcomesJson) -> Result<Self> {
        OutcomeSpace::new(j.values)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ScenarioJson {
    state: QuantumState,
    povms: Vec<Vec<Vec<ComplexMatrix>>>,
    outcomes: OutcomeSpace,
}

impl From<Scenario> for ScenarioJson {
    fn from(s: Scenario) -> Self {
        Self {
            state: s.state().clone(),
            povms: s.povms().effects().to_vec(),
            outcomes: s.outcomes().clone(),
        }
    }
}

impl TryFrom<ScenarioJson> for Scenario {
    type Error = Error;
    fn try_from(j: ScenarioJson) -> Result<Self> {
        Scenario::new(j.state, PovmFamily::new(j.povms)?, j.outcomes)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct FunctionalJson {
    settings: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcomes: Option<Vec<usize>>,
    coeffs: Value,
}

fn nest(values: &[f64], radices: &[usize]) -> Value {
    match radices.split_first() {
        None => Value::from(values[0]),
        Some((&r, rest)) => {
            let stride = values.len() / r;
            Value::Array((0..r).map(|i| nest(&values[i * stride..(i + 1) * stride], rest)).collect())
        }
    }
}

/// Flattens a nested array, returning its per-level lengths.
fn flatten(v: &Value, depth: usize, out: &mut Vec<f64>, shape: &mut Vec<usize>, level: usize) -> Result<()> {
    if level == depth {
        let x = v
            .as_f64()
            .ok_or_else(|| Error::Shape(format!("expected a number at nesting depth {depth}")))?;
        out.push(x);
        return Ok(());
    }
    let items = v
        .as_array()
        .ok_or_else(|| Error::Shape(format!("expected an array at nesting depth {level}")))?;
    if shape.len() == level {
        shape.push(items.len());
    } else if shape[level] != items.len() {
        return Err(Error::Shape(format!(
            "ragged coefficient array: lengths {} and {} at depth {level}",
            shape[level],
            items.len()
        )));
    }
    for item in items {
        flatten(item, depth, out, shape, level + 1)?;
    }
    Ok(())
}

impl From<BellFunctional> for FunctionalJson {
    fn from(f: BellFunctional) -> Self {
        let radices: Vec<usize> = f.settings().iter().chain(f.outcome_sizes()).copied().collect();
        Self {
            settings: f.settings().to_vec(),
            outcomes: Some(f.outcome_sizes().to_vec()),
            coeffs: nest(f.coeffs(), &radices),
        }
    }
}

impl TryFrom<FunctionalJson> for BellFunctional {
    type Error = Error;
    fn try_from(j: FunctionalJson) -> Result<Self> {
        let n = j.settings.len();
        let mut coeffs = Vec::new();
        let mut shape = Vec::new();
        flatten(&j.coeffs, 2 * n, &mut coeffs, &mut shape, 0)?;
        if shape.len() != 2 * n || shape[..n] != j.settings[..] {
            return Err(Error::Shape(format!(
                "coefficient array shape {shape:?} does not start with settings {:?}",
                j.settings
            )));
        }
        let sizes = shape[n..].to_vec();
        if let Some(declared) = &j.outcomes {
            if *declared != sizes {
                return Err(Error::Shape(format!(
                    "declared outcome counts {declared:?} differ from coefficient shape {sizes:?}"
                )));
            }
        }
        BellFunctional::new(j.settings, sizes, coeffs)
    }
}

/// On-disk form of a source operator. Only `shape` and `matrix` are needed
/// to read one back for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorFile {
    pub shape: FactorShape,
    pub matrix: ComplexMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builder: Option<BuilderTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<QuantumState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defining_residual: Option<f64>,
}

/// Parses JSON. Malformed text is a parse error; well-formed input that
/// fails validation is an argument error. Both carry line and column.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Argument(e.to_string()),
        _ => Error::Parse(e.to_string()),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))
}

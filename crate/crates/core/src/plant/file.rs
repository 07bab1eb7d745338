//! JSON plant and structural-model files.
//!
//! A state-space file carries `A`, `B`, `x0` and optionally `bounds`.
//! A structural file carries `M`, `K`, `D`, one of `E` or `zeta`, `n_modes`,
//! `x0` (physical displacement) and optionally `bounds`. Matrices are
//! row-major nested arrays. Bounds accept numbers or the string `"inf"`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use super::{modal_decompose, to_state_space, Damping, InitialState, LinearPlant, StructuralModel};
use crate::error::{Error, Result};

/// A validated plant description as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantSource {
    StateSpace(LinearPlant),
    Structural {
        model: StructuralModel,
        displacement: DVector<f64>,
        bounds: DVector<f64>,
    },
}

impl PlantSource {
    pub fn n_inputs(&self) -> usize {
        match self {
            PlantSource::StateSpace(p) => p.n_inputs(),
            PlantSource::Structural { model, .. } => model.n_inputs(),
        }
    }

    /// Builds the state-space plant, optionally replacing every bound with `bound`.
    pub fn to_plant(&self, bound: Option<f64>) -> Result<LinearPlant> {
        let bounds_for = |default: &DVector<f64>| match bound {
            Some(f) => DVector::from_element(default.len(), f),
            None => default.clone(),
        };
        match self {
            PlantSource::StateSpace(p) => p.with_force_bounds(bounds_for(p.force_bounds())),
            PlantSource::Structural {
                model,
                displacement,
                bounds,
            } => {
                let modal = modal_decompose(model)?;
                to_state_space(
                    model,
                    &modal,
                    &InitialState::Physical {
                        displacement: displacement.clone(),
                        velocity: None,
                    },
                    bounds_for(bounds),
                )
            }
        }
    }
}

pub fn read_plant_source(path: &Path) -> Result<PlantSource> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_plant_source(&text)
}

pub fn parse_plant_source(text: &str) -> Result<PlantSource> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Parse("top level must be an object".into()))?;
    if obj.contains_key("A") {
        parse_state_space(obj)
    } else if obj.contains_key("M") {
        parse_structural(obj)
    } else {
        Err(Error::Parse(
            "expected a state-space (`A`, `B`) or structural (`M`, `K`, `D`) description".into(),
        ))
    }
}

fn parse_state_space(obj: &Map<String, Value>) -> Result<PlantSource> {
    let a = matrix(obj, "A")?;
    let b = matrix(obj, "B")?;
    let x0 = vector(obj, "x0")?;
    let bounds = match obj.get("bounds") {
        Some(_) => bounds(obj, "bounds")?,
        None => DVector::from_element(b.ncols(), f64::INFINITY),
    };
    Ok(PlantSource::StateSpace(LinearPlant::new(a, b, bounds, x0)?))
}

fn parse_structural(obj: &Map<String, Value>) -> Result<PlantSource> {
    let m = matrix(obj, "M")?;
    let k = matrix(obj, "K")?;
    let d = matrix(obj, "D")?;
    let damping = match (obj.get("E"), obj.get("zeta")) {
        (Some(_), None) => Damping::Matrix(matrix(obj, "E")?),
        (None, Some(_)) => Damping::Modal(vector(obj, "zeta")?),
        _ => return Err(Error::Parse("exactly one of `E` or `zeta` is required".into())),
    };
    let n_modes = obj
        .get("n_modes")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Parse("`n_modes` must be a positive integer".into()))?
        as usize;
    let displacement = vector(obj, "x0")?;
    let bounds = match obj.get("bounds") {
        Some(_) => bounds(obj, "bounds")?,
        None => DVector::from_element(d.ncols(), f64::INFINITY),
    };
    if displacement.len() != m.nrows() {
        return Err(Error::Parse(format!(
            "`x0` has {} entries, expected {}",
            displacement.len(),
            m.nrows()
        )));
    }
    if bounds.len() != d.ncols() {
        return Err(Error::Parse(format!(
            "`bounds` has {} entries, expected {}",
            bounds.len(),
            d.ncols()
        )));
    }
    if let Some(i) = bounds.iter().position(|f| *f <= 0.0) {
        return Err(Error::Parse(format!("`bounds` entry {i} must be positive")));
    }
    let model = StructuralModel::new(m, k, damping, d, n_modes)?;
    Ok(PlantSource::Structural {
        model,
        displacement,
        bounds,
    })
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::Parse(format!("missing `{name}`")))
}

fn number(v: &Value, name: &str, at: &str) -> Result<f64> {
    let x = v
        .as_f64()
        .ok_or_else(|| Error::Parse(format!("`{name}` {at} is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("`{name}` {at} is not finite")));
    }
    Ok(x)
}

fn matrix(obj: &Map<String, Value>, name: &str) -> Result<DMatrix<f64>> {
    let rows = field(obj, name)?
        .as_array()
        .ok_or_else(|| Error::Parse(format!("`{name}` must be an array of rows")))?;
    if rows.is_empty() {
        return Err(Error::Parse(format!("`{name}` is empty")));
    }
    let mut ncols = None;
    let mut data = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::Parse(format!("`{name}` row {i} is not an array")))?;
        match ncols {
            None if row.is_empty() => {
                return Err(Error::Parse(format!("`{name}` row {i} is empty")))
            }
            None => ncols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse(format!(
                    "`{name}` row {i} has {} entries, expected {c}",
                    row.len()
                )))
            }
            Some(_) => {}
        }
        for (j, v) in row.iter().enumerate() {
            data.push(number(v, name, &format!("entry ({i}, {j})"))?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols.unwrap_or(0), &data))
}

fn vector(obj: &Map<String, Value>, name: &str) -> Result<DVector<f64>> {
    let items = field(obj, name)?
        .as_array()
        .ok_or_else(|| Error::Parse(format!("`{name}` must be an array")))?;
    if items.is_empty() {
        return Err(Error::Parse(format!("`{name}` is empty")));
    }
    let data = items
        .iter()
        .enumerate()
        .map(|(i, v)| number(v, name, &format!("entry {i}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(data))
}

/// Parses a bound token: a positive number or `"inf"`.
pub(crate) fn bound_value(v: &Value) -> Option<f64> {
    match v {
        Value::String(s) if s.eq_ignore_ascii_case("inf") => Some(f64::INFINITY),
        Value::Number(n) => n.as_f64().filter(|x| x.is_finite()),
        _ => None,
    }
}

fn bounds(obj: &Map<String, Value>, name: &str) -> Result<DVector<f64>> {
    let items = field(obj, name)?
        .as_array()
        .ok_or_else(|| Error::Parse(format!("`{name}` must be an array")))?;
    let data = items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            bound_value(v).ok_or_else(|| {
                Error::Parse(format!("`{name}` entry {i} must be a number or \"inf\""))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_space_file() {
        let src = parse_plant_source(
            r#"{"A": [[0, 1], [-4, -0.12]], "B": [[0], [1]], "x0": [0, 1], "bounds": [1]}"#,
        )
        .unwrap();
        let plant = src.to_plant(None).unwrap();
        assert_eq!(plant.n_states(), 2);
        assert_eq!(plant.force_bounds()[0], 1.0);
        let unbounded = src.to_plant(Some(f64::INFINITY)).unwrap();
        assert!(unbounded.force_bounds()[0].is_infinite());
    }

    #[test]
    fn ragged_rows_name_the_matrix_and_row() {
        let err = parse_plant_source(
            r#"{"M": [[1, 0], [0, 1]], "K": [[2, -1], [-1]], "D": [[1], [0]],
                "zeta": [0.01, 0.01], "n_modes": 2, "x0": [1, 0]}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("`K` row 1"), "{msg}");
    }

    #[test]
    fn structural_file_reduces() {
        let src = parse_plant_source(
            r#"{"M": [[1]], "K": [[4]], "D": [[1]], "zeta": [0.03], "n_modes": 1,
                "x0": [0.5], "bounds": ["inf"]}"#,
        )
        .unwrap();
        let plant = src.to_plant(None).unwrap();
        assert_eq!(plant.a()[(1, 0)], -4.0);
        assert_eq!(plant.x0()[0], 0.5);
    }

    #[test]
    fn rejects_both_damping_kinds() {
        let err = parse_plant_source(
            r#"{"M": [[1]], "K": [[4]], "D": [[1]], "zeta": [0.03], "E": [[0.1]],
                "n_modes": 1, "x0": [0.5]}"#,
        );
        assert!(matches!(err, Err(Error::Parse(_))));
    }
}

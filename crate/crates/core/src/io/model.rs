//! Body-model container (`EVM1`): a list of named little-endian f64 arrays.
//!
//! ```text
//! EVM1 | array count u32 | per array: name_len u16, name (UTF-8), ndim u8,
//!                          ndim × dim u64, Π dims × f64
//! ```
//!
//! Required arrays: `v_template` (V×3), `f` (F×3, integer-valued),
//! `shapedirs` (V×3×S), `posedirs` (V×3×9(J−1)), `J_regressor` (J×V),
//! `weights` (V×J) and `kintree_parents` (J, −1 for the root). Unknown
//! names are skipped.

use std::collections::HashMap;

use super::Reader;
use crate::body::{BodyModel, ModelArrays};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const MAX_DIMS: u8 = 4;

struct Array {
    dims: Vec<usize>,
    data: Vec<f64>,
}

pub fn encode_model(model: &BodyModel) -> Vec<u8> {
    let a = model.arrays();
    let v = a.template.len();
    let j = a.parents.len();
    let arrays: Vec<(&str, Vec<usize>, Vec<f64>)> = vec![
        ("v_template", vec![v, 3], a.template.iter().flat_map(|p| [p.x, p.y, p.z]).collect()),
        (
            "f",
            vec![a.faces.len(), 3],
            a.faces.iter().flat_map(|f| f.map(|i| i as f64)).collect(),
        ),
        ("shapedirs", vec![v, 3, a.num_betas], a.shape_dirs.clone()),
        ("posedirs", vec![v, 3, 9 * (j - 1)], a.pose_dirs.clone()),
        ("J_regressor", vec![j, v], a.regressor.clone()),
        ("weights", vec![v, j], a.weights.clone()),
        (
            "kintree_parents",
            vec![j],
            a.parents.iter().map(|p| p.map_or(-1.0, |p| p as f64)).collect(),
        ),
    ];
    let mut out = Vec::new();
    out.extend_from_slice(b"EVM1");
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, dims, data) in arrays {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for d in &dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for x in data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<BodyModel> {
    let mut r = Reader::new(bytes, "model");
    r.magic(b"EVM1")?;
    let count = r.u32()?;
    let mut arrays: HashMap<String, Array> = HashMap::new();
    for _ in 0..count {
        let name_len = usize::from(r.u16()?);
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format("model", "array name is not UTF-8"))?
            .to_string();
        let ndim = r.take(1)?[0];
        if ndim == 0 || ndim > MAX_DIMS {
            return Err(Error::format("model", format!("array `{name}` has {ndim} dimensions")));
        }
        let mut dims = Vec::with_capacity(usize::from(ndim));
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = usize::try_from(r.u64()?).ok();
            len = match d.and_then(|d| len.checked_mul(d)) {
                Some(l) => l,
                None => return Err(Error::format("model", format!("array `{name}` is too large"))),
            };
            dims.push(d.unwrap_or(0));
        }
        if len.checked_mul(8).map_or(true, |b| b > r.remaining()) {
            return Err(Error::format(
                "model",
                format!("array `{name}` declares {len} values but only {} bytes remain", r.remaining()),
            ));
        }
        let data = r
            .take(len * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if arrays.insert(name.clone(), Array { dims, data }).is_some() {
            return Err(Error::format("model", format!("duplicate array `{name}`")));
        }
    }
    r.finish()?;

    let get = |name: &str| arrays.get(name).ok_or_else(|| Error::model(name, "missing"));
    let shape = |name: &str, ndim: usize| -> Result<&Array> {
        let a = get(name)?;
        if a.dims.len() != ndim {
            return Err(Error::model(name, format!("expected {ndim} dimensions, found {:?}", a.dims)));
        }
        Ok(a)
    };

    let t = shape("v_template", 2)?;
    if t.dims[1] != 3 {
        return Err(Error::model("v_template", format!("expected V×3, found {:?}", t.dims)));
    }
    let v = t.dims[0];
    let template = t.data.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();

    let f = shape("f", 2)?;
    if f.dims[1] != 3 {
        return Err(Error::model("f", format!("expected F×3, found {:?}", f.dims)));
    }
    let faces = f
        .data
        .chunks_exact(3)
        .map(|c| {
            let idx = |x: f64| {
                if x >= 0.0 && x.fract() == 0.0 && x < v as f64 {
                    Ok(x as usize)
                } else {
                    Err(Error::model("f", format!("invalid vertex index {x}")))
                }
            };
            Ok([idx(c[0])?, idx(c[1])?, idx(c[2])?])
        })
        .collect::<Result<Vec<_>>>()?;

    let p = shape("kintree_parents", 1)?;
    let parents = p
        .data
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            if x == -1.0 {
                Ok(None)
            } else if x >= 0.0 && x.fract() == 0.0 && x < k as f64 {
                Ok(Some(x as usize))
            } else {
                Err(Error::model("kintree_parents", format!("joint {k} has parent {x}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let j = parents.len();

    let sd = shape("shapedirs", 3)?;
    if sd.dims[..2] != [v, 3] {
        return Err(Error::model("shapedirs", format!("expected {v}×3×S, found {:?}", sd.dims)));
    }
    let pd = shape("posedirs", 3)?;
    if pd.dims != [v, 3, 9 * j.saturating_sub(1)] {
        return Err(Error::model("posedirs", format!("expected {v}×3×{}, found {:?}", 9 * j.saturating_sub(1), pd.dims)));
    }
    let jr = shape("J_regressor", 2)?;
    if jr.dims != [j, v] {
        return Err(Error::model("J_regressor", format!("expected {j}×{v}, found {:?}", jr.dims)));
    }
    let w = shape("weights", 2)?;
    if w.dims != [v, j] {
        return Err(Error::model("weights", format!("expected {v}×{j}, found {:?}", w.dims)));
    }

    BodyModel::new(ModelArrays {
        template,
        faces,
        shape_dirs: sd.data.clone(),
        num_betas: sd.dims[2],
        pose_dirs: pd.data.clone(),
        regressor: jr.data.clone(),
        weights: w.data.clone(),
        parents,
    })
}

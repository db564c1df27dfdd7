use crate::distort::{self, DistortionSample};
use crate::error::{Error, Result};
use crate::ink::{self, Character, Dataset};
use crate::sigfeat::{rasterize, FeatureDump, FeatureMap, FeatureParams};
use crate::tensornet::Tensor;

/// A training or test input: raw ink, or a precomputed feature map.
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Ink(Character),
    Features(FeatureMap),
}

/// Inputs with class indices into `categories`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub categories: Vec<String>,
    pub items: Vec<(Input, usize)>,
}

impl LabeledSet {
    /// Labels every character by its position in `categories`.
    pub fn from_dataset(d: &Dataset, categories: &[String]) -> Result<Self> {
        let items = d
            .items
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let label = c.label.as_deref().ok_or_else(|| Error::InvalidInput(format!("item {i} has no label")))?;
                let idx = categories
                    .iter()
                    .position(|k| k == label)
                    .ok_or_else(|| Error::InvalidInput(format!("item {i}: label `{label}` is not a known category")))?;
                Ok((Input::Ink(c.clone()), idx))
            })
            .collect::<Result<_>>()?;
        Ok(Self { categories: categories.to_vec(), items })
    }

    /// Uses the dump's numeric labels as class indices. Categories are named
    /// by their index unless names are given.
    pub fn from_dump(dump: FeatureDump, categories: Option<&[String]>) -> Result<Self> {
        let max = dump.records.iter().filter_map(|r| r.1).max();
        let categories: Vec<String> = match categories {
            Some(c) => c.to_vec(),
            None => (0..max.map_or(0, |m| m as usize + 1)).map(|i| i.to_string()).collect(),
        };
        let items = dump
            .records
            .into_iter()
            .enumerate()
            .map(|(i, (map, label))| match label {
                Some(l) if (l as usize) < categories.len() => Ok((Input::Features(map), l as usize)),
                Some(l) => Err(Error::InvalidInput(format!("record {i}: label {l} is out of range"))),
                None => Err(Error::InvalidInput(format!("record {i} has no label"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { categories, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Network input for one item: ink is normalised into the grid, distorted
/// there and rasterised; feature maps are used as they are.
pub fn prepare(input: &Input, params: &FeatureParams, distortion: Option<&DistortionSample>) -> Result<Tensor<f32>> {
    let channels = params.channels();
    let map = match input {
        Input::Ink(c) => {
            let mut c = ink::normalize(c, params.box_size, params.grid)?;
            if let Some(s) = distortion {
                c = distort::apply(&c, s);
            }
            rasterize(&c, params)?
        }
        Input::Features(m) => {
            if m.channels() != channels || m.size() != params.grid {
                return Err(Error::shape(format!(
                    "feature map is {}x{}x{} but the network expects {channels}x{g}x{g}",
                    m.channels(),
                    m.size(),
                    m.size(),
                    g = params.grid
                )));
            }
            m.clone()
        }
    };
    Tensor::new(vec![channels, params.grid, params.grid], map.into_data())
}

/// Index of the largest value; the first one on ties.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

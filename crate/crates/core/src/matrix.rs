//! Sparse model x item score tables.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model x item table with possibly missing cells.
///
/// `ScoreMatrix` holds scores already in `[0, 1]`; [`RawScoreTable`] holds
/// arbitrary finite values prior to scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    models: Vec<String>,
    items: Vec<String>,
    model_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    cells: Vec<Option<f64>>,
}

impl Table {
    fn new(models: Vec<String>, items: Vec<String>) -> Result<Self> {
        let model_index = index_of("model", &models)?;
        let item_index = index_of("item", &items)?;
        let cells = vec![None; models.len() * items.len()];
        Ok(Self {
            models,
            items,
            model_index,
            item_index,
            cells,
        })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn model_index(&self, id: &str) -> Option<usize> {
        self.model_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    #[inline]
    pub fn get(&self, model: usize, item: usize) -> Option<f64> {
        self.cells[model * self.items.len() + item]
    }

    pub fn get_by_id(&self, model: &str, item: &str) -> Option<f64> {
        self.get(self.model_index(model)?, self.item_index(item)?)
    }

    /// Observed `(item index, score)` pairs of one model.
    pub fn row(&self, model: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.items.len();
        self.cells[model * n..(model + 1) * n]
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|v| (i, v)))
    }

    /// Observed `(model index, score)` pairs of one item.
    pub fn column(&self, item: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.items.len();
        (0..self.models.len()).filter_map(move |m| self.cells[m * n + item].map(|v| (m, v)))
    }

    /// All observed cells as `(model, item, score)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.items.len();
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(idx, c)| c.map(|v| (idx / n, idx % n, v)))
    }

    pub fn n_observed(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// First missing cell and the missing count, if any.
    pub fn first_missing(&self) -> Option<(usize, usize, usize)> {
        let n = self.items.len();
        let missing = self.cells.len() - self.n_observed();
        let idx = self.cells.iter().position(|c| c.is_none())?;
        Some((idx / n, idx % n, missing))
    }

    fn set_raw(&mut self, model: usize, item: usize, value: f64) {
        let n = self.items.len();
        self.cells[model * n + item] = Some(value);
    }
}

fn index_of(what: &'static str, ids: &[String]) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::Duplicate {
                what,
                id: id.clone(),
            });
        }
    }
    Ok(map)
}

/// Scores in `[0, 1]`, the input to calibration and replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(Table);

impl ScoreMatrix {
    pub fn new(models: Vec<String>, items: Vec<String>) -> Result<Self> {
        Table::new(models, items).map(Self)
    }

    pub fn set(&mut self, model: usize, item: usize, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange {
                model: self.0.models[model].clone(),
                item: self.0.items[item].clone(),
                value: score,
            });
        }
        self.0.set_raw(model, item, score);
        Ok(())
    }

    /// Build a complete matrix from row-major scores.
    pub fn from_rows(models: Vec<String>, items: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::new(models, items)?;
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v)?;
            }
        }
        Ok(m)
    }

    /// Restrict to the given models, keeping every item.
    pub fn select_models(&self, ids: &[String]) -> Result<Self> {
        let mut out = Self::new(ids.to_vec(), self.0.items.clone())?;
        for (r, id) in ids.iter().enumerate() {
            let src = self
                .model_index(id)
                .ok_or_else(|| Error::UnknownModel(id.clone()))?;
            for (i, v) in self.row(src) {
                out.0.set_raw(r, i, v);
            }
        }
        Ok(out)
    }

    /// Every model except the given ones.
    pub fn without_models(&self, ids: &[String]) -> Result<Self> {
        let keep: Vec<String> = self
            .models()
            .iter()
            .filter(|m| !ids.contains(m))
            .cloned()
            .collect();
        self.select_models(&keep)
    }

    pub fn require_complete(&self) -> Result<()> {
        match self.first_missing() {
            None => Ok(()),
            Some((m, i, missing)) => Err(Error::Incomplete {
                missing,
                model: self.0.models[m].clone(),
                item: self.0.items[i].clone(),
            }),
        }
    }

    /// Mean observed score per model.
    pub fn model_means(&self) -> Result<Vec<f64>> {
        (0..self.n_models())
            .map(|m| {
                mean(self.row(m).map(|(_, v)| v))
                    .ok_or_else(|| Error::EmptyModel(self.0.models[m].clone()))
            })
            .collect()
    }
}

impl std::ops::Deref for ScoreMatrix {
    type Target = Table;

    fn deref(&self) -> &Table {
        &self.0
    }
}

/// Finite scores of any range, before per-item scaling or clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct RawScoreTable(Table);

impl RawScoreTable {
    pub fn new(models: Vec<String>, items: Vec<String>) -> Result<Self> {
        Table::new(models, items).map(Self)
    }

    pub fn set(&mut self, model: usize, item: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(crate::error::invalid("score", format!("must be finite, got {value}")));
        }
        self.0.set_raw(model, item, value);
        Ok(())
    }

    /// Convert to a unit-range matrix, clamping or rejecting out-of-range
    /// values.
    pub fn into_unit_matrix(self, clamp: bool) -> Result<ScoreMatrix> {
        let mut table = self.0;
        for idx in 0..table.cells.len() {
            if let Some(v) = table.cells[idx] {
                if !(0.0..=1.0).contains(&v) {
                    if !clamp {
                        let n = table.items.len();
                        return Err(Error::ScoreOutOfRange {
                            model: table.models[idx / n].clone(),
                            item: table.items[idx % n].clone(),
                            value: v,
                        });
                    }
                    table.cells[idx] = Some(v.clamp(0.0, 1.0));
                }
            }
        }
        Ok(ScoreMatrix(table))
    }

    /// Linearly rescale every item to `[0, 1]` using that item's observed
    /// minimum and maximum. Items with fewer than two distinct values map to
    /// 0.5; their ids are returned.
    pub fn per_item_scale(&self) -> (ScoreMatrix, Vec<String>) {
        let mut out = self.0.clone();
        let mut constant = Vec::new();
        for i in 0..self.0.n_items() {
            let (lo, hi) = self
                .0
                .column(i)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
                    (lo.min(v), hi.max(v))
                });
            let degenerate = !(hi > lo);
            if degenerate && lo.is_finite() {
                log::warn!("item `{}` has a constant score; scaled to 0.5", self.0.items[i]);
                constant.push(self.0.items[i].clone());
            }
            for (m, v) in self.0.column(i) {
                let scaled = if degenerate {
                    0.5
                } else {
                    ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
                };
                out.set_raw(m, i, scaled);
            }
        }
        (ScoreMatrix(out), constant)
    }
}

impl std::ops::Deref for RawScoreTable {
    type Target = Table;

    fn deref(&self) -> &Table {
        &self.0
    }
}

/// Serializable long-format record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongScoreRecord {
    pub model_id: String,
    pub item_id: String,
    pub score: f64,
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

/// Streaming mean and variance (Welford), mergeable across trials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TrialAggregate {
    count: u64,
    mean: f64,
    m2: f64,
}

impl TrialAggregate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let mut agg = Self::new();
        samples.iter().for_each(|&s| agg.push(s));
        agg
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    /// Combines two disjoint sample sets (Chan et al. pairwise update).
    pub fn merge(&mut self, other: &TrialAggregate) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        self.mean += delta * nb / n;
        self.m2 += other.m2 + delta * delta * na * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// NaN when empty.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Unbiased sample variance; 0 for a single sample.
    pub fn variance(&self) -> f64 {
        match self.count {
            0 => f64::NAN,
            1 => 0.0,
            n => self.m2 / (n - 1) as f64,
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn std_error(&self) -> f64 {
        self.std() / (self.count as f64).sqrt()
    }
}

/// One output line: an aggregated quantity at a (block, step) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub experiment: String,
    pub block: usize,
    pub step: String,
    pub quantity: String,
    pub mean: f64,
    pub std: f64,
    pub trials: u64,
    pub flags: String,
}

pub const CSV_HEADER: [&str; 8] = ["experiment", "block", "step", "quantity", "mean", "std", "trials", "flags"];

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn get(&self, block: usize, step: &str, quantity: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.block == block && r.step == step && r.quantity == quantity)
    }

    /// Mean of the `(block, step, quantity)` cell, NaN if absent.
    pub fn mean(&self, block: usize, step: &str, quantity: &str) -> f64 {
        self.get(block, step, quantity).map_or(f64::NAN, |r| r.mean)
    }

    /// All rows for a quantity, in table order.
    pub fn series<'a>(&'a self, step: &'a str, quantity: &'a str) -> impl Iterator<Item = &'a TableRow> + 'a {
        self.rows.iter().filter(move |r| r.step == step && r.quantity == quantity)
    }

    pub fn extend(&mut self, other: Table) {
        self.rows.extend(other.rows);
    }
}

pub(crate) type CellKey = (usize, String, String);

#[derive(Debug, Clone, Default)]
struct Cell {
    agg: TrialAggregate,
    saturated: u64,
    flags: BTreeSet<String>,
}

/// Insertion-ordered `(block, step, quantity)` → aggregate map. Each trial
/// fills its own, and trials are merged in trial order.
#[derive(Debug, Clone, Default)]
pub(crate) struct Cells {
    order: Vec<CellKey>,
    index: HashMap<CellKey, usize>,
    cells: Vec<Cell>,
}

impl Cells {
    fn cell(&mut self, block: usize, step: &str, quantity: &str) -> &mut Cell {
        let key = (block, step.to_string(), quantity.to_string());
        let idx = match self.index.get(&key) {
            Some(&i) => i,
            None => {
                self.order.push(key.clone());
                self.cells.push(Cell::default());
                self.index.insert(key, self.cells.len() - 1);
                self.cells.len() - 1
            }
        };
        &mut self.cells[idx]
    }

    pub fn push(&mut self, block: usize, step: &str, quantity: &str, value: f64) {
        self.cell(block, step, quantity).agg.push(value);
    }

    pub fn push_agg(&mut self, block: usize, step: &str, quantity: &str, agg: &TrialAggregate) {
        self.cell(block, step, quantity).agg.merge(agg);
    }

    /// Records that the quantity was not measured because similarity had
    /// saturated.
    pub fn saturate(&mut self, block: usize, step: &str, quantity: &str) {
        self.cell(block, step, quantity).saturated += 1;
    }

    pub fn flag(&mut self, block: usize, step: &str, quantity: &str, flag: impl Into<String>) {
        self.cell(block, step, quantity).flags.insert(flag.into());
    }

    pub fn merge(&mut self, other: Cells) {
        for (key, cell) in other.order.into_iter().zip(other.cells) {
            let mine = self.cell(key.0, &key.1, &key.2);
            mine.agg.merge(&cell.agg);
            mine.saturated += cell.saturated;
            mine.flags.extend(cell.flags);
        }
    }

    /// Rows ordered by block, then by first appearance.
    pub fn into_table(self, experiment: &str) -> Table {
        let mut rows: Vec<TableRow> = self
            .order
            .into_iter()
            .zip(self.cells)
            .map(|((block, step, quantity), cell)| {
                let mut flags: Vec<String> = cell.flags.into_iter().collect();
                if cell.saturated > 0 {
                    flags.insert(0, format!("saturated:{}", cell.saturated));
                }
                TableRow {
                    experiment: experiment.to_string(),
                    block,
                    step,
                    quantity,
                    mean: cell.agg.mean(),
                    std: cell.agg.std(),
                    trials: cell.agg.count(),
                    flags: flags.join(";"),
                }
            })
            .collect();
        rows.sort_by_key(|r| r.block);
        Table { rows }
    }
}

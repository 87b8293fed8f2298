use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Result;

/// One aggregated Monte Carlo quantity. `value` is NaN where the quantity is
/// undefined (for example a detection rate without interfered resources).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    /// Name of the swept variable.
    pub sweep: String,
    pub x: f64,
    /// Fixed settings of this curve, e.g. `delta=0.01`.
    pub setting: String,
    pub method: String,
    pub target: String,
    pub metric: String,
    pub value: f64,
    /// Monte Carlo standard error; 0 for exact quantities.
    pub se: f64,
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    /// First row matching all given keys.
    pub fn find(&self, x: f64, setting: &str, method: &str, target: &str, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.x == x && r.setting == setting && r.method == method && r.target == target && r.metric == metric
        })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }
}

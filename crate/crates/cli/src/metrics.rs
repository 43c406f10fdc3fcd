//! Per-generation metrics tables and their CSV encoding.

use pbml_core::MetricsRow;
use std::collections::HashMap;
use thiserror::Error;

/// Columns that precede the world-specific ones, in order.
pub const BASE_COLUMNS: [&str; 10] = [
    "generation",
    "method",
    "strategy",
    "seed",
    "num_genomes",
    "census_size",
    "offspring",
    "weighted_mean_fitness",
    "max_fitness",
    "lineage_entropy",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("metrics file has no rows")]
    NoRows,
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("bad number {value:?} in column {column}")]
    BadNumber { column: String, value: String },
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// One run's metrics history.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    pub method: String,
    pub strategy: String,
    pub seed: u64,
    pub world_columns: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn header(&self) -> Vec<String> {
        BASE_COLUMNS.iter().map(|s| s.to_string()).chain(self.world_columns.iter().cloned()).collect()
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.generation.to_string(),
                self.method.clone(),
                self.strategy.clone(),
                self.seed.to_string(),
                r.num_genomes.to_string(),
                r.census_size.to_string(),
                r.offspring.to_string(),
                format_float(r.weighted_mean_fitness),
                format_float(r.max_fitness),
                format_float(r.lineage_entropy),
            ];
            rec.extend(r.observables.iter().map(|v| format_float(*v)));
            w.write_record(&rec).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    /// Values of one numeric column, by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let pick: Box<dyn Fn(&MetricsRow) -> f64> = match name {
            "generation" => Box::new(|r| r.generation as f64),
            "num_genomes" => Box::new(|r| r.num_genomes as f64),
            "census_size" => Box::new(|r| r.census_size as f64),
            "offspring" => Box::new(|r| r.offspring as f64),
            "weighted_mean_fitness" => Box::new(|r| r.weighted_mean_fitness),
            "max_fitness" => Box::new(|r| r.max_fitness),
            "lineage_entropy" => Box::new(|r| r.lineage_entropy),
            other => {
                let i = self.world_columns.iter().position(|c| c == other)?;
                Box::new(move |r| r.observables[i])
            }
        };
        Some(self.rows.iter().map(pick).collect())
    }
}

/// A metrics CSV read back as text labels plus numeric columns.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub method: String,
    pub strategy: String,
    pub columns: HashMap<String, Vec<f64>>,
    pub len: usize,
}

impl MetricsTable {
    pub fn from_csv(bytes: &[u8]) -> Result<Self, MetricsError> {
        let mut reader = csv::Reader::from_reader(bytes);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        for required in ["generation", "method", "strategy", "weighted_mean_fitness", "max_fitness"] {
            if !header.iter().any(|h| h == required) {
                return Err(MetricsError::MissingColumn(required.into()));
            }
        }
        let mut columns: HashMap<String, Vec<f64>> = HashMap::new();
        let (mut method, mut strategy) = (String::new(), String::new());
        let mut len = 0;
        for record in reader.records() {
            let record = record?;
            for (name, value) in header.iter().zip(record.iter()) {
                match name.as_str() {
                    "method" => method = value.to_string(),
                    "strategy" => strategy = value.to_string(),
                    _ => {
                        let v: f64 = value
                            .parse()
                            .map_err(|_| MetricsError::BadNumber { column: name.clone(), value: value.into() })?;
                        columns.entry(name.clone()).or_default().push(v);
                    }
                }
            }
            len += 1;
        }
        if len == 0 {
            return Err(MetricsError::NoRows);
        }
        Ok(MetricsTable { method, strategy, columns, len })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last().copied())
    }
}

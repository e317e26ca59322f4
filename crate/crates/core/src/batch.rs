use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a batch sits in time. Forward batches have no step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeLabel {
    pub step: Option<usize>,
    pub forward_time: f64,
}

impl TimeLabel {
    pub fn forward(t: f64) -> Self {
        TimeLabel {
            step: None,
            forward_time: t,
        }
    }

    pub fn reverse(step: usize, forward_time: f64) -> Self {
        TimeLabel {
            step: Some(step),
            forward_time,
        }
    }
}

/// Row `i` of a batch was drawn from stream `first_stream + i` of `root_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub root_seed: u64,
    pub first_stream: u64,
}

/// `n` samples in dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    label: TimeLabel,
    dim: usize,
    data: Vec<f64>,
    provenance: Provenance,
}

impl SampleBatch {
    pub fn new(label: TimeLabel, dim: usize, data: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("batch dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Shape {
                expected: dim * (data.len() / dim + 1),
                got: data.len(),
            });
        }
        if !(label.forward_time >= 0.0) || !label.forward_time.is_finite() {
            return Err(Error::Domain(format!(
                "batch forward time must be finite and >= 0, got {}",
                label.forward_time
            )));
        }
        Ok(SampleBatch {
            label,
            dim,
            data,
            provenance,
        })
    }

    pub fn label(&self) -> TimeLabel {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    /// Rows `[lo, hi)` as a new batch with shifted provenance.
    pub fn slice(&self, lo: usize, hi: usize) -> SampleBatch {
        SampleBatch {
            label: self.label,
            dim: self.dim,
            data: self.data[lo * self.dim..hi * self.dim].to_vec(),
            provenance: Provenance {
                root_seed: self.provenance.root_seed,
                first_stream: self.provenance.first_stream + lo as u64,
            },
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.rows() {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Values of `⟨row, direction⟩` for every row.
    pub fn project(&self, direction: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().zip(direction).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// One row per sample, header `x0,…,x{d-1}`. Floats use the shortest
    /// representation that round-trips.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((0..self.dim).map(|j| format!("x{j}")))?;
        for row in self.rows() {
            out.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, label: TimeLabel, provenance: Provenance) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let dim = rd.headers()?.len();
        let mut data = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            for field in rec.iter() {
                data.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {field:?}: {e}")))?,
                );
            }
        }
        SampleBatch::new(label, dim, data, provenance)
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str, sidecar: &BatchSidecar) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let f = std::fs::File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), sidecar)?;
        Ok(())
    }
}

/// Metadata written next to a batch CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSidecar {
    pub label: TimeLabel,
    pub dim: usize,
    pub count: usize,
    pub provenance: Provenance,
    pub schedule: Option<crate::noise::Schedule>,
    pub variant: Option<String>,
    pub schedule_hash: Option<String>,
    pub oracle_hash: Option<String>,
}

impl BatchSidecar {
    pub fn for_batch(batch: &SampleBatch) -> Self {
        BatchSidecar {
            label: batch.label(),
            dim: batch.dim(),
            count: batch.len(),
            provenance: batch.provenance(),
            schedule: None,
            variant: None,
            schedule_hash: None,
            oracle_hash: None,
        }
    }
}

/// Hex SHA-256 of a serializable value's JSON form.
pub fn json_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

//! Input/output sample tables and their delimited-text form.
//!
//! Files carry a header row (input names, then output names) and one row per
//! sample. Floats are written in shortest round-trip form.

use std::path::Path;

use crate::error::{shape, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    /// Relative noise level the outputs were generated with.
    pub noise_level: f64,
}

impl Dataset {
    pub fn new(
        input_names: Vec<String>,
        output_names: Vec<String>,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
        noise_level: f64,
    ) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(shape(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        if inputs.iter().any(|r| r.len() != input_names.len())
            || outputs.iter().any(|r| r.len() != output_names.len())
        {
            return Err(shape("sample width does not match column names"));
        }
        Ok(Self {
            input_names,
            output_names,
            inputs,
            outputs,
            noise_level,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_names.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_names.len()
    }

    /// Root-mean-square over every output component.
    pub fn output_rms(&self) -> f64 {
        let n = (self.len() * self.output_dim()).max(1) as f64;
        (self.outputs.iter().flatten().map(|v| v * v).sum::<f64>() / n).sqrt()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.input_names.iter().chain(&self.output_names))?;
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            w.write_record(x.iter().chain(y).map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`Dataset::write_csv`]; the first
    /// `input_dim` columns are inputs.
    pub fn read_csv(path: &Path, input_dim: usize, noise_level: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if input_dim > headers.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("{input_dim} input columns requested, file has {}", headers.len()),
            });
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                })?;
            outputs.push(row[input_dim..].to_vec());
            inputs.push(row[..input_dim].to_vec());
        }
        let (ins, outs) = headers.split_at(input_dim);
        Self::new(ins.to_vec(), outs.to_vec(), inputs, outputs, noise_level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec!["y".into()],
            vec![vec![0.1, -2.0], vec![1e-300, 3.5]],
            vec![vec![0.30000000000000004], vec![-7.0]],
            0.1,
        )
        .unwrap();
        let dir = std::env::temp_dir().join(format!("csvgd-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("d.csv");
        d.write_csv(&p).unwrap();
        let back = Dataset::read_csv(&p, 2, 0.1).unwrap();
        assert_eq!(back, d);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn mismatched_lengths() {
        assert!(Dataset::new(vec!["a".into()], vec!["y".into()], vec![vec![1.0]], vec![], 0.0).is_err());
    }
}

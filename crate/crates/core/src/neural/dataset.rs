use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One simulated scenario: operating point, contingency, and its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub rocof: f64,
    pub fn_hz: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioDataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl ScenarioDataset {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    /// Checks shapes, finiteness and the sign conventions of the labels.
    pub fn validate(&self, f0: f64) -> Result<(), NeuralError> {
        for (k, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.feature_names.len() {
                return Err(NeuralError::DimensionMismatch {
                    expected: self.feature_names.len(),
                    found: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite())
                || !s.rocof.is_finite()
                || !s.fn_hz.is_finite()
            {
                return Err(NeuralError::Data(format!("row {k} has a non-finite value")));
            }
            if s.fn_hz > f0 + 1e-9 {
                return Err(NeuralError::Data(format!(
                    "row {k}: nadir {} above nominal",
                    s.fn_hz
                )));
            }
            if s.rocof > 1e-12 {
                return Err(NeuralError::Data(format!(
                    "row {k}: positive rocof {}",
                    s.rocof
                )));
            }
        }
        Ok(())
    }

    /// Seeded 70/15/15 train/val/test assignment.
    pub fn assign_splits(&mut self, seed: u64) {
        let n = self.samples.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (0.70 * n as f64).round() as usize;
        let n_val = (0.15 * n as f64).round() as usize;
        for (rank, &i) in idx.iter().enumerate() {
            self.samples[i].split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    /// Features and `[rocof, fn]` labels of one split.
    pub fn xy<T: Scalar>(&self, split: Split) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| {
                (
                    s.features.iter().map(|&v| T::lit(v)).collect(),
                    vec![T::lit(s.rocof), T::lit(s.fn_hz)],
                )
            })
            .unzip()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), NeuralError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.feature_names.clone();
        header.extend(["label_rocof", "label_fn", "split"].map(String::from));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
            rec.push(s.rocof.to_string());
            rec.push(s.fn_hz.to_string());
            rec.push(s.split.as_str().to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| NeuralError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, NeuralError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let n = header.len();
        if n < 3
            || header[n - 3] != "label_rocof"
            || header[n - 2] != "label_fn"
            || header[n - 1] != "split"
        {
            return Err(NeuralError::Data(
                "header must end with label_rocof,label_fn,split".into(),
            ));
        }
        let mut ds = Self::new(header[..n - 3].to_vec());
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != n {
                return Err(NeuralError::Data(format!(
                    "row {k} has {} fields",
                    rec.len()
                )));
            }
            let num = |j: usize| -> Result<f64, NeuralError> {
                rec[j].trim().parse().map_err(|_| {
                    NeuralError::Data(format!("row {k}, column {}: bad number", header[j]))
                })
            };
            let features = (0..n - 3).map(num).collect::<Result<Vec<_>, _>>()?;
            let split = Split::parse(rec[n - 1].trim()).ok_or_else(|| {
                NeuralError::Data(format!("row {k}: unknown split `{}`", &rec[n - 1]))
            })?;
            ds.samples.push(Sample {
                features,
                rocof: num(n - 3)?,
                fn_hz: num(n - 2)?,
                split,
            });
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        let f = std::fs::File::create(path)
            .map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        let f = std::fs::File::open(path)
            .map_err(|e| NeuralError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

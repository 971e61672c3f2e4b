//! On-disk formats.
//!
//! * datasets: CSV with header `t,s0,...,s{p-1}`, one row per time point;
//! * graphs and truth matrices: `p x p` CSV without header, entry `(i, j)`
//!   is the weight of the edge `j -> i`;
//! * checkpoints: versioned JSON holding the architecture, every parameter
//!   in checkpoint order and fit metadata.
//!
//! Floats are written with 17 significant digits so that reading a file back
//! reproduces the same bits.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::eval::GrangerGraph;
use crate::math::Matrix;
use crate::model::{Architecture, ComponentMlp, Params};
use crate::penalty::PenaltyKind;
use crate::timeseries::TimeSeries;

pub const CHECKPOINT_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn dataset_to_csv(ts: &TimeSeries) -> String {
    let p = ts.dim();
    let mut out = String::from("t");
    for j in 0..p {
        out.push_str(&format!(",s{j}"));
    }
    out.push('\n');
    for t in 0..ts.len() {
        out.push_str(&t.to_string());
        for &v in ts.at(t) {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, ts: &TimeSeries) -> Result<(), CliError> {
    write_text(path, &dataset_to_csv(ts))
}

pub fn read_dataset(path: &Path) -> Result<TimeSeries, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| data_err(path, e))?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        return Err(data_err(path, "header must be `t,s0,...`"));
    }
    let p = header.len() - 1;
    let mut values = Vec::new();
    let mut rows = 0;
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_err(path, e))?;
        if record.len() != p + 1 {
            return Err(data_err(path, format!("row {} has {} fields, expected {}", n + 1, record.len(), p + 1)));
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| data_err(path, format!("row {}, column s{j}: cannot parse `{field}`", n + 1)))?;
            if !v.is_finite() {
                return Err(data_err(path, format!("row {}, column s{j}: non-finite value", n + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(data_err(path, "no data rows"));
    }
    let m = Matrix::from_vec(rows, p, values).map_err(|e| data_err(path, e))?;
    TimeSeries::new(m).map_err(|e| data_err(path, e))
}

/// Binary matrices are written as `0`/`1`, anything else at full precision.
pub fn matrix_to_csv(m: &Matrix) -> String {
    let binary = m.as_slice().iter().all(|&v| v == 0.0 || v == 1.0);
    let mut out = String::new();
    for r in 0..m.rows() {
        let fields: Vec<String> = m
            .row(r)
            .iter()
            .map(|&v| if binary { format!("{v:.0}") } else { fmt_f64(v) })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_graph(path: &Path, g: &GrangerGraph) -> Result<(), CliError> {
    write_text(path, &matrix_to_csv(g.weights()))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), CliError> {
    write_text(path, &matrix_to_csv(m))
}

pub fn read_graph(path: &Path) -> Result<GrangerGraph, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_err(path, e))?;
        let row = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| data_err(path, format!("row {}: cannot parse `{f}`", n + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(data_err(path, "empty graph file"));
    }
    let m = Matrix::from_rows(&rows).map_err(|e| data_err(path, e))?;
    GrangerGraph::from_matrix(m).map_err(|e| data_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub series: usize,
    pub penalty: PenaltyKind,
    pub lambda: f64,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub final_objective: f64,
}

/// Serialized component network. `params` lists the first-layer matrix
/// (row-major), then for each hidden layer its bias followed by the next
/// layer's weights, then the decoder weights and finally the output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub architecture: Architecture,
    pub params: Vec<f64>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(model: &ComponentMlp, meta: CheckpointMeta) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            architecture: model.arch().clone(),
            params: model.params.to_flat(),
            meta,
        }
    }

    pub fn model(&self) -> Result<ComponentMlp, CliError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CliError::Data(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut params = Params::zeros(&self.architecture);
        params
            .set_flat(&self.params)
            .map_err(|e| CliError::Data(e.to_string()))?;
        ComponentMlp::from_params(self.architecture.clone(), params)
            .map_err(|e| CliError::Data(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("checkpoint: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_text(path, &self.to_json())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::from_json(&read_text(path)?).map_err(|e| data_err(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;
    use crate::model::Activation;

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(5);
        let vals: Vec<f64> = (0..12).map(|_| rng.standard_normal() * 1e3).collect();
        let ts = TimeSeries::new(Matrix::from_vec(4, 3, vals).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_dataset(&path, &ts).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,s0,s1,s2\n0,"));
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn dataset_errors_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,s0\n0,1.0\n1,abc\n").unwrap();
        let msg = read_dataset(&path).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("abc"), "{msg}");
        fs::write(&path, "x,s0\n0,1.0\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(CliError::Data(_))));
        assert!(matches!(read_dataset(&dir.path().join("missing.csv")), Err(CliError::Io(_))));
    }

    #[test]
    fn graph_round_trip() {
        let truth = GrangerGraph::from_matrix(Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(matrix_to_csv(truth.weights()), "1,0\n1,1\n");
        let weighted =
            GrangerGraph::from_matrix(Matrix::from_rows(&[vec![0.1, 0.0], vec![1.0 / 3.0, 2.5]]).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for g in [truth, weighted] {
            let path = dir.path().join("g.csv");
            write_graph(&path, &g).unwrap();
            assert_eq!(read_graph(&path).unwrap(), g);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let arch = Architecture {
            p: 3,
            lags: 2,
            hidden: vec![4, 2],
            activation: Activation::Relu,
            output_bias: true,
        };
        let mut rng = SeededRng::new(11);
        let mut model = ComponentMlp::init(arch, &mut rng).unwrap();
        model.params.output_bias = -0.1 / 3.0;
        model.params.first_layer.set(0, 0, -0.0);
        let meta = CheckpointMeta {
            series: 1,
            penalty: PenaltyKind::Hierarchical,
            lambda: 0.1 + 0.2,
            seed: u64::MAX,
            iterations: 17,
            converged: false,
            final_objective: 1e-300,
        };
        let ck = Checkpoint::new(&model, meta);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let restored = back.model().unwrap();
        let bits = |m: &ComponentMlp| m.params.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&restored), bits(&model));
    }

    #[test]
    fn checkpoint_rejects_other_versions_and_shapes() {
        let model = ComponentMlp::zeros(Architecture::new(2, 1, vec![2])).unwrap();
        let meta = CheckpointMeta {
            series: 0,
            penalty: PenaltyKind::Group,
            lambda: 1.0,
            seed: 0,
            iterations: 0,
            converged: true,
            final_objective: 0.0,
        };
        let mut ck = Checkpoint::new(&model, meta);
        ck.version = 99;
        assert!(ck.model().is_err());
        ck.version = CHECKPOINT_VERSION;
        ck.params.pop();
        assert!(ck.model().is_err());
    }
}

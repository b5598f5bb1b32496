//! Dataset loading, cleaning and z-score standardization.
//!
//! Row order is never changed here: the sample index is the time axis for
//! every temporal computation downstream.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::par;

/// Columns whose population standard deviation falls below this are constant.
pub const CONSTANT_TOLERANCE: f64 = 1e-12;

/// A numeric sample-by-feature matrix in capture order with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub matrix: Array2<f64>,
    /// 1 = attack, 0 = benign.
    pub labels: Vec<u8>,
    pub column_names: Vec<String>,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        matrix: Array2<f64>,
        labels: Vec<u8>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != matrix.nrows() {
            return Err(Error::LengthMismatch {
                left: matrix.nrows(),
                right: labels.len(),
            });
        }
        if column_names.len() != matrix.ncols() {
            return Err(Error::LengthMismatch {
                left: matrix.ncols(),
                right: column_names.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::param("labels must be 0 or 1"));
        }
        Ok(Self {
            matrix,
            labels,
            column_names,
            name: name.into(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.matrix.ncols()
    }

    /// Fraction of rows labelled as attack.
    pub fn attack_ratio(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.labels.len() as f64
    }

    /// Writes the dataset as a CSV readable by [`load_csv`] with label column `label_column`.
    pub fn write_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push(label_column);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (row, &label) in self.matrix.rows().into_iter().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| format_f64(*v)));
            record.push(label.to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Shortest round-trip representation, with the CSV token spellings for non-finite values.
pub(crate) fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v}")
    }
}

/// Parses a numeric CSV cell. `None` means the cell is not numeric.
fn parse_cell(cell: &str) -> Option<f64> {
    let lower = cell.to_ascii_lowercase();
    match lower.as_str() {
        "nan" | "+nan" | "-nan" => return Some(f64::NAN),
        "inf" | "+inf" | "infinity" | "+infinity" => return Some(f64::INFINITY),
        "-inf" | "-infinity" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    let first = lower.as_bytes()[0];
    if !(first.is_ascii_digit() || matches!(first, b'-' | b'+' | b'.')) {
        return None;
    }
    lower.parse::<f64>().ok()
}

/// Loads a headered CSV, keeping only fully numeric columns.
///
/// The label column is mapped to 1 when its trimmed value is in
/// `positive_values` and 0 otherwise. Empty numeric cells load as NaN and are
/// zeroed by [`clean`].
pub fn load_csv(
    path: &Path,
    label_column: &str,
    positive_values: &HashSet<String>,
) -> Result<LabeledDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        rows.push(record?);
    }
    if rows.is_empty() {
        return Err(Error::NoRows);
    }

    let numeric: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_idx)
        .filter(|&j| {
            rows.iter().all(|r| {
                let cell = r.get(j).unwrap_or("");
                cell.is_empty() || parse_cell(cell).is_some()
            })
        })
        .collect();
    if numeric.is_empty() {
        return Err(Error::NoNumericColumns);
    }

    let n = rows.len();
    let p = numeric.len();
    let mut matrix = Array2::<f64>::zeros((n, p));
    let mut labels = Vec::with_capacity(n);
    for (i, record) in rows.iter().enumerate() {
        for (k, &j) in numeric.iter().enumerate() {
            let cell = record.get(j).unwrap_or("");
            matrix[[i, k]] = if cell.is_empty() {
                f64::NAN
            } else {
                parse_cell(cell).expect("column typed as numeric")
            };
        }
        let label = record.get(label_idx).unwrap_or("");
        labels.push(u8::from(positive_values.contains(label)));
    }

    let column_names = numeric.iter().map(|&j| header[j].clone()).collect();
    LabeledDataset::new(dataset_name(path), matrix, labels, column_names)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SidecarLabels {
    Inline(Vec<u8>),
    File(PathBuf),
}

#[derive(Debug, Deserialize)]
struct Sidecar {
    dtype: String,
    shape: Vec<usize>,
    labels: SidecarLabels,
    #[serde(default)]
    column_names: Option<Vec<String>>,
    #[serde(default)]
    name: Option<String>,
}

fn is_f32_le(dtype: &str) -> bool {
    matches!(
        dtype.to_ascii_lowercase().as_str(),
        "float32" | "float32le" | "f32" | "f32le" | "<f4"
    )
}

/// Loads a raw little-endian `f32` row-major matrix described by a key-value sidecar.
///
/// The sidecar is a TOML document:
///
/// ```toml
/// dtype = "float32le"
/// shape = [48320, 1024]
/// labels = "labels.txt"   # or an inline array: labels = [0, 1, ...]
/// ```
///
/// A label file holds one `0`/`1` per line and is resolved relative to the sidecar.
pub fn load_binary(path: &Path, sidecar: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
    let meta: Sidecar = toml::from_str(&text).map_err(|e| Error::Sidecar(e.to_string()))?;
    if !is_f32_le(&meta.dtype) {
        return Err(Error::UnsupportedDtype(meta.dtype));
    }
    let [n, p] = meta.shape[..] else {
        return Err(Error::Sidecar(format!(
            "shape must have two entries, got {}",
            meta.shape.len()
        )));
    };

    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let declared = n
        .checked_mul(p)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Sidecar("shape overflows".into()))?;
    if bytes.len() != declared {
        return Err(Error::ShapeMismatch {
            declared,
            actual: bytes.len(),
        });
    }
    if n == 0 {
        return Err(Error::NoRows);
    }
    if p == 0 {
        return Err(Error::NoNumericColumns);
    }

    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let matrix = Array2::from_shape_vec((n, p), values).expect("length checked above");

    let labels = match meta.labels {
        SidecarLabels::Inline(v) => v,
        SidecarLabels::File(rel) => {
            let label_path = sidecar
                .parent()
                .map(|d| d.join(&rel))
                .unwrap_or_else(|| rel.clone());
            read_label_file(&label_path)?
        }
    };
    let column_names = meta
        .column_names
        .unwrap_or_else(|| (0..p).map(|j| format!("f{j}")).collect());
    let name = meta.name.unwrap_or_else(|| dataset_name(path));
    LabeledDataset::new(name, matrix, labels, column_names)
}

/// Reads one binary mark per non-empty line.
pub fn read_label_file(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| match l {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(Error::param(format!("label `{other}` is not 0 or 1"))),
        })
        .collect()
}

/// Replaces NaN and infinite entries with 0.0, leaving every other entry untouched.
pub fn clean(mut dataset: LabeledDataset) -> LabeledDataset {
    clean_matrix(&mut dataset.matrix);
    dataset
}

pub fn clean_matrix(matrix: &mut Array2<f64>) {
    matrix.mapv_inplace(|v| if v.is_finite() { v } else { 0.0 });
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub constant_columns: BTreeSet<usize>,
}

impl StandardizationParams {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// Maps standardized values back to the original scale.
    ///
    /// Constant columns come back as their mean.
    pub fn inverse(&self, matrix: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_dims(matrix)?;
        let mut out = matrix.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (mean, std) = (self.means[j], self.stds[j]);
            if self.constant_columns.contains(&j) {
                col.fill(mean);
            } else {
                col.mapv_inplace(|z| z * std + mean);
            }
        }
        Ok(out)
    }

    fn check_dims(&self, matrix: &Array2<f64>) -> Result<()> {
        if matrix.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: matrix.ncols(),
            });
        }
        Ok(())
    }
}

/// Computes per-column mean and population std. Columns are processed in
/// parallel; each column is summed sequentially so results do not depend on
/// the schedule.
pub fn fit_standardizer(matrix: &Array2<f64>) -> Result<StandardizationParams> {
    let n = matrix.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: n,
        });
    }
    let stats = par::map_range(matrix.ncols(), |j| {
        let col = matrix.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    });
    let (means, stds): (Vec<f64>, Vec<f64>) = stats.into_iter().unzip();
    let constant_columns = stds
        .iter()
        .enumerate()
        .filter(|(_, &s)| !(s >= CONSTANT_TOLERANCE))
        .map(|(j, _)| j)
        .collect();
    Ok(StandardizationParams {
        means,
        stds,
        constant_columns,
    })
}

/// Applies `(x - mean) / std`; constant columns become all-zero.
pub fn apply_standardizer(
    matrix: &Array2<f64>,
    params: &StandardizationParams,
) -> Result<Array2<f64>> {
    params.check_dims(matrix)?;
    let mut out = matrix.clone();
    let mut columns: Vec<_> = out.axis_iter_mut(Axis(1)).collect();
    par::for_each_mut(&mut columns, |j, col| {
        if params.constant_columns.contains(&j) {
            col.fill(0.0);
        } else {
            let (mean, std) = (params.means[j], params.stds[j]);
            col.mapv_inplace(|x| (x - mean) / std);
        }
    });
    Ok(out)
}

/// Fits on `matrix` and standardizes it in one step.
pub fn standardize(matrix: &Array2<f64>) -> Result<(Array2<f64>, StandardizationParams)> {
    let params = fit_standardizer(matrix)?;
    let z = apply_standardizer(matrix, &params)?;
    Ok((z, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &[u8]) -> PathBuf {
        let path = dir.join(name);
        fs::File::create(&path).unwrap().write_all(body).unwrap();
        path
    }

    fn positives(v: &[&str]) -> HashSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn csv_drops_text_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "t.csv",
            b"syn_count,proto,label\n1,tcp,attack\n2,udp,benign\n3,tcp,attack\n4,icmp,benign\n",
        );
        let ds = load_csv(&path, "label", &positives(&["attack"])).unwrap();
        assert_eq!(ds.matrix.dim(), (4, 1));
        assert_eq!(ds.column_names, vec!["syn_count"]);
        assert_eq!(ds.labels, vec![1, 0, 1, 0]);
        assert_eq!(ds.matrix.column(0).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_infinity_token_parses_then_cleans() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "t.csv",
            b"a,b,label\nInfinity,1,x\n2,NaN,x\n-inf,inf,x\n",
        );
        let ds = load_csv(&path, "label", &positives(&["x"])).unwrap();
        assert_eq!(ds.matrix[[0, 0]], f64::INFINITY);
        assert!(ds.matrix[[1, 1]].is_nan());
        assert_eq!(ds.matrix[[2, 0]], f64::NEG_INFINITY);
        let cleaned = clean(ds);
        assert_eq!(cleaned.matrix, array![[0.0, 1.0], [2.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn csv_without_positive_matches_is_all_benign() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "t.csv", b"f,Label\n1,BENIGN\n2,BENIGN\n");
        let ds = load_csv(&path, "Label", &positives(&["DrDoS_DNS"])).unwrap();
        assert_eq!(ds.labels, vec![0, 0]);
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_csv(&missing, "label", &HashSet::new()),
            Err(Error::Io { .. })
        ));
        let p = write(dir.path(), "a.csv", b"x,y\n1,2\n");
        assert!(matches!(
            load_csv(&p, "label", &HashSet::new()),
            Err(Error::MissingLabelColumn(_))
        ));
        let p = write(dir.path(), "b.csv", b"x,label\nfoo,1\n");
        assert!(matches!(
            load_csv(&p, "label", &HashSet::new()),
            Err(Error::NoNumericColumns)
        ));
        let p = write(dir.path(), "c.csv", b"x,label\n");
        assert!(matches!(
            load_csv(&p, "label", &HashSet::new()),
            Err(Error::NoRows)
        ));
    }

    #[test]
    fn column_typing_ignores_row_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "a.csv", b"n,t,label\n1,2,x\n3,oops,y\n");
        let b = write(dir.path(), "b.csv", b"n,t,label\n3,oops,y\n1,2,x\n");
        let da = load_csv(&a, "label", &HashSet::new()).unwrap();
        let db = load_csv(&b, "label", &HashSet::new()).unwrap();
        assert_eq!(da.column_names, db.column_names);
        assert_eq!(da.column_names, vec!["n"]);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = (0..6).flat_map(|v| (v as f32).to_le_bytes()).collect();
        let data = write(dir.path(), "x.bin", &bytes);
        let side = write(
            dir.path(),
            "x.toml",
            b"dtype = \"float32le\"\nshape = [2, 3]\nlabels = [0, 1]\n",
        );
        let ds = load_binary(&data, &side).unwrap();
        assert_eq!(ds.matrix, array![[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]);
        assert_eq!(ds.labels, vec![0, 1]);
    }

    #[test]
    fn binary_label_file_and_wide_rows() {
        let dir = tempfile::tempdir().unwrap();
        let (n, p) = (100usize, 1024usize);
        let bytes: Vec<u8> = (0..n * p)
            .flat_map(|v| ((v % 17) as f32).to_le_bytes())
            .collect();
        let data = write(dir.path(), "x.bin", &bytes);
        let labels: String = (0..n).map(|i| format!("{}\n", i % 2)).collect();
        write(dir.path(), "labels.txt", labels.as_bytes());
        let side = write(
            dir.path(),
            "x.toml",
            b"dtype = \"float32\"\nshape = [100, 1024]\nlabels = \"labels.txt\"\n",
        );
        let ds = load_binary(&data, &side).unwrap();
        assert_eq!(ds.matrix.dim(), (100, 1024));
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 50);
    }

    #[test]
    fn binary_shape_mismatch_and_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let data = write(dir.path(), "x.bin", &[0u8; 20]);
        let side = write(
            dir.path(),
            "x.toml",
            b"dtype = \"float32le\"\nshape = [2, 3]\nlabels = [0, 1]\n",
        );
        assert!(matches!(
            load_binary(&data, &side),
            Err(Error::ShapeMismatch {
                declared: 24,
                actual: 20
            })
        ));
        let side = write(
            dir.path(),
            "y.toml",
            b"dtype = \"float64\"\nshape = [2, 3]\nlabels = [0, 1]\n",
        );
        assert!(matches!(
            load_binary(&data, &side),
            Err(Error::UnsupportedDtype(_))
        ));
    }

    #[test]
    fn clean_rules() {
        let m = array![[1.0, f64::NAN], [f64::INFINITY, 2.0]];
        let ds = LabeledDataset::new("t", m, vec![0, 1], vec!["a".into(), "b".into()]).unwrap();
        let c = clean(ds);
        assert_eq!(c.matrix, array![[1.0, 0.0], [0.0, 2.0]]);
        let again = clean(c.clone());
        assert_eq!(again, c);

        let mut m = array![[f64::NEG_INFINITY]];
        clean_matrix(&mut m);
        assert_eq!(m, array![[0.0]]);
    }

    #[test]
    fn standardizer_hand_cases() {
        let m = array![[1.0, 5.0], [3.0, 5.0]];
        let params = fit_standardizer(&m).unwrap();
        assert_eq!(params.means, vec![2.0, 5.0]);
        assert_eq!(params.stds, vec![1.0, 0.0]);
        assert!(params.constant_columns.contains(&1));
        let z = apply_standardizer(&m, &params).unwrap();
        assert_eq!(z, array![[-1.0, 0.0], [1.0, 0.0]]);

        let m3 = array![[5.0], [5.0], [5.0]];
        assert!(fit_standardizer(&m3).unwrap().constant_columns.contains(&0));
        assert!(matches!(
            fit_standardizer(&array![[1.0]]),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            apply_standardizer(&array![[1.0, 2.0, 3.0]], &params),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn standard_normal_sampling_bounds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let m = Array2::from_shape_fn((1000, 3), |_| StandardNormal.sample(&mut rng));
        let params = fit_standardizer(&m).unwrap();
        for j in 0..3 {
            assert!(params.means[j].abs() < 0.15);
            assert!((params.stds[j] - 1.0).abs() < 0.15);
        }
    }

    #[test]
    fn inverse_recovers_original() {
        let m = array![[1.0, -3.5, 7.0], [2.0, 10.0, 7.0], [4.5, 0.25, 7.0]];
        let (z, params) = standardize(&m).unwrap();
        let back = params.inverse(&z).unwrap();
        for (a, b) in back.iter().zip(m.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}

//! Synthetic benchmark data: three overlapping isotropic Gaussian classes,
//! uniform OOD samples rejection-filtered away from the class means, and
//! evaluation grids. CSV serialization keeps full double precision so
//! generation is byte-reproducible per seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("sigma must be > 0, got {0}")]
    BadSigma(f64),
    #[error("invalid box: {0:?}")]
    BadBox([f64; 4]),
    #[error("rejection sampling acceptance below 1%: box {box_:?}, exclusion radius {radius}")]
    InfeasibleExclusion { box_: [f64; 4], radius: f64 },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Generation parameters echoed next to each dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub means: Vec<[f64; 2]>,
    pub sigma_std: f64,
    pub box_: Option<[f64; 4]>,
    pub exclusion_radius: Option<f64>,
    pub seed: u64,
}

/// Feature rows with labels; OOD rows carry label -1 and domain flag false.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
    pub domain_flags: Vec<bool>,
    pub meta: Option<DatasetMeta>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Stacks two datasets; the merged meta is dropped.
    pub fn concat(mut self, other: LabeledDataset) -> LabeledDataset {
        self.features.extend(other.features);
        self.labels.extend(other.labels);
        self.domain_flags.extend(other.domain_flags);
        self.meta = None;
        self
    }

    /// (features, labels) of the in-domain rows, labels as class indices.
    pub fn in_domain(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..self.len() {
            if self.domain_flags[i] {
                x.push(self.features[i].clone());
                y.push(self.labels[i] as usize);
            }
        }
        (x, y)
    }

    pub fn ood(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .filter(|&i| !self.domain_flags[i])
            .map(|i| self.features[i].clone())
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    }
}

/// n_per_class isotropic Gaussian samples around each mean.
pub fn sample_in_domain(
    n_per_class: usize,
    means: &[[f64; 2]],
    sigma_std: f64,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    if !(sigma_std > 0.0) {
        return Err(DataError::BadSigma(sigma_std));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_std).unwrap();
    let mut features = Vec::with_capacity(n_per_class * means.len());
    let mut labels = Vec::with_capacity(n_per_class * means.len());
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..n_per_class {
            features.push(vec![
                mean[0] + normal.sample(&mut rng),
                mean[1] + normal.sample(&mut rng),
            ]);
            labels.push(class as i64);
        }
    }
    let n = features.len();
    Ok(LabeledDataset {
        features,
        labels,
        domain_flags: vec![true; n],
        meta: Some(DatasetMeta {
            means: means.to_vec(),
            sigma_std,
            box_: None,
            exclusion_radius: None,
            seed,
        }),
    })
}

/// Uniform samples on `box_` = [x_lo, x_hi, y_lo, y_hi], rejection-resampled
/// until every point is at least `exclusion_radius` from every class mean.
pub fn sample_ood(
    n: usize,
    box_: [f64; 4],
    exclusion_radius: f64,
    means: &[[f64; 2]],
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    let [x_lo, x_hi, y_lo, y_hi] = box_;
    if !(x_lo < x_hi && y_lo < y_hi) {
        return Err(DataError::BadBox(box_));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut attempts: u64 = 0;
    while features.len() < n {
        attempts += 1;
        // acceptance check after a warm-up window
        if attempts >= 1000 && (features.len() as f64) < attempts as f64 * 0.01 {
            return Err(DataError::InfeasibleExclusion {
                box_,
                radius: exclusion_radius,
            });
        }
        let p = [rng.gen_range(x_lo..x_hi), rng.gen_range(y_lo..y_hi)];
        let clear = means
            .iter()
            .all(|m| (p[0] - m[0]).hypot(p[1] - m[1]) >= exclusion_radius);
        if clear {
            features.push(p.to_vec());
        }
    }
    Ok(LabeledDataset {
        features,
        labels: vec![-1; n],
        domain_flags: vec![false; n],
        meta: Some(DatasetMeta {
            means: means.to_vec(),
            sigma_std: 0.0,
            box_: Some(box_),
            exclusion_radius: Some(exclusion_radius),
            seed,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub resolution: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.x_range[0] >= self.x_range[1] || self.y_range[0] >= self.y_range[1] {
            return Err(DataError::BadGrid(format!(
                "ranges must satisfy lo < hi: x {:?}, y {:?}",
                self.x_range, self.y_range
            )));
        }
        if self.resolution < 2 {
            return Err(DataError::BadGrid(format!(
                "resolution must be >= 2, got {}",
                self.resolution
            )));
        }
        Ok(())
    }
}

/// Row-major lattice of resolution^2 points covering the ranges inclusively.
pub fn make_grid(spec: &GridSpec) -> Result<Vec<Vec<f64>>, DataError> {
    spec.validate()?;
    let r = spec.resolution;
    let dx = (spec.x_range[1] - spec.x_range[0]) / (r - 1) as f64;
    let dy = (spec.y_range[1] - spec.y_range[0]) / (r - 1) as f64;
    let mut points = Vec::with_capacity(r * r);
    for j in 0..r {
        for i in 0..r {
            points.push(vec![
                spec.x_range[0] + i as f64 * dx,
                spec.y_range[0] + j as f64 * dy,
            ]);
        }
    }
    Ok(points)
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `x0,x1,label,domain` rows plus a `<stem>.meta.json` sidecar when
/// generation metadata is present. Features carry 17 significant digits.
pub fn save_csv(dataset: &LabeledDataset, path: &Path) -> Result<(), DataError> {
    let mut out = String::from("x0,x1,label,domain\n");
    for i in 0..dataset.len() {
        let f = &dataset.features[i];
        writeln!(
            out,
            "{:.16e},{:.16e},{},{}",
            f[0],
            f[1],
            dataset.labels[i],
            if dataset.domain_flags[i] { 1 } else { 0 }
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))?;
    if let Some(meta) = &dataset.meta {
        let meta_path = path.with_extension("meta.json");
        let json = serde_json::to_string_pretty(meta).expect("meta serializes");
        std::fs::write(&meta_path, json).map_err(|e| io_err(&meta_path, e))?;
    }
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<LabeledDataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let path_str = path.display().to_string();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut domain_flags = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x0,x1,label,domain" => {}
        Some((_, header)) => {
            return Err(DataError::Parse {
                path: path_str,
                line: 1,
                message: format!("unexpected header: {header}"),
            })
        }
        None => {
            return Err(DataError::Parse {
                path: path_str,
                line: 1,
                message: "no data rows".into(),
            })
        }
    }
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(DataError::Parse {
                path: path_str,
                line: idx + 1,
                message: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let parse_f = |s: &str| -> Result<f64, DataError> {
            s.trim().parse().map_err(|_| DataError::Parse {
                path: path_str.clone(),
                line: idx + 1,
                message: format!("not a number: {s}"),
            })
        };
        let x0 = parse_f(fields[0])?;
        let x1 = parse_f(fields[1])?;
        let label: i64 = fields[2].trim().parse().map_err(|_| DataError::Parse {
            path: path_str.clone(),
            line: idx + 1,
            message: format!("bad label: {}", fields[2]),
        })?;
        let domain = match fields[3].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(DataError::Parse {
                    path: path_str,
                    line: idx + 1,
                    message: format!("bad domain flag: {other}"),
                })
            }
        };
        features.push(vec![x0, x1]);
        labels.push(label);
        domain_flags.push(domain);
    }
    if features.is_empty() {
        return Err(DataError::Parse {
            path: path_str,
            line: 1,
            message: "no data rows".into(),
        });
    }
    let meta_path = path.with_extension("meta.json");
    let meta = std::fs::read_to_string(&meta_path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok());
    Ok(LabeledDataset {
        features,
        labels,
        domain_flags,
        meta,
    })
}

/// Default class means for the three-Gaussian benchmark.
pub fn default_means() -> Vec<[f64; 2]> {
    vec![[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0]]
}

/// Default OOD sampling box.
pub const DEFAULT_OOD_BOX: [f64; 4] = [-15.0, 15.0, -13.0, 17.0];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use tempfile::tempdir;

    #[test]
    fn in_domain_default_shape() {
        let d = sample_in_domain(200, &default_means(), 2.0, 0).unwrap();
        assert_eq!(d.len(), 600);
        for class in 0..3 {
            assert_eq!(d.labels.iter().filter(|&&l| l == class).count(), 200);
        }
        assert!(d.domain_flags.iter().all(|&f| f));
    }

    #[test]
    fn in_domain_degenerate_variance() {
        let d = sample_in_domain(1, &default_means(), 1e-9, 3).unwrap();
        assert_abs_diff_eq!(d.features[0][0], -4.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d.features[0][1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn in_domain_law_of_large_numbers() {
        let sigma = 2.0;
        let n = 100_000;
        let d = sample_in_domain(n, &[[-4.0, 0.0]], sigma, 5).unwrap();
        let tol = 3.0 * sigma / (n as f64).sqrt();
        let mean0: f64 = d.features.iter().map(|f| f[0]).sum::<f64>() / n as f64;
        let mean1: f64 = d.features.iter().map(|f| f[1]).sum::<f64>() / n as f64;
        assert!((mean0 + 4.0).abs() < tol);
        assert!(mean1.abs() < tol);
        // class covariance close to sigma^2 I
        let var0: f64 =
            d.features.iter().map(|f| (f[0] - mean0).powi(2)).sum::<f64>() / (n - 1) as f64;
        let var1: f64 =
            d.features.iter().map(|f| (f[1] - mean1).powi(2)).sum::<f64>() / (n - 1) as f64;
        let cov: f64 = d
            .features
            .iter()
            .map(|f| (f[0] - mean0) * (f[1] - mean1))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!((var0 / (sigma * sigma) - 1.0).abs() < 0.05);
        assert!((var1 / (sigma * sigma) - 1.0).abs() < 0.05);
        assert!(cov.abs() / (sigma * sigma) < 0.05);
    }

    #[test]
    fn in_domain_rejects_bad_sigma() {
        assert!(sample_in_domain(1, &default_means(), 0.0, 0).is_err());
        assert!(sample_in_domain(1, &default_means(), -1.0, 0).is_err());
    }

    #[test]
    fn ood_plain_uniform_moments() {
        let n = 50_000;
        let d = sample_ood(n, DEFAULT_OOD_BOX, 0.0, &default_means(), 1).unwrap();
        let mean0: f64 = d.features.iter().map(|f| f[0]).sum::<f64>() / n as f64;
        let mean1: f64 = d.features.iter().map(|f| f[1]).sum::<f64>() / n as f64;
        let tol0 = 3.0 * (30.0 / 12f64.sqrt()) / (n as f64).sqrt();
        assert!((mean0 - 0.0).abs() < tol0);
        assert!((mean1 - 2.0).abs() < tol0);
        assert!(d.labels.iter().all(|&l| l == -1));
        assert!(d.domain_flags.iter().all(|&f| !f));
    }

    #[test]
    fn ood_exclusion_is_exhaustive() {
        let radius = 6.0; // 3 * default std
        let means = default_means();
        let d = sample_ood(600, DEFAULT_OOD_BOX, radius, &means, 2).unwrap();
        assert_eq!(d.len(), 600);
        for f in &d.features {
            assert!(f[0] >= -15.0 && f[0] <= 15.0 && f[1] >= -13.0 && f[1] <= 17.0);
            for m in &means {
                assert!((f[0] - m[0]).hypot(f[1] - m[1]) >= radius);
            }
        }
    }

    #[test]
    fn ood_infeasible_radius_errors() {
        let err = sample_ood(10, DEFAULT_OOD_BOX, 1e3, &default_means(), 0);
        assert!(matches!(err, Err(DataError::InfeasibleExclusion { .. })));
    }

    #[test]
    fn grid_shapes() {
        let spec = GridSpec {
            x_range: [0.0, 1.0],
            y_range: [0.0, 1.0],
            resolution: 2,
        };
        let g = make_grid(&spec).unwrap();
        assert_eq!(
            g,
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0]
            ]
        );

        let spec = GridSpec {
            x_range: [-15.0, 15.0],
            y_range: [-13.0, 17.0],
            resolution: 200,
        };
        let g = make_grid(&spec).unwrap();
        assert_eq!(g.len(), 200 * 200);
        assert_abs_diff_eq!(g[1][0] - g[0][0], 30.0 / 199.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[200][1] - g[0][1], 30.0 / 199.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_bad_spec() {
        assert!(make_grid(&GridSpec {
            x_range: [1.0, 0.0],
            y_range: [0.0, 1.0],
            resolution: 4
        })
        .is_err());
        assert!(make_grid(&GridSpec {
            x_range: [0.0, 1.0],
            y_range: [0.0, 1.0],
            resolution: 1
        })
        .is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = sample_in_domain(20, &default_means(), 2.0, 9)
            .unwrap()
            .concat(sample_ood(10, DEFAULT_OOD_BOX, 6.0, &default_means(), 10).unwrap());
        save_csv(&d, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(d.features, loaded.features);
        assert_eq!(d.labels, loaded.labels);
        assert_eq!(d.domain_flags, loaded.domain_flags);
    }

    #[test]
    fn csv_determinism_byte_for_byte() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        save_csv(&sample_in_domain(50, &default_means(), 2.0, 77).unwrap(), &a).unwrap();
        save_csv(&sample_in_domain(50, &default_means(), 2.0, 77).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn csv_parse_errors_name_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,x1,label,domain\n1.0,2.0,0,1\n1.0,2.0,3.0,0,1\n").unwrap();
        match load_csv(&path) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_csv(&path), Err(DataError::Parse { .. })));

        std::fs::write(&path, "x0,x1,label,domain\n").unwrap();
        match load_csv(&path) {
            Err(DataError::Parse { message, .. }) => assert!(message.contains("no data rows")),
            other => panic!("expected no-data error, got {other:?}"),
        }
    }

    #[test]
    fn meta_sidecar_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = sample_in_domain(5, &default_means(), 2.0, 3).unwrap();
        save_csv(&d, &path).unwrap();
        assert!(dir.path().join("d.meta.json").exists());
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.meta, d.meta);
    }
}

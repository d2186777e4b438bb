//! Pixel tables, patch filtering, split sampling and feature scaling.
//!
//! The preprocessing order for one split is fixed: select patches, sample the
//! split, fit PCA on the training pixels and project both sets, then fit
//! min-max scaling on the projected training set and apply it to both (test
//! values outside the training range are clamped).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::featuremap::DataPoint;
use crate::labels::LabelVector;
use crate::matrix::Matrix;
use crate::{seed, Error, Result};

pub const COLUMNS: [&str; 7] = [
    "patch_id",
    "blue",
    "green",
    "red",
    "nir",
    "label",
    "is_margin",
];
pub const N_BANDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelRecord {
    pub patch_id: String,
    pub blue: f64,
    pub green: f64,
    pub red: f64,
    pub nir: f64,
    /// +1 cloud, -1 clear.
    pub label: i8,
    /// Scene-margin (non-physical) pixel.
    pub is_margin: bool,
}

impl PixelRecord {
    pub fn bands(&self) -> [f64; N_BANDS] {
        [self.blue, self.green, self.red, self.nir]
    }
}

/// Read a pixel table from `path` (comma-delimited).
pub fn load_pixels(path: impl AsRef<Path>) -> Result<Vec<PixelRecord>> {
    load_pixels_with(path, b',')
}

pub fn load_pixels_with(path: impl AsRef<Path>, delimiter: u8) -> Result<Vec<PixelRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pixels(file, path, delimiter)
}

pub fn read_pixels<R: Read>(reader: R, name: &Path, delimiter: u8) -> Result<Vec<PixelRecord>> {
    let perr = |line: u64, message: String| Error::Parse {
        path: name.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != COLUMNS {
        return Err(perr(
            1,
            format!(
                "header must be {}, got {}",
                COLUMNS.join(","),
                got.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            perr(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let band = |i: usize| -> Result<f64> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| perr(line, format!("{}: bad number {:?}", COLUMNS[i], &rec[i])))?;
            if !v.is_finite() || v < 0.0 {
                return Err(perr(
                    line,
                    format!("{}: intensity {v} must be finite and >= 0", COLUMNS[i]),
                ));
            }
            Ok(v)
        };
        let label = match &rec[5] {
            "1" | "+1" => 1,
            "-1" | "0" => -1,
            other => {
                return Err(perr(
                    line,
                    format!("label: {other:?} is not one of 1, -1, 0"),
                ))
            }
        };
        let is_margin = match &rec[6] {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(perr(line, format!("is_margin: {other:?} is not 0 or 1"))),
        };
        out.push(PixelRecord {
            patch_id: rec[0].to_string(),
            blue: band(1)?,
            green: band(2)?,
            red: band(3)?,
            nir: band(4)?,
            label,
            is_margin,
        });
    }
    Ok(out)
}

pub fn write_pixels<W: Write>(writer: W, pixels: &[PixelRecord]) -> Result<()> {
    let ioerr = |e: csv::Error| Error::io("<pixel table>", std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS).map_err(ioerr)?;
    for p in pixels {
        w.write_record([
            p.patch_id.clone(),
            p.blue.to_string(),
            p.green.to_string(),
            p.red.to_string(),
            p.nir.to_string(),
            p.label.to_string(),
            u8::from(p.is_margin).to_string(),
        ])
        .map_err(ioerr)?;
    }
    w.flush().map_err(|e| Error::io("<pixel table>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub patch_id: String,
    /// Cloud pixels over physical pixels.
    pub cloudiness: f64,
    /// Physical pixels over all pixels.
    pub fill: f64,
    pub pixel_count: usize,
}

/// Per-patch cloudiness and fill, ordered by patch id. Patches without any
/// physical pixel have no defined cloudiness and are skipped with a warning.
pub fn patch_stats(pixels: &[PixelRecord]) -> Vec<PatchStats> {
    #[derive(Default)]
    struct Counts {
        total: usize,
        physical: usize,
        cloud: usize,
    }
    let mut by_patch: BTreeMap<&str, Counts> = BTreeMap::new();
    for p in pixels {
        let c = by_patch.entry(&p.patch_id).or_default();
        c.total += 1;
        if !p.is_margin {
            c.physical += 1;
            if p.label > 0 {
                c.cloud += 1;
            }
        }
    }
    by_patch
        .into_iter()
        .filter_map(|(id, c)| {
            if c.physical == 0 {
                log::warn!("patch {id} has no physical pixels; cloudiness undefined, skipping");
                return None;
            }
            Some(PatchStats {
                patch_id: id.to_string(),
                cloudiness: c.cloud as f64 / c.physical as f64,
                fill: c.physical as f64 / c.total as f64,
                pixel_count: c.total,
            })
        })
        .collect()
}

/// Patch acceptance thresholds; bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchFilter {
    pub min_fill: f64,
    pub min_cloudiness: f64,
    pub max_cloudiness: f64,
}

impl Default for PatchFilter {
    fn default() -> Self {
        Self {
            min_fill: 1.0,
            min_cloudiness: 0.40,
            max_cloudiness: 0.60,
        }
    }
}

impl PatchFilter {
    pub fn accepts(&self, s: &PatchStats) -> bool {
        s.fill >= self.min_fill
            && s.cloudiness >= self.min_cloudiness
            && s.cloudiness <= self.max_cloudiness
    }
}

/// Patches with full fill and cloudiness in `[0.40, 0.60]`.
pub fn select_patches(stats: &[PatchStats]) -> Result<Vec<String>> {
    select_patches_with(stats, &PatchFilter::default())
}

pub fn select_patches_with(stats: &[PatchStats], filter: &PatchFilter) -> Result<Vec<String>> {
    let ids: Vec<String> = stats
        .iter()
        .filter(|s| filter.accepts(s))
        .map(|s| s.patch_id.clone())
        .collect();
    if ids.is_empty() {
        return Err(Error::Selection(format!(
            "no patch among {} has fill >= {} and cloudiness in [{}, {}]; relax the filters",
            stats.len(),
            filter.min_fill,
            filter.min_cloudiness,
            filter.max_cloudiness
        )));
    }
    Ok(ids)
}

/// Physical pixels belonging to the given patches, in input order.
pub fn pixels_in_patches(pixels: &[PixelRecord], ids: &[String]) -> Vec<PixelRecord> {
    let keep: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    pixels
        .iter()
        .filter(|p| !p.is_margin && keep.contains(p.patch_id.as_str()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub balanced: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            n_train: 800,
            n_test: 200,
            seed: 0,
            balanced: true,
        }
    }
}

/// Disjoint random train and test sets drawn from `pool`. With `balanced`,
/// each set holds equally many cloud and clear pixels.
pub fn sample_split(
    pool: &[PixelRecord],
    spec: &SplitSpec,
) -> Result<(Vec<PixelRecord>, Vec<PixelRecord>)> {
    if spec.n_train == 0 || spec.n_test == 0 {
        return Err(Error::Size("train and test sizes must be positive".into()));
    }
    let mut rng = seed::rng(spec.seed);
    let (mut train, mut test): (Vec<usize>, Vec<usize>) = if spec.balanced {
        if !spec.n_train.is_multiple_of(2) || !spec.n_test.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "balanced split needs even sizes, got {}/{}",
                spec.n_train, spec.n_test
            )));
        }
        let (ht, hs) = (spec.n_train / 2, spec.n_test / 2);
        let mut train = Vec::with_capacity(spec.n_train);
        let mut test = Vec::with_capacity(spec.n_test);
        for (class, name) in [(1i8, "cloud"), (-1i8, "clear")] {
            let members: Vec<usize> = (0..pool.len())
                .filter(|&i| pool[i].label == class)
                .collect();
            if members.len() < ht + hs {
                return Err(Error::Sampling(format!(
                    "need {} {name} pixels, pool has {} (short by {})",
                    ht + hs,
                    members.len(),
                    ht + hs - members.len()
                )));
            }
            let picked = index::sample(&mut rng, members.len(), ht + hs);
            let picked: Vec<usize> = picked.iter().map(|k| members[k]).collect();
            train.extend_from_slice(&picked[..ht]);
            test.extend_from_slice(&picked[ht..]);
        }
        (train, test)
    } else {
        let need = spec.n_train + spec.n_test;
        if pool.len() < need {
            return Err(Error::Sampling(format!(
                "need {need} pixels, pool has {} (short by {})",
                pool.len(),
                need - pool.len()
            )));
        }
        let picked = index::sample(&mut rng, pool.len(), need).into_vec();
        (
            picked[..spec.n_train].to_vec(),
            picked[spec.n_train..].to_vec(),
        )
    };
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    let take = |idx: &[usize]| idx.iter().map(|&i| pool[i].clone()).collect();
    Ok((take(&train), take(&test)))
}

/// Band intensities as an `N × 4` matrix.
pub fn band_matrix(pixels: &[PixelRecord]) -> Matrix {
    Matrix::from_fn(pixels.len(), N_BANDS, |i, j| pixels[i].bands()[j])
}

pub fn label_vector(pixels: &[PixelRecord]) -> LabelVector {
    LabelVector::new(pixels.iter().map(|p| p.label).collect()).expect("records hold ±1 labels")
}

/// Rows of a matrix scaled to `[0, 1]` as embedding inputs.
pub fn data_points(x: &Matrix) -> Result<Vec<DataPoint>> {
    x.iter_rows().map(|r| DataPoint::new(r.to_vec())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_minmax(x: &Matrix) -> Result<MinMax> {
    if x.rows() == 0 {
        return Err(Error::Size("min-max fit on an empty set".into()));
    }
    let mut min = vec![f64::INFINITY; x.cols()];
    let mut max = vec![f64::NEG_INFINITY; x.cols()];
    for r in x.iter_rows() {
        for (j, &v) in r.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    if let Some(j) = (0..x.cols()).find(|&j| max[j] <= min[j]) {
        return Err(Error::Degenerate(format!(
            "feature {j} is constant on the fit set"
        )));
    }
    Ok(MinMax { min, max })
}

/// Scale into `[0, 1]`, clamping out-of-range values. Returns the scaled
/// matrix and the number of clamped entries.
pub fn apply_minmax(x: &Matrix, mm: &MinMax) -> Result<(Matrix, usize)> {
    if x.cols() != mm.min.len() {
        return Err(Error::Shape(format!(
            "{} features, scaler fitted on {}",
            x.cols(),
            mm.min.len()
        )));
    }
    let mut clamped = 0;
    let out = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let v = (x.get(i, j) - mm.min[j]) / (mm.max[j] - mm.min[j]);
        if (0.0..=1.0).contains(&v) {
            v
        } else {
            clamped += 1;
            v.clamp(0.0, 1.0)
        }
    });
    if clamped > 0 {
        log::info!("min-max scaling clamped {clamped} values into [0, 1]");
    }
    Ok((out, clamped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × m`, orthonormal rows.
    pub components: Matrix,
    /// Top-`k` covariance eigenvalues, non-increasing.
    pub explained_variance: Vec<f64>,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matrix whose columns are the eigenvectors, in
/// no particular order.
pub fn jacobi_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !a.is_square() {
        return Err(Error::Shape(
            "eigen-decomposition needs a square matrix".into(),
        ));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m.get(p, q).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-12 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * kp - s * kq);
                    m.set(k, q, s * kp + c * kq);
                }
                for k in 0..n {
                    let (pk, qk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * pk - s * qk);
                    m.set(q, k, s * pk + c * qk);
                }
                for k in 0..n {
                    let (kp, kq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * kp - s * kq);
                    v.set(k, q, s * kp + c * kq);
                }
            }
        }
    }
    Ok(((0..n).map(|i| m.get(i, i)).collect(), v))
}

/// Sample covariance (`N − 1` denominator) of the rows of `x`.
pub fn covariance(x: &Matrix) -> (Vec<f64>, Matrix) {
    let (n, m) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..m)
        .map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let cov = Matrix::from_fn(m, m, |a, b| {
        (0..n)
            .map(|i| (x.get(i, a) - mean[a]) * (x.get(i, b) - mean[b]))
            .sum::<f64>()
            / (n as f64 - 1.0)
    });
    (mean, cov)
}

pub fn pca_fit(x: &Matrix, k: usize) -> Result<PcaModel> {
    let m = x.cols();
    if x.rows() < 2 {
        return Err(Error::Size(format!(
            "PCA needs at least 2 rows, got {}",
            x.rows()
        )));
    }
    if k == 0 || k > m {
        return Err(Error::Shape(format!(
            "PCA target dimension {k} not in 1..={m}"
        )));
    }
    let (mean, cov) = covariance(x);
    let (vals, vecs) = jacobi_eigen(&cov)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut comps = Vec::with_capacity(k);
    for &col in &order[..k] {
        let mut dir: Vec<f64> = (0..m).map(|r| vecs.get(r, col)).collect();
        let peak = dir
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if peak < 0.0 {
            dir.iter_mut().for_each(|d| *d = -*d);
        }
        comps.push(dir);
    }
    Ok(PcaModel {
        mean,
        components: Matrix::from_rows(&comps)?,
        explained_variance: order[..k].iter().map(|&c| vals[c]).collect(),
    })
}

impl PcaModel {
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let m = self.mean.len();
        if x.cols() != m {
            return Err(Error::Shape(format!(
                "{} features, PCA fitted on {m}",
                x.cols()
            )));
        }
        let k = self.components.rows();
        Ok(Matrix::from_fn(x.rows(), k, |i, c| {
            (0..m)
                .map(|j| (x.get(i, j) - self.mean[j]) * self.components.get(c, j))
                .sum()
        }))
    }

    /// Map projected coordinates back into the original feature space.
    pub fn reconstruct(&self, z: &Matrix) -> Result<Matrix> {
        let k = self.components.rows();
        if z.cols() != k {
            return Err(Error::Shape(format!(
                "{} coordinates, PCA has {k} components",
                z.cols()
            )));
        }
        let m = self.mean.len();
        Ok(Matrix::from_fn(z.rows(), m, |i, j| {
            self.mean[j]
                + (0..k)
                    .map(|c| z.get(i, c) * self.components.get(c, j))
                    .sum::<f64>()
        }))
    }
}

pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    model.transform(x)
}

/// Where min-max scaling sits relative to PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingOrder {
    /// PCA on raw bands, then min-max on the projections.
    #[default]
    PcaThenMinmax,
    /// Min-max on raw bands, PCA, then min-max again so the embedding inputs
    /// stay in `[0, 1]`.
    MinmaxThenPca,
}

/// Fitted preprocessing for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub order: ScalingOrder,
    pub pre_scale: Option<MinMax>,
    pub pca: PcaModel,
    pub post_scale: MinMax,
}

impl FeaturePipeline {
    pub fn fit(train: &Matrix, k: usize, order: ScalingOrder) -> Result<FeaturePipeline> {
        let (pre_scale, base) = match order {
            ScalingOrder::PcaThenMinmax => (None, train.clone()),
            ScalingOrder::MinmaxThenPca => {
                let mm = fit_minmax(train)?;
                let scaled = apply_minmax(train, &mm)?.0;
                (Some(mm), scaled)
            }
        };
        let pca = pca_fit(&base, k)?;
        let post_scale = fit_minmax(&pca.transform(&base)?)?;
        Ok(FeaturePipeline {
            order,
            pre_scale,
            pca,
            post_scale,
        })
    }

    /// Returns features in `[0, 1]` and the number of clamped entries.
    pub fn transform(&self, x: &Matrix) -> Result<(Matrix, usize)> {
        let mut clamped = 0;
        let base = match &self.pre_scale {
            Some(mm) => {
                let (s, c) = apply_minmax(x, mm)?;
                clamped += c;
                s
            }
            None => x.clone(),
        };
        let (out, c) = apply_minmax(&self.pca.transform(&base)?, &self.post_scale)?;
        Ok((out, clamped + c))
    }

    /// Plain-text sidecar; values use the shortest representation that
    /// parses back to the identical float.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let order = match self.order {
            ScalingOrder::PcaThenMinmax => "pca-then-minmax",
            ScalingOrder::MinmaxThenPca => "minmax-then-pca",
        };
        writeln!(out, "order {order}").unwrap();
        if let Some(mm) = &self.pre_scale {
            writeln!(out, "pre_min {}", join(&mm.min)).unwrap();
            writeln!(out, "pre_max {}", join(&mm.max)).unwrap();
        }
        writeln!(out, "pca_mean {}", join(&self.pca.mean)).unwrap();
        for r in self.pca.components.iter_rows() {
            writeln!(out, "pca_component {}", join(r)).unwrap();
        }
        writeln!(
            out,
            "pca_explained_variance {}",
            join(&self.pca.explained_variance)
        )
        .unwrap();
        writeln!(out, "min {}", join(&self.post_scale.min)).unwrap();
        writeln!(out, "max {}", join(&self.post_scale.max)).unwrap();
        out
    }

    pub fn parse_text(text: &str) -> Result<FeaturePipeline> {
        let bad = |m: String| Error::Shape(format!("pipeline text: {m}"));
        let mut order = None;
        let (mut pre_min, mut pre_max, mut mean, mut var, mut min, mut max) =
            (None, None, None, None, None, None);
        let mut comps = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            if key == "order" {
                order = Some(match rest.trim() {
                    "pca-then-minmax" => ScalingOrder::PcaThenMinmax,
                    "minmax-then-pca" => ScalingOrder::MinmaxThenPca,
                    o => return Err(bad(format!("unknown order {o:?}"))),
                });
                continue;
            }
            let vals = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| bad(format!("bad number {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            match key {
                "pre_min" => pre_min = Some(vals),
                "pre_max" => pre_max = Some(vals),
                "pca_mean" => mean = Some(vals),
                "pca_component" => comps.push(vals),
                "pca_explained_variance" => var = Some(vals),
                "min" => min = Some(vals),
                "max" => max = Some(vals),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        let need = |o: Option<Vec<f64>>, k: &str| o.ok_or_else(|| bad(format!("missing {k}")));
        let pre_scale = match (pre_min, pre_max) {
            (Some(min), Some(max)) => Some(MinMax { min, max }),
            (None, None) => None,
            _ => return Err(bad("incomplete pre-scaling".into())),
        };
        Ok(FeaturePipeline {
            order: order.ok_or_else(|| bad("missing order".into()))?,
            pre_scale,
            pca: PcaModel {
                mean: need(mean, "pca_mean")?,
                components: Matrix::from_rows(&comps)?,
                explained_variance: need(var, "pca_explained_variance")?,
            },
            post_scale: MinMax {
                min: need(min, "min")?,
                max: need(max, "max")?,
            },
        })
    }
}

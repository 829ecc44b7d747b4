//! Dynamic grained coding: grayscale conversion, per-region Gaussian-KDE
//! density, Shannon entropy maps, percentile threshold calibration, and
//! grain-map assignment.
//!
//! Granularity indices run 1 (finest factor) to k (coarsest). All entropy
//! math is f64 in natural-log units.

use d2it_tensor::Tensor;

use crate::error::{CoreError, Result};

/// Non-overlapping S x S region tiling of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionGrid {
    pub region_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl RegionGrid {
    pub fn new(height: usize, width: usize, region_size: usize) -> Result<RegionGrid> {
        if region_size == 0 || height % region_size != 0 || width % region_size != 0 {
            return Err(CoreError::Divisibility {
                op: "region_grid",
                h: height,
                w: width,
                factor: region_size,
            });
        }
        Ok(RegionGrid {
            region_size,
            rows: height / region_size,
            cols: width / region_size,
        })
    }

    pub fn region_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Per-region Shannon entropies (nats) on a region grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl EntropyMap {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &[self.rows, self.cols],
            self.values.iter().map(|&v| v as f32).collect(),
        )
        .expect("entropy map shape")
    }
}

/// Desired fractions per granularity, ordered finest (f1) to coarsest (fk).
#[derive(Debug, Clone, PartialEq)]
pub struct GrainRatios {
    ratios: Vec<f64>,
}

impl GrainRatios {
    pub fn new(ratios: Vec<f64>) -> Result<GrainRatios> {
        if ratios.len() < 2 {
            return Err(CoreError::Invalid {
                op: "grain_ratios",
                msg: format!("need at least 2 granularities, got {}", ratios.len()),
            });
        }
        if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(CoreError::Invalid {
                op: "grain_ratios",
                msg: format!("ratios out of [0,1]: {:?}", ratios),
            });
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::Invalid {
                op: "grain_ratios",
                msg: format!("ratios sum to {sum}, expected 1"),
            });
        }
        Ok(GrainRatios { ratios })
    }

    pub fn k(&self) -> usize {
        self.ratios.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.ratios
    }

    pub fn fine(&self) -> f64 {
        self.ratios[0]
    }
}

/// Entropy cut points, nonincreasing from T1 (finest) to Tk. Degenerate
/// cumulative masses become +/- infinity sentinels.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyThresholds {
    pub values: Vec<f64>,
}

impl EntropyThresholds {
    pub fn k(&self) -> usize {
        self.values.len()
    }
}

/// Per-region granularity indices in 1..=k (1 = finest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrainMap {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub indices: Vec<u8>,
}

impl GrainMap {
    pub fn new(rows: usize, cols: usize, k: usize, indices: Vec<u8>) -> Result<GrainMap> {
        if indices.len() != rows * cols {
            return Err(CoreError::Invalid {
                op: "grain_map",
                msg: format!("{} indices for {}x{} grid", indices.len(), rows, cols),
            });
        }
        if indices.iter().any(|&g| g == 0 || g as usize > k) {
            return Err(CoreError::Invalid {
                op: "grain_map",
                msg: format!("granularity outside 1..={k}"),
            });
        }
        Ok(GrainMap {
            rows,
            cols,
            k,
            indices,
        })
    }

    pub fn uniform(rows: usize, cols: usize, k: usize, g: u8) -> Result<GrainMap> {
        Self::new(rows, cols, k, vec![g; rows * cols])
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.indices[r * self.cols + c]
    }

    /// Fraction of regions at the finest granularity.
    pub fn fine_fraction(&self) -> f64 {
        self.indices.iter().filter(|&&g| g == 1).count() as f64 / self.indices.len() as f64
    }

    /// Grain indices as an f32 grid (for GFT1 files).
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &[self.rows, self.cols],
            self.indices.iter().map(|&g| g as f32).collect(),
        )
        .expect("grain map shape")
    }

    pub fn from_tensor(t: &Tensor, k: usize) -> Result<GrainMap> {
        if t.shape().len() != 2 {
            return Err(CoreError::Invalid {
                op: "grain_map",
                msg: format!("expected rank-2 grid, got {:?}", t.shape()),
            });
        }
        let indices = t
            .data()
            .iter()
            .map(|&v| {
                let g = v.round();
                if (v - g).abs() > 1e-3 || g < 1.0 || g > k as f32 {
                    Err(CoreError::Invalid {
                        op: "grain_map",
                        msg: format!("value {v} is not a granularity in 1..={k}"),
                    })
                } else {
                    Ok(g as u8)
                }
            })
            .collect::<Result<Vec<u8>>>()?;
        GrainMap::new(t.shape()[0], t.shape()[1], k, indices)
    }
}

/// Luma conversion: Y = 0.299 R + 0.587 G + 0.114 B on an (H, W, 3) image in
/// [0,1]. Returns (H, W, 1).
pub fn to_grayscale(image: &Tensor) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(CoreError::Channels {
            op: "to_grayscale",
            expected: 3,
            got: s.get(2).copied().unwrap_or(0),
        });
    }
    let (h, w) = (s[0], s[1]);
    let src = image.data();
    let mut out = Vec::with_capacity(h * w);
    for px in 0..h * w {
        out.push(0.299 * src[px * 3] + 0.587 * src[px * 3 + 1] + 0.114 * src[px * 3 + 2]);
    }
    Ok(Tensor::from_vec(&[h, w, 1], out)?)
}

/// S^2 histogram bin centers, uniform on [0,1] inclusive of both endpoints.
pub fn kde_bins(region_size: usize) -> Vec<f64> {
    let p = region_size * region_size;
    (0..p).map(|j| j as f64 / (p - 1) as f64).collect()
}

/// Gaussian-KDE density of the pixel intensities in one region, evaluated at
/// the bin centers exactly as written: (1/S^2) sum_i exp(-((x_i-b_j)/sigma)^2/2),
/// with no normalizing constant or bin-width factor.
pub fn region_pdf(region: &[f64], bins: &[f64], sigma: f64) -> Result<Vec<f64>> {
    if region.len() != bins.len() {
        return Err(CoreError::Invalid {
            op: "region_pdf",
            msg: format!(
                "region has {} pixels but {} bins; bin count must equal S^2",
                region.len(),
                bins.len()
            ),
        });
    }
    if sigma <= 0.0 {
        return Err(CoreError::Invalid {
            op: "region_pdf",
            msg: format!("sigma must be positive, got {sigma}"),
        });
    }
    let inv = 1.0 / region.len() as f64;
    Ok(bins
        .iter()
        .map(|&b| {
            region
                .iter()
                .map(|&x| (-0.5 * ((x - b) / sigma).powi(2)).exp())
                .sum::<f64>()
                * inv
        })
        .collect())
}

/// Shannon entropy of a density vector, natural log, with 0 ln 0 = 0.
pub fn region_entropy(pdf: &[f64]) -> Result<f64> {
    if let Some(&bad) = pdf.iter().find(|&&p| p < 0.0) {
        return Err(CoreError::Invalid {
            op: "region_entropy",
            msg: format!("negative density {bad}"),
        });
    }
    Ok(pdf
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum())
}

/// Entropy of every non-overlapping S x S tile of a single-channel image.
pub fn entropy_map(gray: &Tensor, region_size: usize, sigma: f64) -> Result<EntropyMap> {
    let s = gray.shape();
    if s.len() != 3 || s[2] != 1 {
        return Err(CoreError::Channels {
            op: "entropy_map",
            expected: 1,
            got: s.get(2).copied().unwrap_or(0),
        });
    }
    let grid = RegionGrid::new(s[0], s[1], region_size)?;
    let bins = kde_bins(region_size);
    let src = gray.data();
    let w = s[1];
    let mut values = Vec::with_capacity(grid.region_count());
    let mut pixels = vec![0f64; region_size * region_size];
    for rr in 0..grid.rows {
        for rc in 0..grid.cols {
            for y in 0..region_size {
                for x in 0..region_size {
                    pixels[y * region_size + x] =
                        src[(rr * region_size + y) * w + (rc * region_size + x)] as f64;
                }
            }
            let pdf = region_pdf(&pixels, &bins, sigma)?;
            values.push(region_entropy(&pdf)?);
        }
    }
    Ok(EntropyMap {
        rows: grid.rows,
        cols: grid.cols,
        values,
    })
}

/// Pool region entropies across a corpus and cut thresholds so that the
/// desired fine-side mass sits above each cut.
///
/// For cumulative fine-side mass c_i, T_i is the order statistic at index
/// ceil((1-c_i)*n) - 1 of the ascending pool (clamped); c_i <= 0 and
/// c_i >= 1 produce +inf / -inf sentinels.
pub fn calibrate_thresholds(
    corpus: &[EntropyMap],
    ratios: &GrainRatios,
) -> Result<EntropyThresholds> {
    let mut pool: Vec<f64> = corpus.iter().flat_map(|m| m.values.iter().copied()).collect();
    if pool.is_empty() {
        return Err(CoreError::EmptyCorpus);
    }
    pool.sort_by(|a, b| a.partial_cmp(b).expect("finite entropies"));
    let n = pool.len();
    let mut values = Vec::with_capacity(ratios.k());
    let mut cumulative = 0.0;
    for &r in ratios.as_slice() {
        cumulative += r;
        let t = if cumulative <= 0.0 {
            f64::INFINITY
        } else if cumulative >= 1.0 - 1e-12 {
            f64::NEG_INFINITY
        } else {
            let idx = ((1.0 - cumulative) * n as f64).ceil() as isize - 1;
            pool[idx.clamp(0, n as isize - 1) as usize]
        };
        values.push(t);
    }
    Ok(EntropyThresholds { values })
}

/// Bracket each region's entropy between thresholds: granularity i is the
/// finest index with entropy strictly above T_i; ties fall coarser.
pub fn assign_grain_map(em: &EntropyMap, thresholds: &EntropyThresholds) -> Result<GrainMap> {
    let k = thresholds.k();
    let indices = em
        .values
        .iter()
        .map(|&e| {
            for (i, &t) in thresholds.values.iter().enumerate() {
                if e > t {
                    return Ok((i + 1) as u8);
                }
            }
            // Reachable only when every threshold is +inf, which calibration
            // cannot produce (cumulative mass reaches 1 at i = k).
            Err(CoreError::Internal(format!(
                "entropy {e} not bracketed by thresholds {:?}",
                thresholds.values
            )))
        })
        .collect::<Result<Vec<u8>>>()?;
    GrainMap::new(em.rows, em.cols, k, indices)
}

/// Grayscale -> entropy -> grain map in one call.
pub fn grain_map_for_image(
    image: &Tensor,
    region_size: usize,
    sigma: f64,
    thresholds: &EntropyThresholds,
) -> Result<GrainMap> {
    let gray = to_grayscale(image)?;
    let em = entropy_map(&gray, region_size, sigma)?;
    assign_grain_map(&em, thresholds)
}

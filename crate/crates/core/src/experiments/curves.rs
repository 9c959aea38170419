//! Learned trait-to-parameter relationships on a grid.

use serde::{Deserialize, Serialize};

use crate::net::NetworkWeights;

/// A trained network plus the affine map from the plotting axis to its
/// inputs: `input[j] = offset[j] + scale[j] * x[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveModel {
    pub weights: NetworkWeights,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl CurveModel {
    pub fn identity(weights: NetworkWeights) -> Self {
        let n = weights.n_inputs;
        Self { weights, offset: vec![0.0; n], scale: vec![1.0; n] }
    }

    pub fn evaluate(&self, x: &[f64]) -> CurvePoint {
        let input: Vec<f64> = x.iter().zip(self.offset.iter().zip(&self.scale)).map(|(v, (o, s))| o + s * v).collect();
        let p = self.weights.forward(&input);
        CurvePoint { pi: p.pi, d: p.d, peak: p.peak_likelihood() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub pi: f64,
    pub d: f64,
    pub peak: f64,
}

fn mean_point(points: &[CurvePoint]) -> CurvePoint {
    let n = points.len() as f64;
    CurvePoint {
        pi: points.iter().map(|p| p.pi).sum::<f64>() / n,
        d: points.iter().map(|p| p.d).sum::<f64>() / n,
        peak: points.iter().map(|p| p.peak).sum::<f64>() / n,
    }
}

/// One trait varied over the grid, the others held at `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub trait_name: String,
    pub grid: Vec<f64>,
    pub base: Vec<f64>,
    /// `per_trial[trial][grid_point]`
    pub per_trial: Vec<Vec<CurvePoint>>,
    pub mean: Vec<CurvePoint>,
}

/// Two traits varied over a square grid; any remaining traits sit at
/// `fixed_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub x_trait: String,
    pub y_trait: String,
    /// "min", "max", or "none" when there is no third trait.
    pub fixed_level: String,
    pub fixed_value: Option<f64>,
    pub grid: Vec<f64>,
    /// `mean[i][j]` at `(grid[i], grid[j])`.
    pub mean: Vec<Vec<CurvePoint>>,
    pub per_trial: Vec<Vec<Vec<CurvePoint>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub curves: Vec<Curve>,
    pub surfaces: Vec<Surface>,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Curves for every trait and surfaces for every trait pair. With three or
/// more traits each pair gets one surface with the rest at `range.0` and one
/// at `range.1`.
pub fn extract_curves(
    models: &[CurveModel],
    trait_names: &[String],
    base: &[f64],
    grid: &[f64],
    surface_grid: &[f64],
    range: (f64, f64),
) -> CurveSet {
    let k = trait_names.len();
    let mut curves = Vec::with_capacity(k);
    for (j, name) in trait_names.iter().enumerate() {
        let per_trial: Vec<Vec<CurvePoint>> = models
            .iter()
            .map(|m| {
                grid.iter()
                    .map(|&g| {
                        let mut x = base.to_vec();
                        x[j] = g;
                        m.evaluate(&x)
                    })
                    .collect()
            })
            .collect();
        let mean = (0..grid.len())
            .map(|i| mean_point(&per_trial.iter().map(|c| c[i]).collect::<Vec<_>>()))
            .collect();
        curves.push(Curve { trait_name: name.clone(), grid: grid.to_vec(), base: base.to_vec(), per_trial, mean });
    }

    let mut surfaces = Vec::new();
    let levels: Vec<(&str, Option<f64>)> = if surface_grid.is_empty() {
        vec![]
    } else if k >= 3 {
        vec![("min", Some(range.0)), ("max", Some(range.1))]
    } else {
        vec![("none", None)]
    };
    for a in 0..k {
        for b in a + 1..k {
            for &(level, value) in &levels {
                let point = |m: &CurveModel, u: f64, v: f64| {
                    let mut x = vec![value.unwrap_or(0.0); k];
                    x[a] = u;
                    x[b] = v;
                    m.evaluate(&x)
                };
                let per_trial: Vec<Vec<Vec<CurvePoint>>> = models
                    .iter()
                    .map(|m| surface_grid.iter().map(|&u| surface_grid.iter().map(|&v| point(m, u, v)).collect()).collect())
                    .collect();
                let mean = (0..surface_grid.len())
                    .map(|i| {
                        (0..surface_grid.len())
                            .map(|j| mean_point(&per_trial.iter().map(|s| s[i][j]).collect::<Vec<_>>()))
                            .collect()
                    })
                    .collect();
                surfaces.push(Surface {
                    x_trait: trait_names[a].clone(),
                    y_trait: trait_names[b].clone(),
                    fixed_level: level.to_string(),
                    fixed_value: value,
                    grid: surface_grid.to_vec(),
                    mean,
                    per_trial,
                });
            }
        }
    }
    CurveSet { curves, surfaces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::OutputHead;
    use approx::assert_abs_diff_eq;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn single_trait_has_no_surfaces() {
        let m = CurveModel::identity(NetworkWeights::init(1, OutputHead::Full, 4));
        let set = extract_curves(&[m], &names(1), &[0.5], &linspace(0.0, 1.0, 50), &linspace(0.0, 1.0, 5), (0.0, 1.0));
        assert_eq!(set.curves.len(), 1);
        assert_eq!(set.curves[0].mean.len(), 50);
        assert!(set.surfaces.is_empty());
    }

    #[test]
    fn zero_network_is_flat() {
        let m = CurveModel::identity(NetworkWeights::zeros(2, OutputHead::Full));
        let set = extract_curves(&[m], &names(2), &[0.5, 0.5], &linspace(0.0, 1.0, 7), &linspace(0.0, 1.0, 3), (0.0, 1.0));
        let ln2 = std::f64::consts::LN_2;
        for c in &set.curves {
            for p in &c.mean {
                assert_abs_diff_eq!(p.pi, ln2 + 1e-6, epsilon = 1e-12);
                assert_abs_diff_eq!(p.d, ln2, epsilon = 1e-12);
            }
        }
        assert_eq!(set.surfaces.len(), 1);
        assert_eq!(set.surfaces[0].fixed_level, "none");
    }

    #[test]
    fn mean_is_pointwise_average() {
        let models: Vec<CurveModel> =
            (0..4).map(|s| CurveModel::identity(NetworkWeights::init(3, OutputHead::Full, s))).collect();
        let set = extract_curves(&models, &names(3), &[0.2, 0.4, 0.6], &linspace(0.0, 1.0, 11), &linspace(0.0, 1.0, 4), (0.0, 1.0));
        assert_eq!(set.surfaces.len(), 6);
        for c in &set.curves {
            for (i, m) in c.mean.iter().enumerate() {
                let avg = c.per_trial.iter().map(|t| t[i].peak).sum::<f64>() / 4.0;
                assert_abs_diff_eq!(m.peak, avg, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn affine_input_map() {
        let w = NetworkWeights::init(1, OutputHead::Full, 8);
        let shifted = CurveModel { weights: w.clone(), offset: vec![0.25], scale: vec![0.5] };
        let direct = CurveModel::identity(w);
        assert_eq!(shifted.evaluate(&[0.5]), direct.evaluate(&[0.5]));
    }
}

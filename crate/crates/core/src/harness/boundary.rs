use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::mlp::MlpModel;
use crate::network::PowerNetwork;
use crate::powerflow::{label_batch, PfConfig, SolvabilityLabel};
use crate::sampling::{Normalizer, SamplingSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub p_solvable: f64,
    pub predicted: SolvabilityLabel,
}

/// Grid of classifier predictions over a 2-D feature box.
#[derive(Debug, Clone)]
pub struct BoundaryGrid {
    pub bounds: [(f64, f64); 2],
    pub resolution: usize,
    /// Raster order: `y` is the outer loop, `x` the inner one.
    pub cells: Vec<GridCell>,
}

fn axis(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if n == 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Evaluate `model` on a `resolution x resolution` node grid spanning
/// `bounds` (physical units, both endpoints included).
pub fn export_boundary_grid(
    model: &MlpModel,
    normalizer: &Normalizer,
    bounds: [(f64, f64); 2],
    resolution: usize,
) -> Result<BoundaryGrid, HarnessError> {
    if model.input_dim() != 2 || normalizer.dim() != 2 {
        return Err(HarnessError::Config(format!(
            "boundary export needs a 2-feature model, got {} inputs",
            model.input_dim()
        )));
    }
    if resolution == 0 {
        return Err(HarnessError::Config("resolution must be at least 1".into()));
    }
    let n = resolution;
    let raw = Array2::from_shape_fn((n * n, 2), |(r, c)| {
        let (iy, ix) = (r / n, r % n);
        if c == 0 {
            axis(bounds[0].0, bounds[0].1, n, ix)
        } else {
            axis(bounds[1].0, bounds[1].1, n, iy)
        }
    });
    let post = model.posteriors(normalizer.normalize(&raw).view())?;
    let cells = post
        .iter()
        .enumerate()
        .map(|(r, p)| GridCell {
            x: raw[[r, 0]],
            y: raw[[r, 1]],
            p_solvable: p.solvable(),
            predicted: p.predicted(),
        })
        .collect();
    Ok(BoundaryGrid {
        bounds,
        resolution,
        cells,
    })
}

impl BoundaryGrid {
    /// Cell whose node is nearest to `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> &GridCell {
        let n = self.resolution;
        let idx = |v: f64, (lo, hi): (f64, f64)| -> usize {
            if n == 1 || hi == lo {
                return 0;
            }
            let t = ((v - lo) / (hi - lo) * (n - 1) as f64).round();
            t.clamp(0.0, (n - 1) as f64) as usize
        };
        &self.cells[idx(y, self.bounds[1]) * n + idx(x, self.bounds[0])]
    }

    /// CSV with columns `names[0], names[1], p_solvable, class`
    /// (class 1 = solvable, 0 = non-solvable).
    pub fn write_csv<W: Write>(&self, w: W, names: [&str; 2]) -> Result<(), HarnessError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([names[0], names[1], "p_solvable", "class"])?;
        for c in &self.cells {
            out.write_record([
                c.x.to_string(),
                c.y.to_string(),
                c.p_solvable.to_string(),
                c.predicted.class().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fraction of `n` uniformly drawn points in the grid box whose nearest grid
/// cell prediction matches the power flow oracle.
pub fn audit_boundary(
    grid: &BoundaryGrid,
    net: &PowerNetwork,
    spec: &SamplingSpec,
    pf: &PfConfig,
    n: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    if spec.dim() != 2 {
        return Err(HarnessError::Config("boundary audit needs a 2-D sampling spec".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [(x0, x1), (y0, y1)] = grid.bounds;
    let pts = Array2::from_shape_fn((n, 2), |(_, c)| {
        if c == 0 {
            rng.random_range(x0..=x1)
        } else {
            rng.random_range(y0..=y1)
        }
    });
    let truth = label_batch(net, spec, pts.view(), pf)?;
    let agree = truth
        .iter()
        .enumerate()
        .filter(|&(i, &l)| grid.nearest(pts[[i, 0]], pts[[i, 1]]).predicted == l)
        .count();
    Ok(agree as f64 / n.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Activation;
    use ndarray::array;

    fn model() -> (MlpModel, Normalizer) {
        let mut m = MlpModel::zeros(&[2, 2], Activation::Relu).unwrap();
        m.layers_mut()[0].weights = array![[-3.0, 3.0], [0.0, 0.0]];
        m.layers_mut()[0].bias = array![1.5, -1.5];
        let nz = Normalizer::fit(&array![[-3000.0, -3000.0], [3000.0, 3000.0]]).unwrap();
        (m, nz)
    }

    #[test]
    fn grid_shape_and_order() {
        let (m, nz) = model();
        let g = export_boundary_grid(&m, &nz, [(-3000.0, 3000.0); 2], 100).unwrap();
        assert_eq!(g.cells.len(), 10_000);
        assert_eq!((g.cells[0].x, g.cells[0].y), (-3000.0, -3000.0));
        assert_eq!((g.cells[1].y, g.cells[100].x), (-3000.0, -3000.0));
        assert_eq!((g.cells[9999].x, g.cells[9999].y), (3000.0, 3000.0));
        assert!(g.cells.iter().all(|c| c.p_solvable > 0.0 && c.p_solvable < 1.0));
        // Solvable exactly when the first normalized feature exceeds 0.5.
        assert_eq!(g.nearest(2000.0, 0.0).predicted, SolvabilityLabel::Solvable);
        assert_eq!(g.nearest(-2000.0, 0.0).predicted, SolvabilityLabel::NonSolvable);

        let mut buf = Vec::new();
        g.write_csv(&mut buf, ["loadP:3", "loadP:4"]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 10_001);
        assert!(text.starts_with("loadP:3,loadP:4,p_solvable,class\n"));
    }

    #[test]
    fn rejects_wrong_width() {
        let m = MlpModel::zeros(&[3, 2], Activation::Relu).unwrap();
        let nz = Normalizer::fit(&array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]).unwrap();
        assert!(export_boundary_grid(&m, &nz, [(0.0, 1.0); 2], 4).is_err());
    }
}

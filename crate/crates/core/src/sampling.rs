//! Injection-space sampling: which quantities are varied, how they are drawn,
//! the resulting feature matrix, min-max normalization and the train/test
//! split.
//!
//! Feature columns always follow block order: every generator P, then every
//! generator Q, then every load P, then every load Q. Values are physical
//! (MW / MVAr); conversion to per-unit happens when a sample is applied to a
//! network.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{BusId, PowerNetwork};

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("no load at bus {0}")]
    MissingLoad(BusId),
    #[error("network has no slack bus")]
    NoSlack,
    #[error("invalid sampling spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv line {line}: {msg}")]
    CsvContent { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
}

impl Distribution {
    fn check(&self) -> Result<(), String> {
        match *self {
            Distribution::Uniform { lo, hi } if !(lo <= hi) => {
                Err(format!("uniform bounds out of order ({lo}, {hi})"))
            }
            Distribution::Normal { std, .. } if !(std >= 0.0) => {
                Err(format!("negative standard deviation {std}"))
            }
            _ => Ok(()),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Distribution::Normal { mean, std } => {
                // `Normal::new` only fails for non-finite std, ruled out by `check`.
                rng.sample(Normal::new(mean, std).expect("validated std"))
            }
        }
    }
}

/// The injected quantity a feature column drives. Ordering of the variants is
/// the column block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    GenP,
    GenQ,
    LoadP,
    LoadQ,
}

impl Quantity {
    pub fn tag(self) -> &'static str {
        match self {
            Quantity::GenP => "genP",
            Quantity::GenQ => "genQ",
            Quantity::LoadP => "loadP",
            Quantity::LoadQ => "loadQ",
        }
    }

    pub fn is_generator(self) -> bool {
        matches!(self, Quantity::GenP | Quantity::GenQ)
    }
}

/// One sampled feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSlot {
    pub quantity: Quantity,
    /// Index into `PowerNetwork::generators` or `PowerNetwork::loads`.
    pub element: usize,
    pub bus_id: BusId,
    pub dist: Distribution,
}

impl FeatureSlot {
    pub fn name(&self) -> String {
        format!("{}:{}", self.quantity.tag(), self.bus_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub slack_bus_id: BusId,
    pub slots: Vec<FeatureSlot>,
}

impl SamplingSpec {
    /// Build a spec, putting slots into block order (stable within a block).
    pub fn new(slack_bus_id: BusId, mut slots: Vec<FeatureSlot>) -> Result<Self, SamplingError> {
        slots.sort_by_key(|s| s.quantity);
        let spec = SamplingSpec {
            slack_bus_id,
            slots,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), SamplingError> {
        for w in self.slots.windows(2) {
            if w[0].quantity > w[1].quantity {
                return Err(SamplingError::InvalidSpec(
                    "slots are not in block order".into(),
                ));
            }
        }
        for s in &self.slots {
            s.dist
                .check()
                .map_err(|m| SamplingError::InvalidSpec(format!("{}: {}", s.name(), m)))?;
            if s.quantity.is_generator() && s.bus_id == self.slack_bus_id {
                return Err(SamplingError::InvalidSpec(format!(
                    "{} samples the slack generator",
                    s.name()
                )));
            }
        }
        Ok(())
    }

    /// Check the spec against the network it will be applied to.
    pub fn check_network(&self, net: &PowerNetwork) -> Result<(), SamplingError> {
        self.check()?;
        for s in &self.slots {
            let bus = if s.quantity.is_generator() {
                net.generators.get(s.element).map(|g| g.bus_id)
            } else {
                net.loads.get(s.element).map(|l| l.bus_id)
            };
            if bus != Some(s.bus_id) {
                return Err(SamplingError::InvalidSpec(format!(
                    "{} does not match element {} of the network",
                    s.name(),
                    s.element
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.slots.len()
    }

    /// Column names, e.g. `genP:30`, `loadQ:4`.
    pub fn header(&self) -> Vec<String> {
        self.slots.iter().map(FeatureSlot::name).collect()
    }
}

fn load_index(net: &PowerNetwork, bus: BusId) -> Result<usize, SamplingError> {
    net.loads
        .iter()
        .position(|l| l.bus_id == bus)
        .ok_or(SamplingError::MissingLoad(bus))
}

/// Two-feature spec: active load at `bus_a` and `bus_b`, each uniform on
/// `[lo, hi]` MW; reactive loads stay at base.
pub fn build_spec_load_pair(
    net: &PowerNetwork,
    bus_a: BusId,
    bus_b: BusId,
    lo: f64,
    hi: f64,
) -> Result<SamplingSpec, SamplingError> {
    let slack = net.slack_bus().ok_or(SamplingError::NoSlack)?.id;
    let slots = [bus_a, bus_b]
        .into_iter()
        .map(|bus| {
            Ok(FeatureSlot {
                quantity: Quantity::LoadP,
                element: load_index(net, bus)?,
                bus_id: bus,
                dist: Distribution::Uniform { lo, hi },
            })
        })
        .collect::<Result<Vec<_>, SamplingError>>()?;
    SamplingSpec::new(slack, slots)
}

/// Load P at buses 3 and 4, uniform on [-3000, 3000] MW.
pub fn build_spec_2d(net: &PowerNetwork) -> Result<SamplingSpec, SamplingError> {
    build_spec_load_pair(net, 3, 4, -3000.0, 3000.0)
}

/// Full injection space: every in-service non-slack generator's P and Q
/// uniform between its limits, every load's P and Q normal around its base
/// value with standard deviation `load_std_frac * |base|`.
pub fn build_spec_full(
    net: &PowerNetwork,
    load_std_frac: f64,
) -> Result<SamplingSpec, SamplingError> {
    if !(load_std_frac >= 0.0) {
        return Err(SamplingError::InvalidArgument(format!(
            "load_std_frac must be non-negative, got {load_std_frac}"
        )));
    }
    let slack = net.slack_bus().ok_or(SamplingError::NoSlack)?.id;
    let base = net.base_mva;
    let mut slots = Vec::new();

    let gens: Vec<_> = net
        .generators
        .iter()
        .enumerate()
        .filter(|(_, g)| g.in_service && g.bus_id != slack)
        .collect();
    for &(k, g) in &gens {
        slots.push(FeatureSlot {
            quantity: Quantity::GenP,
            element: k,
            bus_id: g.bus_id,
            dist: Distribution::Uniform {
                lo: g.p_min * base,
                hi: g.p_max * base,
            },
        });
    }
    for &(k, g) in &gens {
        slots.push(FeatureSlot {
            quantity: Quantity::GenQ,
            element: k,
            bus_id: g.bus_id,
            dist: Distribution::Uniform {
                lo: g.q_min * base,
                hi: g.q_max * base,
            },
        });
    }
    for (quantity, pick) in [
        (Quantity::LoadP, (|l: &crate::network::Load| l.p) as fn(&_) -> f64),
        (Quantity::LoadQ, |l: &crate::network::Load| l.q),
    ] {
        for (k, l) in net.loads.iter().enumerate() {
            let mean = pick(l) * base;
            slots.push(FeatureSlot {
                quantity,
                element: k,
                bus_id: l.bus_id,
                dist: Distribution::Normal {
                    mean,
                    std: mean.abs() * load_std_frac,
                },
            });
        }
    }
    SamplingSpec::new(slack, slots)
}

/// Sampled injections, one row per sample, columns in spec slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub spec: SamplingSpec,
    pub seed: u64,
    pub rows: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            spec: self.spec.clone(),
            seed: self.seed,
            rows: self.rows.select(Axis(0), indices),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SamplingError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.spec.header())?;
        for row in self.rows.rows() {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Read rows written by [`FeatureMatrix::write_csv`]; the header must
    /// name exactly the slots of `spec`.
    pub fn read_csv<R: Read>(spec: &SamplingSpec, r: R) -> Result<FeatureMatrix, SamplingError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != spec.header() {
            return Err(SamplingError::CsvContent {
                line: 1,
                msg: format!(
                    "header {:?} does not match spec columns {:?}",
                    header,
                    spec.header()
                ),
            });
        }
        let d = spec.dim();
        let mut data = Vec::new();
        let mut n = 0;
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            if rec.len() != d {
                return Err(SamplingError::CsvContent {
                    line,
                    msg: format!("expected {} fields, found {}", d, rec.len()),
                });
            }
            for field in rec.iter() {
                data.push(field.trim().parse::<f64>().map_err(|_| SamplingError::CsvContent {
                    line,
                    msg: format!("invalid number '{}'", field),
                })?);
            }
            n += 1;
        }
        Ok(FeatureMatrix {
            spec: spec.clone(),
            seed: 0,
            rows: Array2::from_shape_vec((n, d), data).expect("row lengths checked"),
        })
    }
}

/// Draw `n` independent samples; a pure function of `(spec, n, seed)`.
pub fn sample_pool(spec: &SamplingSpec, n: usize, seed: u64) -> Result<FeatureMatrix, SamplingError> {
    if n == 0 {
        return Err(SamplingError::InvalidArgument("pool size must be at least 1".into()));
    }
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let mut rows = Array2::zeros((n, d));
    for mut row in rows.rows_mut() {
        for (v, slot) in row.iter_mut().zip(&spec.slots) {
            *v = slot.dist.draw(&mut rng);
        }
    }
    Ok(FeatureMatrix {
        spec: spec.clone(),
        seed,
        rows,
    })
}

/// Per-feature min-max scaling onto `[0, 1]`. Constant features map to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &Array2<f64>) -> Result<Normalizer, SamplingError> {
        if rows.nrows() == 0 {
            return Err(SamplingError::InvalidArgument(
                "cannot fit a normalizer on an empty pool".into(),
            ));
        }
        let min = rows
            .columns()
            .into_iter()
            .map(|c| c.fold(f64::INFINITY, |a, &b| a.min(b)))
            .collect();
        let max = rows
            .columns()
            .into_iter()
            .map(|c| c.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .collect();
        Ok(Normalizer { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    #[inline]
    fn scale(&self, f: usize, v: f64) -> f64 {
        let span = self.max[f] - self.min[f];
        if span > 0.0 {
            (v - self.min[f]) / span
        } else {
            0.5
        }
    }

    pub fn normalize_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(f, &v)| self.scale(f, v)).collect()
    }

    pub fn normalize(&self, rows: &Array2<f64>) -> Array2<f64> {
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (f, v) in row.iter_mut().enumerate() {
                *v = self.scale(f, *v);
            }
        }
        out
    }

    /// Inverse of [`Normalizer::normalize`] on non-constant features;
    /// constant features map back to their single value.
    pub fn denormalize(&self, rows: &Array2<f64>) -> Array2<f64> {
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for (f, v) in row.iter_mut().enumerate() {
                *v = self.min[f] + *v * (self.max[f] - self.min[f]);
            }
        }
        out
    }
}

/// Shuffle rows under `seed` and cut into `ceil(n * (1 - test_frac))` training
/// rows and the remaining test rows.
pub fn split_train_test(
    pool: &FeatureMatrix,
    test_frac: f64,
    seed: u64,
) -> Result<(FeatureMatrix, FeatureMatrix), SamplingError> {
    let (train, test) = split_indices(pool.n_rows(), test_frac, seed)?;
    Ok((pool.select(&train), pool.select(&test)))
}

/// Index form of [`split_train_test`].
pub fn split_indices(
    n: usize,
    test_frac: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), SamplingError> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(SamplingError::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_frac}"
        )));
    }
    // The epsilon keeps e.g. 1000 * 0.8 from rounding up to 801.
    let n_train = ((n as f64) * (1.0 - test_frac) - 1e-9).ceil().max(0.0) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train.min(n));
    Ok((idx, test))
}

//! Newton-Raphson AC power flow in polar coordinates, used as the labeling
//! oracle: a sample is solvable iff the solver converges.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{build_ybus, AdmittanceMatrix, BusId, BusKind, PowerNetwork, Violation};
use crate::sampling::{Quantity, SamplingSpec};

/// Mismatch above which an iterate is treated as diverged.
const DIVERGENCE_MISMATCH: f64 = 1e6;
/// Cap on PV-to-PQ switching passes.
const MAX_Q_LIMIT_PASSES: usize = 10;
/// Slack on reactive limits before a PV bus is switched.
const Q_LIMIT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfConfig {
    /// Largest allowed per-unit mismatch at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub flat_start: bool,
    pub enforce_q_limits: bool,
}

impl Default for PfConfig {
    fn default() -> Self {
        PfConfig {
            tol: 1e-8,
            max_iter: 20,
            flat_start: true,
            enforce_q_limits: true,
        }
    }
}

impl PfConfig {
    pub fn check(&self) -> Result<(), PfError> {
        if !(self.tol > 0.0) {
            return Err(PfError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(PfError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    /// Voltage magnitudes (p.u.) in bus order.
    pub v_mag: Vec<f64>,
    /// Voltage angles (rad) in bus order.
    pub v_ang: Vec<f64>,
    /// Newton iterations summed over all reactive-limit passes.
    pub iterations: usize,
    pub max_mismatch: f64,
    pub converged: bool,
    /// PV buses that ended up held at a reactive limit.
    pub q_limited: Vec<BusId>,
}

/// Solvability class. `NonSolvable` is class 1, `Solvable` class 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolvabilityLabel {
    NonSolvable,
    Solvable,
}

impl SolvabilityLabel {
    pub fn one_hot(self) -> [f64; 2] {
        match self {
            SolvabilityLabel::NonSolvable => [1.0, 0.0],
            SolvabilityLabel::Solvable => [0.0, 1.0],
        }
    }

    /// Zero-based class index (0 = non-solvable, 1 = solvable).
    pub fn class(self) -> usize {
        match self {
            SolvabilityLabel::NonSolvable => 0,
            SolvabilityLabel::Solvable => 1,
        }
    }

    pub fn from_class(class: usize) -> Option<Self> {
        match class {
            0 => Some(SolvabilityLabel::NonSolvable),
            1 => Some(SolvabilityLabel::Solvable),
            _ => None,
        }
    }

    pub fn from_one_hot(y: [f64; 2]) -> Option<Self> {
        match y {
            [a, b] if a == 1.0 && b == 0.0 => Some(SolvabilityLabel::NonSolvable),
            [a, b] if a == 0.0 && b == 1.0 => Some(SolvabilityLabel::Solvable),
            _ => None,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            SolvabilityLabel::NonSolvable => SolvabilityLabel::Solvable,
            SolvabilityLabel::Solvable => SolvabilityLabel::NonSolvable,
        }
    }
}

#[derive(Debug, Error)]
pub enum PfError {
    #[error("sample has {got} values, sampling spec expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sampling spec does not fit the network: {0}")]
    Spec(String),
    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidNetwork(Vec<Violation>),
    #[error("invalid power flow config: {0}")]
    Config(String),
    #[error("row {index}: {source}")]
    Row {
        index: usize,
        #[source]
        source: Box<PfError>,
    },
}

/// Copy `net` with the sampled injections (MW / MVAr in `values`) written in.
/// A sampled generator Q also pins that generator's reactive limits to the
/// sample. The slack generator is never touched.
pub fn apply_injections(
    net: &PowerNetwork,
    spec: &SamplingSpec,
    values: &[f64],
) -> Result<PowerNetwork, PfError> {
    if values.len() != spec.dim() {
        return Err(PfError::DimensionMismatch {
            expected: spec.dim(),
            got: values.len(),
        });
    }
    let slack = net.slack_bus().map(|b| b.id);
    let mut out = net.clone();
    let base = net.base_mva;
    for (slot, &v) in spec.slots.iter().zip(values) {
        let pu = v / base;
        if slot.quantity.is_generator() {
            let g = out
                .generators
                .get_mut(slot.element)
                .filter(|g| g.bus_id == slot.bus_id)
                .ok_or_else(|| PfError::Spec(format!("no generator {} at bus {}", slot.element, slot.bus_id)))?;
            if Some(g.bus_id) == slack {
                return Err(PfError::Spec(format!("{} targets the slack generator", slot.name())));
            }
            match slot.quantity {
                Quantity::GenP => g.p = pu,
                _ => {
                    g.q = pu;
                    g.q_min = pu;
                    g.q_max = pu;
                }
            }
        } else {
            let l = out
                .loads
                .get_mut(slot.element)
                .filter(|l| l.bus_id == slot.bus_id)
                .ok_or_else(|| PfError::Spec(format!("no load {} at bus {}", slot.element, slot.bus_id)))?;
            match slot.quantity {
                Quantity::LoadP => l.p = pu,
                _ => l.q = pu,
            }
        }
    }
    Ok(out)
}

/// Per-bus quantities the Newton iteration works with.
struct BusData {
    kind: Vec<BusKind>,
    /// Specified net injection (generation minus demand).
    s_spec: Vec<Complex64>,
    /// Reactive demand, needed to recover generator Q from a solution.
    q_load: Vec<f64>,
    q_min: Vec<f64>,
    q_max: Vec<f64>,
}

impl BusData {
    fn new(net: &PowerNetwork, enforce_q_limits: bool) -> Self {
        let n = net.n_buses();
        let index = net.bus_index();
        let mut gen_s = vec![Complex64::new(0.0, 0.0); n];
        let mut q_min = vec![0.0; n];
        let mut q_max = vec![0.0; n];
        let mut n_gen = vec![0usize; n];
        let mut all_pinned = vec![true; n];
        for g in net.generators.iter().filter(|g| g.in_service) {
            let i = index[&g.bus_id];
            gen_s[i] += Complex64::new(g.p, g.q);
            q_min[i] += g.q_min;
            q_max[i] += g.q_max;
            n_gen[i] += 1;
            all_pinned[i] &= g.q_min == g.q_max;
        }
        let mut load_s = vec![Complex64::new(0.0, 0.0); n];
        for l in &net.loads {
            load_s[index[&l.bus_id]] += Complex64::new(l.p, l.q);
        }

        let mut kind = Vec::with_capacity(n);
        let mut s_spec = Vec::with_capacity(n);
        for (i, bus) in net.buses.iter().enumerate() {
            let mut k = bus.kind;
            let mut s = gen_s[i] - load_s[i];
            if k == BusKind::PV && n_gen[i] == 0 {
                k = BusKind::PQ;
            }
            // Generators with coinciding reactive limits run at fixed Q.
            if k == BusKind::PV && enforce_q_limits && all_pinned[i] {
                k = BusKind::PQ;
                s.im = q_min[i] - load_s[i].im;
            }
            kind.push(k);
            s_spec.push(s);
        }
        BusData {
            kind,
            s_spec,
            q_load: load_s.iter().map(|s| s.im).collect(),
            q_min,
            q_max,
        }
    }
}

/// Power injections `V * conj(Y V)` and the currents `Y V`.
fn injections(y: &AdmittanceMatrix, v: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = v.len();
    let mut s = Vec::with_capacity(n);
    let mut cur = Vec::with_capacity(n);
    for i in 0..n {
        let ii: Complex64 = y.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        cur.push(ii);
        s.push(v[i] * ii.conj());
    }
    (s, cur)
}

struct Newton<'a> {
    y: &'a AdmittanceMatrix,
    pvpq: Vec<usize>,
    pq: Vec<usize>,
}

enum Outcome {
    Converged,
    Failed,
}

impl<'a> Newton<'a> {
    fn new(y: &'a AdmittanceMatrix, kind: &[BusKind]) -> Self {
        let pvpq = (0..kind.len()).filter(|&i| kind[i] != BusKind::Slack).collect();
        let pq = (0..kind.len()).filter(|&i| kind[i] == BusKind::PQ).collect();
        Newton { y, pvpq, pq }
    }

    fn mismatch(&self, s_calc: &[Complex64], s_spec: &[Complex64]) -> DVector<f64> {
        let np = self.pvpq.len();
        let mut f = DVector::zeros(np + self.pq.len());
        for (r, &i) in self.pvpq.iter().enumerate() {
            f[r] = s_calc[i].re - s_spec[i].re;
        }
        for (r, &i) in self.pq.iter().enumerate() {
            f[np + r] = s_calc[i].im - s_spec[i].im;
        }
        f
    }

    /// Polar Jacobian of the mismatch vector with respect to
    /// `[angles(pvpq); magnitudes(pq)]`.
    fn jacobian(&self, v: &[Complex64], cur: &[Complex64]) -> DMatrix<f64> {
        let np = self.pvpq.len();
        let dim = np + self.pq.len();
        let mut pos_ang = vec![usize::MAX; v.len()];
        let mut pos_mag = vec![usize::MAX; v.len()];
        for (c, &k) in self.pvpq.iter().enumerate() {
            pos_ang[k] = c;
        }
        for (c, &k) in self.pq.iter().enumerate() {
            pos_mag[k] = np + c;
        }
        let mut row_of = vec![(usize::MAX, usize::MAX); v.len()];
        for (r, &i) in self.pvpq.iter().enumerate() {
            row_of[i].0 = r;
        }
        for (r, &i) in self.pq.iter().enumerate() {
            row_of[i].1 = np + r;
        }

        let mut jac = DMatrix::zeros(dim, dim);
        let j = Complex64::new(0.0, 1.0);
        for (i, &(rp, rq)) in row_of.iter().enumerate() {
            if rp == usize::MAX && rq == usize::MAX {
                continue;
            }
            let yrow = self.y.row(i);
            for (k, &yik) in yrow.iter().enumerate() {
                let diag = i == k;
                if yik == Complex64::new(0.0, 0.0) && !diag {
                    continue;
                }
                let vn_k = v[k] / v[k].norm();
                let (ds_dang, ds_dmag) = if diag {
                    (
                        j * v[i] * (cur[i] - yik * v[i]).conj(),
                        v[i] * (yik * vn_k).conj() + cur[i].conj() * vn_k,
                    )
                } else {
                    (-j * v[i] * (yik * v[k]).conj(), v[i] * (yik * vn_k).conj())
                };
                let ca = pos_ang[k];
                let cm = pos_mag[k];
                if rp != usize::MAX {
                    if ca != usize::MAX {
                        jac[(rp, ca)] = ds_dang.re;
                    }
                    if cm != usize::MAX {
                        jac[(rp, cm)] = ds_dmag.re;
                    }
                }
                if rq != usize::MAX {
                    if ca != usize::MAX {
                        jac[(rq, ca)] = ds_dang.im;
                    }
                    if cm != usize::MAX {
                        jac[(rq, cm)] = ds_dmag.im;
                    }
                }
            }
        }
        jac
    }

    /// Iterate from `v` in place. Returns the outcome, iterations taken and
    /// the final max-abs mismatch.
    fn solve(
        &self,
        v: &mut [Complex64],
        s_spec: &[Complex64],
        cfg: &PfConfig,
    ) -> (Outcome, usize, f64) {
        let (s, mut cur) = injections(self.y, v);
        let mut f = self.mismatch(&s, s_spec);
        let mut norm = f.amax();
        if f.is_empty() || norm <= cfg.tol {
            return (Outcome::Converged, 0, norm);
        }
        let np = self.pvpq.len();
        for it in 1..=cfg.max_iter {
            let jac = self.jacobian(v, &cur);
            let Some(dx) = jac.lu().solve(&(-&f)) else {
                return (Outcome::Failed, it - 1, norm);
            };
            if dx.iter().any(|x| !x.is_finite()) {
                return (Outcome::Failed, it - 1, norm);
            }
            for (r, &i) in self.pvpq.iter().enumerate() {
                v[i] *= Complex64::from_polar(1.0, dx[r]);
            }
            for (r, &i) in self.pq.iter().enumerate() {
                let mag = v[i].norm();
                v[i] *= (mag + dx[np + r]) / mag;
            }
            let (s, c) = injections(self.y, v);
            cur = c;
            f = self.mismatch(&s, s_spec);
            norm = f.amax();
            if !norm.is_finite() || norm > DIVERGENCE_MISMATCH || v.iter().any(|x| x.norm() == 0.0) {
                return (Outcome::Failed, it, norm);
            }
            if norm <= cfg.tol {
                return (Outcome::Converged, it, norm);
            }
        }
        (Outcome::Failed, cfg.max_iter, norm)
    }
}

/// Solve the AC power flow by Newton-Raphson.
///
/// Non-convergence (iteration cap, singular Jacobian, divergence) is reported
/// through `converged = false`, not as an error.
pub fn solve_newton(net: &PowerNetwork, cfg: &PfConfig) -> Result<PfSolution, PfError> {
    cfg.check()?;
    let violations = net.validate();
    if !violations.is_empty() {
        return Err(PfError::InvalidNetwork(violations));
    }
    Ok(solve_unchecked(net, &build_ybus(net), cfg))
}

fn solve_unchecked(net: &PowerNetwork, y: &AdmittanceMatrix, cfg: &PfConfig) -> PfSolution {
    let mut data = BusData::new(net, cfg.enforce_q_limits);
    let mut v: Vec<Complex64> = net
        .buses
        .iter()
        .zip(&data.kind)
        .map(|(b, k)| {
            let (mag, ang) = if cfg.flat_start { (1.0, 0.0) } else { (b.vm, b.va) };
            let mag = match k {
                BusKind::PQ => mag,
                _ => b.voltage_setpoint.unwrap_or(mag),
            };
            Complex64::from_polar(mag, ang)
        })
        .collect();

    let mut iterations = 0;
    let mut q_limited = Vec::new();
    let mut converged = false;
    let mut mismatch = f64::INFINITY;
    for _pass in 0..MAX_Q_LIMIT_PASSES {
        let newton = Newton::new(y, &data.kind);
        let (outcome, its, mis) = newton.solve(&mut v, &data.s_spec, cfg);
        iterations += its;
        mismatch = mis;
        if matches!(outcome, Outcome::Failed) {
            converged = false;
            break;
        }
        converged = true;
        if !cfg.enforce_q_limits {
            break;
        }
        let (s, _) = injections(y, &v);
        let mut switched = false;
        for i in 0..v.len() {
            if data.kind[i] != BusKind::PV {
                continue;
            }
            let q_gen = s[i].im + data.q_load[i];
            let limit = if q_gen > data.q_max[i] + Q_LIMIT_SLACK {
                data.q_max[i]
            } else if q_gen < data.q_min[i] - Q_LIMIT_SLACK {
                data.q_min[i]
            } else {
                continue;
            };
            data.kind[i] = BusKind::PQ;
            data.s_spec[i].im = limit - data.q_load[i];
            q_limited.push(net.buses[i].id);
            switched = true;
        }
        if !switched {
            break;
        }
        // Limits still being violated after the last pass.
        converged = false;
    }

    PfSolution {
        v_mag: v.iter().map(|x| x.norm()).collect(),
        v_ang: v.iter().map(|x| x.arg()).collect(),
        iterations,
        max_mismatch: mismatch,
        converged,
        q_limited,
    }
}

/// Evaluate the power flow mismatch at a given voltage profile, using the
/// bus types and injections `solve_newton` started from.
pub fn max_residual(net: &PowerNetwork, sol: &PfSolution, cfg: &PfConfig) -> f64 {
    let y = build_ybus(net);
    let mut data = BusData::new(net, cfg.enforce_q_limits);
    let index = net.bus_index();
    // Buses pinned at a reactive limit are PQ at that limit.
    let v: Vec<Complex64> = sol
        .v_mag
        .iter()
        .zip(&sol.v_ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    let (s, _) = injections(&y, &v);
    for id in &sol.q_limited {
        let i = index[id];
        let q_gen = s[i].im + data.q_load[i];
        let limit = if (q_gen - data.q_max[i]).abs() < (q_gen - data.q_min[i]).abs() {
            data.q_max[i]
        } else {
            data.q_min[i]
        };
        data.kind[i] = BusKind::PQ;
        data.s_spec[i].im = limit - data.q_load[i];
    }
    Newton::new(&y, &data.kind).mismatch(&s, &data.s_spec).amax()
}

/// Oracle label for one sample: solvable iff Newton converges.
pub fn label(
    net: &PowerNetwork,
    spec: &SamplingSpec,
    values: &[f64],
    cfg: &PfConfig,
) -> Result<SolvabilityLabel, PfError> {
    let sampled = apply_injections(net, spec, values)?;
    let sol = solve_newton(&sampled, cfg)?;
    Ok(if sol.converged {
        SolvabilityLabel::Solvable
    } else {
        SolvabilityLabel::NonSolvable
    })
}

/// Label every row; element `i` is `label(net, spec, rows[i], cfg)`.
pub fn label_batch(
    net: &PowerNetwork,
    spec: &SamplingSpec,
    rows: ArrayView2<'_, f64>,
    cfg: &PfConfig,
) -> Result<Vec<SolvabilityLabel>, PfError> {
    cfg.check()?;
    let violations = net.validate();
    if !violations.is_empty() {
        return Err(PfError::InvalidNetwork(violations));
    }
    spec.check_network(net).map_err(|e| PfError::Spec(e.to_string()))?;
    let y = build_ybus(net);
    (0..rows.nrows())
        .into_par_iter()
        .map(|i| {
            let row = rows.row(i).to_vec();
            let sampled = apply_injections(net, spec, &row).map_err(|e| PfError::Row {
                index: i,
                source: Box::new(e),
            })?;
            // Injections do not touch branch data, so the admittance matrix is shared.
            Ok(if solve_unchecked(&sampled, &y, cfg).converged {
                SolvabilityLabel::Solvable
            } else {
                SolvabilityLabel::NonSolvable
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::two_bus;
    use crate::sampling::{build_spec_full, Distribution, FeatureSlot};
    use ndarray::array;

    /// Lossless 2-bus line: receiving-end voltage solves V^4 - V^2 + x^2 P^2 = 0
    /// (Q = 0); the high-voltage root exists iff 1 - 4 x^2 P^2 >= 0.
    fn analytic_v2(x: f64, p: f64) -> Option<f64> {
        let disc = 1.0 - 4.0 * x * x * p * p;
        (disc >= 0.0).then(|| ((1.0 + disc.sqrt()) / 2.0).sqrt())
    }

    fn load_p_spec() -> SamplingSpec {
        SamplingSpec::new(
            1,
            vec![FeatureSlot {
                quantity: Quantity::LoadP,
                element: 0,
                bus_id: 2,
                dist: Distribution::Uniform { lo: 0.0, hi: 1000.0 },
            }],
        )
        .unwrap()
    }

    #[test]
    fn two_bus_matches_quartic() {
        let net = two_bus(0.1, 0.3, 0.0);
        let sol = solve_newton(&net, &PfConfig::default()).unwrap();
        assert!(sol.converged);
        let expected = analytic_v2(0.1, 0.3).unwrap();
        assert!((expected - 0.99955).abs() < 1e-5);
        assert!((sol.v_mag[1] - expected).abs() < 1e-10, "{} vs {}", sol.v_mag[1], expected);
        // Angle: sin(theta) = -P x / V.
        assert!((sol.v_ang[1] - (-(0.3 * 0.1) / expected).asin()).abs() < 1e-10);
        assert!(sol.max_mismatch <= 1e-8);
    }

    #[test]
    fn zero_injection_is_flat() {
        let net = two_bus(0.1, 0.0, 0.0);
        let sol = solve_newton(&net, &PfConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 1);
        assert_eq!(sol.v_mag, vec![1.0, 1.0]);
        assert_eq!(sol.v_ang, vec![0.0, 0.0]);
    }

    #[test]
    fn beyond_loadability_does_not_converge() {
        let net = two_bus(0.1, 6.0, 0.0);
        let sol = solve_newton(&net, &PfConfig::default()).unwrap();
        assert!(!sol.converged);
        assert!(analytic_v2(0.1, 6.0).is_none());
    }

    #[test]
    fn apply_injections_units_and_pinning() {
        let mut net = two_bus(0.1, 0.3, 0.0);
        // Add a PV generator bus to exercise Q pinning.
        net.buses.push(crate::network::Bus {
            id: 3,
            kind: BusKind::PV,
            voltage_setpoint: Some(1.0),
            ..net.buses[1].clone()
        });
        net.generators.push(crate::network::Generator {
            bus_id: 3,
            ..net.generators[0].clone()
        });
        net.branches.push(crate::network::Branch {
            from_bus: 2,
            to_bus: 3,
            ..net.branches[0].clone()
        });
        let spec = build_spec_full(&net, 0.5).unwrap();
        assert_eq!(spec.header(), vec!["genP:3", "genQ:3", "loadP:2", "loadQ:2"]);
        let out = apply_injections(&net, &spec, &[20.0, 150.0, -3000.0, 5.0]).unwrap();
        assert_eq!(out.generators[1].p, 0.2);
        assert_eq!(out.generators[1].q, 1.5);
        assert_eq!(out.generators[1].q_min, 1.5);
        assert_eq!(out.generators[1].q_max, 1.5);
        assert_eq!(out.loads[0].p, -30.0);
        assert_eq!(out.loads[0].q, 0.05);
        assert_eq!(out.generators[0], net.generators[0]);

        let err = apply_injections(&net, &spec, &[1.0]).unwrap_err();
        assert!(matches!(err, PfError::DimensionMismatch { expected: 4, got: 1 }));
    }

    #[test]
    fn empty_spec_is_identity() {
        let net = two_bus(0.1, 0.3, 0.0);
        let spec = SamplingSpec::new(1, vec![]).unwrap();
        assert_eq!(apply_injections(&net, &spec, &[]).unwrap(), net);
    }

    #[test]
    fn pinned_generator_holds_its_sample() {
        // Bus 2 becomes a PV generator bus with coinciding Q limits.
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.buses[1].kind = BusKind::PV;
        net.buses[1].voltage_setpoint = Some(1.02);
        net.generators.push(crate::network::Generator {
            bus_id: 2,
            p: 0.5,
            q: 0.2,
            q_min: 0.2,
            q_max: 0.2,
            ..net.generators[0].clone()
        });
        let cfg = PfConfig::default();
        let sol = solve_newton(&net, &cfg).unwrap();
        assert!(sol.converged);
        // Q injection at bus 2 equals the pinned value, so V drifts off the setpoint.
        let y = build_ybus(&net);
        let v: Vec<_> = sol.v_mag.iter().zip(&sol.v_ang).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let (s, _) = injections(&y, &v);
        assert!((s[1].im - 0.2).abs() < 1e-8);
        assert!((s[1].re - 0.5).abs() < 1e-8);
        assert!(max_residual(&net, &sol, &cfg) <= cfg.tol);

        // Without limit enforcement the bus regulates voltage instead.
        let free = PfConfig { enforce_q_limits: false, ..cfg };
        let sol = solve_newton(&net, &free).unwrap();
        assert!((sol.v_mag[1] - 1.02).abs() < 1e-12);
    }

    #[test]
    fn q_limit_switching() {
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.buses[1].kind = BusKind::PV;
        net.buses[1].voltage_setpoint = Some(1.05);
        net.generators.push(crate::network::Generator {
            bus_id: 2,
            p: 0.0,
            q: 0.0,
            q_min: -0.1,
            q_max: 0.1,
            ..net.generators[0].clone()
        });
        net.loads[0].q = 0.0;
        let cfg = PfConfig::default();
        let sol = solve_newton(&net, &cfg).unwrap();
        // Holding 1.05 pu needs ~0.5 pu of reactive support, above q_max.
        assert!(sol.converged);
        assert_eq!(sol.q_limited, vec![2]);
        assert!(sol.v_mag[1] < 1.05);
        assert!(max_residual(&net, &sol, &cfg) <= cfg.tol);
    }

    #[test]
    fn labels_and_batches() {
        let net = two_bus(0.1, 0.0, 0.0);
        let spec = load_p_spec();
        let cfg = PfConfig::default();
        assert_eq!(label(&net, &spec, &[30.0], &cfg).unwrap(), SolvabilityLabel::Solvable);
        assert_eq!(label(&net, &spec, &[600.0], &cfg).unwrap(), SolvabilityLabel::NonSolvable);
        assert_eq!(label(&net, &spec, &[0.0], &cfg).unwrap().one_hot(), [0.0, 1.0]);

        let rows = array![[30.0], [600.0], [30.0]];
        let labels = label_batch(&net, &spec, rows.view(), &cfg).unwrap();
        assert_eq!(
            labels,
            vec![SolvabilityLabel::Solvable, SolvabilityLabel::NonSolvable, SolvabilityLabel::Solvable]
        );
        assert!(label_batch(&net, &spec, rows.slice(ndarray::s![0..0, ..]), &cfg).unwrap().is_empty());
    }

    #[test]
    fn singular_jacobian_is_a_label() {
        // An islanded PQ bus with load has an all-zero Jacobian row.
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.branches[0].in_service = false;
        net.loads[0].p = 0.1;
        let sol = solve_newton(&net, &PfConfig::default()).unwrap();
        assert!(!sol.converged);
    }

    #[test]
    fn config_validation() {
        let net = two_bus(0.1, 0.0, 0.0);
        assert!(solve_newton(&net, &PfConfig { tol: 0.0, ..Default::default() }).is_err());
        assert!(solve_newton(&net, &PfConfig { max_iter: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn one_hot_round_trip() {
        for l in [SolvabilityLabel::NonSolvable, SolvabilityLabel::Solvable] {
            let y = l.one_hot();
            assert_eq!(y[0] + y[1], 1.0);
            assert_eq!(SolvabilityLabel::from_one_hot(y), Some(l));
            assert_eq!(SolvabilityLabel::from_class(l.class()), Some(l));
            assert_ne!(l.flipped(), l);
        }
        assert_eq!(SolvabilityLabel::from_one_hot([0.5, 0.5]), None);
    }
}

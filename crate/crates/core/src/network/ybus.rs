use num_complex::Complex64;

use super::{BusId, PowerNetwork};

/// Dense complex bus admittance matrix `Y = G + jB` in per-unit, indexed by
/// bus position in [`PowerNetwork::buses`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    bus_ids: Vec<BusId>,
    entries: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dimension(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.bus_ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        let n = self.bus_ids.len();
        &self.entries[i * n..(i + 1) * n]
    }

    fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let n = self.bus_ids.len();
        self.entries[i * n + j] += v;
    }

    /// Largest `|Y_ij - Y_ji|` over all entries.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dimension();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        worst
    }
}

/// Assemble the bus admittance matrix from the standard Π branch model.
///
/// For a branch with series admittance `ys`, total charging `b` and complex
/// tap `t = tap_ratio * exp(j * shift)` on the from side:
///
/// ```text
/// Y_ff += (ys + jb/2) / |t|^2    Y_ft += -ys / conj(t)
/// Y_tt += ys + jb/2              Y_tf += -ys / t
/// ```
///
/// Bus shunts add `gs + j bs` to the diagonal. Out-of-service branches are
/// skipped.
pub fn build_ybus(net: &PowerNetwork) -> AdmittanceMatrix {
    let n = net.n_buses();
    let index = net.bus_index();
    let mut y = AdmittanceMatrix {
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        entries: vec![Complex64::new(0.0, 0.0); n * n],
    };

    for br in net.branches.iter().filter(|br| br.in_service) {
        let f = index[&br.from_bus];
        let t = index[&br.to_bus];
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let charging = Complex64::new(0.0, br.b_charging / 2.0);
        let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift);

        let ytt = ys + charging;
        y.add(f, f, ytt / (tap * tap.conj()));
        y.add(f, t, -ys / tap.conj());
        y.add(t, f, -ys / tap);
        y.add(t, t, ytt);
    }

    for (i, bus) in net.buses.iter().enumerate() {
        y.add(i, i, Complex64::new(bus.gs, bus.bs));
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::two_bus;
    use crate::network::Branch;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn lossless_line() {
        let y = build_ybus(&two_bus(0.1, 0.0, 0.0));
        assert!(close(y.get(0, 0), Complex64::new(0.0, -10.0)));
        assert!(close(y.get(1, 1), Complex64::new(0.0, -10.0)));
        assert!(close(y.get(0, 1), Complex64::new(0.0, 10.0)));
        assert!(close(y.get(1, 0), Complex64::new(0.0, 10.0)));
        // Shunt-free lossless network: rows sum to zero.
        for i in 0..2 {
            let s: Complex64 = y.row(i).iter().sum();
            assert!(s.norm() < 1e-12);
        }
    }

    #[test]
    fn charging_splits_between_ends() {
        let y = build_ybus(&two_bus(0.1, 0.0, 0.2));
        assert!(close(y.get(0, 0), Complex64::new(0.0, -9.9)));
        assert!(close(y.get(1, 1), Complex64::new(0.0, -9.9)));
        assert!(close(y.get(0, 1), Complex64::new(0.0, 10.0)));
    }

    #[test]
    fn out_of_service_branch_is_ignored() {
        let base = two_bus(0.1, 0.0, 0.2);
        let mut net = base.clone();
        net.branches.push(Branch {
            x: 0.05,
            in_service: false,
            ..net.branches[0].clone()
        });
        assert_eq!(build_ybus(&base), build_ybus(&net));
    }

    #[test]
    fn phase_shifter_breaks_symmetry() {
        let mut net = two_bus(0.1, 0.0, 0.0);
        net.branches[0].phase_shift = 0.1;
        assert!(net.has_phase_shifters());
        assert!(build_ybus(&net).max_asymmetry() > 1e-3);
        net.branches[0].phase_shift = 0.0;
        net.branches[0].tap_ratio = 1.05;
        assert!(build_ybus(&net).max_asymmetry() < 1e-12);
    }
}

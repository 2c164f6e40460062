//! Statevector simulation and the compact SWAP test.
//!
//! Qubit `q` is bit `q` of the basis-state index (qubit 0 is the least
//! significant bit). For the compact SWAP test the register layout is
//! `ancilla ⊗ phi ⊗ psi`, so the psi register occupies the low bits and its
//! qubit 0 separates the x-components (even indices) from the y-components
//! (odd indices) of the interleaved amplitude vector.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
    n_qubits: usize,
}

impl StateVector {
    /// `|0...0>` on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { amps, n_qubits }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "amplitude vector length {len} is not a power of two"
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "amplitudes have squared norm {norm}, expected 1"
            )));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `self ⊗ low`, with `low` occupying the least significant qubits.
    pub fn tensor(&self, low: &StateVector) -> StateVector {
        let mut amps = Vec::with_capacity(self.amps.len() * low.amps.len());
        for hi in &self.amps {
            amps.extend(low.amps.iter().map(|lo| hi * lo));
        }
        StateVector {
            amps,
            n_qubits: self.n_qubits + low.n_qubits,
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability of reading 0 on `qubit`.
    pub fn prob_zero(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1 << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// `<Z>` on `qubit`, i.e. `P(0) - P(1)`, accumulated as a single signed sum.
    pub fn expect_z(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let mask = 1 << qubit;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & mask == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    fn check_distinct(&self, qubits: &[usize]) -> Result<()> {
        for (i, &q) in qubits.iter().enumerate() {
            self.check_qubit(q)?;
            if qubits[..i].contains(&q) {
                return Err(Error::RepeatedQubit(q));
            }
        }
        Ok(())
    }

    /// Applies a 2x2 unitary `[[m00, m01], [m10, m11]]` to `qubit`.
    pub fn apply_single(&mut self, qubit: usize, m: [[Complex64; 2]; 2]) -> Result<()> {
        self.check_qubit(qubit)?;
        let mask = 1 << qubit;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | mask] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(())
    }

    pub fn apply_h(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let mask = 1 << qubit;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = (a0 + a1) * FRAC_1_SQRT_2;
                self.amps[i | mask] = (a0 - a1) * FRAC_1_SQRT_2;
            }
        }
        Ok(())
    }

    pub fn apply_x(&mut self, qubit: usize) -> Result<()> {
        self.check_qubit(qubit)?;
        let mask = 1 << qubit;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                self.amps.swap(i, i | mask);
            }
        }
        Ok(())
    }

    /// `Ry(theta) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]`.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let (s, c) = (theta / 2.0).sin_cos();
        let mask = 1 << qubit;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = a0 * c - a1 * s;
                self.amps[i | mask] = a0 * s + a1 * c;
            }
        }
        Ok(())
    }

    /// `Rz(theta) = diag(e^{-i t/2}, e^{i t/2})`.
    pub fn apply_rz(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        let lo = Complex64::from_polar(1.0, -theta / 2.0);
        let hi = Complex64::from_polar(1.0, theta / 2.0);
        let mask = 1 << qubit;
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if i & mask == 0 { lo } else { hi };
        }
        Ok(())
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_distinct(&[control, target])?;
        let (cm, tm) = (1 << control, 1 << target);
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
        Ok(())
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_distinct(&[a, b])?;
        let mask = (1 << a) | (1 << b);
        for (i, amp) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
        Ok(())
    }

    /// Fredkin gate: swaps `q1` and `q2` when `control` is 1.
    pub fn apply_cswap(&mut self, control: usize, q1: usize, q2: usize) -> Result<()> {
        self.check_distinct(&[control, q1, q2])?;
        let (cm, m1, m2) = (1 << control, 1 << q1, 1 << q2);
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & m1 != 0 && i & m2 == 0 {
                self.amps.swap(i, (i & !m1) | m2);
            }
        }
        Ok(())
    }
}

/// Number of qubits for the interleaved psi register of `dim`-dimensional inputs.
pub fn psi_register_qubits(dim: usize) -> usize {
    (2 * dim).next_power_of_two().trailing_zeros() as usize
}

/// States and normalizer of the compact SWAP test for a pair of vectors.
#[derive(Debug, Clone)]
pub struct CompactStates {
    /// One-qubit state carrying the relative norms.
    pub phi: StateVector,
    /// Interleaved normalized components, zero-padded to a power of two.
    pub psi: StateVector,
    /// `‖x‖² + ‖y‖²`.
    pub z: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn prepare_compact_states(x: &[f64], y: &[f64]) -> Result<CompactStates> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let (nx, ny) = (norm(x), norm(y));
    if !(nx > 0.0 && ny > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let z = nx * nx + ny * ny;
    let sz = z.sqrt();
    let phi = StateVector {
        amps: vec![Complex64::new(nx / sz, 0.0), Complex64::new(-ny / sz, 0.0)],
        n_qubits: 1,
    };
    let n_psi = psi_register_qubits(x.len());
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_psi];
    let (sx, sy) = (nx * std::f64::consts::SQRT_2, ny * std::f64::consts::SQRT_2);
    for (k, (xk, yk)) in x.iter().zip(y).enumerate() {
        amps[2 * k] = Complex64::new(xk / sx, 0.0);
        amps[2 * k + 1] = Complex64::new(yk / sy, 0.0);
    }
    let psi = StateVector { amps, n_qubits: n_psi };
    Ok(CompactStates { phi, psi, z })
}

/// How the ancilla probability is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Shots {
    /// Exact probabilities from the statevector.
    #[default]
    Exact,
    /// Empirical frequency over `shots` seeded measurements.
    Sampled { shots: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeomSource {
    QuantumExact,
    QuantumShots,
    ClassicalFallback,
}

/// Distance and angular channels for one pair of vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomPair {
    /// Euclidean-like distance, in feature units.
    pub distance: f64,
    /// Angular distance in `[0, π]`.
    pub angle: f64,
    /// Clipped overlap statistic `s = 2 p0 - 1` in `[0, 1]`.
    pub overlap: f64,
    pub source: GeomSource,
}

fn classical_fallback(x: &[f64], y: &[f64]) -> GeomPair {
    let distance = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let (nx, ny) = (norm(x), norm(y));
    let angle = if nx > 0.0 && ny > 0.0 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        (dot / (nx * ny)).clamp(-1.0, 1.0).acos()
    } else {
        0.0
    };
    GeomPair {
        distance,
        angle,
        overlap: 0.0,
        source: GeomSource::ClassicalFallback,
    }
}

/// Runs `H(a) → CSWAP(a; phi, psi_0) → H(a)` and returns the ancilla
/// statistic `2 p0 - 1` before clipping.
pub fn swap_test_statistic(states: &CompactStates) -> f64 {
    let n_psi = states.psi.n_qubits();
    let phi_q = n_psi;
    let anc = n_psi + 1;
    let mut full = StateVector::zero(1).tensor(&states.phi).tensor(&states.psi);
    full.apply_h(anc).expect("ancilla in range");
    full.apply_cswap(anc, phi_q, 0).expect("distinct qubits");
    full.apply_h(anc).expect("ancilla in range");
    full.expect_z(anc).expect("ancilla in range")
}

/// Compact SWAP-test estimate of `(D, Θ)` between `x` and `y`, falling back to
/// classical formulas when either vector has zero norm.
pub fn compact_swap_test(x: &[f64], y: &[f64], shots: Shots) -> Result<GeomPair> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let states = match prepare_compact_states(x, y) {
        Ok(states) => states,
        Err(Error::ZeroNorm) => return Ok(classical_fallback(x, y)),
        Err(e) => return Err(e),
    };
    let exact = swap_test_statistic(&states);
    let (raw, source) = match shots {
        Shots::Exact => (exact, GeomSource::QuantumExact),
        Shots::Sampled { shots, seed } => {
            if shots == 0 {
                return Err(Error::InvalidArgument("shot count must be positive".into()));
            }
            let p0 = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let zeros = Binomial::new(shots, p0)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng);
            (2.0 * zeros as f64 / shots as f64 - 1.0, GeomSource::QuantumShots)
        }
    };
    Ok(geometry_from_statistic(raw, states.z, source))
}

fn geometry_from_statistic(raw: f64, z: f64, source: GeomSource) -> GeomPair {
    let s = raw.clamp(0.0, 1.0);
    let cos = s.sqrt().clamp(-1.0, 1.0);
    GeomPair {
        distance: (2.0 * z * s).max(0.0).sqrt(),
        angle: cos.acos(),
        overlap: s,
        source,
    }
}

/// Mixes a base seed with pair coordinates into an independent stream seed.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::zero(1);
        s.apply_h(0).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn cswap_with_inactive_control_is_identity() {
        let amps = [0.1f64, 0.7, -0.5, 0.3];
        let n = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        let two = StateVector::from_real(&amps.map(|a| a / n)).unwrap();
        let mut s = StateVector::zero(1).tensor(&two);
        let before = s.clone();
        s.apply_cswap(2, 0, 1).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn cswap_swaps_when_control_set() {
        // |control=1, q1=1, q2=0> -> |1, 0, 1>
        let mut s = StateVector::zero(3);
        s.apply_x(2).unwrap();
        s.apply_x(1).unwrap();
        s.apply_cswap(2, 1, 0).unwrap();
        assert_eq!(s.amplitudes()[0b101], c(1.0));
    }

    #[test]
    fn gate_argument_errors() {
        let mut s = StateVector::zero(2);
        assert!(matches!(s.apply_h(2), Err(Error::QubitOutOfRange { .. })));
        assert!(matches!(s.apply_cx(1, 1), Err(Error::RepeatedQubit(1))));
        let mut s3 = StateVector::zero(3);
        assert!(matches!(s3.apply_cswap(0, 1, 0), Err(Error::RepeatedQubit(0))));
        assert!(StateVector::from_real(&[1.0, 0.0, 0.0]).is_err());
        assert!(StateVector::from_real(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn compact_states_for_orthogonal_unit_vectors() {
        let st = prepare_compact_states(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(st.z, 2.0);
        let phi = st.phi.amplitudes();
        assert_abs_diff_eq!(phi[0].re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(phi[1].re, -FRAC_1_SQRT_2, epsilon = 1e-15);
        let psi: Vec<f64> = st.psi.amplitudes().iter().map(|a| a.re).collect();
        let expect = [FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2];
        for (a, b) in psi.iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn compact_states_one_dimensional_and_padding() {
        let st = prepare_compact_states(&[1.0], &[1.0]).unwrap();
        let psi: Vec<f64> = st.psi.amplitudes().iter().map(|a| a.re).collect();
        assert_eq!(psi.len(), 2);
        assert_abs_diff_eq!(psi[0], FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(psi[1], FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(st.phi.amplitudes()[1].re, -FRAC_1_SQRT_2, epsilon = 1e-15);

        let st = prepare_compact_states(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(st.psi.amplitudes().len(), 8);
        assert_eq!(st.psi.amplitudes()[6], c(0.0));
        assert_eq!(st.psi.amplitudes()[7], c(0.0));
        assert_abs_diff_eq!(st.psi.norm_sqr(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(st.phi.norm_sqr(), 1.0, epsilon = 1e-12);
        assert!(matches!(prepare_compact_states(&[0.0], &[1.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn fallback_for_zero_vector() {
        let g = compact_swap_test(&[0.0, 0.0], &[3.0, 4.0], Shots::Exact).unwrap();
        assert_eq!(g.source, GeomSource::ClassicalFallback);
        assert_abs_diff_eq!(g.distance, 5.0);
        assert_eq!(g.angle, 0.0);
    }

    #[test]
    fn orthogonal_pair_exact() {
        let g = compact_swap_test(&[1.0, 0.0], &[0.0, 1.0], Shots::Exact).unwrap();
        assert_abs_diff_eq!(g.overlap, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.distance, 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.angle, FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn identical_pair_exact() {
        let g = compact_swap_test(&[1.0, 0.0], &[1.0, 0.0], Shots::Exact).unwrap();
        assert_abs_diff_eq!(g.overlap, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.distance, 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(g.angle, FRAC_PI_2, epsilon = 1e-7);
    }

    #[test]
    fn register_sizing() {
        assert_eq!(psi_register_qubits(1), 1);
        assert_eq!(psi_register_qubits(2), 2);
        assert_eq!(psi_register_qubits(3), 3);
        assert_eq!(psi_register_qubits(4), 3);
        assert_eq!(psi_register_qubits(13), 5);
        let st = prepare_compact_states(&[1.0; 13], &[2.0; 13]).unwrap();
        assert_eq!(st.psi.n_qubits() + 2, 7);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            compact_swap_test(&[1.0], &[1.0, 2.0], Shots::Exact),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..=16).prop_flat_map(|d| {
            (
                proptest::collection::vec(-5.0f64..5.0, d),
                proptest::collection::vec(-5.0f64..5.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn gates_preserve_norm(theta in -7.0f64..7.0, q in 0usize..3) {
            let mut s = StateVector::zero(3);
            s.apply_h(0).unwrap();
            s.apply_ry(1, theta).unwrap();
            s.apply_rz(q, theta * 0.3).unwrap();
            s.apply_cx(0, 2).unwrap();
            s.apply_cz(1, 2).unwrap();
            s.apply_cswap(q, (q + 1) % 3, (q + 2) % 3).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn hadamard_is_an_involution(theta in -3.0f64..3.0, phi in -3.0f64..3.0) {
            let mut s = StateVector::zero(2);
            s.apply_ry(0, theta).unwrap();
            s.apply_rz(0, phi).unwrap();
            s.apply_ry(1, phi).unwrap();
            let before = s.clone();
            s.apply_h(1).unwrap();
            s.apply_h(1).unwrap();
            for (a, b) in s.amplitudes().iter().zip(before.amplitudes()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn exact_distance_is_symmetric_and_clipped((x, y) in pair()) {
            let a = compact_swap_test(&x, &y, Shots::Exact).unwrap();
            let b = compact_swap_test(&y, &x, Shots::Exact).unwrap();
            prop_assert!((a.distance - b.distance).abs() < 1e-9);
            prop_assert!(a.distance >= 0.0);
            prop_assert!((0.0..=1.0).contains(&a.overlap));
            prop_assert!((0.0..=std::f64::consts::PI).contains(&a.angle));
        }

        #[test]
        fn sampled_geometry_is_clipped((x, y) in pair(), shots in 1u64..50, seed in 0u64..100) {
            let g = compact_swap_test(&x, &y, Shots::Sampled { shots, seed }).unwrap();
            prop_assert!((0.0..=1.0).contains(&g.overlap));
            prop_assert!((0.0..=std::f64::consts::PI).contains(&g.angle));
            prop_assert!(g.distance >= 0.0);
        }
    }
}

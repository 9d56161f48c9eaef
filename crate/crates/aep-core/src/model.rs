//! Core domain types: jump laws, densities and ring configurations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Normalization tolerance for jump-law probabilities. Tighter breaks on
/// textual inputs like `1/3`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("negative probability p({z}) = {p}")]
    NegativeProbability { z: i64, p: f64 },
    #[error("jump law not normalized: sum = {sum}")]
    NotNormalized { sum: f64 },
    #[error("jump law has empty support")]
    EmptySupport,
    #[error("density {rho} outside [0, 1]")]
    OutOfRange { rho: f64 },
    #[error("jump law has zero drift; this operation requires a drifted law")]
    DriftZero,
}

/// Finite-support jump distribution with derived drift, range and support gcd.
///
/// Probabilities are stored as 64-bit reals keyed by displacement. Zero
/// entries are dropped from the support. The symmetrization
/// `(p(z) + p(-z)) / 2` is precomputed since the symmetric part of the
/// generator is used both by the oracle and the resolvent machinery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpLaw {
    entries: BTreeMap<i64, f64>,
    drift: f64,
    range: i64,
    kappa: i64,
    symmetrized: BTreeMap<i64, f64>,
    drift_zero: bool,
}

impl JumpLaw {
    /// Builds a jump law from `(displacement, probability)` entries.
    ///
    /// Zero-drift laws are constructible (they arise from symmetrization)
    /// but carry the `drift_zero` flag; dynamics entry points that assume a
    /// non-zero drift reject them via [`JumpLaw::require_drift`].
    pub fn new<I: IntoIterator<Item = (i64, f64)>>(entries: I) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (z, p) in entries {
            if p < 0.0 || p.is_nan() {
                return Err(ModelError::NegativeProbability { z, p });
            }
            if p > 0.0 {
                *map.entry(z).or_insert(0.0) += p;
            }
        }
        if map.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        let sum: f64 = map.values().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(ModelError::NotNormalized { sum });
        }
        if map.contains_key(&0) {
            // A jump of size zero is a no-op with positive probability; it
            // would silently slow the clock, so reject it outright.
            return Err(ModelError::NegativeProbability { z: 0, p: map[&0] });
        }
        // Pairing +-z makes the drift of a symmetrized law vanish exactly
        // (bitwise-equal probabilities cancel term by term).
        let drift: f64 = map
            .iter()
            .filter(|&(&z, _)| z > 0)
            .map(|(&z, &p)| z as f64 * (p - map.get(&-z).copied().unwrap_or(0.0)))
            .sum::<f64>()
            + map
                .iter()
                .filter(|&(&z, _)| z < 0 && !map.contains_key(&-z))
                .map(|(&z, &p)| z as f64 * p)
                .sum::<f64>();
        let range = map.keys().map(|z| z.abs()).max().unwrap();
        let kappa = map.keys().fold(0i64, |g, &z| gcd(g, z.abs()));
        let mut symmetrized = BTreeMap::new();
        for (&z, &p) in &map {
            let q = map.get(&-z).copied().unwrap_or(0.0);
            symmetrized.insert(z, 0.5 * (p + q));
            symmetrized.insert(-z, 0.5 * (p + q));
        }
        Ok(JumpLaw {
            entries: map,
            drift,
            range,
            kappa,
            symmetrized,
            drift_zero: drift == 0.0,
        })
    }

    /// Totally asymmetric nearest-neighbour law `p(1) = 1`.
    pub fn tasep() -> Self {
        JumpLaw::new([(1, 1.0)]).unwrap()
    }

    pub fn prob(&self, z: i64) -> f64 {
        self.entries.get(&z).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.entries.iter().map(|(&z, &p)| (z, p))
    }

    /// Drift `b = sum_z z p(z)`.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    /// Range `R`: largest `|z|` in the support.
    pub fn range(&self) -> i64 {
        self.range
    }

    /// Gcd of the support displacements.
    pub fn kappa(&self) -> i64 {
        self.kappa
    }

    pub fn is_drift_zero(&self) -> bool {
        self.drift_zero
    }

    pub fn require_drift(&self) -> Result<(), ModelError> {
        if self.drift_zero {
            Err(ModelError::DriftZero)
        } else {
            Ok(())
        }
    }

    /// `sum_z z^2 p(z)`, the instantaneous mean-square displacement rate.
    pub fn second_moment(&self) -> f64 {
        self.entries.iter().map(|(&z, &p)| (z * z) as f64 * p).sum()
    }

    /// True when the support is contained in `{-1, +1}`.
    pub fn is_nearest_neighbor(&self) -> bool {
        self.range == 1
    }

    /// The symmetrized law `(p(z) + p(-z)) / 2` as a jump law of its own.
    pub fn symmetrize(&self) -> JumpLaw {
        JumpLaw::new(self.symmetrized.iter().map(|(&z, &p)| (z, p)).filter(|&(_, p)| p > 0.0))
            .expect("symmetrization preserves normalization")
    }

    pub fn symmetrized_prob(&self, z: i64) -> f64 {
        self.symmetrized.get(&z).copied().unwrap_or(0.0)
    }

    /// Rescales the support by the gcd: returns the law `q(y) = p(kappa * y)`
    /// together with `kappa`. Identity when `kappa = 1`. The original process
    /// is `kappa` independent copies of the rescaled one on the sublattices.
    pub fn sublattice_decompose(&self) -> (JumpLaw, i64) {
        let kappa = self.kappa;
        if kappa == 1 {
            return (self.clone(), 1);
        }
        let law = JumpLaw::new(self.entries.iter().map(|(&z, &p)| (z / kappa, p)))
            .expect("rescaling preserves validity");
        (law, kappa)
    }

    /// Inverse of [`JumpLaw::sublattice_decompose`]: dilates the support by
    /// `factor`, copying probabilities bit-exactly.
    pub fn dilate(&self, factor: i64) -> JumpLaw {
        JumpLaw::new(self.entries.iter().map(|(&z, &p)| (z * factor, p)))
            .expect("dilation preserves validity")
    }
}

impl fmt::Display for JumpLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.entries.iter().map(|(z, p)| format!("p({z})={p}")).collect();
        write!(f, "{}", parts.join(", "))
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Particle density with its static compressibility `chi = rho (1 - rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Density {
    rho: f64,
    chi: f64,
}

impl Density {
    pub fn new(rho: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(ModelError::OutOfRange { rho });
        }
        Ok(Density { rho, chi: rho * (1.0 - rho) })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }
}

/// `rho (1 - rho)` with a range check.
pub fn chi_of(rho: f64) -> Result<f64, ModelError> {
    Density::new(rho).map(|d| d.chi())
}

/// Occupancy of a single lattice site. Lower class index means higher
/// priority in the multi-class coupling: class 1 displaces classes 2 and 3,
/// class 2 displaces class 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Site {
    Empty = 0,
    Class1 = 1,
    Class2 = 2,
    Class3 = 3,
}

impl Site {
    pub fn from_u8(v: u8) -> Site {
        match v {
            0 => Site::Empty,
            1 => Site::Class1,
            2 => Site::Class2,
            3 => Site::Class3,
            _ => panic!("invalid site code {v}"),
        }
    }
}

/// Periodic lattice occupancy with per-site class labels, per-bond jump
/// counters and the process clock.
///
/// Bond `x` sits between sites `x` and `x + 1 (mod L)`. Crossings are
/// counted per direction: a jump of displacement `z > 0` from `y` increments
/// the rightward counter of bonds `y, ..., y + z - 1`; a jump of `z < 0`
/// increments the leftward counters of the bonds it crosses. Swaps between
/// particle classes exchange two occupied sites and therefore leave the net
/// crossing counts unchanged; they are not counted.
#[derive(Debug, Clone)]
pub struct RingState {
    pub(crate) l: usize,
    pub(crate) sites: Vec<u8>,
    pub(crate) right_crossings: Vec<u64>,
    pub(crate) left_crossings: Vec<u64>,
    pub(crate) time: f64,
}

impl RingState {
    pub fn new(l: usize) -> Self {
        assert!(l >= 2 && l % 2 == 0, "ring size must be even and >= 2");
        RingState {
            l,
            sites: vec![0; l],
            right_crossings: vec![0; l],
            left_crossings: vec![0; l],
            time: 0.0,
        }
    }

    /// Number of ring sites (always positive).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.l
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn site(&self, i: usize) -> Site {
        Site::from_u8(self.sites[i])
    }

    pub fn set_site(&mut self, i: usize, s: Site) {
        self.sites[i] = s as u8;
    }

    /// Lattice coordinate `x` (may be any integer) to ring index.
    pub fn index_of(&self, x: i64) -> usize {
        let l = self.l as i64;
        (((x % l) + l) % l) as usize
    }

    /// Net signed crossings of bond `x` up to the current time.
    pub fn net_crossings(&self, x: i64) -> i64 {
        let i = self.index_of(x);
        self.right_crossings[i] as i64 - self.left_crossings[i] as i64
    }

    pub fn rightward_crossings(&self, x: i64) -> u64 {
        self.right_crossings[self.index_of(x)]
    }

    pub fn count_class(&self, s: Site) -> usize {
        self.sites.iter().filter(|&&v| v == s as u8).count()
    }

    pub fn particle_count(&self) -> usize {
        self.sites.iter().filter(|&&v| v != 0).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tasep_law_basics() {
        let law = JumpLaw::new([(1, 1.0)]).unwrap();
        assert_eq!(law.drift(), 1.0);
        assert_eq!(law.range(), 1);
        assert_eq!(law.kappa(), 1);
        assert!(!law.is_drift_zero());
    }

    #[test]
    fn symmetric_law_flags_drift_zero() {
        let law = JumpLaw::new([(1, 0.5), (-1, 0.5)]).unwrap();
        assert_eq!(law.drift(), 0.0);
        assert!(law.is_drift_zero());
        assert_eq!(law.require_drift(), Err(ModelError::DriftZero));
    }

    #[test]
    fn spaced_law_derived_quantities() {
        let law = JumpLaw::new([(2, 0.75), (-2, 0.25)]).unwrap();
        assert_eq!(law.drift(), 1.0);
        assert_eq!(law.range(), 2);
        assert_eq!(law.kappa(), 2);
    }

    #[test]
    fn rejects_negative_probability() {
        let err = JumpLaw::new([(1, 1.25), (-1, -0.25)]).unwrap_err();
        assert!(matches!(err, ModelError::NegativeProbability { z: -1, .. }));
    }

    #[test]
    fn rejects_unnormalized() {
        let err = JumpLaw::new([(1, 0.5), (2, 0.4)]).unwrap_err();
        assert!(matches!(err, ModelError::NotNormalized { .. }));
    }

    #[test]
    fn rejects_empty_support() {
        let err = JumpLaw::new(std::iter::empty()).unwrap_err();
        assert_eq!(err, ModelError::EmptySupport);
    }

    #[test]
    fn decompose_rescales_support() {
        let law = JumpLaw::new([(2, 0.75), (-2, 0.25)]).unwrap();
        let (reduced, kappa) = law.sublattice_decompose();
        assert_eq!(kappa, 2);
        assert_eq!(reduced.prob(1), 0.75);
        assert_eq!(reduced.prob(-1), 0.25);
        assert_eq!(reduced.drift(), law.drift() / 2.0);
    }

    #[test]
    fn decompose_is_identity_for_gcd_one() {
        let law = JumpLaw::tasep();
        let (reduced, kappa) = law.sublattice_decompose();
        assert_eq!(kappa, 1);
        assert_eq!(reduced, law);
    }

    #[test]
    fn decompose_triple_spacing() {
        let law = JumpLaw::new([(3, 0.6), (-3, 0.4)]).unwrap();
        let (reduced, kappa) = law.sublattice_decompose();
        assert_eq!(kappa, 3);
        assert_eq!(reduced.prob(1), 0.6);
        assert_eq!(reduced.prob(-1), 0.4);
    }

    #[test]
    fn dilate_round_trips_bit_exactly() {
        let law = JumpLaw::new([(2, 1.0 / 3.0), (-4, 2.0 / 3.0)]).unwrap();
        let (reduced, kappa) = law.sublattice_decompose();
        let back = reduced.dilate(kappa);
        assert_eq!(back, law);
    }

    #[test]
    fn chi_values() {
        assert_eq!(chi_of(0.5).unwrap(), 0.25);
        assert_eq!(chi_of(0.0).unwrap(), 0.0);
        assert!((chi_of(0.3).unwrap() - 0.21).abs() < 1e-15);
        assert!(chi_of(1.5).is_err());
    }

    #[test]
    fn symmetrize_halves_asymmetry() {
        let law = JumpLaw::new([(1, 2.0 / 3.0), (-1, 1.0 / 3.0)]).unwrap();
        let sym = law.symmetrize();
        assert_eq!(sym.prob(1), 0.5);
        assert_eq!(sym.prob(-1), 0.5);
        assert!(sym.is_drift_zero());
    }

    #[test]
    fn ring_state_wrapping() {
        let st = RingState::new(10);
        assert_eq!(st.index_of(-1), 9);
        assert_eq!(st.index_of(10), 0);
        assert_eq!(st.index_of(-11), 9);
    }
}

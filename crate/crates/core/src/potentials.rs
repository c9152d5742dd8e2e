//! Symmetric convex edge potentials, their classification, and the
//! cap-potential decomposition used by the enriched model.
//!
//! Energies are `f64` with `f64::INFINITY` as a first-class value. Every
//! potential is normalised at construction: `V(0) = 0` when finite, or the
//! minimum over the odd integers is zero for parity potentials. The constant
//! removed is kept in [`Potential::offset`].

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{EdgeId, PlanarPatch};

pub const DEFAULT_WINDOW: i64 = 64;
const EXCITED_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("potential is not excited")]
    NotExcited,
    #[error("e^-V is not a nontrivial finite measure")]
    DegenerateMass,
    #[error("invalid potential: {0}")]
    Invalid(String),
    #[error("potential assignment does not cover edge {0}")]
    Unassigned(EdgeId),
}

/// Rule used outside the explicit table window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Infinite,
    Quadratic(f64),
    Linear(f64),
}

impl Tail {
    fn eval(self, x: i64) -> f64 {
        match self {
            Tail::Infinite => f64::INFINITY,
            Tail::Quadratic(b) => b * (x as f64) * (x as f64),
            Tail::Linear(b) => b * (x as f64).abs(),
        }
    }

    fn scaled(self, beta: f64) -> Tail {
        match self {
            Tail::Infinite => Tail::Infinite,
            Tail::Quadratic(b) => Tail::Quadratic(b * beta),
            Tail::Linear(b) => Tail::Linear(b * beta),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    Table {
        values: BTreeMap<i64, f64>,
        tail: Tail,
    },
    DiscreteGaussian {
        beta: f64,
    },
    SolidOnSolid {
        beta: f64,
    },
    KLipschitz {
        k: u32,
    },
    Homomorphism,
    /// Table on the odd integers; every even argument is infinite.
    ParityTable {
        values: BTreeMap<i64, f64>,
        tail: Tail,
    },
}

impl PotentialKind {
    fn raw(&self, x: i64) -> f64 {
        match self {
            PotentialKind::Table { values, tail } => table_eval(values, *tail, x),
            PotentialKind::DiscreteGaussian { beta } => beta * (x as f64) * (x as f64),
            PotentialKind::SolidOnSolid { beta } => beta * (x as f64).abs(),
            PotentialKind::KLipschitz { k } => {
                if x.unsigned_abs() <= *k as u64 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            PotentialKind::Homomorphism => {
                if x.abs() == 1 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            PotentialKind::ParityTable { values, tail } => {
                if x.rem_euclid(2) == 0 {
                    f64::INFINITY
                } else {
                    table_eval(values, *tail, x)
                }
            }
        }
    }
}

fn table_eval(values: &BTreeMap<i64, f64>, tail: Tail, x: i64) -> f64 {
    if let Some(&v) = values.get(&x) {
        return v;
    }
    let lo = values.keys().next().copied().unwrap_or(0);
    let hi = values.keys().next_back().copied().unwrap_or(0);
    if x > lo && x < hi {
        // Gaps inside the listed window are outside the domain.
        f64::INFINITY
    } else {
        tail.eval(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    offset: f64,
    window: i64,
}

impl Potential {
    pub fn new(kind: PotentialKind) -> Result<Self, PotentialError> {
        Self::with_window(kind, DEFAULT_WINDOW)
    }

    pub fn with_window(kind: PotentialKind, window: i64) -> Result<Self, PotentialError> {
        if window < 2 {
            return Err(PotentialError::Invalid("window must be at least 2".into()));
        }
        match &kind {
            PotentialKind::DiscreteGaussian { beta } | PotentialKind::SolidOnSolid { beta } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(PotentialError::Invalid(format!("beta must be positive, got {beta}")));
                }
            }
            PotentialKind::Table { values, tail } | PotentialKind::ParityTable { values, tail } => {
                if values.values().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
                    return Err(PotentialError::Invalid("table values must be finite or +inf".into()));
                }
                if let Tail::Quadratic(b) | Tail::Linear(b) = tail {
                    if !(b.is_finite() && *b > 0.0) {
                        return Err(PotentialError::Invalid("tail coefficient must be positive".into()));
                    }
                }
            }
            _ => {}
        }
        let at_zero = kind.raw(0);
        let offset = if at_zero.is_finite() {
            at_zero
        } else {
            (-window..=window).filter(|x| x.rem_euclid(2) == 1).map(|x| kind.raw(x)).fold(f64::INFINITY, f64::min)
        };
        if !offset.is_finite() {
            return Err(PotentialError::DegenerateMass);
        }
        let p = Potential { kind, offset, window };
        let mass = p.mass();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(PotentialError::DegenerateMass);
        }
        Ok(p)
    }

    pub fn discrete_gaussian(beta: f64) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::DiscreteGaussian { beta })
    }

    pub fn solid_on_solid(beta: f64) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::SolidOnSolid { beta })
    }

    pub fn k_lipschitz(k: u32) -> Self {
        Self::new(PotentialKind::KLipschitz { k }).expect("k-Lipschitz potential is valid")
    }

    pub fn homomorphism() -> Self {
        Self::new(PotentialKind::Homomorphism).expect("homomorphism potential is valid")
    }

    pub fn table(pairs: &[(i64, f64)], tail: Tail) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::Table { values: pairs.iter().copied().collect(), tail })
    }

    pub fn parity_table(pairs: &[(i64, f64)], tail: Tail) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::ParityTable { values: pairs.iter().copied().collect(), tail })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn window(&self) -> i64 {
        self.window
    }

    #[inline]
    pub fn evaluate(&self, x: i64) -> f64 {
        let v = self.kind.raw(x);
        if v.is_finite() {
            v - self.offset
        } else {
            v
        }
    }

    /// `e^{-V(x)}`.
    #[inline]
    pub fn weight(&self, x: i64) -> f64 {
        (-self.evaluate(x)).exp()
    }

    /// Total mass of `e^{-V}`: explicit sum over the window plus the tail,
    /// summed until terms fall below 1e-300 of the window mass.
    pub fn mass(&self) -> f64 {
        let mut total: f64 = (-self.window..=self.window).map(|x| self.weight(x)).sum();
        // Tails are linear or quadratic with positive slope, so this terminates.
        for x in self.window + 1.. {
            let t = self.weight(x) + self.weight(-x);
            total += t;
            if t <= 1e-300 * total.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        total
    }

    /// Fraction of the mass of `e^{-V}` carried by `|x| >= r`.
    pub fn tail_fraction(&self, r: i64) -> f64 {
        let total = self.mass();
        let inner: f64 = (-(r - 1)..=(r - 1)).map(|x| self.weight(x)).sum();
        ((total - inner) / total).max(0.0)
    }

    /// `beta * V`, renormalised.
    pub fn scaled(&self, beta: f64) -> Result<Self, PotentialError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(PotentialError::Invalid("scale must be positive".into()));
        }
        let kind = match &self.kind {
            PotentialKind::DiscreteGaussian { beta: b } => PotentialKind::DiscreteGaussian { beta: b * beta },
            PotentialKind::SolidOnSolid { beta: b } => PotentialKind::SolidOnSolid { beta: b * beta },
            PotentialKind::KLipschitz { k } => PotentialKind::KLipschitz { k: *k },
            PotentialKind::Homomorphism => PotentialKind::Homomorphism,
            PotentialKind::Table { values, tail } => PotentialKind::Table {
                values: values.iter().map(|(&x, &v)| (x, v * beta)).collect(),
                tail: tail.scaled(beta),
            },
            PotentialKind::ParityTable { values, tail } => PotentialKind::ParityTable {
                values: values.iter().map(|(&x, &v)| (x, v * beta)).collect(),
                tail: tail.scaled(beta),
            },
        };
        Self::with_window(kind, self.window)
    }

    pub fn classify(&self) -> PotentialClass {
        classify(self)
    }

    /// Weight lookup table for gradients in `[-half_width, half_width]`.
    pub fn weight_table(&self, half_width: i64) -> WeightTable {
        WeightTable {
            half_width,
            weights: (-half_width..=half_width).map(|x| self.weight(x)).collect(),
            potential: self.clone(),
        }
    }

    pub fn to_spec(&self) -> PotentialSpec {
        let window = if self.window == DEFAULT_WINDOW { None } else { Some(self.window) };
        let table = |values: &BTreeMap<i64, f64>| {
            values
                .iter()
                .map(|(&x, &v)| (x, if v.is_finite() { TableValue::Num(v) } else { TableValue::Str("inf".into()) }))
                .collect()
        };
        match &self.kind {
            PotentialKind::DiscreteGaussian { beta } => PotentialSpec::DiscreteGaussian { beta: *beta, window },
            PotentialKind::SolidOnSolid { beta } => PotentialSpec::SolidOnSolid { beta: *beta, window },
            PotentialKind::KLipschitz { k } => PotentialSpec::KLipschitz { k: *k, window },
            PotentialKind::Homomorphism => PotentialSpec::Homomorphism { window },
            PotentialKind::Table { values, tail } => {
                PotentialSpec::Table { values: table(values), tail: *tail, window }
            }
            PotentialKind::ParityTable { values, tail } => {
                PotentialSpec::ParityTable { values: table(values), tail: *tail, window }
            }
        }
    }
}

/// Precomputed `e^{-V(h)}`; falls back to direct evaluation outside the table.
#[derive(Clone, Debug)]
pub struct WeightTable {
    half_width: i64,
    weights: Vec<f64>,
    potential: Potential,
}

impl WeightTable {
    #[inline]
    pub fn get(&self, h: i64) -> f64 {
        if h.abs() <= self.half_width {
            self.weights[(h + self.half_width) as usize]
        } else {
            self.potential.weight(h)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotentialClass {
    pub convex: bool,
    pub symmetric: bool,
    pub excited: bool,
    pub parity: bool,
    pub even_excited: bool,
}

fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Convexity of `x -> f(x)` over the arithmetic progression `points`: the
/// finite part is a contiguous run and all second differences are
/// nonnegative.
fn convex_on(points: &[i64], f: impl Fn(i64) -> f64) -> bool {
    let vals: Vec<f64> = points.iter().map(|&x| f(x)).collect();
    let finite: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
        return false;
    };
    if last - first + 1 != finite.len() {
        return false;
    }
    (first + 1..last).all(|i| {
        let d2 = vals[i + 1] - 2.0 * vals[i] + vals[i - 1];
        d2 >= -1e-12 * vals[i].abs().max(1.0)
    })
}

pub fn classify(v: &Potential) -> PotentialClass {
    let w = v.window;
    // Two points past the window exercise the tail rule.
    let all: Vec<i64> = (-w - 2..=w + 2).collect();
    let odd: Vec<i64> = all.iter().copied().filter(|x| x.rem_euclid(2) == 1).collect();
    let symmetric = (0..=w + 2).all(|x| close(v.evaluate(x), v.evaluate(-x)));
    let evens_infinite = all.iter().filter(|x| x.rem_euclid(2) == 0).all(|&x| v.evaluate(x).is_infinite());
    let parity = symmetric && evens_infinite && convex_on(&odd, |x| v.evaluate(x));
    let convex = convex_on(&all, |x| v.evaluate(x));
    let excited =
        convex && symmetric && v.evaluate(0).is_finite() && v.evaluate(1) - v.evaluate(0) <= LN_2 + EXCITED_TOL;
    let odds_infinite = odd.iter().all(|&x| v.evaluate(x).is_infinite());
    let even_excited = symmetric && odds_infinite && {
        let half: Vec<i64> = (-(w / 2) - 1..=w / 2 + 1).collect();
        let g = |x: i64| v.evaluate(2 * x);
        g(0).is_finite() && convex_on(&half, g) && g(1) - g(0) <= LN_2 + EXCITED_TOL
    };
    PotentialClass { convex, symmetric, excited, parity, even_excited }
}

/// The cap potential: 0 at 0, log 2 at ±1, infinite elsewhere.
pub fn star_potential() -> Potential {
    Potential::table(&[(-1, LN_2), (0, 0.0), (1, LN_2)], Tail::Infinite).expect("cap potential is valid")
}

#[inline]
pub fn star_weight(h: i64) -> f64 {
    match h.abs() {
        0 => 1.0,
        1 => 0.5,
        _ => 0.0,
    }
}

/// A half-integer (or integer) stored doubled, so ½ is `HalfInt(1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfInt(pub i64);

impl HalfInt {
    pub const PLUS_HALF: HalfInt = HalfInt(1);
    pub const MINUS_HALF: HalfInt = HalfInt(-1);

    pub fn from_x2(x2: i64) -> Self {
        HalfInt(x2)
    }

    pub fn from_int(x: i64) -> Self {
        HalfInt(2 * x)
    }

    pub fn x2(self) -> i64 {
        self.0
    }

    pub fn is_half_integer(self) -> bool {
        self.0.rem_euclid(2) == 1
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

/// The midpoint potential on the half-integers: zero at ±½, infinite
/// elsewhere.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MidpointPotential;

impl MidpointPotential {
    pub fn evaluate(&self, x: HalfInt) -> f64 {
        if x.0.abs() == 1 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn weight(&self, x: HalfInt) -> f64 {
        if x.0.abs() == 1 {
            1.0
        } else {
            0.0
        }
    }
}

pub fn midpoint_potential() -> MidpointPotential {
    MidpointPotential
}

/// Splits `e^{-V(h)}` into the excited part `e^{-V*(h)}` and the plain
/// remainder. Both parts are nonnegative for excited potentials.
pub fn decompose_weight(v: &Potential, h: i64) -> Result<(f64, f64), PotentialError> {
    if !v.classify().excited {
        return Err(PotentialError::NotExcited);
    }
    let total = v.weight(h);
    let excited = star_weight(h);
    let plain = total - excited;
    // V(±1) may sit exactly at V(0) + log 2, where rounding can leave -ulp.
    let plain = if plain < 0.0 && plain > -4.0 * f64::EPSILON { 0.0 } else { plain };
    debug_assert!(plain >= 0.0, "excited potential produced negative plain weight");
    Ok((excited, plain))
}

/// Potential per edge, shared read-only by samplers.
#[derive(Clone, Debug)]
pub struct EdgePotentials {
    pub potentials: Vec<Potential>,
    pub assignment: Vec<usize>,
}

impl EdgePotentials {
    pub fn uniform(patch: &PlanarPatch, v: Potential) -> Self {
        EdgePotentials { potentials: vec![v], assignment: vec![0; patch.n_edges()] }
    }

    /// One potential per lattice orbit (stencil edge index).
    pub fn by_orbit(patch: &PlanarPatch, per_orbit: Vec<Potential>) -> Result<Self, PotentialError> {
        let assignment: Vec<usize> = patch.edges.iter().map(|e| e.orbit).collect();
        if let Some(e) = assignment.iter().position(|&o| o >= per_orbit.len()) {
            return Err(PotentialError::Unassigned(e));
        }
        Ok(EdgePotentials { potentials: per_orbit, assignment })
    }

    pub fn get(&self, e: EdgeId) -> &Potential {
        &self.potentials[self.assignment[e]]
    }

    pub fn all_excited(&self) -> bool {
        self.potentials.iter().all(|p| p.classify().excited)
    }

    pub fn all_parity(&self) -> bool {
        self.potentials.iter().all(|p| p.classify().parity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableValue {
    Num(f64),
    Str(String),
}

impl TableValue {
    fn value(&self) -> Result<f64, PotentialError> {
        match self {
            TableValue::Num(v) => Ok(*v),
            TableValue::Str(s) if s == "inf" => Ok(f64::INFINITY),
            TableValue::Str(s) => Err(PotentialError::Invalid(format!("unknown table value {s:?}"))),
        }
    }
}

/// Config-file form of a potential, e.g. `{"kind": "discrete_gaussian", "beta": 0.6931}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    DiscreteGaussian {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<i64>,
    },
    SolidOnSolid {
        beta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<i64>,
    },
    KLipschitz {
        k: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<i64>,
    },
    Homomorphism {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<i64>,
    },
    Table {
        values: Vec<(i64, TableValue)>,
        #[serde(default = "infinite_tail")]
        tail: Tail,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<i64>,
    },
    ParityTable {
        values: Vec<(i64, TableValue)>,
        #[serde(default = "infinite_tail")]
        tail: Tail,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<i64>,
    },
}

fn infinite_tail() -> Tail {
    Tail::Infinite
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential, PotentialError> {
        let table = |values: &[(i64, TableValue)]| -> Result<BTreeMap<i64, f64>, PotentialError> {
            values.iter().map(|(x, v)| Ok((*x, v.value()?))).collect()
        };
        let (kind, window) = match self {
            PotentialSpec::DiscreteGaussian { beta, window } => {
                (PotentialKind::DiscreteGaussian { beta: *beta }, window)
            }
            PotentialSpec::SolidOnSolid { beta, window } => (PotentialKind::SolidOnSolid { beta: *beta }, window),
            PotentialSpec::KLipschitz { k, window } => (PotentialKind::KLipschitz { k: *k }, window),
            PotentialSpec::Homomorphism { window } => (PotentialKind::Homomorphism, window),
            PotentialSpec::Table { values, tail, window } => {
                (PotentialKind::Table { values: table(values)?, tail: *tail }, window)
            }
            PotentialSpec::ParityTable { values, tail, window } => {
                (PotentialKind::ParityTable { values: table(values)?, tail: *tail }, window)
            }
        };
        Potential::with_window(kind, window.unwrap_or(DEFAULT_WINDOW))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homomorphism_values() {
        let v = Potential::homomorphism();
        assert_eq!(v.evaluate(1), 0.0);
        assert_eq!(v.evaluate(-1), 0.0);
        assert_eq!(v.evaluate(0), f64::INFINITY);
        assert_eq!(v.evaluate(2), f64::INFINITY);
    }

    #[test]
    fn discrete_gaussian_value() {
        let v = Potential::discrete_gaussian(LN_2).unwrap();
        assert_eq!(v.evaluate(2), 4.0 * LN_2);
    }

    #[test]
    fn k_lipschitz_values() {
        let v = Potential::k_lipschitz(2);
        assert_eq!(v.evaluate(-2), 0.0);
        assert_eq!(v.evaluate(3), f64::INFINITY);
    }

    #[test]
    fn classification_examples() {
        assert!(Potential::discrete_gaussian(LN_2).unwrap().classify().excited);
        // V(1) - V(0) = 1 > log 2 ~ 0.6931
        let sos = Potential::solid_on_solid(1.0).unwrap().classify();
        assert!(sos.convex && sos.symmetric && !sos.excited);
        let hom = Potential::homomorphism().classify();
        assert!(hom.parity && !hom.excited && !hom.convex);
        assert!(Potential::k_lipschitz(1).classify().excited);
    }

    #[test]
    fn even_excited_detection() {
        // x -> V(2x) is the 1-Lipschitz indicator.
        let v =
            Potential::table(&[(-2, 0.0), (-1, f64::INFINITY), (0, 0.0), (1, f64::INFINITY), (2, 0.0)], Tail::Infinite)
                .unwrap();
        let c = v.classify();
        assert!(c.even_excited && !c.excited && !c.parity);
    }

    #[test]
    fn parity_table_normalises_on_odd_minimum() {
        let v = Potential::parity_table(&[(-3, 5.0), (-1, 2.0), (1, 2.0), (3, 5.0)], Tail::Infinite).unwrap();
        assert_eq!(v.offset(), 2.0);
        assert_eq!(v.evaluate(1), 0.0);
        assert_eq!(v.evaluate(3), 3.0);
        assert!(v.classify().parity);
    }

    #[test]
    fn star_potential_values_and_mass() {
        let s = star_potential();
        assert_eq!(s.evaluate(0), 0.0);
        assert_eq!(s.evaluate(-2), f64::INFINITY);
        assert!((s.mass() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn midpoint_potential_values() {
        let m = midpoint_potential();
        assert_eq!(m.evaluate(HalfInt::PLUS_HALF), 0.0);
        assert_eq!(m.evaluate(HalfInt::from_x2(3)), f64::INFINITY);
        assert_eq!(m.evaluate(HalfInt::MINUS_HALF), m.evaluate(HalfInt::PLUS_HALF));
    }

    #[test]
    fn decomposition_examples() {
        for v in [Potential::k_lipschitz(1), Potential::discrete_gaussian(0.5).unwrap()] {
            assert_eq!(decompose_weight(&v, 0).unwrap(), (1.0, 0.0));
        }
        assert_eq!(decompose_weight(&Potential::k_lipschitz(1), 1).unwrap(), (0.5, 0.5));
        assert_eq!(decompose_weight(&Potential::k_lipschitz(2), 2).unwrap(), (0.0, 1.0));
        assert_eq!(decompose_weight(&Potential::solid_on_solid(1.0).unwrap(), 1), Err(PotentialError::NotExcited));
    }

    #[test]
    fn spec_round_trip() {
        let json = r#"{"kind": "table", "values": [[-1, 0.5], [0, 0], [1, 0.5], [2, "inf"], [-2, "inf"]]}"#;
        let spec: PotentialSpec = serde_json::from_str(json).unwrap();
        let v = spec.build().unwrap();
        assert_eq!(v.evaluate(2), f64::INFINITY);
        assert_eq!(v.to_spec().build().unwrap(), v);
        let dg: PotentialSpec = serde_json::from_str(r#"{"kind": "discrete_gaussian", "beta": 0.6931}"#).unwrap();
        assert!(dg.build().unwrap().classify().excited);
    }

    #[test]
    fn degenerate_potential_rejected() {
        assert_eq!(Potential::table(&[(0, f64::INFINITY)], Tail::Infinite), Err(PotentialError::DegenerateMass));
    }

    #[test]
    fn tail_fraction_of_discrete_gaussian() {
        let v = Potential::discrete_gaussian(LN_2).unwrap();
        assert!(v.tail_fraction(7) < 1e-12);
        assert!(v.tail_fraction(3) > 1e-12);
    }
}

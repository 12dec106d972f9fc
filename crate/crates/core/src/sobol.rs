//! Gray-code Sobol' sequence.
//!
//! Two direction-number sets are available. The default reproduces the
//! classic Bratley-Fox initialization (30-bit, six polynomials) extended
//! to twelve dimensions; the Joe-Kuo set uses 32 bits and a van der Corput
//! first coordinate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_BITS: usize = 32;

/// Identifies the default point set in cached integrals.
pub const GENERATOR_VERSION: &str = "sobol-bratley-fox-30bit";

pub const MAX_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionSet {
    #[default]
    BratleyFox,
    JoeKuo,
}

impl DirectionSet {
    pub fn version(self) -> &'static str {
        match self {
            DirectionSet::BratleyFox => GENERATOR_VERSION,
            DirectionSet::JoeKuo => "sobol-joe-kuo-6.21201-32bit",
        }
    }

    pub fn from_version(version: &str) -> Option<Self> {
        [DirectionSet::BratleyFox, DirectionSet::JoeKuo]
            .into_iter()
            .find(|s| s.version() == version)
    }

    fn bits(self) -> usize {
        match self {
            DirectionSet::BratleyFox => 30,
            DirectionSet::JoeKuo => 32,
        }
    }

    fn table(self) -> &'static str {
        match self {
            DirectionSet::BratleyFox => include_str!("../data/bratley-fox-d12.txt"),
            DirectionSet::JoeKuo => include_str!("../data/joe-kuo-d12.txt"),
        }
    }

    /// Joe-Kuo's first coordinate is the van der Corput sequence, which is
    /// not listed in the table.
    fn implicit_first(self) -> bool {
        self == DirectionSet::JoeKuo
    }
}

struct Primitive {
    degree: usize,
    coeffs: u32,
    initial: Vec<u32>,
}

fn parse_table(text: &str) -> Vec<Primitive> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let fields: Vec<u32> = l.split_whitespace().map(|f| f.parse().expect("direction table")).collect();
            Primitive {
                degree: fields[1] as usize,
                coeffs: fields[2],
                initial: fields[3..].to_vec(),
            }
        })
        .collect()
}

fn direction_numbers(dim: usize, set: DirectionSet) -> Vec<[u32; MAX_BITS]> {
    let bits = set.bits();
    let mut out = Vec::with_capacity(dim);
    if set.implicit_first() {
        let mut first = [0u32; MAX_BITS];
        for (i, v) in first.iter_mut().take(bits).enumerate() {
            *v = 1 << (bits - 1 - i);
        }
        out.push(first);
    }
    let table = parse_table(set.table());
    for prim in table.iter().take(dim - out.len()) {
        let s = prim.degree;
        let mut v = [0u32; MAX_BITS];
        for i in 0..bits {
            if i < s {
                v[i] = prim.initial[i] << (bits - 1 - i);
            } else {
                let mut x = v[i - s] ^ (v[i - s] >> s);
                for k in 1..s {
                    if (prim.coeffs >> (s - 1 - k)) & 1 == 1 {
                        x ^= v[i - k];
                    }
                }
                v[i] = x;
            }
        }
        out.push(v);
    }
    out
}

/// Sobol' points in `[0, 1)^d`. The origin (index 0) is never emitted;
/// the first call to [`SobolGenerator::next_point`] returns index 1.
#[derive(Debug, Clone)]
pub struct SobolGenerator {
    directions: Vec<[u32; MAX_BITS]>,
    bits: usize,
    scale: f64,
    set: DirectionSet,
    counter: u64,
    state: Vec<u32>,
}

impl SobolGenerator {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_set(dim, DirectionSet::default())
    }

    pub fn with_set(dim: usize, set: DirectionSet) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!(
                "Sobol' dimension {dim} outside 1..={MAX_DIM}"
            )));
        }
        Ok(Self {
            directions: direction_numbers(dim, set),
            bits: set.bits(),
            scale: 0.5f64.powi(set.bits() as i32),
            set,
            counter: 0,
            state: vec![0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    pub fn direction_set(&self) -> DirectionSet {
        self.set
    }

    /// Index of the point the next call will return.
    pub fn next_index(&self) -> u64 {
        self.counter + 1
    }

    /// Positions the generator so that the next point has sequence index
    /// `index` (at least 1).
    pub fn seek(&mut self, index: u64) {
        let prev = index.max(1) - 1;
        let gray = prev ^ (prev >> 1);
        for (d, s) in self.state.iter_mut().enumerate() {
            let mut x = 0u32;
            for bit in 0..self.bits {
                if (gray >> bit) & 1 == 1 {
                    x ^= self.directions[d][bit];
                }
            }
            *s = x;
        }
        self.counter = prev;
    }

    /// Writes the next point into `out` (length `dim`).
    pub fn next_into(&mut self, out: &mut [f64]) {
        let c = self.counter.trailing_ones() as usize;
        assert!(c < self.bits, "Sobol' sequence exhausted");
        for (d, (s, o)) in self.state.iter_mut().zip(out.iter_mut()).enumerate() {
            *s ^= self.directions[d][c];
            *o = *s as f64 * self.scale;
        }
        self.counter += 1;
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.next_into(&mut p);
        p
    }
}

impl Iterator for SobolGenerator {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        Some(self.next_point())
    }
}

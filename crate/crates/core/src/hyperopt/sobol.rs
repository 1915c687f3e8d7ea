//! Unscrambled Sobol points in up to 16 dimensions (Joe-Kuo direction
//! numbers, Gray-code ordering).

use super::SearchError;

pub const MAX_DIM: usize = 16;
const BITS: usize = 32;

/// `(s, a, m_1..m_s)` for dimensions 2..=16; dimension 1 is the van der
/// Corput sequence.
const DIRECTIONS: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

/// Direction integers `v_k = m_k * 2^(32 - k)` for one dimension (0-based).
fn direction_integers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = DIRECTIONS[dim - 1];
    let s = s as usize;
    for k in 0..s {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            if (a >> (s - 1 - j)) & 1 == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// Sobol generator for a fixed dimension.
#[derive(Clone, Debug)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self, SearchError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SearchError::SobolDimension(dim));
        }
        Ok(Self {
            directions: (0..dim).map(direction_integers).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// The point at `index`; index 0 is the origin.
    pub fn point(&self, index: u32) -> Vec<f64> {
        let gray = index ^ (index >> 1);
        self.directions
            .iter()
            .map(|v| {
                let x = (0..BITS)
                    .filter(|&k| gray & (1 << k) != 0)
                    .fold(0u32, |acc, k| acc ^ v[k]);
                f64::from(x) / 4_294_967_296.0
            })
            .collect()
    }
}

pub fn sobol_point(index: u32, dim: usize) -> Result<Vec<f64>, SearchError> {
    Ok(Sobol::new(dim)?.point(index))
}

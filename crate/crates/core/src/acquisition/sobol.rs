use rand::Rng;

use super::joe_kuo::{DIRECTIONS, MAX_DIMENSION};
use super::SearchDomain;
use crate::error::{Error, Result};
use crate::gp::PruningPolicy;

const BITS: usize = 32;

/// Gray-code Sobol generator with Joe–Kuo direction numbers.
///
/// The stream starts at index 1, so the first point is `(0.5, .., 0.5)`.
/// An optional digital shift XORs a fixed word into each coordinate, which
/// keeps the net structure while decorrelating streams with different seeds.
#[derive(Debug, Clone)]
pub struct SobolStream {
    directions: Vec<[u32; BITS]>,
    shift: Vec<u32>,
    /// Unshifted integer coordinates of the last emitted point.
    state: Vec<u32>,
    /// Index of the next point to emit.
    index: u64,
}

impl SobolStream {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(Error::DimensionMismatch {
                expected: MAX_DIMENSION,
                found: dim,
            });
        }
        let directions = (0..dim).map(direction_numbers).collect();
        Ok(Self {
            directions,
            shift: vec![0; dim],
            state: vec![0; dim],
            index: 1,
        })
    }

    /// A stream whose coordinates are XOR-shifted by random words.
    pub fn with_digital_shift<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Self> {
        let mut stream = Self::new(dim)?;
        stream.shift = (0..dim).map(|_| rng.gen()).collect();
        Ok(stream)
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Index of the point the next call will return.
    pub fn next_index(&self) -> u64 {
        self.index
    }

    /// Next point in `[0, 1)^d`.
    pub fn next_unit(&mut self) -> Vec<f64> {
        // Point i differs from point i-1 in the direction of the lowest zero
        // bit of i-1.
        let bit = (!(self.index - 1)).trailing_zeros() as usize;
        assert!(bit < BITS, "sobol stream exhausted");
        for (s, v) in self.state.iter_mut().zip(&self.directions) {
            *s ^= v[bit];
        }
        self.index += 1;
        self.state
            .iter()
            .zip(&self.shift)
            .map(|(s, sh)| to_unit(s ^ sh))
            .collect()
    }

    /// Next point mapped affinely into `domain`.
    pub fn next_in(&mut self, domain: &SearchDomain) -> Result<PruningPolicy> {
        if domain.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: domain.dim(),
            });
        }
        let u = self.next_unit();
        PruningPolicy::new(domain.map_unit(&u))
    }

    /// The unshifted point with the given index, computed directly.
    pub fn point(&self, index: u64) -> Vec<f64> {
        let gray = index ^ (index >> 1);
        self.directions
            .iter()
            .zip(&self.shift)
            .map(|(v, sh)| {
                let mut x = 0u32;
                for (bit, dir) in v.iter().enumerate() {
                    if gray >> bit & 1 == 1 {
                        x ^= dir;
                    }
                }
                to_unit(x ^ sh)
            })
            .collect()
    }
}

/// Draws the next stream point into `domain` (see [`SobolStream::next_in`]).
pub fn sobol_next(stream: &mut SobolStream, domain: &SearchDomain) -> Result<PruningPolicy> {
    stream.next_in(domain)
}

#[inline]
fn to_unit(x: u32) -> f64 {
    x as f64 / (1u64 << BITS) as f64
}

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (poly, init) = DIRECTIONS[dim - 1];
    let degree = (32 - poly.leading_zeros() - 1) as usize;
    let mut m = [0u32; BITS];
    m[..degree].copy_from_slice(&init[..degree]);
    for k in degree..BITS {
        let mut value = m[k - degree] ^ (m[k - degree] << degree);
        for i in 1..degree {
            if poly >> (degree - i) & 1 == 1 {
                value ^= m[k - i] << i;
            }
        }
        m[k] = value;
    }
    for (k, vk) in v.iter_mut().enumerate() {
        *vk = m[k] << (BITS - 1 - k);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_prefix() {
        let mut s = SobolStream::new(1).unwrap();
        let pts: Vec<f64> = (0..3).map(|_| s.next_unit()[0]).collect();
        assert_eq!(pts, [0.5, 0.75, 0.25]);
    }

    #[test]
    fn incremental_and_direct_agree() {
        let mut s = SobolStream::new(9).unwrap();
        for i in 1..300u64 {
            assert_eq!(s.next_unit(), s.point(i));
        }
    }

    #[test]
    fn dimension_limits() {
        assert!(SobolStream::new(0).is_err());
        assert!(SobolStream::new(MAX_DIMENSION).is_ok());
        assert!(SobolStream::new(MAX_DIMENSION + 1).is_err());
    }
}

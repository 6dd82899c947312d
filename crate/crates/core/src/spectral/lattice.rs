//! Truncated upper-half wavenumber lattice and its grid geometry.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Truncated set of retained wavenumbers plus derived geometry.
///
/// The retained modes are the upper half-lattice
/// `{k != 0 : k1 + k2 > 0} U {k : k1 + k2 = 0, k1 > 0}` intersected with
/// `max(k1, k2) <= L`; together with their mirrors this is exactly the square
/// `max(|k1|, |k2|) <= L` minus the origin. Modes are ordered
/// lexicographically by `(k1, k2)` so that layouts are reproducible.
#[derive(Debug)]
pub struct Lattice {
    max_wavenumber: i32,
    modes: Vec<[i32; 2]>,
    index: HashMap<[i32; 2], usize>,
    norm: Vec<f64>,
    norm_sq: Vec<f64>,
    basis: Vec<[f64; 2]>,
    grid_size: usize,
}

impl Lattice {
    /// Build the lattice truncated at `max_wavenumber` (often written `L`).
    ///
    /// The transform grid is the smallest power of two with
    /// `M >= 2 (2L + 1)`; quadratic products of retained modes are then
    /// alias-free on the retained set (`M > 3L`), so projecting back onto the
    /// lattice is itself the dealiasing step.
    pub fn new(max_wavenumber: u32) -> Result<Self> {
        if max_wavenumber == 0 {
            return Err(Error::InvalidParameter {
                name: "max_wavenumber",
                reason: "must be at least 1".into(),
            });
        }
        let l = max_wavenumber as i32;
        let mut modes = Vec::new();
        for k1 in -l..=l {
            for k2 in -l..=l {
                let upper = k1 + k2 > 0 || (k1 + k2 == 0 && k1 > 0);
                if upper && k1.max(k2) <= l {
                    modes.push([k1, k2]);
                }
            }
        }
        let index = modes
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, i))
            .collect::<HashMap<_, _>>();
        let norm_sq: Vec<f64> = modes
            .iter()
            .map(|&[k1, k2]| (k1 * k1 + k2 * k2) as f64)
            .collect();
        let norm: Vec<f64> = norm_sq.iter().map(|&s| s.sqrt()).collect();
        let basis = modes
            .iter()
            .zip(&norm)
            .map(|(&[k1, k2], &n)| {
                let scale = 1.0 / (2.0 * std::f64::consts::PI * n);
                [-(k2 as f64) * scale, k1 as f64 * scale]
            })
            .collect();
        let grid_size = (2 * (2 * max_wavenumber as usize + 1)).next_power_of_two();
        Ok(Self {
            max_wavenumber: l,
            modes,
            index,
            norm,
            norm_sq,
            basis,
            grid_size,
        })
    }

    /// Truncation wavenumber `L`.
    pub fn max_wavenumber(&self) -> u32 {
        self.max_wavenumber as u32
    }

    /// Number of stored (upper half-lattice) modes: `2 L (L + 1)`.
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Stored wavenumbers in lexicographic order.
    pub fn modes(&self) -> &[[i32; 2]] {
        &self.modes
    }

    /// Index of an upper half-lattice wavenumber, if stored.
    pub fn index_of(&self, k: [i32; 2]) -> Option<usize> {
        self.index.get(&k).copied()
    }

    /// `|k|` per stored mode.
    pub fn norm(&self) -> &[f64] {
        &self.norm
    }

    /// `|k|^2` per stored mode.
    pub fn norm_sq(&self) -> &[f64] {
        &self.norm_sq
    }

    /// Divergence-free basis direction `k_perp / (2 pi |k|)` per stored mode.
    pub fn basis(&self) -> &[[f64; 2]] {
        &self.basis
    }

    /// Side length `M` of the physical transform grid.
    pub fn grid_size(&self) -> usize {
        self.grid_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_count_matches_closed_form() {
        for l in [1u32, 2, 5, 16] {
            let lat = Lattice::new(l).unwrap();
            assert_eq!(lat.n_modes(), (2 * l * (l + 1)) as usize);
        }
    }

    #[test]
    fn upper_half_and_mirrors_tile_the_square() {
        let l = 3;
        let lat = Lattice::new(l).unwrap();
        let mut seen = std::collections::HashSet::new();
        for &[k1, k2] in lat.modes() {
            assert!(k1 + k2 > 0 || (k1 + k2 == 0 && k1 > 0), "not upper half: {k1},{k2}");
            assert!(seen.insert([k1, k2]) && seen.insert([-k1, -k2]));
        }
        let li = l as i32;
        for k1 in -li..=li {
            for k2 in -li..=li {
                assert_eq!(seen.contains(&[k1, k2]), (k1, k2) != (0, 0));
            }
        }
    }

    #[test]
    fn modes_are_lexicographically_sorted() {
        let lat = Lattice::new(4).unwrap();
        let mut sorted = lat.modes().to_vec();
        sorted.sort();
        assert_eq!(sorted, lat.modes());
    }

    #[test]
    fn grid_size_is_a_large_enough_power_of_two() {
        for (l, m) in [(2u32, 16usize), (8, 64), (16, 128), (64, 512)] {
            let lat = Lattice::new(l).unwrap();
            assert_eq!(lat.grid_size(), m);
            assert!(lat.grid_size() >= 2 * (2 * l as usize + 1));
        }
    }

    #[test]
    fn zero_truncation_is_rejected() {
        assert!(Lattice::new(0).is_err());
    }
}

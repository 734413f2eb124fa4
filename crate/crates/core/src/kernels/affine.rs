use serde::{Deserialize, Serialize};

/// Index expression of one array dimension:
/// `constant + Σ temporal[i]·t_i + spatial[0]·x + spatial[1]·y`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DimAccess {
    pub constant: i64,
    pub temporal: Vec<i64>,
    pub spatial: [i64; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AccessFunction {
    pub dims: Vec<DimAccess>,
}

impl AccessFunction {
    /// Builds from `(dimension, spatial axis, coefficient)` triples.
    pub fn from_spatial(ndims: usize, coeffs: &[(usize, usize, i64)]) -> Self {
        let mut f = AccessFunction {
            dims: vec![DimAccess::default(); ndims],
        };
        for &(k, j, a) in coeffs {
            f.dims[k].spatial[j] = a;
        }
        f
    }
}

/// Why an access function cannot be mapped onto nearest-neighbour links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AffineWitness {
    /// The only spatial coefficient is outside {-1, 0, 1}.
    Coefficient { dim: usize, axis: usize, value: i64 },
    /// More than one spatial coefficient is nonzero.
    MultipleSpatial(Vec<(usize, usize, i64)>),
}

/// At most one spatial coefficient may be nonzero, and it must be ±1.
pub fn check_affine_mappability(f: &AccessFunction) -> (bool, Option<AffineWitness>) {
    let nonzero: Vec<(usize, usize, i64)> = f
        .dims
        .iter()
        .enumerate()
        .flat_map(|(k, d)| (0..2).map(move |j| (k, j, d.spatial[j])))
        .filter(|c| c.2 != 0)
        .collect();
    match nonzero.as_slice() {
        [] => (true, None),
        [(_, _, 1 | -1)] => (true, None),
        [(dim, axis, value)] => (
            false,
            Some(AffineWitness::Coefficient { dim: *dim, axis: *axis, value: *value }),
        ),
        _ => (false, Some(AffineWitness::MultipleSpatial(nonzero))),
    }
}

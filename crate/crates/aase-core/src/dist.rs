//! Probability vectors and conditional probability tables.
//!
//! Everything is stored dense and in linear space. Normalization happens at
//! the call sites that need it (the inference engines renormalize after every
//! summarization step and collect the log of each normalizer separately).

use rand::Rng;

use crate::num::Real;

/// A probability mass function over a finite space, stored by index.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf<R: Real = f64> {
    values: Vec<R>,
}

impl<R: Real> Pmf<R> {
    pub fn new(values: Vec<R>) -> Self {
        Self { values }
    }

    pub fn uniform(len: usize) -> Self {
        let w = R::one() / R::of(len as f64);
        Self {
            values: vec![w; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, ix: usize) -> R {
        self.values[ix]
    }

    pub fn as_slice(&self) -> &[R] {
        &self.values
    }

    pub fn sum(&self) -> R {
        self.values.iter().copied().sum()
    }

    /// Deviation from a valid distribution, if any.
    pub fn defect(&self) -> Option<RowDefect> {
        row_defect(&self.values)
    }

    /// Index of the largest mass; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    /// Inverse-CDF draw. The uniform variate is drawn in `f64` so a model in
    /// any scalar type consumes the RNG stream identically.
    pub fn sample<G: Rng>(&self, rng: &mut G) -> usize {
        sample_index(&self.values, rng)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<R: Real>(values: &[R]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from an unnormalized nonnegative weight row.
pub fn sample_index<R: Real, G: Rng>(weights: &[R], rng: &mut G) -> usize {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    debug_assert!(total > 0.0, "sampling from an all-zero row");
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w.as_f64();
        if u < acc {
            return i;
        }
    }
    // Rounding can push the accumulator fractionally below the target.
    weights.len() - 1
}

/// Why a row fails to be a probability distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum RowDefect {
    Negative { index: usize, value: f64 },
    NotNormalized { sum: f64 },
    NotFinite { index: usize },
}

fn row_defect<R: Real>(row: &[R]) -> Option<RowDefect> {
    for (i, v) in row.iter().enumerate() {
        if !v.is_finite() {
            return Some(RowDefect::NotFinite { index: i });
        }
        if *v < R::zero() {
            return Some(RowDefect::Negative {
                index: i,
                value: v.as_f64(),
            });
        }
    }
    let sum: R = row.iter().copied().sum();
    if (sum - R::one()).abs() > R::stochastic_tol() {
        return Some(RowDefect::NotNormalized { sum: sum.as_f64() });
    }
    None
}

/// A dense conditional probability table.
///
/// `cond_dims` lists the cardinality of each conditioning variable in order;
/// `out_dim` is the cardinality of the outcome. Data is row-major over the
/// conditioning indices, with the outcome as the innermost axis, so `row(c)`
/// is the distribution of the outcome given the conditioning assignment `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct CondTable<R: Real = f64> {
    cond_dims: Vec<usize>,
    out_dim: usize,
    data: Vec<R>,
}

impl<R: Real> CondTable<R> {
    pub fn new(cond_dims: Vec<usize>, out_dim: usize, data: Vec<R>) -> Self {
        let rows: usize = cond_dims.iter().product();
        assert_eq!(
            data.len(),
            rows * out_dim,
            "table data length must equal product of dimensions"
        );
        Self {
            cond_dims,
            out_dim,
            data,
        }
    }

    /// Builds the table by evaluating `f` on every conditioning assignment.
    pub fn from_fn(cond_dims: Vec<usize>, out_dim: usize, mut f: impl FnMut(&[usize]) -> Vec<R>) -> Self {
        let rows: usize = cond_dims.iter().product();
        let mut data = Vec::with_capacity(rows * out_dim);
        let mut ix = vec![0usize; cond_dims.len()];
        for _ in 0..rows {
            let row = f(&ix);
            assert_eq!(row.len(), out_dim, "row builder returned wrong width");
            data.extend_from_slice(&row);
            for d in (0..cond_dims.len()).rev() {
                ix[d] += 1;
                if ix[d] < cond_dims[d] {
                    break;
                }
                ix[d] = 0;
            }
        }
        Self {
            cond_dims,
            out_dim,
            data,
        }
    }

    pub fn cond_dims(&self) -> &[usize] {
        &self.cond_dims
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn row_count(&self) -> usize {
        self.cond_dims.iter().product()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    fn flat_row(&self, cond: &[usize]) -> usize {
        debug_assert_eq!(cond.len(), self.cond_dims.len());
        let mut flat = 0usize;
        for (i, &c) in cond.iter().enumerate() {
            debug_assert!(c < self.cond_dims[i]);
            flat = flat * self.cond_dims[i] + c;
        }
        flat
    }

    /// Outcome distribution for one conditioning assignment.
    pub fn row(&self, cond: &[usize]) -> &[R] {
        let r = self.flat_row(cond);
        &self.data[r * self.out_dim..(r + 1) * self.out_dim]
    }

    pub fn value(&self, cond: &[usize], out: usize) -> R {
        self.row(cond)[out]
    }

    /// Row index decoded back into a conditioning assignment.
    pub fn decode_row(&self, mut flat: usize) -> Vec<usize> {
        let mut ix = vec![0usize; self.cond_dims.len()];
        for d in (0..self.cond_dims.len()).rev() {
            ix[d] = flat % self.cond_dims[d];
            flat /= self.cond_dims[d];
        }
        ix
    }

    /// First row that fails to be a distribution, with its defect.
    pub fn first_defect(&self) -> Option<(Vec<usize>, RowDefect)> {
        for r in 0..self.row_count() {
            let row = &self.data[r * self.out_dim..(r + 1) * self.out_dim];
            if let Some(d) = row_defect(row) {
                return Some((self.decode_row(r), d));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pmf_defects() {
        assert_eq!(Pmf::<f64>::new(vec![0.5, 0.5]).defect(), None);
        assert!(matches!(
            Pmf::<f64>::new(vec![0.5, 0.6]).defect(),
            Some(RowDefect::NotNormalized { .. })
        ));
        assert!(matches!(
            Pmf::<f64>::new(vec![-0.1, 1.1]).defect(),
            Some(RowDefect::Negative { index: 0, .. })
        ));
        assert!(matches!(
            Pmf::<f64>::new(vec![f64::NAN, 1.0]).defect(),
            Some(RowDefect::NotFinite { index: 0 })
        ));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let p = Pmf::<f64>::new(vec![0.0, 0.3, 0.7]);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x = p.sample(&mut a);
            assert_eq!(x, p.sample(&mut b));
            assert_ne!(x, 0, "zero-mass outcome must never be drawn");
        }
    }

    #[test]
    fn cond_table_rows_and_decode() {
        // 2 x 3 conditioning, binary outcome; row value encodes its position.
        let t = CondTable::<f64>::from_fn(vec![2, 3], 2, |ix| {
            let v = (ix[0] * 3 + ix[1]) as f64;
            vec![v, -v]
        });
        assert_eq!(t.row(&[1, 2]), &[5.0, -5.0]);
        assert_eq!(t.decode_row(5), vec![1, 2]);
        assert_eq!(t.row_count(), 6);
    }

    #[test]
    fn first_defect_reports_conditioning_assignment() {
        let t = CondTable::<f64>::from_fn(vec![2, 2], 2, |ix| {
            if ix == [1, 0] {
                vec![0.9, 0.2]
            } else {
                vec![0.5, 0.5]
            }
        });
        let (cond, defect) = t.first_defect().unwrap();
        assert_eq!(cond, vec![1, 0]);
        assert!(matches!(defect, RowDefect::NotNormalized { .. }));
    }
}

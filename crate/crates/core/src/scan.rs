//! Affine maps `z -> F z + c` under composition, and inclusive scans over
//! them.
//!
//! The element list for the recursion `z_{k+1} = F_k z_k + c_k` starting at
//! `z_0` is built by [`init_elements`]: the first element has a zero matrix
//! and absorbs `z_0`, so every prefix of the scan is a constant map whose
//! offset is the state itself.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{gemv_add_assign, left_mul_assign, mat_mul, mat_vec, Mat, Vector};

/// The affine map `z -> f z + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineElement {
    pub f: Mat,
    pub c: Vector,
}

impl AffineElement {
    pub fn new(f: Mat, c: Vector) -> Result<Self> {
        if !f.is_square() {
            return Err(Error::DimensionMismatch {
                op: "AffineElement::new",
                expected: f.rows(),
                found: f.cols(),
            });
        }
        if c.dim() != f.rows() {
            return Err(Error::DimensionMismatch {
                op: "AffineElement::new",
                expected: f.rows(),
                found: c.dim(),
            });
        }
        Ok(Self { f, c })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            f: Mat::identity(dim),
            c: Vector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }

    pub fn apply(&self, z: &Vector) -> Vector {
        mat_vec(&self.f, z).expect("dimension checked").add(&self.c)
    }

    /// `self <- earlier` followed by `self`.
    #[inline]
    fn absorb_earlier(&mut self, earlier: &AffineElement) {
        gemv_add_assign(&mut self.c, &self.f, &earlier.c);
        left_mul_assign(&mut self.f, &earlier.f);
    }
}

/// Composition applying `earlier` first, then `later`:
/// `(F_l F_e, F_l c_e + c_l)`.
pub fn combine(earlier: &AffineElement, later: &AffineElement) -> Result<AffineElement> {
    if earlier.dim() != later.dim() {
        return Err(Error::DimensionMismatch {
            op: "combine",
            expected: earlier.dim(),
            found: later.dim(),
        });
    }
    Ok(AffineElement {
        f: mat_mul(&later.f, &earlier.f)?,
        c: mat_vec(&later.f, &earlier.c)?.add(&later.c),
    })
}

/// Elements for `z_{k+1} = F_k z_k + c_k`, `k = 0..N-1`. The first element is
/// `(0, F_0 z_0 + c_0)`; the rest are `(F_k, c_k)`.
pub fn init_elements(f_seq: Vec<Mat>, c_seq: Vec<Vector>, z0: &Vector) -> Result<Vec<AffineElement>> {
    if f_seq.is_empty() {
        return Err(Error::EmptyInput("init_elements"));
    }
    if f_seq.len() != c_seq.len() {
        return Err(Error::DimensionMismatch {
            op: "init_elements",
            expected: f_seq.len(),
            found: c_seq.len(),
        });
    }
    let d = z0.dim();
    let mut out = Vec::with_capacity(f_seq.len());
    for (k, (f, c)) in f_seq.into_iter().zip(c_seq).enumerate() {
        let e = AffineElement::new(f, c)?;
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                op: "init_elements",
                expected: d,
                found: e.dim(),
            });
        }
        if k == 0 {
            out.push(AffineElement {
                f: Mat::zeros(d, d),
                c: e.apply(z0),
            });
        } else {
            out.push(e);
        }
    }
    Ok(out)
}

fn check_uniform(elements: &[AffineElement], op: &'static str) -> Result<()> {
    let first = elements.first().ok_or(Error::EmptyInput(op))?;
    let d = first.dim();
    for e in elements {
        if e.dim() != d || e.f.rows() != d || !e.f.is_square() {
            return Err(Error::DimensionMismatch {
                op,
                expected: d,
                found: e.dim(),
            });
        }
    }
    Ok(())
}

/// Left-to-right inclusive scan.
pub fn scan_sequential(elements: &[AffineElement]) -> Result<Vec<AffineElement>> {
    check_uniform(elements, "scan_sequential")?;
    let mut out = elements.to_vec();
    scan_sequential_in_place(&mut out);
    Ok(out)
}

pub fn scan_sequential_in_place(elements: &mut [AffineElement]) {
    for k in 1..elements.len() {
        let (done, rest) = elements.split_at_mut(k);
        rest[0].absorb_earlier(&done[k - 1]);
    }
}

/// Inclusive scan with logarithmic combine depth, run on the current rayon
/// pool.
pub fn scan_parallel(elements: &[AffineElement]) -> Result<Vec<AffineElement>> {
    check_uniform(elements, "scan_parallel")?;
    let mut out = elements.to_vec();
    scan_parallel_in_place(&mut out);
    Ok(out)
}

pub fn scan_parallel_in_place(elements: &mut [AffineElement]) {
    tree_scan(elements, |earlier, later| later.absorb_earlier(earlier));
}

/// Chunks below this many combines are not split further across workers.
const MIN_COMBINES_PER_TASK: usize = 256;

/// In-place inclusive scan in up-sweep/down-sweep form. `op(earlier, later)`
/// must replace `later` with the composition of `earlier` then `later`.
///
/// After the up-sweep, index `i` holds the fold of the block ending at `i`
/// whose length is the lowest set bit of `i + 1`. The down-sweep then fills
/// in the remaining prefixes. Both sweeps have at most `floor(log2 n)`
/// levels.
pub(crate) fn tree_scan<T, F>(items: &mut [T], op: F)
where
    T: Send + Sync,
    F: Fn(&T, &mut T) + Sync,
{
    let n = items.len();
    if n < 2 {
        return;
    }
    let mut top = 1;
    let mut d = 1;
    while 2 * d <= n {
        sweep_level(items, d, &op);
        top = d;
        d *= 2;
    }
    let mut d = top;
    while d >= 1 {
        if 2 * d < n {
            sweep_level(&mut items[d..], d, &op);
        }
        d /= 2;
    }
}

/// One level: within each full block of `2d`, fold index `d-1` into `2d-1`.
fn sweep_level<T, F>(items: &mut [T], d: usize, op: &F)
where
    T: Send + Sync,
    F: Fn(&T, &mut T) + Sync,
{
    let min_len = (MIN_COMBINES_PER_TASK / 2).max(1);
    items
        .par_chunks_mut(2 * d)
        .with_min_len(min_len)
        .for_each(|chunk| {
            if chunk.len() == 2 * d {
                let (lo, hi) = chunk.split_at_mut(d);
                op(&lo[d - 1], &mut hi[d - 1]);
            }
        });
}

/// States `z_1..z_N` from scanned prefixes.
pub fn extract_states(prefixes: &[AffineElement]) -> Vec<Vector> {
    prefixes.iter().map(|p| p.c.clone()).collect()
}

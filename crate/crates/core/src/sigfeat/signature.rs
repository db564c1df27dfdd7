//! Truncated path signatures.
//!
//! Coefficients are stored level-major: level 0 (the constant 1), then the
//! `d` level-1 entries, then the `d²` level-2 entries with row-major
//! multi-indices, and so on up to the truncation depth `m`. For `d = 2` and
//! `m = 4` that is 31 numbers, for `d = 3` and `m = 4` it is 121.

use crate::error::{Error, Result};

/// Number of coefficients `1 + d + d² + … + d^m`.
pub const fn signature_len(dim: usize, depth: usize) -> usize {
    let mut total = 0;
    let mut pow = 1;
    let mut k = 0;
    while k <= depth {
        total += pow;
        pow *= dim;
        k += 1;
    }
    total
}

const _: () = assert!(signature_len(2, 4) == 31);
const _: () = assert!(signature_len(3, 4) == 121);

fn level_offset(dim: usize, level: usize) -> usize {
    if level == 0 {
        0
    } else {
        signature_len(dim, level - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSignature {
    dim: usize,
    depth: usize,
    coeffs: Vec<f64>,
}

impl TruncatedSignature {
    /// The unit of the truncated tensor algebra, `(1, 0, …, 0)`.
    pub fn identity(dim: usize, depth: usize) -> Self {
        assert!(dim >= 1, "path dimension must be positive");
        let mut coeffs = vec![0.0; signature_len(dim, depth)];
        coeffs[0] = 1.0;
        Self { dim, depth, coeffs }
    }

    pub fn from_coeffs(dim: usize, depth: usize, coeffs: Vec<f64>) -> Result<Self> {
        if dim == 0 || coeffs.len() != signature_len(dim, depth) {
            return Err(Error::InvalidInput(format!(
                "{} coefficients do not form a depth-{depth} signature over dimension {dim}",
                coeffs.len()
            )));
        }
        Ok(Self { dim, depth, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn level(&self, k: usize) -> &[f64] {
        let start = level_offset(self.dim, k);
        &self.coeffs[start..start + self.dim.pow(k as u32)]
    }

    /// Coefficient of the multi-index `word` (0-based letters).
    pub fn get(&self, word: &[usize]) -> f64 {
        let idx = word.iter().fold(0, |acc, &w| acc * self.dim + w);
        self.level(word.len())[idx]
    }

    pub fn max_abs_diff(&self, other: &TruncatedSignature) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Right-multiplies by the exponential of a straight segment, in place.
    ///
    /// Level `k` becomes `Σ_j S_{k-j} ⊗ Δ^{⊗j} / j!`, evaluated with a Horner
    /// scheme from the top level down so lower levels are still the old ones.
    fn extend_segment(&mut self, delta: &[f64], acc: &mut Vec<f64>, next: &mut Vec<f64>) {
        let d = self.dim;
        for k in (1..=self.depth).rev() {
            acc.clear();
            acc.extend(delta.iter().map(|&x| x / k as f64));
            for j in 1..k {
                let off = level_offset(d, j);
                let scale = 1.0 / (k - j) as f64;
                next.clear();
                for (a, s) in acc.iter().zip(&self.coeffs[off..off + acc.len()]) {
                    let base = (a + s) * scale;
                    next.extend(delta.iter().map(|&x| base * x));
                }
                std::mem::swap(acc, next);
            }
            let off = level_offset(d, k);
            for (c, a) in self.coeffs[off..off + acc.len()].iter_mut().zip(acc.iter()) {
                *c += a;
            }
        }
    }
}

/// Signature of a single straight segment: level `k` is `Δ^{⊗k} / k!`.
pub fn segment_signature(delta: &[f64], depth: usize) -> TruncatedSignature {
    let d = delta.len();
    let mut sig = TruncatedSignature::identity(d, depth);
    for k in 1..=depth {
        let (lower, upper) = sig.coeffs.split_at_mut(level_offset(d, k));
        let prev = &lower[level_offset(d, k - 1)..];
        let inv = 1.0 / k as f64;
        for (i, &p) in prev.iter().enumerate() {
            for (j, &x) in delta.iter().enumerate() {
                upper[i * d + j] = p * x * inv;
            }
        }
    }
    sig
}

/// Product in the truncated tensor algebra: level `k` of the result is
/// `Σ_{i+j=k} a_i ⊗ b_j`.
pub fn chen_concat(a: &TruncatedSignature, b: &TruncatedSignature) -> Result<TruncatedSignature> {
    if a.dim != b.dim || a.depth != b.depth {
        return Err(Error::InvalidInput(format!(
            "cannot concatenate signatures of (dim {}, depth {}) and (dim {}, depth {})",
            a.dim, a.depth, b.dim, b.depth
        )));
    }
    let mut out = TruncatedSignature { dim: a.dim, depth: a.depth, coeffs: vec![0.0; a.coeffs.len()] };
    for k in 0..=a.depth {
        let off = level_offset(a.dim, k);
        for i in 0..=k {
            let (la, lb) = (a.level(i), b.level(k - i));
            let dst = &mut out.coeffs[off..];
            for (p, &x) in la.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &mut dst[p * lb.len()..(p + 1) * lb.len()];
                for (r, &y) in row.iter_mut().zip(lb) {
                    *r += x * y;
                }
            }
        }
    }
    Ok(out)
}

/// Reusable scratch space for computing many signatures without allocating.
#[derive(Debug, Default)]
pub struct SignatureScratch {
    acc: Vec<f64>,
    next: Vec<f64>,
    delta: Vec<f64>,
}

/// Signature of the polyline through `points`, built left to right from its
/// segments. A single point yields the identity.
pub fn path_signature<const D: usize>(points: &[[f64; D]], depth: usize) -> Result<TruncatedSignature> {
    if points.is_empty() {
        return Err(Error::InvalidInput("path needs at least one point".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("path contains a non-finite coordinate".into()));
    }
    let mut sig = TruncatedSignature::identity(D, depth);
    let mut scratch = SignatureScratch::default();
    signature_into(points.iter().map(|p| p.as_slice()), &mut sig, &mut scratch);
    Ok(sig)
}

/// Overwrites `sig` with the signature of the given points. `sig` keeps its
/// dimension and depth; every point must have that dimension.
pub fn signature_into<'a>(
    points: impl IntoIterator<Item = &'a [f64]>,
    sig: &mut TruncatedSignature,
    scratch: &mut SignatureScratch,
) {
    sig.coeffs.fill(0.0);
    sig.coeffs[0] = 1.0;
    let mut prev: Option<&[f64]> = None;
    for p in points {
        debug_assert_eq!(p.len(), sig.dim);
        if let Some(q) = prev {
            scratch.delta.clear();
            scratch.delta.extend(p.iter().zip(q).map(|(a, b)| a - b));
            let delta = std::mem::take(&mut scratch.delta);
            sig.extend_segment(&delta, &mut scratch.acc, &mut scratch.next);
            scratch.delta = delta;
        }
        prev = Some(p);
    }
}

/// Direct discretisation of the iterated integrals, for testing.
///
/// Each segment is split into `refine` equal pieces and every level is
/// accumulated with the trapezoidal rule `I^k += ½ (I^{k-1}_old + I^{k-1}_new) ⊗ ΔX`.
/// Levels 0-2 are exact on polylines; higher levels converge as `refine⁻²`.
pub fn iterated_sum_oracle<const D: usize>(points: &[[f64; D]], depth: usize, refine: usize) -> TruncatedSignature {
    assert!(refine >= 1, "refine must be at least 1");
    let mut levels: Vec<Vec<f64>> = (0..=depth).map(|k| vec![0.0; D.pow(k as u32)]).collect();
    levels[0][0] = 1.0;
    for w in points.windows(2) {
        let mut delta = [0.0; D];
        for (i, d) in delta.iter_mut().enumerate() {
            *d = (w[1][i] - w[0][i]) / refine as f64;
        }
        for _ in 0..refine {
            let mut below_new = levels[0].clone();
            for k in 1..=depth {
                let mut updated = levels[k].clone();
                for (i, (&old, &new)) in levels[k - 1].iter().zip(&below_new).enumerate() {
                    let avg = 0.5 * (old + new);
                    for (j, &x) in delta.iter().enumerate() {
                        updated[i * D + j] += avg * x;
                    }
                }
                levels[k - 1] = below_new;
                below_new = updated;
            }
            levels[depth] = below_new;
        }
    }
    TruncatedSignature { dim: D, depth, coeffs: levels.concat() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths() {
        assert_eq!(signature_len(2, 4), 31);
        assert_eq!(signature_len(3, 4), 121);
        assert_eq!(signature_len(2, 0), 1);
        assert_eq!(signature_len(1, 3), 4);
    }

    #[test]
    fn zero_segment_is_identity() {
        for m in 0..5 {
            assert_eq!(segment_signature(&[0.0, 0.0], m), TruncatedSignature::identity(2, m));
        }
    }

    #[test]
    fn segment_level_two() {
        let s = segment_signature(&[1.0, 2.0], 2);
        assert_eq!(s.coeffs(), &[1.0, 1.0, 2.0, 0.5, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn one_axis_segment_is_scalar_exponential() {
        let s = segment_signature(&[1.0, 0.0, 0.0], 4);
        let expected = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (k, &e) in expected.iter().enumerate() {
            let lvl = s.level(k);
            assert!((lvl[0] - e).abs() < 1e-15);
            assert!(lvl[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_is_unit() {
        let s = segment_signature(&[0.3, -1.2], 4);
        let id = TruncatedSignature::identity(2, 4);
        assert_eq!(chen_concat(&s, &id).unwrap(), s);
        assert_eq!(chen_concat(&id, &s).unwrap(), s);
    }

    #[test]
    fn concat_rejects_mismatch() {
        let a = TruncatedSignature::identity(2, 3);
        assert!(chen_concat(&a, &TruncatedSignature::identity(3, 3)).is_err());
        assert!(chen_concat(&a, &TruncatedSignature::identity(2, 4)).is_err());
    }

    #[test]
    fn two_segments_match_chen() {
        let (u, v) = ([1.0, 0.5], [-0.25, 2.0]);
        let via_chen = chen_concat(&segment_signature(&u, 4), &segment_signature(&v, 4)).unwrap();
        let direct = path_signature(&[[0.0, 0.0], u, [u[0] + v[0], u[1] + v[1]]], 4).unwrap();
        assert!(via_chen.max_abs_diff(&direct) < 1e-12);
        assert_eq!(via_chen.level(1), &[0.75, 2.5]);
    }

    #[test]
    fn retrace_collapses() {
        let a = path_signature(&[[0.0, 0.0], [1.5, 2.5], [3.0, 3.0], [1.5, 2.5]], 4).unwrap();
        let b = path_signature(&[[0.0, 0.0], [1.5, 2.5]], 4).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12);
    }

    #[test]
    fn unit_square_area() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        let s = path_signature(&sq, 2).unwrap();
        assert!(s.level(1).iter().all(|v| v.abs() < 1e-15));
        assert!((s.get(&[0, 1]) - s.get(&[1, 0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_is_identity() {
        assert_eq!(path_signature(&[[4.0, 5.0, 6.0]], 3).unwrap(), TruncatedSignature::identity(3, 3));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(path_signature(&[[0.0, f64::NAN]], 2).is_err());
        let empty: [[f64; 2]; 0] = [];
        assert!(path_signature(&empty, 2).is_err());
    }

    #[test]
    fn midpoint_insertion_changes_nothing() {
        let a = path_signature(&[[0.0, 0.0], [2.0, 1.0], [3.0, -1.0]], 4).unwrap();
        let b = path_signature(&[[0.0, 0.0], [1.0, 0.5], [2.0, 1.0], [3.0, -1.0]], 4).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn oracle_exact_on_line_up_to_level_two() {
        let seg = segment_signature(&[0.7, -0.4], 2);
        for refine in [1, 2, 5, 16] {
            let o = iterated_sum_oracle(&[[0.0, 0.0], [0.7, -0.4]], 2, refine);
            assert!(o.max_abs_diff(&seg) < 1e-12, "refine {refine}");
        }
    }

    #[test]
    fn oracle_matches_square_at_level_three() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.0]];
        let exact = path_signature(&sq, 3).unwrap();
        let o = iterated_sum_oracle(&sq, 3, 64);
        assert!(o.max_abs_diff(&exact) < 1e-3);
    }

    #[test]
    fn get_reads_multi_index() {
        let s = segment_signature(&[1.0, 2.0, 3.0], 3);
        assert!((s.get(&[2, 0, 1]) - 3.0 * 1.0 * 2.0 / 6.0).abs() < 1e-15);
    }
}

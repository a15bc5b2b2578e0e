use crate::error::Result;
use crate::transport::ProbTensor;

use super::QuerySet;

/// Unnormalized per-pixel class scores laid out as `(classes, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticMap {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl SemanticMap {
    pub fn get(&self, j: usize, h: usize, w: usize) -> f64 {
        self.data[(j * self.height + h) * self.width + w]
    }
}

/// `out[j][h][w] = sum_q s_q(j) * m_q(h, w)` over object classes only.
pub fn aggregate_semantics(z: &QuerySet) -> SemanticMap {
    let (k, hw) = (z.classes(), z.pixels());
    let mut data = vec![0.0; k * hw];
    for q in 0..z.queries() {
        let s = z.score(q);
        let m = z.mask(q);
        for j in 0..k {
            let sj = s[j];
            if sj == 0.0 {
                continue;
            }
            for (out, &mv) in data[j * hw..(j + 1) * hw].iter_mut().zip(m) {
                *out += sj * mv;
            }
        }
    }
    SemanticMap {
        classes: k,
        height: z.height(),
        width: z.width(),
        data,
    }
}

/// Per-pixel normalization to a distribution; pixels without mass become
/// uniform.
pub fn normalize_semantics(raw: &SemanticMap) -> Result<ProbTensor> {
    let (k, hw) = (raw.classes, raw.height * raw.width);
    let mut data = raw.data.clone();
    for pix in 0..hw {
        let total: f64 = (0..k).map(|j| data[j * hw + pix]).sum();
        for j in 0..k {
            let v = &mut data[j * hw + pix];
            *v = if total > 0.0 { *v / total } else { 1.0 / k as f64 };
        }
    }
    ProbTensor::new(1, k, raw.height, raw.width, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_query_substitution() {
        // s = 0.7 on class 1, 0.3 on no-object; mask identically 1.
        let z = QuerySet::new(2, 2, 2, vec![0.0, 0.7, 0.3], vec![1.0; 4]).unwrap();
        let out = aggregate_semantics(&z);
        for h in 0..2 {
            for w in 0..2 {
                assert_eq!(out.get(0, h, w), 0.0);
                assert!((out.get(1, h, w) - 0.7).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_masks_give_zero_output() {
        let z = QuerySet::new(2, 2, 2, vec![0.2, 0.7, 0.1, 0.5, 0.5, 0.0], vec![0.0; 8]).unwrap();
        assert!(aggregate_semantics(&z).data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn overlapping_queries_add() {
        let z = QuerySet::new(2, 1, 1, vec![0.0, 0.6, 0.4, 0.0, 0.5, 0.5], vec![1.0, 0.4]).unwrap();
        assert!((aggregate_semantics(&z).get(1, 0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalization_examples() {
        let raw = SemanticMap {
            classes: 2,
            height: 1,
            width: 2,
            data: vec![0.7, 0.0, 0.1, 0.0],
        };
        let p = normalize_semantics(&raw).unwrap();
        assert!((p.get(0, 0, 0, 0) - 0.875).abs() < 1e-15);
        assert!((p.get(0, 1, 0, 0) - 0.125).abs() < 1e-15);
        assert_eq!(p.get(0, 0, 0, 1), 0.5);
        assert_eq!(p.get(0, 1, 0, 1), 0.5);
    }
}

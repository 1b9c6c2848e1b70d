use super::matrix::Matrix;

/// Uniform access to the trainable tensors of a layer or model.
///
/// Gradients are represented by a value of the same type with every tensor
/// holding `∂loss/∂tensor`, so optimizers and clipping only need to walk two
/// `ParamSet`s in lockstep. `params` and `params_mut` must list tensors in
/// the same order.
pub trait ParamSet {
    fn params(&self) -> Vec<(String, &Matrix)>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut g = self.clone();
        for m in g.params_mut() {
            m.fill(0.0);
        }
        g
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|(_, m)| m.is_finite())
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, inner: Vec<(String, &'a Matrix)>) -> Vec<(String, &'a Matrix)> {
    inner
        .into_iter()
        .map(|(n, m)| (format!("{prefix}.{n}"), m))
        .collect()
}

pub fn global_norm<P: ParamSet>(grads: &P) -> f64 {
    grads
        .params()
        .iter()
        .flat_map(|(_, m)| m.as_slice().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients by `max_norm / g` when their global L2 norm `g`
/// exceeds `max_norm`. Returns the norm measured before clipping.
pub fn clip_gradients_by_norm<P: ParamSet>(grads: &mut P, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for m in grads.params_mut() {
            m.as_mut_slice().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// Adds `other` into `acc` tensor by tensor. Both must share a layout.
pub fn accumulate<P: ParamSet>(acc: &mut P, other: &P) {
    let src = other.params();
    for (dst, (_, s)) in acc.params_mut().into_iter().zip(src) {
        for (a, b) in dst.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *a += b;
        }
    }
}

pub fn scale<P: ParamSet>(p: &mut P, factor: f64) {
    for m in p.params_mut() {
        m.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Clone)]
    struct Two(Matrix, Matrix);

    impl ParamSet for Two {
        fn params(&self) -> Vec<(String, &Matrix)> {
            vec![("a".into(), &self.0), ("b".into(), &self.1)]
        }
        fn params_mut(&mut self) -> Vec<&mut Matrix> {
            vec![&mut self.0, &mut self.1]
        }
    }

    fn two(a: Vec<f64>, b: Vec<f64>) -> Two {
        Two(Matrix::column(a), Matrix::column(b))
    }

    #[test]
    fn below_threshold_is_unchanged() {
        let mut g = two(vec![0.3], vec![0.4]);
        let before = g.clone();
        let n = clip_gradients_by_norm(&mut g, 1.0);
        assert!((n - 0.5).abs() < 1e-15);
        assert_eq!(g.0, before.0);
        assert_eq!(g.1, before.1);
    }

    #[test]
    fn above_threshold_is_rescaled() {
        let mut g = two(vec![0.0, 4.0 * 0.6], vec![4.0 * 0.8]);
        assert!((global_norm(&g) - 4.0).abs() < 1e-12);
        clip_gradients_by_norm(&mut g, 1.0);
        assert!((g.0.as_slice()[1] - 0.6).abs() < 1e-15);
        assert!((g.1.as_slice()[0] - 0.8).abs() < 1e-15);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_are_unchanged() {
        let mut g = two(vec![0.0; 3], vec![0.0; 2]);
        clip_gradients_by_norm(&mut g, 1.0);
        assert!(g.0.as_slice().iter().chain(g.1.as_slice()).all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn clipped_norm_is_bounded(
            a in prop::collection::vec(-1e3f64..1e3, 1..20),
            b in prop::collection::vec(-1e3f64..1e3, 1..20),
            max_norm in 1e-3f64..10.0,
        ) {
            let mut g = two(a, b);
            clip_gradients_by_norm(&mut g, max_norm);
            prop_assert!(global_norm(&g) <= max_norm + 1e-12);
        }
    }
}

use crate::gcn::GcnParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const STABILITY: f64 = 1e-8;

/// First and second moment estimates for every parameter entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: GcnParams,
    v: GcnParams,
    t: u32,
}

impl AdamState {
    pub fn new(params: &GcnParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }
}

/// One bias-corrected adaptive-moment update of every parameter.
pub fn adam_step(params: &mut GcnParams, grads: &GcnParams, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t as i32);
    let c2 = 1.0 - BETA2.powi(state.t as i32);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()));
    for ((p, g), (m, v)) in tensors {
        assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
        update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), lr, c1, c2);
    }
}

fn update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + STABILITY);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::DenseMatrix;

    fn scalar_params(w: f64) -> GcnParams {
        GcnParams {
            w1: DenseMatrix::scalar(w),
            b1: DenseMatrix::scalar(0.0),
            w2: DenseMatrix::scalar(0.0),
            b2: DenseMatrix::scalar(0.0),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = GcnParams::init(3, 4, 2, 0);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &before.zeros_like(), &mut s, 0.01);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = GcnParams::init(3, 4, 2, 0);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.w1.data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = if i % 2 == 0 { 3.0 } else { -0.2 });
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, 0.01);
        for ((a, b), gi) in p.w1.data().iter().zip(before.w1.data()).zip(g.w1.data()) {
            assert!(((a - b) + 0.01 * gi.signum()).abs() < 1e-8);
        }
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = scalar_params(1.0);
        let mut s = AdamState::new(&p);
        for _ in 0..200 {
            let w = p.w1.data()[0];
            let mut g = p.zeros_like();
            g.w1.data_mut()[0] = 2.0 * w;
            adam_step(&mut p, &g, &mut s, 0.01);
        }
        assert!(p.w1.data()[0].abs() < 0.5);
        assert_eq!(s.steps(), 200);
    }
}

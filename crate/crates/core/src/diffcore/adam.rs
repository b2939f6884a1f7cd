use super::{DiffError, Gradients, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParameterStore) -> AdamState {
        AdamState {
            step: 0,
            m: store.iter().map(|p| vec![0.0; p.values.len()]).collect(),
            v: store.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }
}

/// One bias-corrected adaptive-moment update of every parameter.
pub fn adam_step(
    store: &mut ParameterStore,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), DiffError> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(DiffError::shape(
            "adam_step",
            format!("{} parameters, {} gradients, {} moments", store.len(), grads.len(), state.m.len()),
        ));
    }
    for idx in 0..store.len() {
        let g = grads.by_index(idx);
        if g.len() != store.by_index(idx).values.len() || state.m[idx].len() != g.len() {
            return Err(DiffError::shape(
                "adam_step",
                format!("parameter {:?} size mismatch", store.by_index(idx).name),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for idx in 0..store.len() {
        let g = grads.by_index(idx);
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let values = store.values_mut(idx);
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(DiffError::NumericalError { op: "adam_step" });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{ParamKind, Shape, Tape};

    fn setup(values: &[f64]) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.register("p", Shape::Vector(values.len()), ParamKind::Bias).unwrap();
        s.set_values("p", values).unwrap();
        s
    }

    fn grads_for(store: &ParameterStore, coeffs: &[f64]) -> Gradients {
        // loss = Σ c_i p_i, so ∂loss/∂p = c
        let mut t = Tape::new();
        let p = t.param(store, "p").unwrap();
        let c = t.vector(coeffs.to_vec()).unwrap();
        let loss = t.dot(p, c).unwrap();
        t.backward(loss, store).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = setup(&[0.5, -0.25]);
        let before = s.clone();
        let mut st = AdamState::new(&s);
        let g = Gradients::zeros(&s);
        for _ in 0..5 {
            adam_step(&mut s, &g, &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(s, before);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so Δp = -lr·g/(|g| + eps)
        let g = [0.3, -2.0, 1e-3];
        let mut s = setup(&[0.0; 3]);
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig::default();
        let grads = grads_for(&s, &g);
        adam_step(&mut s, &grads, &mut st, &cfg).unwrap();
        let p = &s.get("p").unwrap().values;
        for (pi, gi) in p.iter().zip(&g) {
            let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((pi - expected).abs() < 1e-15, "{pi} vs {expected}");
            assert!((pi + cfg.lr * gi.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_gradient_moves_at_lr() {
        let g = [4.0, -0.01];
        let mut s = setup(&[0.0; 2]);
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig::default();
        let grads = grads_for(&s, &g);
        let mut prev = s.get("p").unwrap().values.clone();
        for _ in 0..200 {
            adam_step(&mut s, &grads, &mut st, &cfg).unwrap();
            let now = s.get("p").unwrap().values.clone();
            for i in 0..2 {
                let step = now[i] - prev[i];
                assert_eq!(step.signum(), -g[i].signum());
                assert!((step.abs() - cfg.lr).abs() < 1e-5);
            }
            prev = now;
        }
    }

    #[test]
    fn misaligned_gradients_rejected() {
        let mut s = setup(&[0.0; 2]);
        let other = setup(&[0.0; 3]);
        let mut st = AdamState::new(&s);
        let g = Gradients::zeros(&other);
        assert!(matches!(
            adam_step(&mut s, &g, &mut st, &AdamConfig::default()),
            Err(DiffError::ShapeMismatch { .. })
        ));
    }
}

use super::{DiffError, ParameterStore, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares [`Tape::backward`] against central differences
/// `(L(p+ε) − L(p−ε)) / 2ε` on every coordinate of every parameter.
///
/// Per-coordinate error is `|a − n| / max(1e-8, |a| + |n|)`; the report
/// carries the maximum.
pub fn check_gradients<E, F>(store: &ParameterStore, epsilon: f64, loss_fn: F) -> Result<GradCheckReport, E>
where
    E: From<DiffError>,
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var, E>,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    let grads = tape.backward(loss, store)?;

    let eval = |s: &ParameterStore| -> Result<f64, E> {
        let mut t = Tape::inference();
        let l = loss_fn(&mut t, s)?;
        Ok(t.scalar(l))
    };

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, analytic: 0.0, numeric: 0.0, coordinates: 0 };
    let mut probe = store.clone();
    for idx in 0..store.len() {
        let name = store.by_index(idx).name.clone();
        for i in 0..store.by_index(idx).values.len() {
            let original = store.by_index(idx).values[i];
            probe.values_mut(idx)[i] = original + epsilon;
            let up = eval(&probe)?;
            probe.values_mut(idx)[i] = original - epsilon;
            let down = eval(&probe)?;
            probe.values_mut(idx)[i] = original;

            let numeric = (up - down) / (2.0 * epsilon);
            let analytic = grads.by_index(idx)[i];
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i));
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

//! Central-difference gradient checking.

use super::{Array, Graph, NdiffError, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic − numeric| / (|numeric| + 1e-8) over all entries.
    pub max_rel_error: f64,
    /// (parameter index, flat entry) where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub analytic: Vec<Array>,
    pub numeric: Vec<Array>,
}

/// Compare reverse-mode gradients of `f` against central differences.
///
/// `f` receives a fresh graph and one leaf per parameter and returns the
/// scalar root. Perturbed evaluations insert the parameters as constants.
pub fn grad_check<F>(params: &[Array], step: f64, mut f: F) -> Result<GradCheckReport, NdiffError>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var, NdiffError>,
{
    let mut g = Graph::new();
    let leaves: Vec<Var> = params.iter().map(|p| g.parameter(p.clone())).collect();
    let root = f(&mut g, &leaves)?;
    let mut grads = g.backward(root)?;
    let analytic: Vec<Array> = leaves
        .iter()
        .zip(params)
        .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Array::zeros(p.shape())))
        .collect();

    let mut eval = |values: &[Array]| -> Result<f64, NdiffError> {
        let mut g = Graph::new();
        let leaves: Vec<Var> = values.iter().map(|p| g.constant(p.clone())).collect();
        let root = f(&mut g, &leaves)?;
        Ok(g.value(root).item())
    };

    let mut work: Vec<Array> = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut max_rel_error = 0.0;
    let mut worst = None;
    for pi in 0..params.len() {
        let mut num = Array::zeros(params[pi].shape());
        for e in 0..params[pi].len() {
            let base = params[pi].data()[e];
            work[pi].data_mut()[e] = base + step;
            let up = eval(&work)?;
            work[pi].data_mut()[e] = base - step;
            let down = eval(&work)?;
            work[pi].data_mut()[e] = base;
            let n = (up - down) / (2.0 * step);
            num.data_mut()[e] = n;
            let a = analytic[pi].data()[e];
            let rel = (a - n).abs() / (n.abs() + 1e-8);
            if rel > max_rel_error || worst.is_none() {
                max_rel_error = rel.max(max_rel_error);
                worst = Some((pi, e));
            }
        }
        numeric.push(num);
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst,
        analytic,
        numeric,
    })
}

use crate::tensorcore::{Tape, Tensor, TensorError, Var};

/// Central-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-3;

/// Analytic-vs-numeric comparison for one input tensor.
#[derive(Clone, Debug)]
pub struct GradComparison {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradComparison {
    /// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`, zero when both gradients vanish.
    pub fn rel_err(&self) -> f64 {
        let diff: f64 = self
            .analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n) * (a - n))
            .sum::<f64>()
            .sqrt();
        let na = self.analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = self.numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        let scale = na.max(nn);
        if scale < 1e-12 {
            diff
        } else {
            diff / scale
        }
    }
}

/// Checks the reverse-mode gradient of a scalar function of `inputs` against
/// central finite differences, both evaluated in `f64`.
///
/// `f` records the forward pass on a fresh tape, receiving the input handles
/// in order, and returns the scalar loss. Only inputs flagged in `check`
/// are perturbed.
pub fn check_gradients<F>(
    inputs: &[Tensor<f64>],
    check: &[bool],
    f: F,
) -> Result<Vec<Option<GradComparison>>, TensorError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .zip(check)
        .map(|(t, &c)| tape.leaf(t.clone().with_requires_grad(c)))
        .collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut out = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, (&var, &c)) in vars.iter().zip(check).enumerate() {
        if !c {
            out.push(None);
            continue;
        }
        let analytic = tape
            .grad(var)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..inputs[i].numel() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[i].data_mut()[k] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[i].data_mut()[k] = orig;
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
        out.push(Some(GradComparison { analytic, numeric }));
    }
    Ok(out)
}

/// Worst relative error over all checked inputs.
pub fn worst_rel_err(results: &[Option<GradComparison>]) -> f64 {
    results
        .iter()
        .flatten()
        .map(GradComparison::rel_err)
        .fold(0.0, f64::max)
}

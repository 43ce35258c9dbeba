use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor of [`relative_error`]. Central differences of a loss
/// near 10 carry rounding noise around 1e-11 at step 1e-4, so gradients
/// below this size are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error per parameter, in store order.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_error: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates left out because a perturbation moved some ReLU input
    /// across zero, where the loss has no derivative.
    pub kink_skipped: usize,
}

impl GradCheckReport {
    /// Max error over parameters whose name starts with `prefix`.
    pub fn group_max(&self, prefix: &str) -> Option<f64> {
        self.per_param
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(_, e)| *e)
            .reduce(f64::max)
    }
}

/// Compares tape gradients of `loss_fn` against central differences for
/// every coordinate of every parameter in `store`. A coordinate whose
/// perturbed evaluations switch any ReLU on or off is skipped and counted.
///
/// `loss_fn` receives a fresh tape and the parameter leaves (store order)
/// and returns the scalar loss node.
pub fn grad_check<F>(loss_fn: F, store: &ParamStore, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with_tape(Tape::new, loss_fn, store, step)
}

pub(crate) fn grad_check_with_tape<T, F>(
    new_tape: T,
    loss_fn: F,
    store: &ParamStore,
    step: f64,
) -> Result<GradCheckReport>
where
    T: Fn() -> Tape,
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step {step} must be > 0"
        )));
    }

    let mut tape = new_tape();
    let vars = store.bind(&mut tape);
    let loss = loss_fn(&mut tape, &vars)?;
    let base = tape.scalar(loss);
    tape.backward(loss);
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad(v).to_vec()).collect();

    let pattern = tape.relu_pattern();
    let evaluate = |params: &ParamStore| -> Result<(f64, u64)> {
        let mut tape = new_tape();
        let vars = params.bind(&mut tape);
        let loss = loss_fn(&mut tape, &vars)?;
        Ok((tape.scalar(loss), tape.relu_pattern()))
    };

    let (again, _) = evaluate(store)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::Harness(format!(
            "loss is not deterministic: {base} then {again}"
        )));
    }

    let mut probe = store.clone();
    let mut per_param = Vec::with_capacity(store.len());
    let (mut checked, mut kink_skipped) = (0, 0);
    for (index, grads) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (coord, &g) in grads.iter().enumerate() {
            let original = store.get(index).value.data()[coord];
            probe.get_mut(index).value.data_mut()[coord] = original + step;
            let (plus, p_plus) = evaluate(&probe)?;
            probe.get_mut(index).value.data_mut()[coord] = original - step;
            let (minus, p_minus) = evaluate(&probe)?;
            probe.get_mut(index).value.data_mut()[coord] = original;
            if p_plus != pattern || p_minus != pattern {
                kink_skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(g, numeric));
            checked += 1;
        }
        per_param.push((store.get(index).name.clone(), worst));
    }
    let max_rel_error = per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_param,
        max_rel_error,
        checked,
        kink_skipped,
    })
}

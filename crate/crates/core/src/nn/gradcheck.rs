//! Central finite-difference checks for tape gradients.

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};

/// Largest relative error between analytic and numeric gradients over all
/// parameter entries. `build` must record a scalar loss on the given tape and
/// be deterministic.
pub fn max_relative_error(
    params: &ParamStore<f64>,
    step: f64,
    build: impl Fn(&mut Tape<'_, f64>) -> Var,
) -> f64 {
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = build(&mut tape);
        tape.backward(loss)
    };
    let eval = |p: &ParamStore<f64>| {
        let mut tape = Tape::new(p);
        let loss = build(&mut tape);
        tape.value(loss).item()
    };
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let numeric = central_difference(&mut probe, id, k, step, &eval);
            let exact = analytic.get(id).map_or(0.0, |g| g.data()[k]);
            let denom = exact.abs().max(numeric.abs()).max(1e-5);
            worst = worst.max((exact - numeric).abs() / denom);
        }
    }
    worst
}

fn central_difference(
    probe: &mut ParamStore<f64>,
    id: ParamId,
    k: usize,
    step: f64,
    eval: &impl Fn(&ParamStore<f64>) -> f64,
) -> f64 {
    let orig = probe.get(id).data()[k];
    probe.get_mut(id).data_mut()[k] = orig + step;
    let up = eval(probe);
    probe.get_mut(id).data_mut()[k] = orig - step;
    let down = eval(probe);
    probe.get_mut(id).data_mut()[k] = orig;
    (up - down) / (2.0 * step)
}

use crate::nn::{Tape, Var};
use crate::scalar::Scalar;

/// `log sum_e exp(s_e) - s_gold`, shifted by the maximum. Candidates scored
/// `-inf` contribute nothing. `None` when the gold score is not finite.
pub fn pair_loss<T: Scalar>(scores: &[T], gold: usize) -> Option<T> {
    let g = *scores.get(gold)?;
    if !g.is_finite() {
        return None;
    }
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = scores
        .iter()
        .filter(|s| **s != T::neg_infinity())
        .map(|&s| (s - max).exp())
        .sum();
    Some(max + total.ln() - g)
}

/// [`pair_loss`] recorded on a tape over an `n x 1` score column.
pub fn pair_loss_var<T: Scalar>(tape: &mut Tape<'_, T>, scores: Var, gold: usize) -> Var {
    let lse = tape.log_sum_exp(scores);
    let g = tape.gather_rows(scores, &[gold]);
    tape.sub(lse, g)
}

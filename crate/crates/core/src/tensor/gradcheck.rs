use super::{Graph, ParamSet, Var};
use crate::error::{Error, Result};

/// Agreement between the autodiff gradient of one parameter tensor and its
/// central finite-difference estimate: `‖a − n‖ / max(‖a‖, ‖n‖)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub scalars: usize,
    /// Scalars whose `±step` forwards moved some ReLU input across zero.
    /// Their difference quotient is taken with the gates frozen.
    pub kinked: usize,
    pub relative_error: f64,
}

/// Perturbs every scalar of every parameter by `±step` and compares the
/// resulting loss slopes against one backward pass of `forward`.
///
/// The perturbed forwards replay the ReLU gates of the unperturbed one (see
/// [`Graph::with_relu_pattern`]). Otherwise a difference quotient straddling
/// a kink says nothing about the derivative, and with thousands of
/// activations per channel almost every bias perturbation straddles one.
pub fn finite_difference_check(
    params: &ParamSet,
    step: f64,
    forward: impl Fn(&mut Graph, &ParamSet) -> Result<Var>,
) -> Result<Vec<GradCheck>> {
    if !(step > 0.0) {
        return Err(Error::Contract(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut analytic = params.clone();
    analytic.zero_grads();
    let mut g = Graph::new();
    let loss = forward(&mut g, params)?;
    let base = g.relu_pattern();
    g.backward(loss, &mut analytic)?;
    let eval = |p: &ParamSet| -> Result<(f64, bool)> {
        let mut g = Graph::with_relu_pattern(base.clone());
        let l = forward(&mut g, p)?;
        Ok((g.value(l).data()[0], g.relu_pattern() != base))
    };
    let mut out = Vec::new();
    let mut p = params.clone();
    for name in params.names().map(str::to_string).collect::<Vec<_>>() {
        let n = params.get(&name)?.len();
        let a = analytic.grad(&name)?;
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        let mut kinked = 0;
        for (i, &ai) in a.iter().enumerate() {
            let orig = p.get(&name)?.data()[i];
            p.get_mut(&name)?.data_mut()[i] = orig + step;
            let (up, up_kink) = eval(&p)?;
            p.get_mut(&name)?.data_mut()[i] = orig - step;
            let (down, down_kink) = eval(&p)?;
            p.get_mut(&name)?.data_mut()[i] = orig;
            kinked += usize::from(up_kink || down_kink);
            let ni = (up - down) / (2.0 * step);
            diff += (ai - ni).powi(2);
            na += ai * ai;
            nn += ni * ni;
        }
        out.push(GradCheck {
            name,
            scalars: n,
            kinked,
            relative_error: diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-300),
        });
    }
    Ok(out)
}

//! Central finite differences against the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, trace_example, Gradients, LossSpec, TrainError, TrainingExample};
use crate::corpus::{chunk, TokenId, EOS};
use crate::model::{AblationFlags, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: (&'static str, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

/// A model, example and loss selection to verify.
#[derive(Debug, Clone)]
pub struct GradProbe {
    pub params: ModelParams,
    pub example: TrainingExample,
    pub flags: AblationFlags,
    pub spec: LossSpec,
}

/// Random d=8, V=20 model with a two-chunk context, a 12-token target and
/// three insights, differentiated through both loss terms.
pub fn standard_probe(seed: u64) -> GradProbe {
    let (d, vocab) = (8, 20);
    // Entries uniform in [-1.2, 1.2] so every path carries signal.
    let mut params = ModelParams::init(d, vocab, seed);
    for (_, t) in params.tensors_mut() {
        t.scale(15.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut draw =
        |n: usize| -> Vec<TokenId> { (0..n).map(|_| rng.gen_range(7..vocab as TokenId)).collect() };
    let context = draw(10);
    let mut target = draw(11);
    target.push(EOS);
    let insights = vec![draw(4), draw(3), draw(5)];
    GradProbe {
        params,
        example: TrainingExample {
            id: format!("probe-{seed}"),
            context: chunk(&context, 5).expect("positive chunk length"),
            target,
            insights,
        },
        flags: AblationFlags::default(),
        spec: LossSpec::stage(0.5),
    }
}

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Compares `analytic` with central differences of `loss` over every
/// parameter entry.
pub fn check_gradient<F>(
    params: &ModelParams,
    analytic: &Gradients,
    eps: f64,
    mut loss: F,
) -> Result<GradCheckReport, TrainError>
where
    F: FnMut(&ModelParams) -> Result<f64, TrainError>,
{
    if !params.same_dims(&analytic.0) {
        return Err(TrainError::ShapeMismatch(
            "gradients do not match params".into(),
        ));
    }
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: ("", 0),
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let grads = analytic.0.tensors();
    for (k, (name, g)) in grads.iter().enumerate() {
        for i in 0..g.data().len() {
            let orig = probe.tensors()[k].1.data()[i];
            probe.tensors_mut()[k].1.data_mut()[i] = orig + eps;
            let plus = loss(&probe)?;
            probe.tensors_mut()[k].1.data_mut()[i] = orig - eps;
            let minus = loss(&probe)?;
            probe.tensors_mut()[k].1.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = g.data()[i];
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.entries_checked == 1 {
                report.max_relative_error = err;
                report.worst = (name, i);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Gradient check of the probe's loss at step size `eps`.
pub fn finite_difference_check(probe: &GradProbe, eps: f64) -> Result<GradCheckReport, TrainError> {
    let with_comp = probe.spec.lambda != 0.0;
    let trace = trace_example(&probe.params, &probe.example, probe.flags, with_comp)?;
    let analytic = backward(&trace, &probe.params, &probe.spec)?;
    check_gradient(&probe.params, &analytic, eps, |p| {
        trace_example(p, &probe.example, probe.flags, with_comp)?.objective(&probe.spec)
    })
}

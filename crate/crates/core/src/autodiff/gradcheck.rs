use rand::Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// max over all checked entries of `|analytic - numeric| / max(|analytic|, |numeric|, floor)`
    /// with `floor = 1e-6 * max(1, |loss|)`; the floor keeps gradients below
    /// finite-difference resolution from dominating
    pub max_rel_error: f64,
    /// (parameter index, flat entry index) attaining the maximum
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `f` against Richardson-extrapolated
/// central finite differences, over every entry of every parameter.
///
/// Each entry is estimated at steps `eps` and `eps / 10` and scored by the
/// closer estimate, so a kink (relu, absolute value) lying within one of the
/// two steps does not register as a mismatch.
///
/// `f` receives the parameters as trainable leaves (in order) and must be
/// deterministic, so any randomness inside it has to come from a fixed
/// substream.
pub fn gradcheck<F>(f: F, params: &[Tensor<f64>], eps: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let floor = 1e-6 * tape.value(loss).item().abs().max(1.0);
    let grads = tape.backward(loss)?;

    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradcheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(params[pi].rows(), params[pi].cols()));
        for e in 0..params[pi].len() {
            let orig = params[pi].data()[e];
            let mut central = |h: f64| -> Result<f64> {
                work[pi].data_mut()[e] = orig + h;
                let up = eval(&work)?;
                work[pi].data_mut()[e] = orig - h;
                let down = eval(&work)?;
                work[pi].data_mut()[e] = orig;
                Ok((up - down) / (2.0 * h))
            };
            let a = analytic.data()[e];
            let mut rel = f64::INFINITY;
            for h in [eps, eps / 10.0] {
                let coarse = central(h)?;
                let fine = central(h / 2.0)?;
                let numeric = (4.0 * fine - coarse) / 3.0;
                rel = rel.min((a - numeric).abs() / a.abs().max(numeric.abs()).max(floor));
            }
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((pi, e));
            }
        }
    }
    Ok(report)
}

/// Tolerance the verification suites are held to.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn uniform(rows: usize, cols: usize, stream: Stream) -> Tensor<f64> {
    let mut rng = stream.rng();
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("sized")
}

/// Reduces `out` to a scalar through a fixed random weighting so that every
/// output entry contributes a distinct gradient.
fn weighted_sum(tape: &mut Tape<f64>, out: Var, stream: Stream) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    let w = tape.constant(uniform(r, c, stream));
    let p = tape.multiply(out, w)?;
    Ok(tape.sum(p))
}

/// Finite-difference check of every differentiable tape primitive, each on
/// its own small random inputs.
pub fn primitive_gradchecks(seed: u64) -> Result<Vec<(String, GradcheckReport)>> {
    type Case = (&'static str, Vec<(usize, usize)>, Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>);
    let root = Stream::root(seed).named("primitive-gradcheck");
    let w = root.named("weights");
    let cases: Vec<Case> = vec![
        ("matmul", vec![(3, 4), (4, 2)], Box::new(move |t, p| { let y = t.matmul(p[0], p[1])?; weighted_sum(t, y, w) })),
        ("add", vec![(3, 2), (3, 2)], Box::new(move |t, p| { let y = t.add(p[0], p[1])?; weighted_sum(t, y, w) })),
        ("sub", vec![(3, 2), (3, 2)], Box::new(move |t, p| { let y = t.sub(p[0], p[1])?; weighted_sum(t, y, w) })),
        ("multiply", vec![(3, 2), (3, 2)], Box::new(move |t, p| { let y = t.multiply(p[0], p[1])?; weighted_sum(t, y, w) })),
        ("add_row", vec![(4, 3), (1, 3)], Box::new(move |t, p| { let y = t.add_row(p[0], p[1])?; weighted_sum(t, y, w) })),
        ("scale", vec![(2, 3)], Box::new(move |t, p| { let y = t.scale(p[0], 1.7); weighted_sum(t, y, w) })),
        ("concat_rows", vec![(2, 3), (1, 3)], Box::new(move |t, p| { let y = t.concat(&[p[0], p[1]], 0)?; weighted_sum(t, y, w) })),
        ("concat_cols", vec![(2, 3), (2, 1)], Box::new(move |t, p| { let y = t.concat(&[p[0], p[1]], 1)?; weighted_sum(t, y, w) })),
        ("gather", vec![(4, 2)], Box::new(move |t, p| { let y = t.gather(p[0], &[3, 0, 3, 1, 0])?; weighted_sum(t, y, w) })),
        ("segment_sum", vec![(5, 2)], Box::new(move |t, p| { let y = t.segment_sum(p[0], &[2, 0, 2, 2, 1], 4)?; weighted_sum(t, y, w) })),
        ("relu", vec![(3, 3)], Box::new(move |t, p| { let y = t.relu(p[0]); weighted_sum(t, y, w) })),
        ("tanh", vec![(3, 3)], Box::new(move |t, p| { let y = t.tanh(p[0]); weighted_sum(t, y, w) })),
        ("layer_norm", vec![(3, 5), (1, 5), (1, 5)], Box::new(move |t, p| { let y = t.layer_norm(p[0], p[1], p[2], 1e-5)?; weighted_sum(t, y, w) })),
        ("dropout", vec![(4, 3)], Box::new(move |t, p| {
            let y = t.dropout(p[0], 0.4, &mut w.named("mask").rng())?;
            weighted_sum(t, y, w)
        })),
        ("softmax_cross_entropy", vec![(4, 3)], Box::new(|t, p| t.softmax_cross_entropy(p[0], &[2, 0, 1, 1]))),
        ("mean_absolute_error", vec![(3, 2)], Box::new(move |t, p| t.mean_absolute_error(p[0], &uniform(3, 2, w.named("target"))))),
        ("cosine_similarity", vec![(3, 4), (3, 4)], Box::new(move |t, p| { let y = t.cosine_similarity(p[0], p[1], 1e-12)?; weighted_sum(t, y, w) })),
        ("sum", vec![(2, 3)], Box::new(|t, p| { let y = t.tanh(p[0]); Ok(t.sum(y)) })),
        ("mean", vec![(2, 3)], Box::new(|t, p| { let y = t.tanh(p[0]); Ok(t.mean(y)) })),
    ];
    let mut out = Vec::with_capacity(cases.len());
    for (k, (name, shapes, f)) in cases.into_iter().enumerate() {
        let params: Vec<Tensor<f64>> = shapes.iter().enumerate().map(|(i, &(r, c))| uniform(r, c, root.keyed(k as u64).keyed(i as u64))).collect();
        out.push((name.to_string(), gradcheck(f, &params, 1e-4)?));
    }
    Ok(out)
}

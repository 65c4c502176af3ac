//! Finite-difference gradient sweeps over every tape operation and over the
//! parameters of a whole model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Batch;
use crate::error::{CaeError, Result};
use crate::losses::{adversarial_graph, cycle_graph, reconstruction_graph};
use crate::model::{CaeModel, LstmCell};
use crate::tensor::gradcheck::{check_gradient, numeric_gradient, relative_error};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape matches")
}

/// Values in `[-1, 1)` kept at least `gap` away from each point in `avoid`.
fn random_avoiding(rng: &mut ChaCha8Rng, shape: &[usize], avoid: &[f64], gap: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = rng.gen_range(-1.0..1.0);
            if avoid.iter().all(|a| (v - a).abs() > gap) {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// Reduces `y` to a scalar through fixed random weights, so every output
/// entry carries a distinct upstream gradient.
fn project(g: &mut Graph, y: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone());
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

type Build = Box<dyn Fn(&mut Graph, Var) -> Result<Var>>;

/// Checks the backward rule of every tape operation against central
/// differences on small random inputs. Inputs are kept away from the kinks of
/// `clamp` and `l1_distance`.
pub fn op_gradient_checks(seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let (m, k, n) = (3, 4, 2);
    let a = random(r, &[m, k], -1.0, 1.0);
    let b = random(r, &[k, n], -1.0, 1.0);
    let same = random(r, &[m, k], -1.0, 1.0);
    let bias = random(r, &[k], -1.0, 1.0);
    let w_mn = random(r, &[m, n], -1.0, 1.0);
    let w_mk = random(r, &[m, k], -1.0, 1.0);
    let positive = random(r, &[m, k], 0.3, 2.0);
    let clampable = random_avoiding(r, &[m, k], &[-0.5, 0.5], 1e-2);
    let l1_other = {
        let mut t = random(r, &[m, k], -1.0, 1.0);
        for (o, s) in t.data_mut().iter_mut().zip(same.data()) {
            if (*o - s).abs() < 1e-2 {
                *o += 0.1;
            }
        }
        t
    };
    let table = random(r, &[5, 3], -1.0, 1.0);
    let w_gather = random(r, &[4, 3], -1.0, 1.0);
    let w_slice = random(r, &[m, 2], -1.0, 1.0);
    let w_concat = random(r, &[2 * m, k], -1.0, 1.0);
    let logits = random(r, &[4, 5], -2.0, 2.0);
    let lstm = LstmCell::uniform("probe", 3, 2, 0.8, r);
    let (x_in, h_in, c_in) = (
        random(r, &[2, 3], -1.0, 1.0),
        random(r, &[2, 2], -1.0, 1.0),
        random(r, &[2, 2], -1.0, 1.0),
    );
    let w_h = random(r, &[2, 2], -1.0, 1.0);
    let w_c = random(r, &[2, 2], -1.0, 1.0);

    let mut cases: Vec<(&str, Tensor, Build)> = Vec::new();
    let unary = |f: fn(&mut Graph, Var) -> Var, w: Tensor| -> Build {
        Box::new(move |g, x| {
            let y = f(g, x);
            project(g, y, &w)
        })
    };
    {
        let b = b.clone();
        let w = w_mn.clone();
        cases.push((
            "matmul/lhs",
            a.clone(),
            Box::new(move |g, x| {
                let c = g.constant(b.clone());
                let y = g.matmul(x, c)?;
                project(g, y, &w)
            }),
        ));
    }
    {
        let a = a.clone();
        let w = w_mn.clone();
        cases.push((
            "matmul/rhs",
            b.clone(),
            Box::new(move |g, x| {
                let c = g.constant(a.clone());
                let y = g.matmul(c, x)?;
                project(g, y, &w)
            }),
        ));
    }
    type Binary = fn(&mut Graph, Var, Var) -> Result<Var>;
    let binaries: [(&str, &str, Binary); 3] = [
        ("add/lhs", "add/rhs", |g, a, b| g.add(a, b)),
        ("sub/lhs", "sub/rhs", |g, a, b| g.sub(a, b)),
        ("mul/lhs", "mul/rhs", |g, a, b| g.mul(a, b)),
    ];
    for (lhs, rhs, f) in binaries {
        let (other, w) = (same.clone(), w_mk.clone());
        cases.push((
            lhs,
            a.clone(),
            Box::new(move |g, x| {
                let c = g.constant(other.clone());
                let y = f(g, x, c)?;
                project(g, y, &w)
            }),
        ));
        let (other, w) = (a.clone(), w_mk.clone());
        cases.push((
            rhs,
            same.clone(),
            Box::new(move |g, x| {
                let c = g.constant(other.clone());
                let y = f(g, c, x)?;
                project(g, y, &w)
            }),
        ));
    }
    {
        let (m_, w) = (a.clone(), w_mk.clone());
        cases.push((
            "add/broadcast",
            bias.clone(),
            Box::new(move |g, x| {
                let c = g.constant(m_.clone());
                let y = g.add(c, x)?;
                project(g, y, &w)
            }),
        ));
    }
    cases.push(("neg", a.clone(), unary(|g, x| g.neg(x), w_mk.clone())));
    cases.push(("tanh", a.clone(), unary(|g, x| g.tanh(x), w_mk.clone())));
    cases.push(("sigmoid", a.clone(), unary(|g, x| g.sigmoid(x), w_mk.clone())));
    cases.push(("exp", a.clone(), unary(|g, x| g.exp(x), w_mk.clone())));
    cases.push(("affine", a.clone(), unary(|g, x| g.affine(x, -1.5, 0.25), w_mk.clone())));
    cases.push(("scale", a.clone(), unary(|g, x| g.scale(x, 0.7), w_mk.clone())));
    cases.push(("clamp", clampable, unary(|g, x| g.clamp(x, -0.5, 0.5), w_mk.clone())));
    {
        let w = w_mk.clone();
        cases.push((
            "log",
            positive,
            Box::new(move |g, x| {
                let y = g.log(x)?;
                project(g, y, &w)
            }),
        ));
    }
    {
        let w = w_mk.clone();
        cases.push((
            "sum",
            a.clone(),
            Box::new(move |g, x| {
                let y = g.mul(x, x)?;
                let s = g.sum(y);
                let c = g.constant(w.clone());
                let t = g.mul(x, c)?;
                let t = g.sum(t);
                let p = g.mul(s, t)?;
                Ok(p)
            }),
        ));
    }
    {
        let w = w_mk.clone();
        cases.push((
            "mean",
            a.clone(),
            Box::new(move |g, x| {
                let c = g.constant(w.clone());
                let y = g.mul(x, c)?;
                let y = g.mul(y, x)?;
                Ok(g.mean(y))
            }),
        ));
    }
    cases.push((
        "slice_cols",
        a.clone(),
        Box::new(move |g, x| {
            let y = g.slice_cols(x, 1, 2)?;
            project(g, y, &w_slice)
        }),
    ));
    cases.push((
        "concat_rows",
        a.clone(),
        Box::new(move |g, x| {
            let sq = g.mul(x, x)?;
            let y = g.concat_rows(&[x, sq])?;
            project(g, y, &w_concat)
        }),
    ));
    cases.push((
        "gather",
        table,
        Box::new(move |g, x| {
            let y = g.gather(x, &[4, 0, 4, 2])?;
            project(g, y, &w_gather)
        }),
    ));
    {
        let w = w_mk.clone();
        cases.push((
            "l2_normalize_rows",
            a.clone(),
            Box::new(move |g, x| {
                let y = g.l2_normalize_rows(x)?;
                project(g, y, &w)
            }),
        ));
    }
    {
        let other = l1_other;
        cases.push((
            "l1_distance",
            same.clone(),
            Box::new(move |g, x| {
                let c = g.constant(other.clone());
                g.l1_distance(x, c)
            }),
        ));
    }
    cases.push((
        "softmax_cross_entropy",
        logits,
        Box::new(|g, x| g.softmax_cross_entropy_weighted(x, &[1, 4, 0, 4], &[1.0, 0.5, 0.0, 2.0], 3.5)),
    ));
    {
        let (lstm, h_in, c_in) = (lstm.clone(), h_in.clone(), c_in.clone());
        let (w_h, w_c) = (w_h.clone(), w_c.clone());
        cases.push((
            "lstm_step/x",
            x_in.clone(),
            Box::new(move |g, x| {
                let h = g.constant(h_in.clone());
                let c = g.constant(c_in.clone());
                let (h2, c2) = lstm.step(g, x, h, c)?;
                let a = project(g, h2, &w_h)?;
                let b = project(g, c2, &w_c)?;
                g.add(a, b)
            }),
        ));
    }
    {
        let (lstm, x_in, c_in) = (lstm.clone(), x_in.clone(), c_in.clone());
        let (w_h, w_c) = (w_h.clone(), w_c.clone());
        cases.push((
            "lstm_step/h",
            h_in.clone(),
            Box::new(move |g, h| {
                let x = g.constant(x_in.clone());
                let c = g.constant(c_in.clone());
                let (h2, c2) = lstm.step(g, x, h, c)?;
                let a = project(g, h2, &w_h)?;
                let b = project(g, c2, &w_c)?;
                g.add(a, b)
            }),
        ));
    }
    cases.push((
        "lstm_step/c",
        c_in,
        Box::new(move |g, c| {
            let x = g.constant(x_in.clone());
            let h = g.constant(h_in.clone());
            let (h2, c2) = lstm.step(g, x, h, c)?;
            let a = project(g, h2, &w_h)?;
            let b = project(g, c2, &w_c)?;
            g.add(a, b)
        }),
    ));

    cases
        .into_iter()
        .map(|(name, x0, build)| {
            let report = check_gradient(&x0, build)?;
            Ok(GradCheck {
                name: name.to_string(),
                max_rel_error: report.max_rel_error,
            })
        })
        .collect()
}

/// Compares the analytic gradient of `loss` with respect to every model
/// parameter against central differences, one entry per parameter tensor.
pub fn param_gradient_checks<F>(model: &CaeModel, loss: F) -> Result<Vec<GradCheck>>
where
    F: Fn(&mut Graph, &CaeModel) -> Result<Var>,
{
    let mut analytic_model = model.clone();
    let mut g = Graph::new();
    let l = loss(&mut g, model)?;
    g.backward(l)?;
    g.accumulate_grads(analytic_model.params_mut());

    let mut out = Vec::new();
    for p in analytic_model.params() {
        let name = p.name().to_string();
        let analytic = p.grad().map_or_else(|| vec![0.0; p.value().len()], <[f64]>::to_vec);
        let numeric = numeric_gradient(p.value(), |t| {
            let mut probe = model.clone();
            *probe.param_mut(&name).expect("known name").value_mut() = t.clone();
            let mut g = Graph::new();
            let l = loss(&mut g, &probe)?;
            Ok(g.value(l).item())
        })?;
        let max_rel_error = analytic
            .iter()
            .zip(&numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max);
        out.push(GradCheck { name, max_rel_error });
    }
    Ok(out)
}

/// Every loss of one training step in a single graph, with nothing detached:
/// `λ1 L_R + λ2 (gen_12 + gen_21) + λ3 L_C + disc_1 + disc_2`.
pub fn composite_loss_graph(
    g: &mut Graph,
    model: &CaeModel,
    batch1: &Batch,
    batch2: &Batch,
    lambdas: (f64, f64, f64),
) -> Result<Var> {
    let (z1, z2, recon) = reconstruction_graph(g, model, batch1, batch2)?;
    let adv = adversarial_graph(g, model, z1, z2)?;
    let cycle = cycle_graph(g, model, z1, z2)?;
    let gen = g.add(adv.gen_12, adv.gen_21)?;
    let disc = g.add(adv.disc_1, adv.disc_2)?;
    let terms = [
        g.scale(recon, lambdas.0),
        g.scale(gen, lambdas.1),
        g.scale(cycle, lambdas.2),
        disc,
    ];
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    if !g.value(total).all_finite() {
        return Err(CaeError::Contract("composite loss is not finite".into()));
    }
    Ok(total)
}

//! Central finite-difference gradient oracle.
//!
//! Only forward values are used, so the oracle is independent of
//! [`Graph::backward`].

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::param::ParamStore;

/// Denominator floor so that gradients that are zero up to rounding compare
/// on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst component.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub components: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Compares the backward pass of `loss` against central differences with
/// step `h` on every parameter component.
pub fn check_gradients<F>(store: &ParamStore, h: f64, loss: F) -> Result<GradReport>
where
    F: Fn(&ParamStore, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let l = loss(store, &mut g)?;
    let grads = g.backward(l)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(s, &mut g)?;
        Ok(g.value(l).item())
    };

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
        components: 0,
    };
    let mut probe = store.clone();
    for p in store.iter() {
        for i in 0..p.value.len() {
            let orig = p.value.data()[i];
            probe.value_mut(p.id).data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.value_mut(p.id).data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.value_mut(p.id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(p.id).map_or(0.0, |t| t.data()[i]);
            let err = rel_err(analytic, numeric);
            report.components += 1;
            if err > report.max_rel_err || report.components == 1 {
                report.max_rel_err = err;
                report.worst = (p.name.clone(), i);
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

type Case = (&'static str, Box<dyn Fn(&ParamStore, &mut Graph) -> Result<Var>>);

/// Finite-difference check of every primitive on random inputs drawn from
/// `seed`. Each case reduces the primitive's output through a fixed random
/// weighting so that every output element contributes to the loss.
pub fn primitive_suite(seed: u64, h: f64) -> Result<Vec<(&'static str, GradReport)>> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use crate::gaussian::{gaussian_kl, reparameterize};
    use crate::param::ParamId;
    use crate::tensor::Tensor;

    let mut rng = StdRng::seed_from_u64(seed);
    let mut rand_t = |shape: &[usize], lo: f64, hi: f64| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
    };

    let mut store = ParamStore::new();
    let a = store.add("a", rand_t(&[3, 4], -1.5, 1.5));
    let b = store.add("b", rand_t(&[4, 5], -1.5, 1.5));
    let c = store.add("c", rand_t(&[3, 4], -1.5, 1.5));
    let bias = store.add("bias", rand_t(&[4], -1.0, 1.0));
    let pos = store.add("pos", rand_t(&[3, 4], 0.5, 2.0));
    let nt = store.add("nt", rand_t(&[6, 4], -1.5, 1.5));
    let table = store.add("table", rand_t(&[5, 3], -1.0, 1.0));

    let w34 = rand_t(&[3, 4], -1.0, 1.0);
    let w35 = rand_t(&[3, 5], -1.0, 1.0);
    let w36 = rand_t(&[3, 6], -1.0, 1.0);
    let w38 = rand_t(&[3, 8], -1.0, 1.0);
    let w64 = rand_t(&[6, 4], -1.0, 1.0);
    let w32 = rand_t(&[3, 2], -1.0, 1.0);
    let w43 = rand_t(&[4, 3], -1.0, 1.0);
    let w12 = rand_t(&[12], -1.0, 1.0);
    let w3 = rand_t(&[3], -1.0, 1.0);
    let targets = rand_t(&[3, 4], 0.0, 1.0);
    let noise = rand_t(&[3, 4], -2.0, 2.0);

    fn weighted(g: &mut Graph, x: Var, w: &Tensor) -> Result<Var> {
        let wv = g.constant(w.clone());
        let y = g.mul(x, wv)?;
        Ok(g.sum(y))
    }
    fn p(g: &mut Graph, s: &ParamStore, id: ParamId) -> Result<Var> {
        g.param(s, id)
    }

    let cases: Vec<Case> = vec![
        ("matmul", Box::new(move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, b)?);
            let z = g.matmul(x, y)?;
            weighted(g, z, &w35)
        })),
        ("matmul_nt", Box::new(move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, nt)?);
            let z = g.matmul_nt(x, y)?;
            weighted(g, z, &w36)
        })),
        ("add", Box::new({ let w = w34.clone(); move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, c)?);
            let z = g.add(x, y)?;
            weighted(g, z, &w)
        }})),
        ("add_row", Box::new({ let w = w34.clone(); move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, bias)?);
            let z = g.add_row(x, y)?;
            weighted(g, z, &w)
        }})),
        ("sub", Box::new({ let w = w34.clone(); move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, c)?);
            let z = g.sub(x, y)?;
            weighted(g, z, &w)
        }})),
        ("mul", Box::new({ let w = w34.clone(); move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, c)?);
            let z = g.mul(x, y)?;
            weighted(g, z, &w)
        }})),
        ("scale", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, a)?;
            let z = g.scale(x, -1.7);
            weighted(g, z, &w)
        }})),
        ("add_scalar", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, a)?;
            let z = g.add_scalar(x, 0.3);
            let z = g.square(z);
            weighted(g, z, &w)
        }})),
        ("tanh", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, a)?;
            let z = g.tanh(x);
            weighted(g, z, &w)
        }})),
        ("relu", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, pos)?;
            let x2 = g.add_scalar(x, -1.25);
            let z = g.relu(x2);
            weighted(g, z, &w)
        }})),
        ("sigmoid", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, a)?;
            let z = g.sigmoid(x);
            weighted(g, z, &w)
        }})),
        ("exp", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, a)?;
            let z = g.exp(x);
            weighted(g, z, &w)
        }})),
        ("log", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, pos)?;
            let z = g.log(x);
            weighted(g, z, &w)
        }})),
        ("square", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, a)?;
            let z = g.square(x);
            weighted(g, z, &w)
        }})),
        ("clamp", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, pos)?;
            // inputs lie in (0.5, 2.0), away from both sets of bounds
            let z = g.clamp(x, 0.0, 10.0);
            let z2 = g.clamp(x, 3.0, 4.0);
            let z = g.add(z, z2)?;
            weighted(g, z, &w)
        }})),
        ("concat", Box::new(move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, c)?);
            let z = g.concat(&[x, y])?;
            weighted(g, z, &w38)
        })),
        ("concat_rows", Box::new(move |s, g| {
            let (x, y) = (p(g, s, a)?, p(g, s, c)?);
            let z = g.concat_rows(&[x, y])?;
            weighted(g, z, &w64)
        })),
        ("slice_cols", Box::new(move |s, g| {
            let x = p(g, s, a)?;
            let z = g.slice_cols(x, 1, 2)?;
            weighted(g, z, &w32)
        })),
        ("slice_rows", Box::new({ let w = w34.clone(); move |s, g| {
            let x = p(g, s, nt)?;
            let z = g.slice_rows(x, 2, 3)?;
            weighted(g, z, &w)
        }})),
        ("gather_rows", Box::new(move |s, g| {
            let t = p(g, s, table)?;
            let z = g.gather_rows(t, &[4, 0, 4, 2])?;
            weighted(g, z, &w43)
        })),
        ("reshape", Box::new(move |s, g| {
            let x = p(g, s, a)?;
            let z = g.reshape(x, &[12])?;
            weighted(g, z, &w12)
        })),
        ("mean", Box::new(move |s, g| {
            let x = p(g, s, a)?;
            let z = g.square(x);
            Ok(g.mean(z))
        })),
        ("softmax_cross_entropy", Box::new(move |s, g| {
            let x = p(g, s, a)?;
            let z = g.softmax_cross_entropy(x, &[3, 0, 1])?;
            weighted(g, z, &w3)
        })),
        ("bce_with_logits", Box::new(move |s, g| {
            let x = p(g, s, a)?;
            let x = g.scale(x, 2.0);
            let z = g.bce_with_logits(x, &targets)?;
            Ok(g.sum(z))
        })),
        ("gaussian_kl", Box::new(move |s, g| {
            let (m, ls, m0, ls0) = (p(g, s, a)?, p(g, s, c)?, p(g, s, pos)?, p(g, s, a)?);
            let ls0 = g.scale(ls0, 0.5);
            gaussian_kl(g, m, ls, m0, ls0)
        })),
        ("reparameterize", Box::new(move |s, g| {
            let (m, ls) = (p(g, s, a)?, p(g, s, c)?);
            let z = reparameterize(g, m, ls, &noise)?;
            weighted(g, z, &w34)
        })),
    ];

    cases
        .into_iter()
        .map(|(name, f)| check_gradients(&store, h, f).map(|r| (name, r)))
        .collect()
}

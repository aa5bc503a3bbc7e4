//! Central finite-difference oracle for reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typelink::nn::{Graph, ParamStore, Var};

pub const STEP: f32 = 1e-3;
pub const REL_TOL: f64 = 1e-2;
pub const ABS_TOL: f64 = 1e-4;
pub const MIN_PASS_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, Default)]
pub struct Report {
    pub checked: usize,
    pub passed: usize,
    /// Coordinates whose gradient exceeds ten times the absolute tolerance,
    /// so agreement there is a relative-error statement.
    pub significant: usize,
    pub worst_abs: f64,
}

impl Report {
    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }

    pub fn ok(&self) -> bool {
        self.checked > 0 && self.fraction() >= MIN_PASS_FRACTION
    }

    pub fn merge(&mut self, other: Report) {
        self.checked += other.checked;
        self.passed += other.passed;
        self.significant += other.significant;
        self.worst_abs = self.worst_abs.max(other.worst_abs);
    }
}

fn close(analytic: f64, numeric: f64) -> bool {
    let abs = (analytic - numeric).abs();
    abs <= ABS_TOL || abs / analytic.abs().max(numeric.abs()) <= REL_TOL
}

/// Compares the backward pass of a loss against central differences on up
/// to `per_param` randomly chosen coordinates of every parameter.
///
/// `parts` returns scalar nodes whose sum is the loss. Each part is
/// differenced on its own and the differences are summed in f64: the result
/// equals the difference of the total, without the f32 rounding of a large
/// total swamping an `h = 1e-3` step.
pub fn check<F>(store: &mut ParamStore, per_param: usize, seed: u64, parts: F) -> Report
where
    F: Fn(&mut Graph) -> Vec<Var>,
{
    let analytic: Vec<Vec<f32>> = {
        let mut g = Graph::new(store, false, 0);
        let ps = parts(&mut g);
        let mut l = ps[0];
        for &p in &ps[1..] {
            l = g.add(l, p).expect("scalar parts");
        }
        let grads = g.backward(l).expect("scalar loss");
        let mut out: Vec<Vec<f32>> = store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        for (id, gr) in grads.param_grads() {
            out[id.index()].copy_from_slice(gr);
        }
        out
    };
    let eval = |store: &ParamStore| -> Vec<f64> {
        let mut g = Graph::new(store, false, 0);
        let ps = parts(&mut g);
        ps.iter().map(|&p| g.value(p).item() as f64).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = Report::default();
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = store.get(id).value.len();
        let coords: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            (0..per_param).map(|_| rng.gen_range(0..n)).collect()
        };
        for i in coords {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + STEP;
            let up = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig - STEP;
            let down = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig;
            // The f32 step actually taken, not the nominal one.
            let span = (orig + STEP) as f64 - (orig - STEP) as f64;
            let numeric = up.iter().zip(&down).map(|(u, d)| u - d).sum::<f64>() / span;
            let a = analytic[id.index()][i] as f64;
            report.checked += 1;
            if a.abs() > 10.0 * ABS_TOL {
                report.significant += 1;
            }
            report.worst_abs = report.worst_abs.max((a - numeric).abs());
            if close(a, numeric) {
                report.passed += 1;
            } else if std::env::var("GRADCHECK_VERBOSE").is_ok() {
                eprintln!("{} [{i}]: analytic {a:.6e} numeric {numeric:.6e}", store.get(id).name);
            }
        }
    }
    report
}

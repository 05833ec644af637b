//! Box-constrained quasi-Newton maximizer used on the acquisition surface.
//!
//! This is L-BFGS with gradient projection rather than the full Byrd-Lu
//! algorithm: iterates are clamped to the box, bound-active components are
//! frozen out of the search direction, and an Armijo backtracking line
//! search measures decrease along the projected path. The acquisition is
//! smooth and cheap, so restarts (handled by the caller) cover for the
//! simpler active-set handling.

pub struct BoxResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
}

const ARMIJO_C1: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-10;
const MAX_BACKTRACKS: usize = 40;

fn clamp(x: &mut [f64], lo: f64, hi: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: returns -H g, the quasi-Newton descent direction.
fn two_loop(g: &[f64], history: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y) in history.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = history.last() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y), (a, rho)) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Maximize `f` over the box [lo, hi]^d starting from `x0`. `f` returns
/// the objective value and its gradient. Non-finite trial values are never
/// accepted, so the result is at least as good as the starting point
/// whenever the start itself is finite.
pub fn maximize<F>(
    mut f: F,
    x0: &[f64],
    lo: f64,
    hi: f64,
    memory: usize,
    max_iters: usize,
) -> BoxResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d = x0.len();
    let mut x = x0.to_vec();
    clamp(&mut x, lo, hi);

    // Minimize phi = -f internally so the textbook update formulas apply.
    let (fx, gx) = f(&x);
    let mut phi = -fx;
    let mut grad: Vec<f64> = gx.iter().map(|g| -g).collect();
    if !phi.is_finite() {
        return BoxResult {
            value: fx,
            x,
            iters: 0,
        };
    }

    let mut history: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut iters = 0;

    for _ in 0..max_iters {
        // Projected gradient: components that would push past an active
        // bound do not count toward optimality.
        let mut pg = grad.clone();
        for i in 0..d {
            if (x[i] == lo && pg[i] > 0.0) || (x[i] == hi && pg[i] < 0.0) {
                pg[i] = 0.0;
            }
        }
        if pg.iter().all(|g| g.abs() <= GRAD_TOL) {
            break;
        }

        let mut dir = two_loop(&pg, &history);
        for i in 0..d {
            if (x[i] == lo && dir[i] < 0.0) || (x[i] == hi && dir[i] > 0.0) {
                dir[i] = 0.0;
            }
        }
        if dot(&dir, &grad) >= 0.0 {
            history.clear();
            dir = pg.iter().map(|g| -g).collect();
        }

        // Backtracking line search along the projected path.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            clamp(&mut xt, lo, hi);
            let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|s| *s == 0.0) {
                break;
            }
            let (ft, gt) = f(&xt);
            let phit = -ft;
            if phit.is_finite() && phit <= phi + ARMIJO_C1 * dot(&grad, &step) {
                accepted = Some((xt, phit, gt, step));
                break;
            }
            t *= 0.5;
        }

        let Some((xt, phit, gt, step)) = accepted else {
            break;
        };
        let grad_new: Vec<f64> = gt.iter().map(|g| -g).collect();
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        if dot(&step, &y) > 1e-12 {
            history.push((step, y));
            if history.len() > memory {
                history.remove(0);
            }
        }
        x = xt;
        phi = phit;
        grad = grad_new;
        iters += 1;
    }

    BoxResult {
        value: -phi,
        x,
        iters,
    }
}

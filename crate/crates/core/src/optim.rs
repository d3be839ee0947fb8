//! Bounded Nelder-Mead simplex search.
//!
//! The search runs in normalized coordinates where every bound interval maps
//! to `[0, 1]`; trial points are projected back onto the box, so the
//! objective is never evaluated outside the bounds.

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Edge length of the initial simplex in normalized units.
    pub initial_step: f64,
    /// Stop when the simplex diameter (normalized) falls below this.
    pub tolerance: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
    /// Per coordinate: the optimum sits on (within 1e-6 normalized of) a bound.
    pub at_bound: Vec<bool>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

struct Scaled<'a, F> {
    f: F,
    lower: &'a [f64],
    upper: &'a [f64],
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Scaled<'_, F> {
    fn to_real(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(self.upper))
            .map(|(&u, (&lo, &hi))| lo + u.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    fn eval(&mut self, u: &[f64]) -> f64 {
        self.evals += 1;
        let x = self.to_real(u);
        let v = (self.f)(&x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn project(u: &mut [f64]) {
    for v in u {
        *v = v.clamp(0.0, 1.0);
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..simplex.len() {
        for j in i + 1..simplex.len() {
            let dist = simplex[i]
                .iter()
                .zip(&simplex[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d = d.max(dist);
        }
    }
    d
}

/// Minimizes `f` inside `[lower, upper]` starting from `start` (real units).
pub fn minimize<F>(f: F, start: &[f64], opts: &SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    assert!(n > 0 && opts.lower.len() == n && opts.upper.len() == n);
    let mut obj = Scaled {
        f,
        lower: &opts.lower,
        upper: &opts.upper,
        evals: 0,
    };
    let mut origin: Vec<f64> = start
        .iter()
        .zip(opts.lower.iter().zip(&opts.upper))
        .map(|(&x, (&lo, &hi))| (x - lo) / (hi - lo))
        .collect();
    project(&mut origin);

    let mut simplex = vec![origin.clone()];
    for i in 0..n {
        let mut v = origin.clone();
        // Step inward when the start sits near the upper bound.
        v[i] += if v[i] + opts.initial_step <= 1.0 {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| obj.eval(v)).collect();
    let mut converged = false;

    while obj.evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < opts.tolerance {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut p);
            p
        };

        let reflected = along(REFLECT);
        let fr = obj.eval(&reflected);
        if fr < values[0] {
            let expanded = along(EXPAND);
            let fe = obj.eval(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(CONTRACT);
            let fc = obj.eval(&c);
            (c, fc)
        } else {
            let c = along(-CONTRACT);
            let fc = obj.eval(&c);
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + SHRINK * (v - b))
                .collect();
            values[i] = obj.eval(&shrunk);
            simplex[i] = shrunk;
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let u = simplex[best].clone();
    SimplexResult {
        x: obj.to_real(&u),
        value: values[best],
        evals: obj.evals,
        converged,
        at_bound: u.iter().map(|&v| v <= 1e-6 || v >= 1.0 - 1e-6).collect(),
    }
}

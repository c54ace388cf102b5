//! Dense bounded-variable primal simplex for the node relaxations.
//!
//! Solves `max c·x  s.t.  A x = b,  0 <= x <= u` with `b >= 0`. Phase one
//! starts from an all-artificial basis. Nonbasic variables sit at either
//! bound, so the `z <= 1` bounds never become explicit rows.

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct LpProblem {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major `n_rows x n_cols`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Upper bounds; `f64::INFINITY` allowed.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    IterationLimit,
}

struct Tableau {
    m: usize,
    /// Total variables: structural then one artificial per row.
    width: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    objective: f64,
}

impl Tableau {
    fn is_basic(&self) -> Vec<bool> {
        let mut b = vec![false; self.width];
        for &v in &self.basis {
            b[v] = true;
        }
        b
    }

    fn reprice(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.width..(i + 1) * self.width];
                for (dj, &tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        self.d = d;
        let basic_value: f64 = (0..self.m).map(|i| self.cost[self.basis[i]] * self.beta[i]).sum();
        let nonbasic_value: f64 = (0..self.width)
            .filter(|&j| self.at_upper[j])
            .map(|j| self.cost[j] * self.upper[j])
            .sum();
        self.objective = basic_value + nonbasic_value;
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let p = self.t[r * w + j];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + j];
            if f != 0.0 {
                for (v, &pr) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * w + j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, &pr) in self.d.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.d[j] = 0.0;
        }
        self.basis[r] = j;
    }

    /// Runs simplex iterations on the current cost vector. Returns `false`
    /// when the iteration limit is hit.
    fn optimize(&mut self, max_iters: usize) -> bool {
        let mut degenerate_run = 0usize;
        for _ in 0..max_iters {
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let basic = self.is_basic();
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.width {
                if basic[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let dj = self.d[j];
                let dir = if !self.at_upper[j] && dj > OPT_TOL {
                    1.0
                } else if self.at_upper[j] && dj < -OPT_TOL {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if entering.is_none_or(|(e, _)| dj.abs() > self.d[e].abs()) {
                    entering = Some((j, dir));
                }
            }
            let Some((j, dir)) = entering else {
                return true;
            };

            // Ratio test over basic variables, plus the entering bound flip.
            let mut step = self.upper[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let tij = self.t[i * self.width + j];
                if tij.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -dir * tij;
                let bi = self.basis[i];
                let (limit, to_upper) = if rate < 0.0 {
                    (self.beta[i].max(0.0) / -rate, false)
                } else if self.upper[bi].is_finite() {
                    ((self.upper[bi] - self.beta[i]).max(0.0) / rate, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < step,
                    Some((l, _)) => {
                        if limit < step - 1e-12 {
                            true
                        } else if limit <= step + 1e-12 {
                            if bland {
                                bi < self.basis[l]
                            } else {
                                tij.abs() > self.t[l * self.width + j].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = limit;
                    leave = Some((i, to_upper));
                }
            }
            if !step.is_finite() {
                // Unbounded direction: cannot happen with bounded structurals
                // and a zero-cost slack, but bail out rather than loop.
                return false;
            }
            if step > 1e-12 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            for i in 0..self.m {
                let tij = self.t[i * self.width + j];
                if tij != 0.0 {
                    self.beta[i] -= dir * tij * step;
                }
            }
            self.objective += self.d[j] * dir * step;
            match leave {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let start = if self.at_upper[j] { self.upper[j] } else { 0.0 };
                    let leaving = self.basis[r];
                    self.at_upper[leaving] = to_upper;
                    self.at_upper[j] = false;
                    self.pivot(r, j);
                    self.beta[r] = start + dir * step;
                }
            }
        }
        false
    }
}

pub(crate) fn solve(lp: &LpProblem, max_iters: usize) -> LpOutcome {
    let (m, n) = (lp.n_rows, lp.n_cols);
    debug_assert!(lp.b.iter().all(|&v| v >= 0.0));
    let width = n + m;
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        t[i * width..i * width + n].copy_from_slice(&lp.a[i * n..(i + 1) * n]);
        t[i * width + n + i] = 1.0;
    }
    let mut upper = lp.upper.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut cost = vec![0.0; width];
    cost[n..].iter_mut().for_each(|c| *c = -1.0);
    let mut tab = Tableau {
        m,
        width,
        t,
        beta: lp.b.clone(),
        basis: (n..n + m).collect(),
        at_upper: vec![false; width],
        upper,
        d: Vec::new(),
        cost,
        objective: 0.0,
    };
    tab.reprice();
    if !tab.optimize(max_iters) {
        return LpOutcome::IterationLimit;
    }
    if tab.objective < -FEAS_TOL {
        return LpOutcome::Infeasible;
    }
    for u in &mut tab.upper[n..] {
        *u = 0.0;
    }
    tab.cost = lp.c.clone();
    tab.cost.extend(std::iter::repeat_n(0.0, m));
    tab.reprice();
    if !tab.optimize(max_iters) {
        return LpOutcome::IterationLimit;
    }
    let mut x: Vec<f64> = (0..n)
        .map(|j| if tab.at_upper[j] { lp.upper[j] } else { 0.0 })
        .collect();
    for (i, &v) in tab.basis.iter().enumerate() {
        if v < n {
            x[v] = tab.beta[i].clamp(0.0, lp.upper[v]);
        }
    }
    let value = x.iter().zip(&lp.c).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

//! LP-based branch and bound over a reduced set-partitioning instance.

use std::time::Instant;

use super::simplex::{self, LpOutcome, LpProblem};
use super::{Budget, SolveStatus};

const RESTART_EVERY: usize = 10_000;
const INTEGRALITY_TOL: f64 = 1e-6;
const LP_ITERATION_LIMIT: usize = 200_000;

/// A partitioning instance after duplicate rows and columns were merged.
#[derive(Debug, Clone)]
pub(crate) struct Instance {
    pub n_rows: usize,
    pub cols: Vec<Vec<usize>>,
    pub costs: Vec<f64>,
    pub cap: Option<usize>,
    /// All costs are integers, so bounds can be rounded down.
    pub integral: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub selected: Option<Vec<usize>>,
    pub objective: f64,
    pub best_bound: f64,
    pub status: SolveStatus,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fix {
    Free,
    Zero,
    One,
}

struct Node {
    fix: Vec<Fix>,
    bound: f64,
}

enum Evaluation {
    Infeasible,
    /// Integral completion found directly, no relaxation left.
    Leaf(Vec<usize>),
    Relaxed {
        bound: f64,
        x: Vec<(usize, f64)>,
    },
    Stalled,
}

impl Instance {
    fn row_cols(&self) -> Vec<Vec<usize>> {
        let mut rc = vec![Vec::new(); self.n_rows];
        for (j, col) in self.cols.iter().enumerate() {
            for &r in col {
                rc[r].push(j);
            }
        }
        rc
    }

    /// Checks exact cover and the cap; returns the objective.
    pub fn value_of(&self, selected: &[usize]) -> Option<f64> {
        if self.cap.is_some_and(|c| selected.len() > c) {
            return None;
        }
        let mut hits = vec![0usize; self.n_rows];
        for &j in selected {
            for &r in self.cols.get(j)? {
                hits[r] += 1;
            }
        }
        if hits.iter().any(|&h| h != 1) {
            return None;
        }
        Some(selected.iter().map(|&j| self.costs[j]).sum())
    }
}

struct Solver<'a> {
    inst: &'a Instance,
    row_cols: Vec<Vec<usize>>,
    incumbent: Option<(Vec<usize>, f64)>,
}

impl<'a> Solver<'a> {
    fn prunable(&self, bound: f64) -> bool {
        let Some((_, inc)) = &self.incumbent else {
            return false;
        };
        if self.inst.integral {
            (bound + 1e-6).floor() <= *inc
        } else {
            bound <= inc + 1e-10 * inc.abs().max(1.0)
        }
    }

    fn offer(&mut self, selected: Vec<usize>) {
        let Some(value) = self.inst.value_of(&selected) else {
            return;
        };
        if self.incumbent.as_ref().is_none_or(|(_, v)| value > *v) {
            self.incumbent = Some((selected, value));
        }
    }

    /// Propagates fixings to a fixpoint, then solves the node relaxation.
    fn evaluate(&self, fix: &mut [Fix]) -> Evaluation {
        let inst = self.inst;
        let mut covered = vec![false; inst.n_rows];
        for (j, f) in fix.iter().enumerate() {
            if *f == Fix::One {
                for &r in &inst.cols[j] {
                    if covered[r] {
                        return Evaluation::Infeasible;
                    }
                    covered[r] = true;
                }
            }
        }
        loop {
            for j in 0..fix.len() {
                if fix[j] == Fix::Free && inst.cols[j].iter().any(|&r| covered[r]) {
                    fix[j] = Fix::Zero;
                }
            }
            let mut forced = false;
            for r in 0..inst.n_rows {
                if covered[r] {
                    continue;
                }
                let mut free = self.row_cols[r].iter().filter(|&&j| fix[j] == Fix::Free);
                let Some(&j) = free.next() else {
                    return Evaluation::Infeasible;
                };
                if free.next().is_none() {
                    fix[j] = Fix::One;
                    for &rr in &inst.cols[j] {
                        if covered[rr] {
                            return Evaluation::Infeasible;
                        }
                        covered[rr] = true;
                    }
                    forced = true;
                }
            }
            if !forced {
                break;
            }
        }

        let ones: Vec<usize> = (0..fix.len()).filter(|&j| fix[j] == Fix::One).collect();
        let remaining = match inst.cap {
            Some(c) if ones.len() > c => return Evaluation::Infeasible,
            Some(c) => c - ones.len(),
            None => usize::MAX,
        };
        let free: Vec<usize> = (0..fix.len()).filter(|&j| fix[j] == Fix::Free).collect();
        let open_rows: Vec<usize> = (0..inst.n_rows).filter(|&r| !covered[r]).collect();
        let fixed_value: f64 = ones.iter().map(|&j| inst.costs[j]).sum();

        if open_rows.is_empty() {
            // Free columns here cover nothing: take the profitable ones.
            let mut extra: Vec<usize> = free.into_iter().filter(|&j| inst.costs[j] > 0.0).collect();
            extra.sort_by(|&a, &b| inst.costs[b].total_cmp(&inst.costs[a]).then(a.cmp(&b)));
            extra.truncate(remaining);
            let mut sel = ones;
            sel.extend(extra);
            sel.sort_unstable();
            return Evaluation::Leaf(sel);
        }
        if remaining == 0 {
            return Evaluation::Infeasible;
        }

        let mut row_index = vec![usize::MAX; inst.n_rows];
        for (i, &r) in open_rows.iter().enumerate() {
            row_index[r] = i;
        }
        let with_card = remaining < free.len();
        let m = open_rows.len() + usize::from(with_card);
        let n = free.len() + usize::from(with_card);
        let mut a = vec![0.0; m * n];
        for (k, &j) in free.iter().enumerate() {
            for &r in &inst.cols[j] {
                a[row_index[r] * n + k] = 1.0;
            }
            if with_card {
                a[(m - 1) * n + k] = 1.0;
            }
        }
        let mut b = vec![1.0; m];
        let mut c: Vec<f64> = free.iter().map(|&j| inst.costs[j]).collect();
        let mut upper = vec![1.0; free.len()];
        if with_card {
            a[(m - 1) * n + n - 1] = 1.0;
            b[m - 1] = remaining as f64;
            c.push(0.0);
            upper.push(f64::INFINITY);
        }
        let lp = LpProblem {
            n_rows: m,
            n_cols: n,
            a,
            b,
            c,
            upper,
        };
        match simplex::solve(&lp, LP_ITERATION_LIMIT) {
            LpOutcome::Infeasible => Evaluation::Infeasible,
            LpOutcome::IterationLimit => Evaluation::Stalled,
            LpOutcome::Optimal { x, value } => Evaluation::Relaxed {
                bound: value + fixed_value,
                x: free.iter().copied().zip(x).collect(),
            },
        }
    }

    fn branch_column(&self, x: &[(usize, f64)]) -> Option<usize> {
        let costs = &self.inst.costs;
        x.iter()
            .filter(|(_, v)| *v > INTEGRALITY_TOL && *v < 1.0 - INTEGRALITY_TOL)
            .min_by(|(ja, va), (jb, vb)| {
                let (da, db) = ((va - 0.5).abs(), (vb - 0.5).abs());
                da.total_cmp(&db)
                    .then(costs[*jb].total_cmp(&costs[*ja]))
                    .then(ja.cmp(jb))
            })
            .map(|(j, _)| *j)
    }
}

pub(crate) fn solve(inst: &Instance, budget: Budget, warm: Option<Vec<usize>>) -> Outcome {
    let start = Instant::now();
    let mut solver = Solver {
        inst,
        row_cols: inst.row_cols(),
        incumbent: None,
    };
    if let Some(w) = warm {
        solver.offer(w);
    }
    let mut stack = vec![Node {
        fix: vec![Fix::Free; inst.cols.len()],
        bound: f64::INFINITY,
    }];
    let mut nodes = 0usize;
    let mut exhausted = false;

    while let Some(mut node) = stack.pop() {
        if nodes >= budget.max_nodes || start.elapsed().as_secs_f64() >= budget.max_seconds {
            stack.push(node);
            exhausted = true;
            break;
        }
        nodes += 1;
        if nodes.is_multiple_of(RESTART_EVERY) && !stack.is_empty() {
            stack.push(node);
            let best = (0..stack.len())
                .max_by(|&a, &b| stack[a].bound.total_cmp(&stack[b].bound).then(a.cmp(&b)))
                .unwrap_or(0);
            let last = stack.len() - 1;
            stack.swap(best, last);
            node = stack.pop().expect("stack is nonempty");
        }
        if solver.prunable(node.bound) {
            continue;
        }
        match solver.evaluate(&mut node.fix) {
            Evaluation::Infeasible => {}
            Evaluation::Leaf(sel) => solver.offer(sel),
            Evaluation::Stalled => {
                if let Some(j) = node.fix.iter().position(|f| *f == Fix::Free) {
                    push_children(&mut stack, &node, j, node.bound);
                }
            }
            Evaluation::Relaxed { bound, x } => {
                if solver.prunable(bound) {
                    continue;
                }
                match solver.branch_column(&x) {
                    Some(j) => push_children(&mut stack, &node, j, bound),
                    None => {
                        let mut sel: Vec<usize> = (0..node.fix.len()).filter(|&j| node.fix[j] == Fix::One).collect();
                        sel.extend(x.iter().filter(|(_, v)| *v > 0.5).map(|(j, _)| *j));
                        sel.sort_unstable();
                        if inst.value_of(&sel).is_some() {
                            solver.offer(sel);
                        } else if let Some(&(j, _)) = x.first() {
                            // Numerically integral yet not a partition:
                            // keep splitting rather than trust it.
                            push_children(&mut stack, &node, j, bound);
                        }
                    }
                }
            }
        }
    }

    let open_bound = stack.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    match solver.incumbent {
        Some((selected, objective)) => {
            let (status, best_bound) = if exhausted && !stack.is_empty() {
                (SolveStatus::FeasibleBudgetExhausted, open_bound.max(objective))
            } else {
                (SolveStatus::Optimal, objective)
            };
            Outcome {
                selected: Some(selected),
                objective,
                best_bound,
                status,
                nodes,
            }
        }
        None if exhausted => Outcome {
            selected: None,
            objective: f64::NEG_INFINITY,
            best_bound: open_bound,
            status: SolveStatus::BudgetExhausted,
            nodes,
        },
        None => Outcome {
            selected: None,
            objective: f64::NEG_INFINITY,
            best_bound: f64::NEG_INFINITY,
            status: SolveStatus::Infeasible,
            nodes,
        },
    }
}

fn push_children(stack: &mut Vec<Node>, node: &Node, j: usize, bound: f64) {
    let mut zero = node.fix.clone();
    zero[j] = Fix::Zero;
    let mut one = node.fix.clone();
    one[j] = Fix::One;
    stack.push(Node { fix: zero, bound });
    stack.push(Node { fix: one, bound });
}

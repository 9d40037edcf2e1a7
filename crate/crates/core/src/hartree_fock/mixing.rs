//! Linear and Anderson mixing of the on-site screening potential.

use serde::{Deserialize, Serialize};

use crate::linalg;

/// Past inputs and residuals `f(x) − x`, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AndersonHistory {
    pub inputs: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
}

impl AndersonHistory {
    pub fn push(&mut self, input: Vec<f64>, residual: Vec<f64>, depth: usize) {
        self.inputs.push(input);
        self.residuals.push(residual);
        while self.inputs.len() > depth.max(1) + 1 {
            self.inputs.remove(0);
            self.residuals.remove(0);
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

pub fn linear(input: &[f64], output: &[f64], alpha: f64) -> Vec<f64> {
    input.iter().zip(output).map(|(x, y)| x + alpha * (y - x)).collect()
}

/// Anderson update from the newest history entry: minimizes the linearized
/// residual over the span of past differences, then takes a damped step.
/// `None` when the difference system is degenerate.
pub fn anderson(history: &AndersonHistory, alpha: f64) -> Option<Vec<f64>> {
    let n = history.len();
    if n < 2 {
        return None;
    }
    let x = &history.inputs[n - 1];
    let r = &history.residuals[n - 1];
    let k = n - 1;
    let dx: Vec<Vec<f64>> = (0..k)
        .map(|i| sub(&history.inputs[i + 1], &history.inputs[i]))
        .collect();
    let dr: Vec<Vec<f64>> = (0..k)
        .map(|i| sub(&history.residuals[i + 1], &history.residuals[i]))
        .collect();
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            a[j * k + i] = dot(&dr[i], &dr[j]);
        }
        b[i] = dot(&dr[i], r);
    }
    let trace: f64 = (0..k).map(|i| a[i * k + i]).sum();
    if trace == 0.0 {
        return None;
    }
    for i in 0..k {
        a[i * k + i] += 1e-12 * trace;
    }
    let gamma = linalg::solve_real(k, &a, &b)?;
    let mut out: Vec<f64> = x.iter().zip(r).map(|(xi, ri)| xi + alpha * ri).collect();
    for (g, (dxi, dri)) in gamma.iter().zip(dx.iter().zip(&dr)) {
        for (o, (u, v)) in out.iter_mut().zip(dxi.iter().zip(dri)) {
            *o -= g * (u + alpha * v);
        }
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

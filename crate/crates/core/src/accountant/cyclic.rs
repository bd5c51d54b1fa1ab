//! Deterministic cyclic batches (`b | n`, block `t mod n/b` at step `t`).
//!
//! The differing record is used once per pass, adding a shift `y = ηΔ/b`.
//! Over a window of the last `R = T − τ` steps the schedule pays a uniform
//! share of the initial shift every step, spreads each pass's `y` evenly over
//! the following pass, and spreads the final `y` over the remaining steps.

use super::{AccountResult, Branch, InnerSolution, Setup};
use crate::error::{PrivacyError, Result};
use crate::pabi::{evaluate, PabiSchedule};

/// Local index (1-based) of the first use of `block` in the window starting
/// after global step `tau`, and the number of uses among `r` steps.
fn uses(blocks: usize, tau: usize, block: usize, r: usize) -> (usize, usize) {
    let first = (block + blocks - tau % blocks) % blocks + 1;
    let count = if first > r { 0 } else { (r - first) / blocks + 1 };
    (first, count)
}

/// `Σ a_t²` of the window schedule for the record in `block` (0-based),
/// window start `tau`, per-use shift `y` and initial shift `z0`.
pub fn cyclic_sum_of_squares(blocks: usize, iterations: usize, tau: usize, block: usize, y: f64, z0: f64) -> f64 {
    let r = iterations - tau;
    let base = z0 / r as f64;
    let (first, count) = uses(blocks, tau, block, r);
    if count == 0 {
        return r as f64 * base * base;
    }
    let x = y / blocks as f64;
    let last = first + (count - 1) * blocks;
    let tail = (r - last + 1) as f64;
    let head = (first - 1) as f64;
    let middle = ((count - 1) * blocks) as f64;
    head * base * base + middle * (base + x) * (base + x) + tail * (base + y / tail) * (base + y / tail)
}

/// The same schedule as explicit sequences for the shift-recursion engine.
pub fn cyclic_schedule(
    blocks: usize,
    iterations: usize,
    tau: usize,
    block: usize,
    y: f64,
    z0: f64,
    noise: f64,
) -> Result<PabiSchedule> {
    if iterations == 0 || tau >= iterations || block >= blocks {
        return Err(PrivacyError::domain("window outside the run"));
    }
    let r = iterations - tau;
    let base = z0 / r as f64;
    let (first, count) = uses(blocks, tau, block, r);
    let mut shifts = vec![0.0; r];
    let mut alloc = vec![base; r];
    if count > 0 {
        let last = first + (count - 1) * blocks;
        let x = y / blocks as f64;
        let tail = (r - last + 1) as f64;
        for j in 0..count {
            shifts[first - 1 + j * blocks] = y;
        }
        for a in &mut alloc[first - 1..last - 1] {
            *a += x;
        }
        for a in &mut alloc[last - 1..] {
            *a += y / tail;
        }
    }
    PabiSchedule::new(shifts, alloc, vec![noise; r], z0, 1.0)
}

const FULL_SCAN_LIMIT: usize = 40_000_000;

pub(crate) fn cyclic(s: &Setup) -> Result<AccountResult> {
    let eta = s
        .eta
        .ok_or_else(|| PrivacyError::domain("cyclic regime requires a constant stepsize"))?;
    if s.n % s.b != 0 {
        return Err(PrivacyError::domain(format!(
            "cyclic accounting requires b to divide n (b={}, n={}); pad the dataset to a multiple of b",
            s.b, s.n
        )));
    }
    let blocks = s.n / s.b;
    let t = s.iterations;
    let y = eta * s.sensitivity / s.b as f64;
    let scale = s.alpha / (2.0 * eta * eta * s.sigma * s.sigma);

    // Window starts to try; the best window length is near D̃/x, so very long
    // runs only scan a neighbourhood of it.
    let taus: Vec<usize> = match s.diameter {
        None => vec![0],
        Some(d) if blocks.saturating_mul(t) > FULL_SCAN_LIMIT => {
            let x = y / blocks as f64;
            let r_star = ((d + y) / x).round() as i64;
            let span = 2 * blocks as i64;
            let mut v = vec![0];
            for r in (r_star - span).max(1)..=(r_star + span).min(t as i64 - 1) {
                v.push(t - r as usize);
            }
            v.sort_unstable();
            v.dedup();
            v
        }
        Some(_) => (0..t).collect(),
    };
    let dt = s.diameter.map(|d| d + y).unwrap_or(0.0);

    let mut worst: Option<(f64, usize, usize)> = None;
    let mut worst_linear = 0.0f64;
    for block in 0..blocks {
        let mut best = (f64::INFINITY, 0);
        for &tau in &taus {
            let z0 = if tau == 0 { 0.0 } else { dt };
            let v = cyclic_sum_of_squares(blocks, t, tau, block, y, z0);
            if tau == 0 {
                worst_linear = worst_linear.max(v);
            }
            if v < best.0 {
                best = (v, tau);
            }
        }
        if worst.is_none_or(|w| best.0 > w.0) {
            worst = Some((best.0, best.1, block));
        }
    }
    let (sum_sq, tau, block) = worst.expect("at least one block");

    let z0 = if tau == 0 { 0.0 } else { dt };
    let check = evaluate(&cyclic_schedule(blocks, t, tau, block, y, z0, eta * s.sigma)?, s.alpha);
    let expect = scale * sum_sq;
    if !check.feasible || (check.epsilon - expect).abs() > 1e-9 * expect.max(f64::MIN_POSITIVE) {
        return Err(PrivacyError::numerical(format!(
            "cyclic schedule check failed (engine {}, closed form {expect}, feasible {})",
            check.epsilon, check.feasible
        )));
    }

    Ok(AccountResult {
        epsilon: expect,
        branch: if tau == 0 { Branch::TLinear } else { Branch::Plateau },
        inner_solution: InnerSolution {
            t_tilde: Some(t - tau),
            tau: Some(tau),
            ..Default::default()
        },
        formula_id: "cyclic_pass_schedule".into(),
        linear_epsilon: scale * worst_linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_explicit_schedule() {
        for &(blocks, t) in &[(1, 5), (3, 10), (4, 17), (6, 6), (5, 3)] {
            for tau in 0..t {
                for block in 0..blocks {
                    for z0 in [0.0, 2.5] {
                        let sched = cyclic_schedule(blocks, t, tau, block, 0.3, z0, 1.0).unwrap();
                        let direct: f64 = sched.allocations.iter().map(|a| a * a).sum();
                        let closed = cyclic_sum_of_squares(blocks, t, tau, block, 0.3, z0);
                        assert!((direct - closed).abs() < 1e-12 * (1.0 + closed), "{blocks} {t} {tau} {block}");
                        assert!(evaluate(&sched, 2.0).feasible);
                    }
                }
            }
        }
    }

    #[test]
    fn uses_counts_by_hand() {
        // 3 blocks, window after step 1: local steps map to global 1,2,3,...;
        // block 0 is used at global 3 and 6 → local 3 and 6.
        assert_eq!(uses(3, 1, 0, 7), (3, 2));
        assert_eq!(uses(3, 0, 0, 7), (1, 3));
        assert_eq!(uses(3, 0, 2, 2), (3, 0));
    }
}

//! One-dimensional search over the noise split `σ₁ ∈ (0, σ)`.

use crate::error::Result;

const INV_PHI: f64 = 0.618_033_988_749_894_848_204_586_834_365_638_1;
const GRID_POINTS: usize = 64;

/// Best value found, the `σ₁` attaining it and the objective's inner data.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SplitMin<X> {
    pub value: f64,
    pub sigma1: f64,
    pub inner: X,
}

fn keep<X: Copy>(best: &mut Option<SplitMin<X>>, cand: SplitMin<X>) {
    if best.is_none_or(|b| cand.value < b.value) {
        *best = Some(cand);
    }
}

fn golden<X: Copy, F>(lo: f64, hi: f64, tol: f64, f: &mut F, best: &mut Option<SplitMin<X>>) -> Result<()>
where
    F: FnMut(f64) -> Result<(f64, X)>,
{
    let (mut a, mut b) = (lo, hi);
    let mut eval = |s: f64, best: &mut Option<SplitMin<X>>| -> Result<f64> {
        let (value, inner) = f(s)?;
        keep(best, SplitMin { value, sigma1: s, inner });
        Ok(value)
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, best)?;
    let mut fd = eval(d, best)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, best)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, best)?;
        }
    }
    Ok(())
}

/// Minimize `f` over the open interval `(0, sigma)`: golden-section search to
/// `10⁻⁶·σ`, cross-checked against a 64-point grid. If the grid beats the
/// search by more than `10⁻⁶` relative the objective is not unimodal, and the
/// search is repeated around the best grid point.
pub(crate) fn minimize_split<X: Copy, F>(sigma: f64, mut f: F) -> Result<SplitMin<X>>
where
    F: FnMut(f64) -> Result<(f64, X)>,
{
    let tol = 1e-6 * sigma;
    let mut searched = None;
    golden(0.0, sigma, tol, &mut f, &mut searched)?;
    let searched = searched.expect("golden search evaluates");

    let mut grid: Option<SplitMin<X>> = None;
    let mut grid_index = 0;
    for j in 1..=GRID_POINTS {
        let s = sigma * j as f64 / (GRID_POINTS + 1) as f64;
        let (value, inner) = f(s)?;
        if grid.is_none_or(|g| value < g.value) {
            grid = Some(SplitMin { value, sigma1: s, inner });
            grid_index = j;
        }
    }
    let grid = grid.expect("non-empty grid");

    let mut best = Some(searched);
    keep(&mut best, grid);
    if grid.value < searched.value * (1.0 - 1e-6) {
        let step = sigma / (GRID_POINTS + 1) as f64;
        let lo = step * (grid_index - 1) as f64;
        let hi = step * (grid_index + 1) as f64;
        golden(lo, hi, tol, &mut f, &mut best)?;
    }
    Ok(best.expect("at least one evaluation"))
}

/// Integer `t ∈ [1, t_max]` minimizing a convex `g` whose continuous
/// minimizer is `t_star`, testing both neighbours.
pub(crate) fn integer_minimizer<G: Fn(usize) -> f64>(t_star: f64, t_max: usize, g: G) -> (f64, usize) {
    let clamp = |t: f64| -> usize {
        if !(t >= 1.0) {
            1
        } else if t >= t_max as f64 {
            t_max
        } else {
            t as usize
        }
    };
    let lo = clamp(t_star.floor());
    let hi = clamp(t_star.ceil());
    let (vlo, vhi) = (g(lo), g(hi));
    if vhi < vlo {
        (vhi, hi)
    } else {
        (vlo, lo)
    }
}

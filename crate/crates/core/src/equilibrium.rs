//! Competitive binding of n ligand species to one receptor population.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumProblem {
    pub p0: f64,
    /// (L0_j, K_j) pairs in a common concentration unit.
    pub species: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    #[serde(rename = "P_free")]
    pub p_free: f64,
    #[serde(rename = "PL")]
    pub pl: Vec<f64>,
    #[serde(rename = "L_free")]
    pub l_free: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub theta: Vec<f64>,
    pub theta_sum: f64,
}

impl EquilibriumProblem {
    pub fn new(p0: f64, species: Vec<(f64, f64)>) -> Self {
        EquilibriumProblem { p0, species }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 >= 0.0 && self.p0.is_finite()) {
            return Err(Error::Validation("P0 >= 0".into()));
        }
        for (j, &(l0, k)) in self.species.iter().enumerate() {
            if !(l0 >= 0.0 && l0.is_finite()) {
                return Err(Error::Validation(format!("L0[{j}] >= 0")));
            }
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Validation(format!("K[{j}] > 0")));
            }
        }
        Ok(())
    }
}

/// Implicit receptor balance: P0 - x - sum L0 x/(x+K).
pub fn residual(problem: &EquilibriumProblem, x: f64) -> f64 {
    problem.p0
        - x
        - problem
            .species
            .iter()
            .map(|&(l0, k)| l0 * x / (x + k))
            .sum::<f64>()
}

/// One species re-equilibrated against `pool` receptors. Returns
/// (bound, remaining free), both formed without cancellation.
fn bind_step(pool: f64, l0: f64, k: f64) -> Result<(f64, f64)> {
    // b^2 - 4 P L0 = (P - L0 + K)^2 + 4 L0 K
    let u = pool - l0 + k;
    let disc = u * u + 4.0 * l0 * k;
    if disc < 0.0 || !disc.is_finite() {
        return Err(Error::Internal(format!(
            "negative discriminant {disc:e} (P={pool:e}, L0={l0:e}, K={k:e})"
        )));
    }
    let sq = disc.sqrt();
    let b = pool + l0 + k;
    let bound = if b + sq > 0.0 { 2.0 * pool * l0 / (b + sq) } else { 0.0 };
    // pool - bound = pool (u + sq) / (b + sq)
    let num = if u >= 0.0 { u + sq } else { 4.0 * l0 * k / (sq - u) };
    let free = if b + sq > 0.0 { pool * num / (b + sq) } else { pool };
    Ok((bound, free.max(0.0)))
}

fn finish(problem: &EquilibriumProblem, p_free: f64, pl: Vec<f64>, iterations: usize) -> EquilibriumSolution {
    let l_free = problem
        .species
        .iter()
        .zip(&pl)
        .map(|(&(l0, _), &b)| (l0 - b).max(0.0))
        .collect();
    EquilibriumSolution {
        p_free,
        pl,
        l_free,
        iterations,
        residual: residual(problem, p_free),
    }
}

/// One Gauss–Seidel sweep over species (Algorithm 1 body): each complex is
/// re-equilibrated against the receptor pool left by the others. `pl` is
/// updated in place; returns the free receptor left after the sweep.
fn sweep(problem: &EquilibriumProblem, pl: &mut [f64], mut p_avail: f64) -> Result<f64> {
    for (j, &(l0, k)) in problem.species.iter().enumerate() {
        let pool = p_avail + pl[j];
        let (new, free) = bind_step(pool, l0, k)?;
        pl[j] = new;
        p_avail = free;
    }
    Ok(p_avail)
}

/// Iterative solver built on the Algorithm 1 sweep, started from an empty
/// receptor pool (no complexes, P_avail = P0). Plain sweeps can crawl
/// (contraction ratio ~1) when saturating species trade receptors, so the
/// sweep map is wrapped in Anderson mixing; any mixed iterate that leaves
/// the feasible set is replaced by the plain sweep. Sweeps stop once no
/// complex moves by more than `tol * P0`. Because that update size does
/// not bound the error of a slowly contracting sequence, the sweep result
/// is then refined by safeguarded Newton steps on the implicit receptor
/// balance and the complexes are re-derived by mass action.
pub fn solve_iterative(problem: &EquilibriumProblem, tol: f64, max_iter: usize) -> Result<EquilibriumSolution> {
    solve_iterative_with(problem, tol, max_iter, true)
}

/// As `solve_iterative`; `accelerate = false` runs bare sweeps.
pub fn solve_iterative_with(
    problem: &EquilibriumProblem,
    tol: f64,
    max_iter: usize,
    accelerate: bool,
) -> Result<EquilibriumSolution> {
    problem.validate()?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Validation("tol > 0 and max_iter >= 1".into()));
    }
    let n = problem.species.len();
    let mut x = vec![0.0; n];
    let mut p_avail = problem.p0;
    if n == 0 {
        return Ok(finish(problem, p_avail, x, 1));
    }
    let scale = problem.p0.max(f64::MIN_POSITIVE);
    let depth = 5.min(n + 1);
    // Histories of sweep outputs g = G(x) and residuals f = g - x.
    let mut gs: Vec<Vec<f64>> = Vec::new();
    let mut fs: Vec<Vec<f64>> = Vec::new();
    for it in 1..=max_iter {
        let mut g = x.clone();
        let p_new = sweep(problem, &mut g, p_avail)?;
        let f: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a - b).collect();
        let max_change = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max_change <= tol * scale {
            if !accelerate {
                return Ok(finish(problem, p_new, g, it));
            }
            return Ok(refine(problem, p_new, it));
        }
        if accelerate && it % 64 == 0 {
            // Mixing can stall on strongly competitive systems; polish the
            // current estimate and accept it if it passes the sweep test.
            let cand = refine(problem, p_new, it);
            let mut chk = cand.pl.clone();
            sweep(problem, &mut chk, cand.p_free)?;
            let moved = chk.iter().zip(&cand.pl).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if moved <= tol * scale {
                return Ok(cand);
            }
        }
        let plain = (g.clone(), p_new);
        gs.push(g);
        fs.push(f);
        if gs.len() > depth + 1 {
            gs.remove(0);
            fs.remove(0);
        }
        let mixed = if accelerate && gs.len() >= 2 { anderson(&gs, &fs) } else { None };
        let feasible = mixed.filter(|m| {
            m.iter()
                .zip(&problem.species)
                .all(|(v, &(l0, _))| *v >= 0.0 && *v <= l0.min(problem.p0))
                && m.iter().sum::<f64>() < problem.p0
        });
        match feasible {
            Some(m) => {
                p_avail = problem.p0 - m.iter().sum::<f64>();
                x = m;
            }
            None => {
                if accelerate && gs.len() >= 2 {
                    // Restart the history from the plain step.
                    let (g, f) = (gs.pop().unwrap(), fs.pop().unwrap());
                    gs.clear();
                    fs.clear();
                    gs.push(g);
                    fs.push(f);
                }
                x = plain.0;
                p_avail = plain.1;
            }
        }
    }
    let last = finish(problem, p_avail, x, max_iter);
    Err(Error::Convergence {
        iterations: max_iter,
        residual: last.residual,
        last: Box::new(last),
    })
}

/// Newton on the receptor balance from the sweep estimate, kept inside a
/// sign bracket (the balance is decreasing and convex in x).
fn refine(problem: &EquilibriumProblem, x0: f64, iterations: usize) -> EquilibriumSolution {
    let (mut lo, mut hi) = (0.0_f64, problem.p0);
    let mut x = x0.clamp(lo, hi);
    for _ in 0..200 {
        let r = residual(problem, x);
        if r > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = -1.0
            - problem
                .species
                .iter()
                .map(|&(l0, k)| l0 * k / ((x + k) * (x + k)))
                .sum::<f64>();
        let mut next = x - r / slope;
        if !(next > lo && next < hi) {
            next = if lo > 0.0 && hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-15 * x || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let pl = problem.species.iter().map(|&(l0, k)| l0 * x / (x + k)).collect();
    let mut sol = finish(problem, x, pl, iterations);
    sol.l_free = problem.species.iter().map(|&(l0, k)| l0 * k / (x + k)).collect();
    sol
}

/// Type-II Anderson update from the last few (g, f) pairs.
fn anderson(gs: &[Vec<f64>], fs: &[Vec<f64>]) -> Option<Vec<f64>> {
    let m = gs.len() - 1;
    let n = gs[0].len();
    let df: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|k| fs[i + 1][k] - fs[i][k]).collect()).collect();
    let dg: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|k| gs[i + 1][k] - gs[i][k]).collect()).collect();
    let last = &fs[m];
    // Normal equations (dF^T dF + reg) gamma = dF^T f, solved by elimination.
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = df[i].iter().zip(&df[j]).map(|(p, q)| p * q).sum();
        }
        a[i][m] = df[i].iter().zip(last).map(|(p, q)| p * q).sum();
    }
    let trace: f64 = (0..m).map(|i| a[i][i]).sum();
    if !(trace > 0.0) {
        return None;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1e-12 * trace;
    }
    for c in 0..m {
        let piv = (c..m).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs()))?;
        a.swap(c, piv);
        if a[c][c] == 0.0 {
            return None;
        }
        for r in c + 1..m {
            let fct = a[r][c] / a[c][c];
            for k in c..=m {
                a[r][k] -= fct * a[c][k];
            }
        }
    }
    let mut gamma = vec![0.0; m];
    for c in (0..m).rev() {
        let s: f64 = (c + 1..m).map(|k| a[c][k] * gamma[k]).sum();
        gamma[c] = (a[c][m] - s) / a[c][c];
    }
    let out: Vec<f64> = (0..n)
        .map(|k| gs[m][k] - (0..m).map(|i| gamma[i] * dg[i][k]).sum::<f64>())
        .collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Bracketing oracle on the monotone residual over [0, P0]. Bisects in log
/// space while the bracket spans more than a factor of two, so tiny free
/// receptor concentrations are resolved to relative precision.
pub fn solve_bisection(problem: &EquilibriumProblem, tol: f64) -> Result<EquilibriumSolution> {
    problem.validate()?;
    let (mut lo, mut hi) = (0.0_f64, problem.p0);
    let mut iterations = 0;
    if problem.p0 > 0.0 && !problem.species.is_empty() {
        // Tighten the lower bound to a positive value where residual > 0.
        let mut probe = problem.p0;
        while residual(problem, probe) <= 0.0 && probe > f64::MIN_POSITIVE {
            hi = probe;
            probe *= 0.5;
            iterations += 1;
        }
        lo = if residual(problem, probe) > 0.0 { probe } else { 0.0 };
        while iterations < 10_000 {
            iterations += 1;
            let mid = if lo > 0.0 && hi > 2.0 * lo {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
            if mid <= lo || mid >= hi {
                break;
            }
            if residual(problem, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= tol * hi {
                break;
            }
        }
    }
    let x = if problem.species.is_empty() { problem.p0 } else { 0.5 * (lo + hi) };
    let pl = problem
        .species
        .iter()
        .map(|&(l0, k)| if x + k > 0.0 { l0 * x / (x + k) } else { 0.0 })
        .collect();
    Ok(finish(problem, x, pl, iterations.max(1)))
}

pub fn occupancy_fractions(sol: &EquilibriumSolution, p0: f64) -> Result<Occupancy> {
    if !(p0 > 0.0) {
        return Err(Error::Domain("occupancy fractions undefined for P0 = 0".into()));
    }
    let theta: Vec<f64> = sol.pl.iter().map(|b| b / p0).collect();
    let theta_sum = theta.iter().sum::<f64>().min(1.0);
    Ok(Occupancy { theta, theta_sum })
}

/// Bound probability from total concentrations: (p_B, per-species p_Bj).
pub fn bound_probability(species: &[(f64, f64)]) -> (f64, Vec<f64>) {
    let ratios: Vec<f64> = species.iter().map(|&(l0, k)| l0 / k).collect();
    let total: f64 = ratios.iter().sum();
    let per: Vec<f64> = ratios.iter().map(|r| r / (1.0 + total)).collect();
    (total / (1.0 + total), per)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GOLDEN_PL: f64 = 0.381_966_011_250_105_1; // (3 - sqrt 5)/2

    #[test]
    fn empty_system() {
        let p = EquilibriumProblem::new(1.0, vec![]);
        let s = solve_iterative(&p, 1e-12, 100).unwrap();
        assert_eq!(s.p_free, 1.0);
        assert!(s.pl.is_empty());
        assert_eq!(s.iterations, 1);
        let o = occupancy_fractions(&s, 1.0).unwrap();
        assert_eq!(o.theta_sum, 0.0);
    }

    #[test]
    fn golden_ratio_case() {
        let p = EquilibriumProblem::new(1.0, vec![(1.0, 1.0)]);
        let want_free = (5f64.sqrt() - 1.0) / 2.0;
        for s in [solve_iterative(&p, 1e-12, 1000).unwrap(), solve_bisection(&p, 1e-15).unwrap()] {
            assert!((s.pl[0] - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
            assert!((s.p_free - want_free).abs() < 1e-12);
            assert!((s.l_free[0] - want_free).abs() < 1e-12);
        }
        assert!(residual(&p, want_free).abs() < 1e-12);
        let s = solve_iterative(&p, 1e-12, 1000).unwrap();
        let o = occupancy_fractions(&s, 1.0).unwrap();
        assert!((o.theta[0] - GOLDEN_PL).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair() {
        let p = EquilibriumProblem::new(1.0, vec![(1.0, 1.0), (1.0, 1.0)]);
        for s in [solve_iterative(&p, 1e-12, 100_000).unwrap(), solve_bisection(&p, 1e-15).unwrap()] {
            assert!((s.p_free - (2f64.sqrt() - 1.0)).abs() < 1e-12);
            for b in &s.pl {
                assert!((b - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_brackets() {
        let p = EquilibriumProblem::new(2.0, vec![(1.0, 0.5), (3.0, 4.0)]);
        assert_eq!(residual(&p, 0.0), 2.0);
        assert!(residual(&p, 2.0) <= 0.0);
    }

    #[test]
    fn zero_receptors() {
        let p = EquilibriumProblem::new(0.0, vec![(1.0, 1.0)]);
        let s = solve_bisection(&p, 1e-14).unwrap();
        assert_eq!(s.p_free, 0.0);
        assert_eq!(s.pl, vec![0.0]);
        assert!(occupancy_fractions(&s, 0.0).is_err());
        let s = solve_iterative(&p, 1e-12, 10).unwrap();
        assert_eq!(s.pl, vec![0.0]);
    }

    #[test]
    fn saturating_limit() {
        let p = EquilibriumProblem::new(1.0, vec![(1e9, 1e-9)]);
        for s in [solve_iterative(&p, 1e-12, 100).unwrap(), solve_bisection(&p, 1e-14).unwrap()] {
            assert!(s.p_free < 1e-15 && s.p_free >= 0.0);
            assert!((s.pl[0] - 1.0).abs() < 1e-12);
            assert!(occupancy_fractions(&s, 1.0).unwrap().theta_sum > 1.0 - 1e-12);
        }
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let p = EquilibriumProblem::new(1.0, vec![(1.0, 1.0), (1.0, 1.0)]);
        match solve_iterative(&p, 1e-15, 2) {
            Err(Error::Convergence { iterations, last, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last.pl.len(), 2);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn bound_probability_examples() {
        assert_eq!(bound_probability(&[(1.0, 1.0)]).0, 0.5);
        assert_eq!(bound_probability(&[]).0, 0.0);
        let (pb, per) = bound_probability(&[(1.0, 1.0), (3.0, 1.0)]);
        assert!((pb - 0.8).abs() < 1e-15);
        assert!((per[0] - 0.2).abs() < 1e-15);
        assert!((per[1] - 0.6).abs() < 1e-15);
    }

    fn problem_strategy() -> impl Strategy<Value = EquilibriumProblem> {
        let lg = -3.0..3.0f64;
        (lg.clone(), prop::collection::vec((lg.clone(), lg), 1..6)).prop_map(|(p0, sp)| {
            EquilibriumProblem::new(
                10f64.powf(p0),
                sp.into_iter().map(|(l, k)| (10f64.powf(l), 10f64.powf(k))).collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn conservation_and_mass_action(p in problem_strategy()) {
            let s = solve_iterative(&p, 1e-12, 1_000_000).unwrap();
            let total = s.p_free + s.pl.iter().sum::<f64>();
            prop_assert!((total - p.p0).abs() <= 1e-10 * p.p0);
            for (j, &(l0, _)) in p.species.iter().enumerate() {
                prop_assert!(s.pl[j] >= 0.0 && s.pl[j] <= p.p0.min(l0) * (1.0 + 1e-12));
                prop_assert!((s.l_free[j] + s.pl[j] - l0).abs() <= 1e-10 * l0.max(p.p0));
            }
            // Mass action checked on the bisection oracle, whose free receptor
            // is resolved to relative precision.
            let b = solve_bisection(&p, 1e-15).unwrap();
            for (j, &(_, k)) in p.species.iter().enumerate() {
                if b.pl[j] > 0.0 {
                    let lhs = k * b.pl[j];
                    let rhs = b.p_free * b.l_free[j];
                    prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(rhs));
                }
            }
        }

        #[test]
        fn competition_monotonicity(p in problem_strategy(), bump in 1.01..10.0f64, which in 0usize..6) {
            let j = which % p.species.len();
            let base = solve_bisection(&p, 1e-15).unwrap();
            let mut more = p.clone();
            more.species[j].0 *= bump;
            let s = solve_bisection(&more, 1e-15).unwrap();
            let slack = 1e-9;
            prop_assert!(s.p_free <= base.p_free * (1.0 + slack));
            for i in 0..p.species.len() {
                if i != j {
                    prop_assert!(s.pl[i] <= base.pl[i] * (1.0 + slack) + 1e-300);
                }
            }
            let mut weaker = p.clone();
            weaker.species[j].1 *= bump;
            let w = solve_bisection(&weaker, 1e-15).unwrap();
            prop_assert!(w.p_free >= base.p_free * (1.0 - slack));
        }

        #[test]
        fn permutation_invariance(p in problem_strategy()) {
            let a = solve_iterative(&p, 1e-12, 1_000_000).unwrap();
            let mut rev = p.clone();
            rev.species.reverse();
            let b = solve_iterative(&rev, 1e-12, 1_000_000).unwrap();
            prop_assert!((a.p_free - b.p_free).abs() <= 1e-9 * p.p0);
            let n = p.species.len();
            for j in 0..n {
                prop_assert!((a.pl[j] - b.pl[n - 1 - j]).abs() <= 1e-9 * p.p0);
            }
        }

        #[test]
        fn bound_probabilities_sum(sp in prop::collection::vec((0.0..1e3f64, 1e-3..1e3f64), 0..8)) {
            let (pb, per) = bound_probability(&sp);
            prop_assert!((per.iter().sum::<f64>() - pb).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&pb));
        }
    }
}

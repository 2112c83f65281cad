//! Analytic upper bounds on maximal Bell violations, generic in the
//! dimensions and setting counts, plus state-specific bounds from the trace
//! norms of explicitly built source operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::norms::covering_upper;
use crate::source_ops::{build_tau, build_tau_tilde_at, BuilderTag};
use crate::states::{fidelity_with_vector, singlet_vector, QuantumState};
use crate::tensor::C64;

const NAMED_STATE_FIDELITY: f64 = 1.0 - 1e-9;

/// Elementary symmetric polynomial `e_k` of `values`.
fn elementary_symmetric(values: &[f64], k: usize) -> f64 {
    // e[j] after processing a prefix
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for &v in values {
        for j in (1..=k.min(values.len())).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e[k]
}

/// `(−1)^m + Σ_{k=0}^{m−1} (−1)^k 2^{m−k} e_{m−k}(S)` for `m = |S|`, which
/// expands `∏ (2S_i − 1)`.
pub fn alternating_setting_sum(settings: &[usize]) -> f64 {
    let m = settings.len();
    let s: Vec<f64> = settings.iter().map(|&x| x as f64).collect();
    let mut total = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    for k in 0..m {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * 2f64.powi((m - k) as i32) * elementary_symmetric(&s, m - k);
    }
    total
}

/// `1 + 2^{N−1}(d_1⋯d_N / max d − 1)`.
pub fn xi_n(dims: &[usize]) -> f64 {
    let n = dims.len();
    if n == 0 {
        return 1.0;
    }
    let max = *dims.iter().max().expect("non-empty") as f64;
    let prod: f64 = dims.iter().map(|&d| d as f64).product();
    1.0 + 2f64.powi(n as i32 - 1) * (prod / max - 1.0)
}

/// Minimum of [`alternating_setting_sum`] over all `(N−1)`-subsets of the
/// settings; `1` for fewer than two sites.
pub fn theta_n(settings: &[usize]) -> f64 {
    let n = settings.len();
    if n < 2 {
        return 1.0;
    }
    (0..n)
        .map(|drop| {
            let subset: Vec<usize> = settings
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, &s)| s)
                .collect();
            alternating_setting_sum(&subset)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `1 + 2^{N−1}[min{∏d / max d, ∏S / max S} − 1]`, which dominates
/// `min{ξ_N, θ_N}`.
pub fn simplified_bound(dims: &[usize], settings: &[usize]) -> f64 {
    let n = dims.len();
    if n == 0 {
        return 1.0;
    }
    let reduced = |v: &[usize]| {
        let max = *v.iter().max().expect("non-empty") as f64;
        v.iter().map(|&x| x as f64).product::<f64>() / max
    };
    1.0 + 2f64.powi(n as i32 - 1) * (reduced(dims).min(reduced(settings)) - 1.0)
}

/// Trace-norm bound of the inclusion–exclusion operator: `2S_1S_2 − 1` for
/// two sites, otherwise `∏_{n≠u}(2S_n − 1)` when some site `u` carries a
/// single setting.
pub fn tau_trace_norm_bound(settings: &[usize]) -> Option<f64> {
    match settings {
        [s1, s2] => Some(2.0 * (*s1 as f64) * (*s2 as f64) - 1.0),
        _ => {
            let u = settings.iter().position(|&s| s == 1)?;
            let rest: Vec<usize> = settings.iter().enumerate().filter(|&(i, _)| i != u).map(|(_, &s)| s).collect();
            Some(alternating_setting_sum(&rest))
        }
    }
}

/// Trace-norm bound `2^{N−1}(∏_{n≠u} d_n − 1) + 1` of the `W`-block
/// operator with site `u` undilated.
pub fn tau_tilde_trace_norm_bound(dims: &[usize], undilated: usize) -> f64 {
    let n = dims.len();
    let prod: f64 = dims
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != undilated)
        .map(|(_, &d)| d as f64)
        .product();
    1.0 + 2f64.powi(n as i32 - 1) * (prod - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceNormBound {
    pub builder: BuilderTag,
    pub undilated: usize,
    pub value: f64,
    /// Whether the value is the exact covering norm rather than the trace norm.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBound {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub dims: Vec<usize>,
    pub settings: Vec<usize>,
    pub xi_n: f64,
    pub theta_n: f64,
    pub generic_min: f64,
    pub simplified: f64,
    pub source_norm_bounds: Vec<SourceNormBound>,
    pub state_specific: Vec<LabeledBound>,
    pub final_upper: f64,
}

impl BoundReport {
    fn refresh_final(&mut self) {
        let mut best = self.generic_min;
        for b in &self.source_norm_bounds {
            best = best.min(b.value);
        }
        for b in &self.state_specific {
            best = best.min(b.value);
        }
        self.final_upper = best;
    }
}

fn check_lengths(dims: &[usize], settings: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.len() != settings.len() {
        return Err(Error::Shape(format!(
            "{} dimensions but {} setting counts",
            dims.len(),
            settings.len()
        )));
    }
    if dims.iter().chain(settings).any(|&x| x == 0) {
        return Err(Error::Argument("dimensions and setting counts must be >= 1".into()));
    }
    Ok(())
}

/// Generic bound `min{ξ_N, θ_N}` for any state with these dimensions.
pub fn generic_bound(dims: &[usize], settings: &[usize]) -> Result<BoundReport> {
    check_lengths(dims, settings)?;
    let xi = xi_n(dims);
    let theta = theta_n(settings);
    let mut report = BoundReport {
        dims: dims.to_vec(),
        settings: settings.to_vec(),
        xi_n: xi,
        theta_n: theta,
        generic_min: xi.min(theta),
        simplified: simplified_bound(dims, settings),
        source_norm_bounds: Vec::new(),
        state_specific: Vec::new(),
        final_upper: 0.0,
    };
    report.refresh_final();
    Ok(report)
}

/// Amplitudes on `|0…0⟩` and `|1…1⟩` when a pure qubit state lives on their span.
fn ghz_like_amplitudes(rho: &QuantumState) -> Option<(C64, C64)> {
    if rho.site_dims().iter().any(|&d| d != 2) || rho.purity() < NAMED_STATE_FIDELITY {
        return None;
    }
    let psi = rho.pure_vector().ok()?;
    let (a, b) = (psi[0], psi[psi.len() - 1]);
    (a.norm_sqr() + b.norm_sqr() >= NAMED_STATE_FIDELITY).then_some((a, b))
}

fn named_state_bounds(rho: &QuantumState, settings: &[usize]) -> Result<Vec<LabeledBound>> {
    let dims = rho.site_dims();
    let n = dims.len();
    let mut out = Vec::new();
    if dims == [2, 2]
        && settings.iter().any(|&s| s <= 2)
        && fidelity_with_vector(rho, &singlet_vector())? >= NAMED_STATE_FIDELITY
    {
        out.push(LabeledBound {
            label: "singlet".into(),
            value: 3f64.sqrt(),
        });
    }
    if n >= 2 && dims.iter().all(|&d| d == dims[0]) && dims[0] > 2 {
        let d = dims[0];
        if fidelity_with_vector(rho, &crate::states::ghz_vector(d, n)?)? >= NAMED_STATE_FIDELITY {
            out.push(LabeledBound {
                label: "ghz".into(),
                value: 1.0 + 2f64.powi(n as i32 - 1) * (d as f64 - 1.0),
            });
        }
    }
    if n >= 2 {
        if let Some((a, b)) = ghz_like_amplitudes(rho) {
            out.push(LabeledBound {
                label: "generalized_ghz".into(),
                value: 1.0 + 2f64.powi(n as i32 - 1) * 2.0 * a.norm() * b.norm(),
            });
        }
    }
    Ok(out)
}

/// Bounds for a specific state: the generic bound, the trace norms of both
/// one-site-undilated operator families at every site, and closed forms for
/// recognized states.
pub fn state_bound(rho: &QuantumState, settings: &[usize], exec: Exec) -> Result<BoundReport> {
    let dims = rho.site_dims().to_vec();
    let mut report = generic_bound(&dims, settings)?;
    let jobs: Vec<(BuilderTag, usize)> = (0..dims.len())
        .flat_map(|u| [(BuilderTag::Tau, u), (BuilderTag::TauTilde, u)])
        .collect();
    let entries = exec.map_slice(&jobs, |&(builder, u)| -> Result<SourceNormBound> {
        let mut reduced = settings.to_vec();
        reduced[u] = 1;
        let t = match builder {
            BuilderTag::Tau => build_tau(rho, &reduced, None)?,
            _ => build_tau_tilde_at(rho, &reduced, u)?,
        };
        let (value, exact) = covering_upper(t.matrix())?;
        Ok(SourceNormBound {
            builder,
            undilated: u,
            value,
            exact,
        })
    });
    for e in entries {
        report.source_norm_bounds.push(e?);
    }
    report.state_specific = named_state_bounds(rho, settings)?;
    report.refresh_final();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{make_generalized_ghz, make_ghz, make_singlet};
    use proptest::prelude::*;

    fn brute_theta(settings: &[usize]) -> f64 {
        // literal double sum over distinct index selections
        let n = settings.len();
        let mut best = f64::INFINITY;
        for drop in 0..n {
            let sub: Vec<usize> = (0..n).filter(|&i| i != drop).map(|i| settings[i]).collect();
            let m = sub.len();
            let mut total = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
            for mask in 1u32..(1 << m) {
                let size = mask.count_ones() as usize;
                let k = m - size;
                let prod: f64 = (0..m).filter(|&j| mask >> j & 1 == 1).map(|j| sub[j] as f64).product();
                total += if k.is_multiple_of(2) { 1.0 } else { -1.0 } * 2f64.powi(size as i32) * prod;
            }
            best = best.min(total);
        }
        best
    }

    #[test]
    fn examples() {
        assert_eq!(xi_n(&[2, 2]), 3.0);
        assert_eq!(xi_n(&[5, 1, 1]), 1.0);
        assert_eq!(xi_n(&[2, 2, 2]), 13.0);
        assert_eq!(theta_n(&[3, 5]), 5.0);
        assert_eq!(theta_n(&[2, 2, 2]), 9.0);
        assert_eq!(theta_n(&[1, 1, 1, 1]), 1.0);
        assert_eq!(generic_bound(&[2, 2], &[2, 2]).unwrap().final_upper, 3.0);
        assert_eq!(generic_bound(&[2, 2], &[3, 3]).unwrap().final_upper, 3.0);
        assert_eq!(generic_bound(&[2, 2, 2], &[2, 2, 2]).unwrap().final_upper, 9.0);
        assert_eq!(generic_bound(&[7, 4], &[1, 1]).unwrap().final_upper, 1.0);
    }

    #[test]
    fn low_site_closed_forms() {
        for s1 in 1..=5usize {
            for s2 in 1..=5usize {
                assert_eq!(theta_n(&[s1, s2]), 2.0 * s1.min(s2) as f64 - 1.0);
                assert_eq!(xi_n(&[s1, s2]), 2.0 * s1.min(s2) as f64 - 1.0);
                for s3 in 1..=5usize {
                    let s = [s1, s2, s3];
                    let pairs = [(s1, s2), (s1, s3), (s2, s3)];
                    let expect = pairs
                        .iter()
                        .map(|&(a, b)| (4 * a * b) as f64 - 2.0 * (a + b) as f64 + 1.0)
                        .fold(f64::INFINITY, f64::min);
                    assert_eq!(theta_n(&s), expect);
                    let max = *s.iter().max().unwrap();
                    assert_eq!(xi_n(&s), 4.0 * (s1 * s2 * s3 / max) as f64 - 3.0);
                }
            }
        }
    }

    #[test]
    fn product_form_and_induction_inequality() {
        for s in 1..=10usize {
            for n in 2..=6i32 {
                let lhs = (2.0 * s as f64 - 1.0).powi(n - 1);
                let rhs = 2f64.powi(n - 1) * ((s as f64).powi(n - 1) - 1.0) + 1.0;
                assert!(lhs <= rhs);
                assert_eq!(theta_n(&vec![s; n as usize]), lhs);
            }
        }
    }

    #[test]
    fn operator_norm_formulas() {
        assert_eq!(tau_trace_norm_bound(&[2, 3]), Some(11.0));
        assert_eq!(tau_trace_norm_bound(&[1, 2, 3]), Some(15.0));
        assert_eq!(tau_trace_norm_bound(&[2, 2, 2]), None);
        assert_eq!(tau_tilde_trace_norm_bound(&[2, 3], 0), 5.0);
        assert_eq!(tau_tilde_trace_norm_bound(&[2, 2, 3], 0), 21.0);
    }

    #[test]
    fn singlet_bound() {
        let r = state_bound(&make_singlet(), &[3, 2], Exec::Sequential).unwrap();
        assert!((r.final_upper - 3f64.sqrt()).abs() < 1e-12);
        assert!(r.source_norm_bounds.iter().all(|b| b.value >= 1.0 - 1e-12));
        assert_eq!(r.source_norm_bounds.len(), 4);
    }

    #[test]
    fn ghz_bounds() {
        let r = state_bound(&make_ghz(2, 3).unwrap(), &[2, 2, 2], Exec::Sequential).unwrap();
        assert!(r.final_upper <= 5.0 + 1e-12);
        let r = state_bound(&make_ghz(3, 2).unwrap(), &[3, 3], Exec::Sequential).unwrap();
        assert!(r.state_specific.iter().any(|b| b.label == "ghz" && b.value == 5.0));
        assert!(r.final_upper <= 5.0 + 1e-12);
    }

    #[test]
    fn generalized_ghz_bound() {
        for phi in [0.0, 0.3, std::f64::consts::FRAC_PI_4] {
            let r = state_bound(&make_generalized_ghz(phi, 3).unwrap(), &[2, 2, 2], Exec::Sequential).unwrap();
            let closed = 1.0 + 4.0 * (2.0 * phi).sin().abs();
            assert!(r.final_upper <= closed + 1e-9, "{phi}: {}", r.final_upper);
            if phi == 0.0 {
                assert!((r.final_upper - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn state_bound_modes_agree() {
        let rho = make_ghz(2, 3).unwrap();
        let a = state_bound(&rho, &[2, 1, 2], Exec::Sequential).unwrap();
        let b = state_bound(&rho, &[2, 1, 2], Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn theta_matches_literal_sum(s in prop::collection::vec(1usize..6, 2..6)) {
            prop_assert_eq!(theta_n(&s), brute_theta(&s));
        }

        #[test]
        fn monotone_in_each_argument(v in prop::collection::vec(1usize..6, 2..5), i in 0usize..4) {
            let i = i % v.len();
            let mut w = v.clone();
            w[i] += 1;
            prop_assert!(theta_n(&v) <= theta_n(&w));
            prop_assert!(xi_n(&v) <= xi_n(&w));
            prop_assert!(theta_n(&v) >= 1.0 && xi_n(&v) >= 1.0);
        }

        #[test]
        fn simplified_line_dominates(d in prop::collection::vec(1usize..5, 2..5), s in prop::collection::vec(1usize..5, 4)) {
            let s = &s[..d.len()];
            let r = generic_bound(&d, s).unwrap();
            prop_assert!(r.generic_min <= r.simplified);
        }
    }
}

//! Tensor-positivity probing and covering-norm brackets.
//!
//! Tensor positivity is only ever refuted (by a product-vector witness) or
//! implied (by ordinary positivity); anything else is reported as
//! undetermined. The covering norm is bracketed between a value achieved by
//! product observables and the trace norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::random::{random_unit_vector, random_unitary, stream};
use crate::tensor::{
    contract_slot, eig_hermitian, eigvals_hermitian, kron_all, partial_trace_dims, ComplexMatrix, FactorShape, C64,
};

pub const DEFAULT_RESTARTS: usize = 64;
/// Refutation threshold, relative to `max(1, ‖Z‖)`.
pub const REFUTATION_TOL: f64 = 1e-8;
/// Minimum eigenvalue above which an operator counts as positive.
pub const POSITIVITY_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 200;
const SWEEP_TOL: f64 = 1e-13;

/// Multi-start settings shared by the alternating searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub restarts: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityStatus {
    NotTensorPositive,
    CertifiedPositive,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// One unit vector per slot.
    pub vectors: Vec<Vec<C64>>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityVerdict {
    pub status: PositivityStatus,
    pub witness: Option<Witness>,
    /// Smallest product-vector expectation found.
    pub min_found: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringBracket {
    pub lower: f64,
    pub upper: f64,
    /// Whether `upper` is the exact covering norm (positive input).
    pub exact: bool,
}

fn check_operator(z: &ComplexMatrix, shape: &FactorShape) -> Result<(ComplexMatrix, Vec<usize>)> {
    let dims = shape.slot_dims();
    let total = shape.total_dim()?;
    if !z.is_square() || z.rows() != total {
        return Err(Error::Shape(format!(
            "shape {:?}/{:?} needs a {total}x{total} operator, got {}x{}",
            shape.site_dims(),
            shape.multiplicities(),
            z.rows(),
            z.cols()
        )));
    }
    Ok((z.checked_hermitian()?, dims))
}

/// Contracts every slot except `keep` against the given single-slot operators.
fn effective_operator(z: &ComplexMatrix, dims: &[usize], ops: &[ComplexMatrix], keep: usize) -> Result<ComplexMatrix> {
    let mut m = z.clone();
    let mut current: Vec<usize> = dims.to_vec();
    for slot in (0..dims.len()).rev() {
        if slot == keep {
            continue;
        }
        m = contract_slot(&m, &current, slot, &ops[slot])?;
        current.remove(slot);
    }
    Ok(m)
}

fn product_expectation(z: &ComplexMatrix, vectors: &[Vec<C64>]) -> Result<f64> {
    let kets: Vec<ComplexMatrix> = vectors
        .iter()
        .map(|v| ComplexMatrix::new(v.len(), 1, v.clone()))
        .collect::<Result<_>>()?;
    let psi = kron_all(&kets)?.into_data();
    Ok(z.expectation(&psi)?.re)
}

/// Alternating minimization of `⟨ψ_1⊗…⊗ψ_m|Z|ψ_1⊗…⊗ψ_m⟩` from `start`.
fn descend(z: &ComplexMatrix, dims: &[usize], mut vectors: Vec<Vec<C64>>) -> Result<(f64, Vec<Vec<C64>>)> {
    let scale = z.max_abs().max(1.0);
    let mut value = f64::INFINITY;
    let mut projectors: Vec<ComplexMatrix> = vectors.iter().map(|v| ComplexMatrix::projector(v)).collect();
    for _ in 0..MAX_SWEEPS {
        let before = value;
        for j in 0..dims.len() {
            let eff = effective_operator(z, dims, &projectors, j)?;
            let e = eig_hermitian(&eff.hermitian_part())?;
            let last = e.values.len() - 1;
            value = e.values[last];
            vectors[j] = e.vector(last);
            projectors[j] = ComplexMatrix::projector(&vectors[j]);
        }
        if before - value <= SWEEP_TOL * scale {
            break;
        }
    }
    Ok((value, vectors))
}

/// Product vector built from the single-slot reductions of `v`.
fn seeded_start(v: &[C64], dims: &[usize]) -> Result<Vec<Vec<C64>>> {
    let p = ComplexMatrix::projector(v);
    (0..dims.len())
        .map(|j| {
            let red = partial_trace_dims(&p, dims, &[j])?;
            Ok(eig_hermitian(&red.hermitian_part())?.vector(0))
        })
        .collect()
}

/// Searches for a product vector with negative expectation.
pub fn probe_tensor_positivity(z: &ComplexMatrix, shape: &FactorShape, config: &SearchConfig) -> Result<PositivityVerdict> {
    let (z, dims) = check_operator(z, shape)?;
    let eig = eig_hermitian(&z)?;
    let min_eigenvalue = *eig.values.last().expect("non-empty");
    let op_norm = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));

    let seed_vec = eig.vector(eig.values.len() - 1);
    let runs = config.exec.map(config.restarts + 1, |i| -> Result<(f64, Vec<Vec<C64>>)> {
        let start = if i == 0 {
            seeded_start(&seed_vec, &dims)?
        } else {
            let mut rng = stream(config.seed, i as u64);
            dims.iter().map(|&d| random_unit_vector(&mut rng, d)).collect()
        };
        descend(&z, &dims, start)
    });
    let mut best: Option<(f64, Vec<Vec<C64>>)> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.0 < b.0) {
            best = Some(run);
        }
    }
    let (_, vectors) = best.expect("at least one start");
    let min_found = product_expectation(&z, &vectors)?;

    let threshold = -REFUTATION_TOL * op_norm.max(1.0);
    let (status, witness) = if min_found < threshold {
        (
            PositivityStatus::NotTensorPositive,
            Some(Witness {
                vectors,
                value: min_found,
            }),
        )
    } else if min_eigenvalue >= -POSITIVITY_TOL {
        (PositivityStatus::CertifiedPositive, None)
    } else {
        (PositivityStatus::Undetermined, None)
    };
    Ok(PositivityVerdict {
        status,
        witness,
        min_found,
        min_eigenvalue,
    })
}

/// `sign(A)` with zero eigenvalues mapped to `+1`, and `‖A‖₁`.
fn sign_operator(a: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    let e = eig_hermitian(&a.hermitian_part())?;
    let norm = e.values.iter().map(|l| l.abs()).sum();
    Ok((e.reconstruct_with(|l| if l < 0.0 { -1.0 } else { 1.0 }), norm))
}

/// See-saw ascent of `tr[W (X_1 ⊗ … ⊗ X_m)]` over Hermitian `X_j` of unit
/// operator norm.
fn ascend(w: &ComplexMatrix, dims: &[usize], mut ops: Vec<ComplexMatrix>) -> Result<f64> {
    let scale = w.max_abs().max(1.0);
    let mut value = f64::NEG_INFINITY;
    for _ in 0..MAX_SWEEPS {
        let before = value;
        for j in 0..dims.len() {
            let eff = effective_operator(w, dims, &ops, j)?;
            let (x, v) = sign_operator(&eff)?;
            ops[j] = x;
            value = v;
        }
        if value - before <= SWEEP_TOL * scale {
            break;
        }
    }
    Ok(value)
}

fn random_observable(rng: &mut crate::random::SeededRng, d: usize) -> ComplexMatrix {
    use rand::Rng;
    let u = random_unitary(rng, d);
    let signs: Vec<f64> = (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let diag = ComplexMatrix::diag_real(&signs);
    u.matmul(&diag).and_then(|m| m.matmul(&u.adjoint())).expect("square")
}

/// Best `|tr[W (X_1⊗…⊗X_m)]|` found by see-saw from the identity start and
/// `config.restarts` random starts.
pub fn product_observable_lower(w: &ComplexMatrix, shape: &FactorShape, config: &SearchConfig) -> Result<f64> {
    let (w, dims) = check_operator(w, shape)?;
    let runs = config.exec.map(config.restarts + 1, |i| -> Result<f64> {
        let start: Vec<ComplexMatrix> = if i == 0 {
            dims.iter().map(|&d| ComplexMatrix::identity(d)).collect()
        } else {
            let mut rng = stream(config.seed, i as u64);
            dims.iter().map(|&d| random_observable(&mut rng, d)).collect()
        };
        ascend(&w, &dims, start)
    });
    let mut best = w.trace().re.abs();
    for r in runs {
        best = best.max(r?);
    }
    Ok(best)
}

/// Upper edge of the covering bracket: `tr W` for positive `W`, else `‖W‖₁`.
pub fn covering_upper(w: &ComplexMatrix) -> Result<(f64, bool)> {
    let vals = eigvals_hermitian(w)?;
    let min = *vals.last().expect("non-empty");
    if min >= -POSITIVITY_TOL {
        Ok((vals.iter().sum(), true))
    } else {
        Ok((vals.iter().map(|l| l.abs()).sum(), false))
    }
}

pub fn covering_bracket(w: &ComplexMatrix, shape: &FactorShape, config: &SearchConfig) -> Result<CoveringBracket> {
    let (upper, exact) = covering_upper(w)?;
    let mut lower = product_observable_lower(w, shape, config)?;
    // the lower edge is achievable, so any excess over the upper edge is roundoff
    if lower > upper && lower - upper <= 1e-9 * upper.max(1.0) {
        lower = upper;
    }
    Ok(CoveringBracket { lower, upper, exact })
}

/// Whether the lower bracket edge of the reduction onto `keep` stays below
/// the upper edge of `w`.
pub fn reduced_monotonicity_check(
    w: &ComplexMatrix,
    shape: &FactorShape,
    keep: &[usize],
    config: &SearchConfig,
) -> Result<bool> {
    let (w, dims) = check_operator(w, shape)?;
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let red = partial_trace_dims(&w, &dims, &kept)?;
    let red_shape = FactorShape::single(kept.iter().map(|&k| dims[k]).collect())?;
    let lower = product_observable_lower(&red, &red_shape, config)?;
    let (upper, _) = covering_upper(&w)?;
    Ok(lower <= upper + 1e-8)
}

/// The swap operator on `C^d ⊗ C^d`.
pub fn swap_operator(d: usize) -> ComplexMatrix {
    let n = d * d;
    ComplexMatrix::from_fn(n, n, |r, c| {
        let (a, b) = (r / d, r % d);
        if c == b * d + a {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_hermitian, seeded};
    use crate::tensor::{abs_hermitian, kron, trace_norm};
    use proptest::prelude::*;

    fn cfg(restarts: usize, seed: u64) -> SearchConfig {
        SearchConfig {
            restarts,
            seed,
            exec: Exec::Sequential,
        }
    }

    fn two_qubits() -> FactorShape {
        FactorShape::single(vec![2, 2]).unwrap()
    }

    #[test]
    fn positive_input_is_certified() {
        let mut rng = seeded(1);
        let rho = random_density(&mut rng, 4, 4);
        let v = probe_tensor_positivity(&rho, &two_qubits(), &cfg(8, 0)).unwrap();
        assert_eq!(v.status, PositivityStatus::CertifiedPositive);
        assert!(v.min_found >= v.min_eigenvalue - 1e-12);
    }

    #[test]
    fn swap_is_not_refuted() {
        let v = probe_tensor_positivity(&swap_operator(2), &two_qubits(), &cfg(16, 2)).unwrap();
        assert_eq!(v.status, PositivityStatus::Undetermined);
        assert!(v.min_found.abs() < 1e-9);
        assert!((v.min_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_identity_is_refuted() {
        let z = ComplexMatrix::identity(4).scale_real(-1.0);
        let v = probe_tensor_positivity(&z, &two_qubits(), &cfg(4, 3)).unwrap();
        assert_eq!(v.status, PositivityStatus::NotTensorPositive);
        let w = v.witness.unwrap();
        assert!((w.value + 1.0).abs() < 1e-12);
        assert!((product_expectation(&z, &w.vectors).unwrap() - v.min_found).abs() < 1e-10);
    }

    #[test]
    fn entanglement_witness_is_refuted() {
        // −(σz⊗σz) reaches −1 on |00⟩
        let zz = kron(&ComplexMatrix::diag_real(&[1.0, -1.0]), &ComplexMatrix::diag_real(&[1.0, -1.0])).unwrap();
        let v = probe_tensor_positivity(&zz.scale_real(-1.0), &two_qubits(), &cfg(8, 4)).unwrap();
        assert_eq!(v.status, PositivityStatus::NotTensorPositive);
        assert!((v.min_found + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bracket_cases() {
        let mut rng = seeded(5);
        let rho = random_density(&mut rng, 4, 2);
        let b = covering_bracket(&rho, &two_qubits(), &cfg(4, 0)).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-9 && (b.upper - 1.0).abs() < 1e-9 && b.exact, "{b:?}");

        for d in 2..=3 {
            let shape = FactorShape::single(vec![d, d]).unwrap();
            let b = covering_bracket(&swap_operator(d), &shape, &cfg(8, 1)).unwrap();
            assert!(b.lower >= d as f64 - 1e-9);
            assert!((b.upper - (d * d) as f64).abs() < 1e-9);
            assert!(!b.exact);
        }

        let sz = ComplexMatrix::diag_real(&[1.0, -1.0]);
        let zz = kron(&sz, &sz).unwrap();
        let b = covering_bracket(&zz, &two_qubits(), &cfg(8, 2)).unwrap();
        // X = Y = σz gives tr[I_4] = 4, which meets the trace norm
        assert!((b.lower - 4.0).abs() < 1e-9);
        assert!((b.upper - 4.0).abs() < 1e-9);
    }

    #[test]
    fn monotonicity_on_singlet_operator() {
        let t = crate::source_ops::build_singlet_special();
        let ok = reduced_monotonicity_check(t.matrix(), t.shape(), &[0, 1], &cfg(8, 0)).unwrap();
        assert!(ok);
        let red = partial_trace_dims(t.matrix(), &[2, 2, 2], &[0, 1]).unwrap();
        let lower = product_observable_lower(&red, &two_qubits(), &cfg(8, 0)).unwrap();
        assert!((lower - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_two_qubit_monotonicity() {
        let mut rng = seeded(6);
        for _ in 0..10 {
            let w = random_hermitian(&mut rng, 4);
            assert!(reduced_monotonicity_check(&w, &two_qubits(), &[0], &cfg(4, 1)).unwrap());
        }
    }

    #[test]
    fn modes_agree() {
        let mut rng = seeded(7);
        let w = random_hermitian(&mut rng, 8);
        let shape = FactorShape::single(vec![2, 2, 2]).unwrap();
        let mut par = cfg(6, 3);
        par.exec = Exec::Parallel;
        let a = covering_bracket(&w, &shape, &cfg(6, 3)).unwrap();
        let b = covering_bracket(&w, &shape, &par).unwrap();
        assert_eq!(a, b);
        let a = probe_tensor_positivity(&w, &shape, &cfg(6, 3)).unwrap();
        let b = probe_tensor_positivity(&w, &shape, &par).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn bracket_chain(seed in any::<u64>(), scale in -3.0f64..3.0) {
            let mut rng = seeded(seed);
            let w = random_hermitian(&mut rng, 4);
            let shape = two_qubits();
            let b = covering_bracket(&w, &shape, &cfg(4, seed)).unwrap();
            prop_assert!(w.trace().re.abs() <= b.lower + 1e-12);
            prop_assert!(b.lower <= b.upper + 1e-12);

            let scaled = covering_bracket(&w.scale_real(scale), &shape, &cfg(4, seed)).unwrap();
            prop_assert!((scaled.upper - scale.abs() * b.upper).abs() <= 1e-9 * b.upper.max(1.0));
            prop_assert!((scaled.lower - scale.abs() * b.lower).abs() <= 1e-9 * b.lower.max(1.0));

            let w2 = random_hermitian(&mut rng, 4);
            let sum = &w + &w2;
            prop_assert!(trace_norm(&sum).unwrap() <= trace_norm(&w).unwrap() + trace_norm(&w2).unwrap() + 1e-12);
        }

        #[test]
        fn absolute_value_covers(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let w = random_hermitian(&mut rng, 4);
            let abs = abs_hermitian(&w).unwrap();
            let shape = two_qubits();
            let v = probe_tensor_positivity(&abs, &shape, &cfg(4, seed)).unwrap();
            prop_assert_eq!(v.status, PositivityStatus::CertifiedPositive);
            for sign in [1.0, -1.0] {
                let mut z = abs.clone();
                z.add_scaled(&w, C64::new(sign, 0.0));
                let v = probe_tensor_positivity(&z, &shape, &cfg(4, seed)).unwrap();
                prop_assert_ne!(v.status, PositivityStatus::NotTensorPositive);
            }
        }
    }
}

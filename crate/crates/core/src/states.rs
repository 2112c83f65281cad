//! Density operators, the named state families, and bipartite Schmidt forms.

use crate::error::{Error, Result};
use crate::tensor::{
    checked_product, eig_hermitian, kron_all, ComplexMatrix, FactorShape, C64, ONE, ZERO,
};

const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-10;
const PURITY_GAP: f64 = 1e-8;

/// Density operator on `H_1 ⊗ … ⊗ H_N`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "crate::io::StateJson", into = "crate::io::StateJson")]
pub struct QuantumState {
    site_dims: Vec<usize>,
    rho: ComplexMatrix,
}

impl QuantumState {
    /// Validates Hermiticity, unit trace and positivity; stores the
    /// symmetrized matrix.
    pub fn new(site_dims: Vec<usize>, rho: ComplexMatrix) -> Result<Self> {
        let shape = FactorShape::single(site_dims.clone())?;
        let dim = shape.total_dim()?;
        if !rho.is_square() || rho.rows() != dim {
            return Err(Error::Shape(format!(
                "site dimensions {site_dims:?} need a {dim}x{dim} matrix, got {}x{}",
                rho.rows(),
                rho.cols()
            )));
        }
        let rho = rho.checked_hermitian()?;
        let tr = rho.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::State(format!("trace is {tr}, expected 1")));
        }
        let min = *crate::tensor::eigvals_hermitian(&rho)?.last().expect("non-empty");
        if min < -POSITIVITY_TOL {
            return Err(Error::State(format!("minimum eigenvalue {min:.3e} is negative")));
        }
        Ok(Self { site_dims, rho })
    }

    /// `|ψ⟩⟨ψ|` for a vector normalized to 1 within 1e-10.
    pub fn from_vector(site_dims: Vec<usize>, psi: &[C64]) -> Result<Self> {
        let norm_sq: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > TRACE_TOL {
            return Err(Error::State(format!("state vector has squared norm {norm_sq}")));
        }
        Self::new(site_dims, ComplexMatrix::projector(psi))
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn num_sites(&self) -> usize {
        self.site_dims.len()
    }

    pub fn dim(&self) -> usize {
        self.rho.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn purity(&self) -> f64 {
        self.rho.trace_product(&self.rho).expect("square").re
    }

    /// Leading eigenvector when the state is rank one (largest eigenvalue
    /// at least `1 − 1e-8`).
    pub fn pure_vector(&self) -> Result<Vec<C64>> {
        let e = eig_hermitian(&self.rho)?;
        if e.values[0] < 1.0 - PURITY_GAP {
            return Err(Error::Purity {
                purity: self.purity(),
            });
        }
        Ok(e.vector(0))
    }

    /// Convex decomposition into pure states from the spectral decomposition,
    /// dropping eigenvalues below `1e-14`.
    pub fn spectral_ensemble(&self) -> Result<Vec<(f64, Vec<C64>)>> {
        let e = eig_hermitian(&self.rho)?;
        Ok(e.values
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 1e-14)
            .map(|(i, &w)| (w, e.vector(i)))
            .collect())
    }

    /// Reduced state on the given sites (kept in increasing order).
    pub fn reduce(&self, sites: &[usize]) -> Result<QuantumState> {
        let mut keep = sites.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let shape = FactorShape::single(self.site_dims.clone())?;
        let rho = crate::tensor::partial_trace(&self.rho, &shape, &keep)?;
        let dims = keep.iter().map(|&s| self.site_dims[s]).collect();
        Ok(QuantumState {
            site_dims: dims,
            rho: rho.hermitian_part(),
        })
    }

    pub fn maximally_mixed(d: usize) -> Result<Self> {
        Self::new(vec![d], ComplexMatrix::identity(d).scale_real(1.0 / d as f64))
    }
}

fn basis_vector(dim: usize, index: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    v[index] = ONE;
    v
}

/// `(|01⟩ − |10⟩)/√2`.
pub fn singlet_vector() -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![ZERO, C64::new(s, 0.0), C64::new(-s, 0.0), ZERO]
}

pub fn make_singlet() -> QuantumState {
    QuantumState::from_vector(vec![2, 2], &singlet_vector()).expect("singlet is a valid state")
}

/// `(1/√d) Σ_j |j⟩^{⊗n}`.
pub fn ghz_vector(d: usize, n: usize) -> Result<Vec<C64>> {
    if d < 2 || n < 2 {
        return Err(Error::Argument(format!("GHZ needs d >= 2 and n >= 2, got d={d}, n={n}")));
    }
    let dim = checked_product("GHZ state dimension", &vec![d; n])?;
    // index of |j…j⟩ is j·(1 + d + … + d^{n−1})
    let step = (dim - 1) / (d - 1);
    let amp = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut v = vec![ZERO; dim];
    for j in 0..d {
        v[j * step] = amp;
    }
    Ok(v)
}

pub fn make_ghz(d: usize, n: usize) -> Result<QuantumState> {
    let v = ghz_vector(d, n)?;
    QuantumState::from_vector(vec![d; n], &v)
}

/// `sin φ |0…0⟩ + cos φ |1…1⟩` on `n` qubits.
pub fn generalized_ghz_vector(phi: f64, n: usize) -> Result<Vec<C64>> {
    if n < 2 {
        return Err(Error::Argument(format!("generalized GHZ needs n >= 2, got {n}")));
    }
    let dim = checked_product("generalized GHZ dimension", &vec![2; n])?;
    let mut v = vec![ZERO; dim];
    v[0] = C64::new(phi.sin(), 0.0);
    v[dim - 1] += C64::new(phi.cos(), 0.0);
    Ok(v)
}

pub fn make_generalized_ghz(phi: f64, n: usize) -> Result<QuantumState> {
    let v = generalized_ghz_vector(phi, n)?;
    QuantumState::from_vector(vec![2; n], &v)
}

/// One term `α_i ρ_1^{(i)} ⊗ … ⊗ ρ_N^{(i)}` of a separable decomposition.
#[derive(Debug, Clone)]
pub struct ProductComponent {
    pub weight: f64,
    pub factors: Vec<QuantumState>,
}

pub(crate) fn validate_components(components: &[ProductComponent]) -> Result<Vec<usize>> {
    let first = components
        .first()
        .ok_or_else(|| Error::Argument("separable mixture needs at least one component".into()))?;
    let dims: Vec<usize> = first.factors.iter().map(|f| f.dim()).collect();
    if dims.is_empty() {
        return Err(Error::Argument("product component has no factors".into()));
    }
    let mut total = 0.0;
    for c in components {
        if !(c.weight > 0.0) {
            return Err(Error::Argument(format!("mixture weight {} is not positive", c.weight)));
        }
        let cd: Vec<usize> = c.factors.iter().map(|f| f.dim()).collect();
        if cd != dims {
            return Err(Error::Shape(format!("component dimensions {cd:?} differ from {dims:?}")));
        }
        if c.factors.iter().any(|f| f.num_sites() != 1) {
            return Err(Error::Argument("product factors must be single-site states".into()));
        }
        total += c.weight;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Argument(format!("mixture weights sum to {total}, expected 1")));
    }
    Ok(dims)
}

/// `Σ α_i ρ_1^{(i)} ⊗ … ⊗ ρ_N^{(i)}`.
pub fn make_separable_mixture(components: &[ProductComponent]) -> Result<QuantumState> {
    let dims = validate_components(components)?;
    let dim = checked_product("separable state dimension", &dims)?;
    let mut rho = ComplexMatrix::zeros(dim, dim);
    for c in components {
        let term = kron_all(c.factors.iter().map(|f| f.matrix()))?;
        rho.add_scaled(&term, C64::new(c.weight, 0.0));
    }
    QuantumState::new(dims, rho)
}

pub fn make_product(factors: &[QuantumState]) -> Result<QuantumState> {
    make_separable_mixture(&[ProductComponent {
        weight: 1.0,
        factors: factors.to_vec(),
    }])
}

/// `Σ_j ξ_j |l_j⟩ ⊗ |r_j⟩` with `ξ_j > 0` descending.
#[derive(Debug, Clone)]
pub struct SchmidtForm {
    pub coefficients: Vec<f64>,
    pub left: Vec<Vec<C64>>,
    pub right: Vec<Vec<C64>>,
}

impl SchmidtForm {
    pub fn vector(&self) -> Vec<C64> {
        let d1 = self.left.first().map_or(0, Vec::len);
        let d2 = self.right.first().map_or(0, Vec::len);
        let mut v = vec![ZERO; d1 * d2];
        for ((xi, l), r) in self.coefficients.iter().zip(&self.left).zip(&self.right) {
            for a in 0..d1 {
                for b in 0..d2 {
                    v[a * d2 + b] += l[a] * r[b] * *xi;
                }
            }
        }
        v
    }
}

/// Schmidt decomposition of a bipartite state vector with dimensions `(d1, d2)`.
pub fn schmidt_vector(psi: &[C64], d1: usize, d2: usize) -> Result<SchmidtForm> {
    if psi.len() != d1 * d2 {
        return Err(Error::Shape(format!("vector of length {} for {d1}x{d2}", psi.len())));
    }
    // Coefficient matrix C[a][b] = ψ_{ab}; left vectors diagonalize C C†.
    let c = ComplexMatrix::new(d1, d2, psi.to_vec())?;
    let cc = c.matmul(&c.adjoint())?;
    let e = eig_hermitian(&cc)?;
    let mut form = SchmidtForm {
        coefficients: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
    };
    for (i, &lambda) in e.values.iter().enumerate() {
        if lambda <= 1e-14 {
            continue;
        }
        let xi = lambda.sqrt();
        let l = e.vector(i);
        // r_j = C^T l_j^* / ξ_j
        let r: Vec<C64> = (0..d2)
            .map(|b| (0..d1).map(|a| c[(a, b)] * l[a].conj()).sum::<C64>() / xi)
            .collect();
        form.coefficients.push(xi);
        form.left.push(l);
        form.right.push(r);
    }
    Ok(form)
}

/// Schmidt decomposition of a pure bipartite state.
pub fn schmidt(state: &QuantumState) -> Result<SchmidtForm> {
    if state.num_sites() != 2 {
        return Err(Error::Argument(format!(
            "Schmidt decomposition needs two sites, got {}",
            state.num_sites()
        )));
    }
    let purity = state.purity();
    if purity < 1.0 - PURITY_GAP {
        return Err(Error::Purity { purity });
    }
    let psi = state.pure_vector()?;
    schmidt_vector(&psi, state.site_dims[0], state.site_dims[1])
}

/// Single-site pure state `|index⟩⟨index|`.
pub fn basis_state(d: usize, index: usize) -> Result<QuantumState> {
    if index >= d {
        return Err(Error::Argument(format!("basis index {index} out of range for dimension {d}")));
    }
    QuantumState::from_vector(vec![d], &basis_vector(d, index))
}

/// `|⟨φ|ψ⟩|²`.
pub fn fidelity_with_vector(state: &QuantumState, psi: &[C64]) -> Result<f64> {
    Ok(state.matrix().expectation(psi)?.re)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_unit_vector, seeded};
    use crate::tensor::eigvals_hermitian;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn singlet_properties() {
        let s = make_singlet();
        for site in 0..2 {
            let red = s.reduce(&[site]).unwrap();
            assert!(red.matrix().max_abs_diff(&ComplexMatrix::diag_real(&[0.5, 0.5])) < 1e-14);
        }
        assert!(close(s.purity(), 1.0, 1e-14));
        let f = schmidt(&s).unwrap();
        assert_eq!(f.coefficients.len(), 2);
        for xi in &f.coefficients {
            assert!(close(*xi, std::f64::consts::FRAC_1_SQRT_2, 1e-12));
        }
    }

    #[test]
    fn ghz_properties() {
        let bell = make_ghz(2, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi_plus = [C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)];
        assert!(bell.matrix().max_abs_diff(&ComplexMatrix::projector(&phi_plus)) < 1e-15);
        let g3 = make_ghz(2, 3).unwrap();
        assert!(close(g3.matrix().trace().re, 1.0, 1e-14));
        let red = g3.reduce(&[1]).unwrap();
        assert!(red.matrix().max_abs_diff(&ComplexMatrix::diag_real(&[0.5, 0.5])) < 1e-14);
        let g = make_ghz(3, 3).unwrap();
        assert!(close(g.matrix()[(13, 26)].re, 1.0 / 3.0, 1e-14));
        assert!(matches!(make_ghz(2, 13), Err(Error::Size { .. })));
    }

    #[test]
    fn generalized_ghz_cases() {
        let g = make_generalized_ghz(std::f64::consts::FRAC_PI_4, 2).unwrap();
        assert!(g.matrix().max_abs_diff(make_ghz(2, 2).unwrap().matrix()) < 1e-15);
        let p = make_generalized_ghz(0.0, 3).unwrap();
        assert!(close(p.matrix()[(7, 7)].re, 1.0, 1e-15));
        assert!(close(p.purity(), 1.0, 1e-15));
        let phi = 0.3f64;
        let g = make_generalized_ghz(phi, 3).unwrap();
        assert!(close(g.matrix()[(0, 7)].re, phi.sin() * phi.cos(), 1e-15));
    }

    #[test]
    fn separable_mixture_cases() {
        let zero = basis_state(2, 0).unwrap();
        let one = basis_state(2, 1).unwrap();
        let m = make_separable_mixture(&[
            ProductComponent {
                weight: 0.5,
                factors: vec![zero.clone(), zero.clone()],
            },
            ProductComponent {
                weight: 0.5,
                factors: vec![one.clone(), one.clone()],
            },
        ])
        .unwrap();
        assert_eq!(m.matrix(), &ComplexMatrix::diag_real(&[0.5, 0.0, 0.0, 0.5]));
        let bad = make_separable_mixture(&[ProductComponent {
            weight: 0.7,
            factors: vec![zero.clone()],
        }]);
        assert!(matches!(bad, Err(Error::Argument(_))));
        let p = make_product(&[zero, one]).unwrap();
        assert_eq!(p.matrix(), &ComplexMatrix::diag_real(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn schmidt_cases() {
        let p = make_product(&[basis_state(2, 1).unwrap(), basis_state(3, 2).unwrap()]).unwrap();
        let f = schmidt(&p).unwrap();
        assert_eq!(f.coefficients.len(), 1);
        assert!(close(f.coefficients[0], 1.0, 1e-12));

        let theta = 0.4f64;
        let psi = [C64::new(theta.cos(), 0.0), ZERO, ZERO, C64::new(theta.sin(), 0.0)];
        let f = schmidt(&QuantumState::from_vector(vec![2, 2], &psi).unwrap()).unwrap();
        assert!(close(f.coefficients[0], theta.cos(), 1e-12));
        assert!(close(f.coefficients[1], theta.sin(), 1e-12));

        let mixed = QuantumState::new(vec![2, 2], ComplexMatrix::identity(4).scale_real(0.25)).unwrap();
        assert!(matches!(schmidt(&mixed), Err(Error::Purity { .. })));
    }

    #[test]
    fn invalid_states_rejected() {
        let bad_trace = ComplexMatrix::identity(2);
        assert!(matches!(QuantumState::new(vec![2], bad_trace), Err(Error::State(_))));
        let negative = ComplexMatrix::diag_real(&[1.5, -0.5]);
        assert!(matches!(QuantumState::new(vec![2], negative), Err(Error::State(_))));
        assert!(matches!(
            QuantumState::new(vec![2, 2], ComplexMatrix::identity(2).scale_real(0.5)),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn schmidt_reconstructs(seed in any::<u64>(), d1 in 1usize..5, d2 in 1usize..5) {
            let mut rng = seeded(seed);
            let psi = random_unit_vector(&mut rng, d1 * d2);
            let f = schmidt_vector(&psi, d1, d2).unwrap();
            let total: f64 = f.coefficients.iter().map(|x| x * x).sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            let overlap: C64 = f.vector().iter().zip(&psi).map(|(a, b)| a.conj() * b).sum();
            prop_assert!(overlap.norm_sqr() >= 1.0 - 1e-8);
            let sum: f64 = f.coefficients.iter().sum();
            prop_assert!(sum * sum <= d1.min(d2) as f64 * total + 1e-10);
            for (i, l) in f.left.iter().enumerate() {
                for (j, m) in f.left.iter().enumerate() {
                    let ip: C64 = l.iter().zip(m).map(|(a, b)| a.conj() * b).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((ip - C64::new(expect, 0.0)).norm() < 1e-10);
                }
            }
        }

        #[test]
        fn mixtures_are_states(seed in any::<u64>(), k in 1usize..4) {
            let mut rng = seeded(seed);
            let comps: Vec<ProductComponent> = (0..k)
                .map(|_| ProductComponent {
                    weight: 1.0 / k as f64,
                    factors: vec![
                        QuantumState::new(vec![2], random_density(&mut rng, 2, 2)).unwrap(),
                        QuantumState::new(vec![3], random_density(&mut rng, 3, 1)).unwrap(),
                    ],
                })
                .collect();
            let m = make_separable_mixture(&comps).unwrap();
            let min = *eigvals_hermitian(m.matrix()).unwrap().last().unwrap();
            prop_assert!(min >= -1e-12);
        }
    }
}

//! Source operators: operators on the setting-dilated space
//! `H_1^{⊗S_1} ⊗ … ⊗ H_N^{⊗S_N}` whose single-slot-per-site expectations
//! reproduce those of a state.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::{random_hermitian, seeded};
use crate::states::{make_separable_mixture, schmidt_vector, validate_components, ProductComponent, QuantumState};
use crate::tensor::{
    checked_product, eigvals_hermitian, kron, kron_all, kron_power, partial_trace, partial_trace_dims,
    permute_factors, ComplexMatrix, FactorShape, C64, ONE, ZERO,
};

const TRACE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuilderTag {
    Tau,
    TauTilde,
    SingletSpecial,
    SeparablePositive,
    Custom,
}

impl BuilderTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BuilderTag::Tau => "tau",
            BuilderTag::TauTilde => "tau_tilde",
            BuilderTag::SingletSpecial => "singlet_special",
            BuilderTag::SeparablePositive => "separable_positive",
            BuilderTag::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SourceOperator {
    shape: FactorShape,
    op: ComplexMatrix,
    state: QuantumState,
    builder: BuilderTag,
}

impl SourceOperator {
    /// Wraps a user-supplied operator after checking shape, Hermiticity and
    /// unit trace. The defining relation is not checked here; see
    /// [`verify_defining_relation`].
    pub fn new(shape: FactorShape, op: ComplexMatrix, state: QuantumState, builder: BuilderTag) -> Result<Self> {
        if shape.site_dims() != state.site_dims() {
            return Err(Error::Shape(format!(
                "shape site dimensions {:?} differ from state dimensions {:?}",
                shape.site_dims(),
                state.site_dims()
            )));
        }
        let dim = shape.total_dim()?;
        if !op.is_square() || op.rows() != dim {
            return Err(Error::Shape(format!(
                "shape needs a {dim}x{dim} operator, got {}x{}",
                op.rows(),
                op.cols()
            )));
        }
        let op = op.checked_hermitian()?;
        let tr = op.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Argument(format!("source operator has trace {tr}, expected 1")));
        }
        Ok(Self {
            shape,
            op,
            state,
            builder,
        })
    }

    pub fn shape(&self) -> &FactorShape {
        &self.shape
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.op
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn builder(&self) -> BuilderTag {
        self.builder
    }

    pub fn settings(&self) -> &[usize] {
        self.shape.multiplicities()
    }

    pub fn trace_norm(&self) -> Result<f64> {
        crate::tensor::trace_norm(&self.op)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(*eigvals_hermitian(&self.op)?.last().expect("non-empty"))
    }
}

/// Operator on a product of site blocks; block `i` has dimension `dims[i]`.
#[derive(Clone)]
struct Blocked {
    dims: Vec<usize>,
    m: ComplexMatrix,
}

impl Blocked {
    /// Replaces block `f` (dimension `d`) by `images[a][b]`, the image of the
    /// matrix unit `|a⟩⟨b|` under a linear map.
    fn map_block(&self, f: usize, images: &[Vec<ComplexMatrix>]) -> Result<Blocked> {
        let d = self.dims[f];
        let e = images[0][0].rows();
        let left: usize = self.dims[..f].iter().product();
        let right: usize = self.dims[f + 1..].iter().product();
        let mut new_dims = self.dims.clone();
        new_dims[f] = e;
        let n = checked_product("source operator dimension", &new_dims)?;
        let old = self.m.rows();
        let mut out = ComplexMatrix::zeros(n, n);
        let data = out.data_mut();
        for l in 0..left {
            for r in 0..right {
                for l2 in 0..left {
                    for r2 in 0..right {
                        for a in 0..d {
                            let row = (l * d + a) * right + r;
                            for b in 0..d {
                                let col = (l2 * d + b) * right + r2;
                                let v = self.m.data()[row * old + col];
                                if v == ZERO {
                                    continue;
                                }
                                let img = &images[a][b];
                                for x in 0..e {
                                    let orow = (l * e + x) * right + r;
                                    for y in 0..e {
                                        let w = img[(x, y)];
                                        if w != ZERO {
                                            let ocol = (l2 * e + y) * right + r2;
                                            data[orow * n + ocol] += v * w;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Blocked { dims: new_dims, m: out })
    }

    /// Inserts `x` as a new block at position `pos`.
    fn insert_block(&self, pos: usize, x: &ComplexMatrix) -> Result<Blocked> {
        let left: usize = self.dims[..pos].iter().product();
        let right: usize = self.dims[pos..].iter().product();
        let mut dims = self.dims.clone();
        dims.insert(pos, x.rows());
        checked_product("source operator dimension", &dims)?;
        let moved = kron(&self.m, x)?;
        // moved blocks: [left, right, x] -> [left, x, right]
        let perm = [0, 2, 1];
        let m = permute_factors(&moved, &[left, right, x.rows()], &perm)?;
        Ok(Blocked { dims, m })
    }
}

fn matrix_units(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |a| (0..d).map(move |b| (a, b)))
}

/// `Σ_k σ^{⊗k} ⊗ |a⟩⟨b| ⊗ σ^{⊗(S−1−k)}` for every matrix unit.
fn symmetrized_images(sigma: &ComplexMatrix, copies: usize) -> Result<Vec<Vec<ComplexMatrix>>> {
    let d = sigma.rows();
    let mut images = vec![Vec::with_capacity(d); d];
    for (a, b) in matrix_units(d) {
        let unit = ComplexMatrix::unit(d, a, b);
        let mut acc: Option<ComplexMatrix> = None;
        for k in 0..copies {
            let term = kron(&kron(&kron_power(sigma, k)?, &unit)?, &kron_power(sigma, copies - 1 - k)?)?;
            acc = Some(match acc {
                None => term,
                Some(s) => &s + &term,
            });
        }
        images[a].push(acc.expect("copies >= 1"));
    }
    Ok(images)
}

fn validate_settings(settings: &[usize], n: usize) -> Result<()> {
    if settings.len() != n {
        return Err(Error::Shape(format!("{} setting counts for {n} sites", settings.len())));
    }
    if settings.contains(&0) {
        return Err(Error::Argument("setting counts must be >= 1".into()));
    }
    Ok(())
}

fn reference_states(rho: &QuantumState, sigma: Option<&[ComplexMatrix]>) -> Result<Vec<ComplexMatrix>> {
    let dims = rho.site_dims();
    match sigma {
        None => Ok(dims
            .iter()
            .map(|&d| ComplexMatrix::identity(d).scale_real(1.0 / d as f64))
            .collect()),
        Some(list) => {
            if list.len() != dims.len() {
                return Err(Error::Argument(format!("{} reference states for {} sites", list.len(), dims.len())));
            }
            list.iter()
                .zip(dims)
                .map(|(s, &d)| {
                    QuantumState::new(vec![d], s.clone())
                        .map(|q| q.matrix().clone())
                        .map_err(|e| Error::Argument(format!("invalid reference state: {e}")))
                })
                .collect()
        }
    }
}

struct TauBuilder<'a> {
    rho: &'a QuantumState,
    settings: &'a [usize],
    sigma: Vec<ComplexMatrix>,
    sigma_powers: Vec<ComplexMatrix>,
    images: Vec<Option<Vec<Vec<ComplexMatrix>>>>,
    memo: HashMap<Vec<usize>, ComplexMatrix>,
}

impl TauBuilder<'_> {
    fn images(&mut self, site: usize) -> Result<&Vec<Vec<ComplexMatrix>>> {
        if self.images[site].is_none() {
            self.images[site] = Some(symmetrized_images(&self.sigma[site], self.settings[site])?);
        }
        Ok(self.images[site].as_ref().expect("just filled"))
    }

    fn reduced(&self, sites: &[usize]) -> Result<ComplexMatrix> {
        if sites.len() == self.rho.num_sites() {
            return Ok(self.rho.matrix().clone());
        }
        partial_trace_dims(self.rho.matrix(), self.rho.site_dims(), sites)
    }

    /// Source operator of the reduced state on `sites` (increasing order).
    fn tau(&mut self, sites: &[usize]) -> Result<ComplexMatrix> {
        if let Some(m) = self.memo.get(sites) {
            return Ok(m.clone());
        }
        let rho_a = self.reduced(sites)?;
        let result = if sites.len() == 1 {
            kron_power(&rho_a, self.settings[sites[0]])?
        } else {
            let dims: Vec<usize> = sites.iter().map(|&n| self.rho.site_dims()[n]).collect();
            let mut acc = Blocked { dims, m: rho_a };
            for (i, &n) in sites.iter().enumerate() {
                if self.settings[n] > 1 {
                    let images = self.images(n)?.clone();
                    acc = acc.map_block(i, &images)?;
                }
            }
            let mut total = acc.m;
            // Corrections from every proper subset B, weighted by Π_{n ∈ A∖B} (S_n − 1).
            let k = sites.len();
            for mask in 0..(1u64 << k) - 1 {
                let coeff: usize = (0..k)
                    .filter(|&i| mask & (1 << i) == 0)
                    .map(|i| self.settings[sites[i]] - 1)
                    .product();
                if coeff == 0 {
                    continue;
                }
                let term = if mask == 0 {
                    kron_all(sites.iter().map(|&n| &self.sigma_powers[n]))?
                } else {
                    let subset: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).map(|i| sites[i]).collect();
                    let sub = self.tau(&subset)?;
                    let mut blocked = Blocked {
                        dims: subset
                            .iter()
                            .map(|&n| self.rho.site_dims()[n].pow(self.settings[n] as u32))
                            .collect(),
                        m: sub,
                    };
                    for i in 0..k {
                        if mask & (1 << i) == 0 {
                            blocked = blocked.insert_block(i, &self.sigma_powers[sites[i]])?;
                        }
                    }
                    blocked.m
                };
                total.add_scaled(&term, C64::new(-(coeff as f64), 0.0));
            }
            total
        };
        self.memo.insert(sites.to_vec(), result.clone());
        Ok(result)
    }
}

/// The symmetrized inclusion–exclusion source operator. `sigma` overrides
/// the per-site reference states (default `I/d_n`).
pub fn build_tau(rho: &QuantumState, settings: &[usize], sigma: Option<&[ComplexMatrix]>) -> Result<SourceOperator> {
    validate_settings(settings, rho.num_sites())?;
    let shape = FactorShape::new(rho.site_dims().to_vec(), settings.to_vec())?;
    shape.total_dim()?;
    let sigma = reference_states(rho, sigma)?;
    let sigma_powers = sigma
        .iter()
        .zip(settings)
        .map(|(s, &k)| kron_power(s, k))
        .collect::<Result<Vec<_>>>()?;
    let mut builder = TauBuilder {
        rho,
        settings,
        sigma,
        sigma_powers,
        images: vec![None; settings.len()],
        memo: HashMap::new(),
    };
    let all: Vec<usize> = (0..settings.len()).collect();
    let op = builder.tau(&all)?;
    SourceOperator::new(shape, op, rho.clone(), BuilderTag::Tau)
}

/// `W_ab` for vectors `g_a`, `g_b` and `S` copies: `(|g_a⟩⟨g_a|)^{⊗S}` on the
/// diagonal and, off the diagonal, the four-term polarization whose every
/// single-copy marginal is `|g_a⟩⟨g_b|`.
pub fn w_block(ga: &[C64], gb: &[C64], copies: usize, diagonal: bool) -> Result<ComplexMatrix> {
    if diagonal {
        return kron_power(&ComplexMatrix::projector(ga), copies);
    }
    let i = C64::new(0.0, 1.0);
    // (g_a + c g_b) projectors weighted by c: the cross terms add up to 4|g_a⟩⟨g_b|.
    let phases = [ONE, -ONE, i, -i];
    let coeffs = [ONE, -ONE, i, -i];
    let scale = 1.0 / 2f64.powi(copies as i32 + 1);
    let d = ga.len();
    let mut acc = ComplexMatrix::zeros(d.pow(copies as u32), d.pow(copies as u32));
    for (phase, coeff) in phases.iter().zip(coeffs) {
        let v: Vec<C64> = ga.iter().zip(gb).map(|(a, b)| a + phase * b).collect();
        let p = kron_power(&ComplexMatrix::projector(&v), copies)?;
        acc.add_scaled(&p, coeff * scale);
    }
    Ok(acc)
}

/// Images `|a⟩⟨b| ↦ W_ab` in the basis given by the columns of `basis`.
fn w_images(basis: &[Vec<C64>], copies: usize) -> Result<Vec<Vec<ComplexMatrix>>> {
    let d = basis.len();
    let mut images = vec![Vec::with_capacity(d); d];
    for (a, b) in matrix_units(d) {
        images[a].push(w_block(&basis[a], &basis[b], copies, a == b)?);
    }
    Ok(images)
}

fn computational_basis(d: usize) -> Vec<Vec<C64>> {
    (0..d)
        .map(|a| (0..d).map(|i| if i == a { ONE } else { ZERO }).collect())
        .collect()
}

/// Bipartite pure-state operator `Σ ξ_j ξ_j₁ |g_j⟩⟨g_j₁| ⊗ W_jj₁` in the
/// Schmidt bases of `psi`.
fn tau_tilde_bipartite_pure(psi: &[C64], d1: usize, d2: usize, copies: usize) -> Result<ComplexMatrix> {
    let form = schmidt_vector(psi, d1, d2)?;
    let n = checked_product("source operator dimension", &[d1, d2.pow(copies as u32)])?;
    let mut acc = ComplexMatrix::zeros(n, n);
    let r = form.coefficients.len();
    for j in 0..r {
        for j1 in 0..r {
            let left = ComplexMatrix::outer(&form.left[j], &form.left[j1]);
            let w = w_block(&form.right[j], &form.right[j1], copies, j == j1)?;
            let term = kron(&left, &w)?;
            acc.add_scaled(&term, C64::new(form.coefficients[j] * form.coefficients[j1], 0.0));
        }
    }
    Ok(acc)
}

/// Source operator built from `W` blocks at every site but `undilated`,
/// which must carry a single setting.
pub fn build_tau_tilde_at(rho: &QuantumState, settings: &[usize], undilated: usize) -> Result<SourceOperator> {
    validate_settings(settings, rho.num_sites())?;
    if undilated >= settings.len() || settings[undilated] != 1 {
        return Err(Error::Argument(format!(
            "site {undilated} must carry exactly one setting, settings are {settings:?}"
        )));
    }
    let shape = FactorShape::new(rho.site_dims().to_vec(), settings.to_vec())?;
    shape.total_dim()?;
    let dims = rho.site_dims();
    let op = if dims.len() == 2 {
        let other = 1 - undilated;
        // order (undilated, other) for the Schmidt construction
        let rho_ordered = if undilated == 0 {
            rho.matrix().clone()
        } else {
            permute_factors(rho.matrix(), dims, &[1, 0])?
        };
        let ordered = QuantumState::new(vec![dims[undilated], dims[other]], rho_ordered)?;
        let n = shape.total_dim()?;
        let mut acc = ComplexMatrix::zeros(n, n);
        for (w, psi) in ordered.spectral_ensemble()? {
            let t = tau_tilde_bipartite_pure(&psi, dims[undilated], dims[other], settings[other])?;
            acc.add_scaled(&t, C64::new(w, 0.0));
        }
        if undilated == 0 {
            acc
        } else {
            // slots: [other^(1..S), undilated] -> [undilated, other^(1..S)] reversed
            let s = settings[other];
            let mut slot_dims = vec![dims[undilated]];
            slot_dims.extend(std::iter::repeat_n(dims[other], s));
            let perm: Vec<usize> = (1..=s).chain(std::iter::once(0)).collect();
            permute_factors(&acc, &slot_dims, &perm)?
        }
    } else {
        let mut acc = Blocked {
            dims: dims.to_vec(),
            m: rho.matrix().clone(),
        };
        for (n, &d) in dims.iter().enumerate() {
            if n != undilated {
                acc = acc.map_block(n, &w_images(&computational_basis(d), settings[n])?)?;
            }
        }
        acc.m
    };
    SourceOperator::new(shape, op, rho.clone(), BuilderTag::TauTilde)
}

/// [`build_tau_tilde_at`] with the first site undilated.
pub fn build_tau_tilde(rho: &QuantumState, settings: &[usize]) -> Result<SourceOperator> {
    if settings.first() != Some(&1) {
        return Err(Error::Argument(format!(
            "the first site must carry exactly one setting, settings are {settings:?}"
        )));
    }
    build_tau_tilde_at(rho, settings, 0)
}

/// The explicit 8×8 one-by-two-setting operator for the two-qubit singlet.
pub fn build_singlet_special() -> SourceOperator {
    let e = |a: usize, b: usize| ComplexMatrix::unit(2, a, b);
    let half_id = ComplexMatrix::identity(2).scale_real(0.5);
    let term = |x: &ComplexMatrix, y: &ComplexMatrix, z: &ComplexMatrix| {
        kron(&kron(x, y).expect("small"), z).expect("small")
    };
    let mut op = ComplexMatrix::zeros(8, 8);
    op.add_scaled(&term(&e(0, 0), &e(1, 1), &e(1, 1)), C64::new(0.5, 0.0));
    op.add_scaled(&term(&e(1, 1), &e(0, 0), &e(0, 0)), C64::new(0.5, 0.0));
    op.add_scaled(&term(&e(0, 1), &e(1, 0), &half_id), C64::new(-0.5, 0.0));
    op.add_scaled(&term(&e(1, 0), &e(0, 1), &half_id), C64::new(-0.5, 0.0));
    op.add_scaled(&term(&e(0, 1), &half_id, &e(1, 0)), C64::new(-0.5, 0.0));
    op.add_scaled(&term(&e(1, 0), &half_id, &e(0, 1)), C64::new(-0.5, 0.0));
    let shape = FactorShape::new(vec![2, 2], vec![1, 2]).expect("valid shape");
    SourceOperator::new(shape, op, crate::states::make_singlet(), BuilderTag::SingletSpecial)
        .expect("singlet operator is valid")
}

/// `Σ α_i ⊗_n (ρ_n^{(i)})^{⊗S_n}`, positive for every separable input.
pub fn build_separable_positive(components: &[ProductComponent], settings: &[usize]) -> Result<SourceOperator> {
    let dims = validate_components(components)?;
    validate_settings(settings, dims.len())?;
    let shape = FactorShape::new(dims, settings.to_vec())?;
    let n = shape.total_dim()?;
    let mut op = ComplexMatrix::zeros(n, n);
    for c in components {
        let powers = c
            .factors
            .iter()
            .zip(settings)
            .map(|(f, &s)| kron_power(f.matrix(), s))
            .collect::<Result<Vec<_>>>()?;
        op.add_scaled(&kron_all(&powers)?, C64::new(c.weight, 0.0));
    }
    let state = make_separable_mixture(components)?;
    SourceOperator::new(shape, op, state, BuilderTag::SeparablePositive)
}

/// Every choice of one slot per site, as flat slot indices.
pub fn slot_choices(shape: &FactorShape) -> Vec<Vec<usize>> {
    let mut choices = vec![Vec::new()];
    for (site, &s) in shape.multiplicities().iter().enumerate() {
        let mut next = Vec::with_capacity(choices.len() * s);
        for c in &choices {
            for k in 0..s {
                let mut c = c.clone();
                c.push(shape.slot(site, k).expect("in range"));
                next.push(c);
            }
        }
        choices = next;
    }
    choices
}

/// Largest deviation `|tr[T·(X_1 at k_1 ⊗ … ⊗ X_N at k_N)] − tr[ρ X_1⊗…⊗X_N]|`
/// over `trials` random Hermitian tuples of unit operator norm and every
/// slot choice.
pub fn verify_defining_relation(t: &SourceOperator, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let dims = t.shape.site_dims();
    let reduced: Vec<ComplexMatrix> = slot_choices(&t.shape)
        .iter()
        .map(|keep| partial_trace(&t.op, &t.shape, keep))
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let xs: Vec<ComplexMatrix> = dims
            .iter()
            .map(|&d| {
                let h = random_hermitian(&mut rng, d);
                let norm = eigvals_hermitian(&h)
                    .expect("Hermitian by construction")
                    .iter()
                    .fold(0.0f64, |m, l| m.max(l.abs()));
                let norm = if norm > 0.0 { norm } else { 1.0 };
                // random sign flip keeps probes from sharing a bias
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                h.scale_real(sign / norm)
            })
            .collect();
        let probe = kron_all(&xs)?;
        let expect = t.state.matrix().trace_product(&probe)?;
        for red in &reduced {
            worst = worst.max((red.trace_product(&probe)? - expect).norm());
        }
    }
    Ok(worst)
}

/// Largest entrywise deviation between each one-slot-per-site reduction of
/// `t` and the state; zero exactly when the defining relation holds.
pub fn marginal_residual(t: &SourceOperator) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for keep in slot_choices(&t.shape) {
        let red = partial_trace(&t.op, &t.shape, &keep)?;
        worst = worst.max(red.max_abs_diff(t.state.matrix()));
    }
    Ok(worst)
}

/// Keeps the first `new_mult[n]` setting slots of every site.
pub fn reduce_settings(t: &SourceOperator, new_mult: &[usize]) -> Result<SourceOperator> {
    let mult = t.shape.multiplicities();
    if new_mult.len() != mult.len() || new_mult.iter().zip(mult).any(|(&l, &s)| l == 0 || l > s) {
        return Err(Error::Argument(format!(
            "cannot reduce settings {mult:?} to {new_mult:?}"
        )));
    }
    let mut keep = Vec::new();
    for (site, &l) in new_mult.iter().enumerate() {
        for k in 0..l {
            keep.push(t.shape.slot(site, k)?);
        }
    }
    let op = partial_trace(&t.op, &t.shape, &keep)?;
    let shape = FactorShape::new(t.shape.site_dims().to_vec(), new_mult.to_vec())?;
    SourceOperator::new(shape, op, t.state.clone(), t.builder)
}

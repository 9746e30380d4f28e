//! Ground-truth generators: profile matrices drawn from hull vertices of
//! random simplex points, log-AR(1) and lognormal-mixture emission
//! processes with closed-form means, and the true attribution matrix.
//!
//! Randomness comes from ChaCha8 keyed by a master seed, with one stream per
//! `(replicate, slot)`: `stream_id = replicate * 2^16 + slot`. Sources use
//! slots `0..K`; profile and parameter draws use reserved high slots.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{default_source_labels, AttributionMatrix, ConcentrationMatrix};
use crate::geometry::{hull_vertices, intrinsic_projection, PointCloud};

const PROFILE_SLOT: u16 = 0xFFFF;
const PARAMS_SLOT: u16 = 0xFFFE;
const PROFILE_ATTEMPTS: usize = 100;

/// Seed and stream for a ChaCha8 generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Base stream of a replicate; slot 0.
    pub fn replicate(master_seed: u64, replicate: u64) -> Self {
        Self::new(master_seed, replicate << 16)
    }

    /// Same replicate, different slot.
    pub fn slot(self, slot: u16) -> Self {
        Self::new(self.master_seed, (self.stream_id & !0xFFFF) | slot as u64)
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogAr1Params {
    /// AR coefficients, `|phi| < 1`.
    pub phi: Vec<f64>,
    /// Means of the latent Gaussian process.
    pub mu_g: Vec<f64>,
    /// Innovation standard deviations.
    pub sigma_eps: Vec<f64>,
}

impl LogAr1Params {
    pub fn sources(&self) -> usize {
        self.phi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.phi.len();
        if k == 0 || self.mu_g.len() != k || self.sigma_eps.len() != k {
            return Err(Error::InvalidInput(
                "AR(1) parameter vectors must be non-empty and equally long".into(),
            ));
        }
        if self.phi.iter().any(|p| !(p.abs() < 1.0)) {
            return Err(Error::InvalidInput("AR coefficients must satisfy |phi| < 1".into()));
        }
        if self.sigma_eps.iter().any(|s| !(*s >= 0.0) || !s.is_finite())
            || self.mu_g.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidInput(
                "AR(1) means must be finite and innovation sds non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Standard deviation of the stationary marginal of the latent process.
    pub fn stationary_sd(&self, k: usize) -> f64 {
        self.sigma_eps[k] / (1.0 - self.phi[k] * self.phi[k]).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Per-source finite Gaussian mixtures on `log W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalMixtureParams {
    pub sources: Vec<Vec<MixtureComponent>>,
}

impl LognormalMixtureParams {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one source".into()));
        }
        for (k, comps) in self.sources.iter().enumerate() {
            if comps.is_empty() {
                return Err(Error::InvalidInput(format!("source {k} has no components")));
            }
            let total: f64 = comps.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-12 || comps.iter().any(|c| !(c.weight >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "source {k} weights must lie on the simplex (sum {total})"
                )));
            }
            if comps.iter().any(|c| !(c.sd >= 0.0) || !c.sd.is_finite() || !c.mean.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "source {k} has a non-finite mean or negative sd"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Ar1,
    Mixture,
}

/// Drawn process parameters, kept with the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum ProcessParams {
    Ar1(LogAr1Params),
    Mixture(LognormalMixtureParams),
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// `n x K` emissions (including planted corner rows, if any).
    pub w: DMatrix<f64>,
    /// `K x J` profiles.
    pub h: DMatrix<f64>,
    /// Population means of the emission columns.
    pub mu: DVector<f64>,
    pub phi_true: AttributionMatrix,
    pub params: ProcessParams,
}

impl GroundTruth {
    /// Row-normalized profiles `H*`.
    pub fn h_star(&self) -> DMatrix<f64> {
        let mut h = self.h.clone();
        for mut row in h.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        h
    }

    /// `W D` with `D` the profile row sums, so that `Y = W~ H*`.
    pub fn w_tilde(&self) -> DMatrix<f64> {
        let mut w = self.w.clone();
        for (k, mut col) in w.column_iter_mut().enumerate() {
            col *= self.h.row(k).sum();
        }
        w
    }

    /// Attribution fractions of this particular sample: sample means of `W`
    /// in place of the population means.
    pub fn sample_phi(&self) -> Result<AttributionMatrix> {
        true_phi(&self.w.row_mean().transpose(), &self.h)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthOptions {
    /// Append `K` rows `mu_k e_k` to `W` so that every profile appears
    /// exactly in the data.
    pub plant_corners: bool,
    /// Profile candidates per draw; `None` means `10 K`.
    pub n_candidates: Option<usize>,
}

/// `K x J` profile matrix: `K` hull vertices of `n_candidates` simplex
/// points (normalized iid Exp(1) vectors) chosen to maximize their minimum
/// pairwise distance.
pub fn generate_profile_matrix(
    j: usize,
    k: usize,
    n_candidates: usize,
    rng: RngSpec,
) -> Result<DMatrix<f64>> {
    if k == 0 || k > j || j < 2 {
        return Err(Error::InvalidInput(format!("need 1 <= K <= J, got K = {k}, J = {j}")));
    }
    if n_candidates < 10 * k {
        return Err(Error::InvalidInput(format!(
            "need at least 10 K = {} profile candidates, got {n_candidates}",
            10 * k
        )));
    }
    let mut gen = rng.rng();
    for _ in 0..PROFILE_ATTEMPTS {
        let draws: Vec<f64> = (0..n_candidates * j).map(|_| Exp1.sample(&mut gen)).collect();
        let mut cands = DMatrix::from_row_slice(n_candidates, j, &draws);
        for mut row in cands.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        let cloud = PointCloud::new(cands.clone())?;
        let verts = match intrinsic_projection(&cloud, j - 1).and_then(|(_, z)| hull_vertices(&z)) {
            Ok(v) => v,
            Err(Error::HullDimensionExceeded { .. }) => (0..n_candidates).collect(),
            Err(Error::DegenerateCloud(_)) => continue,
            Err(e) => return Err(e),
        };
        if verts.len() < k {
            continue;
        }
        let chosen = max_min_distance_subset(&cands, &verts, k);
        let h = cands.select_rows(&chosen);
        let sv = h.clone().svd(false, false).singular_values;
        if sv.min() > 1e-10 * sv.max() {
            return Ok(h);
        }
    }
    Err(Error::InvalidInput(format!(
        "no full-rank profile matrix after {PROFILE_ATTEMPTS} draws"
    )))
}

/// Lexicographically first `k`-subset of `verts` maximizing the minimum
/// pairwise Euclidean distance.
fn max_min_distance_subset(points: &DMatrix<f64>, verts: &[usize], k: usize) -> Vec<usize> {
    let m = verts.len();
    let mut dist = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let d = (points.row(verts[a]) - points.row(verts[b])).norm();
            dist[a * m + b] = d;
            dist[b * m + a] = d;
        }
    }
    let mut best: (f64, Vec<usize>) = (f64::NEG_INFINITY, Vec::new());
    for combo in (0..m).combinations(k) {
        let mut min = f64::INFINITY;
        for (x, &a) in combo.iter().enumerate() {
            for &b in &combo[x + 1..] {
                min = min.min(dist[a * m + b]);
                if min <= best.0 {
                    break;
                }
            }
            if min <= best.0 {
                break;
            }
        }
        if min > best.0 {
            best = (min, combo);
        }
    }
    best.1.into_iter().map(|i| verts[i]).collect()
}

/// `n x K` matrix `exp(g)` where each column of `g` is a stationary Gaussian
/// AR(1) started from its stationary law.
pub fn simulate_log_ar1(n: usize, params: &LogAr1Params, rng: RngSpec) -> Result<DMatrix<f64>> {
    params.validate()?;
    let k = params.sources();
    let mut w = DMatrix::zeros(n, k);
    for s in 0..k {
        let mut gen = rng.slot(s as u16).rng();
        let (mu, phi, sd) = (params.mu_g[s], params.phi[s], params.sigma_eps[s]);
        let mut z = || -> f64 { StandardNormal.sample(&mut gen) };
        let mut g = mu + params.stationary_sd(s) * z();
        for i in 0..n {
            if i > 0 {
                g = mu + phi * (g - mu) + sd * z();
            }
            w[(i, s)] = g.exp();
        }
    }
    Ok(w)
}

/// `exp(mu_g + sigma_eps^2 / (2 (1 - phi^2)))` per source.
pub fn population_mean_log_ar1(params: &LogAr1Params) -> Result<DVector<f64>> {
    params.validate()?;
    Ok(DVector::from_fn(params.sources(), |k, _| {
        let v = params.sigma_eps[k].powi(2) / (1.0 - params.phi[k].powi(2));
        (params.mu_g[k] + 0.5 * v).exp()
    }))
}

/// `phi = 0.8`, `mu_g ~ U(-0.5, 0.5)`, `sigma_eps ~ U(0.15, 0.5)`.
pub fn draw_ar1_params(k: usize, rng: RngSpec) -> Result<LogAr1Params> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    let mut gen = rng.rng();
    let mu_g = (0..k).map(|_| gen.random_range(-0.5..0.5)).collect();
    let sigma_eps = (0..k).map(|_| gen.random_range(0.15..0.5)).collect();
    Ok(LogAr1Params {
        phi: vec![0.8; k],
        mu_g,
        sigma_eps,
    })
}

/// iid rows; per source a component is drawn by weight, then
/// `log W ~ N(mean, sd^2)`.
pub fn simulate_lognormal_mixture(
    n: usize,
    params: &LognormalMixtureParams,
    rng: RngSpec,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    let k = params.sources.len();
    let mut w = DMatrix::zeros(n, k);
    for (s, comps) in params.sources.iter().enumerate() {
        let mut gen = rng.slot(s as u16).rng();
        for i in 0..n {
            let u: f64 = gen.random();
            let mut acc = 0.0;
            let mut pick = comps.len() - 1;
            for (c, comp) in comps.iter().enumerate() {
                acc += comp.weight;
                if u < acc {
                    pick = c;
                    break;
                }
            }
            let z: f64 = StandardNormal.sample(&mut gen);
            w[(i, s)] = (comps[pick].mean + comps[pick].sd * z).exp();
        }
    }
    Ok(w)
}

/// `sum_c pi_c exp(mu_c + sd_c^2 / 2)` per source.
pub fn population_mean_mixture(params: &LognormalMixtureParams) -> Result<DVector<f64>> {
    params.validate()?;
    Ok(DVector::from_iterator(
        params.sources.len(),
        params.sources.iter().map(|comps| {
            comps
                .iter()
                .map(|c| c.weight * (c.mean + 0.5 * c.sd * c.sd).exp())
                .sum::<f64>()
        }),
    ))
}

/// `C ~ Pois(3) + 1`, weights `~ Dirichlet(1)`, means `~ U(-1, 1)`,
/// sds `~ U(0.1, 1)`.
pub fn draw_mixture_params(k: usize, rng: RngSpec) -> Result<LognormalMixtureParams> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    let mut gen = rng.rng();
    let poisson = Poisson::new(3.0).expect("valid rate");
    let sources = (0..k)
        .map(|_| {
            let count = poisson.sample(&mut gen) as usize + 1;
            // Dirichlet(1, ..., 1) as normalized unit exponentials.
            let raw: Vec<f64> = (0..count).map(|_| Exp1.sample(&mut gen)).collect();
            let total: f64 = raw.iter().sum();
            let mut comps: Vec<MixtureComponent> = raw
                .iter()
                .map(|e| MixtureComponent {
                    weight: e / total,
                    mean: gen.random_range(-1.0..1.0),
                    sd: gen.random_range(0.1..1.0),
                })
                .collect();
            // Push rounding residue into the last weight.
            let head: f64 = comps[..count - 1].iter().map(|c| c.weight).sum();
            comps[count - 1].weight = 1.0 - head;
            comps
        })
        .collect();
    Ok(LognormalMixtureParams { sources })
}

/// `phi_kj = mu_k H_kj / sum_l mu_l H_lj`.
pub fn true_phi(mu: &DVector<f64>, h: &DMatrix<f64>) -> Result<AttributionMatrix> {
    let (k, j) = h.shape();
    if mu.len() != k {
        return Err(Error::ShapeMismatch {
            expected: (k, 1),
            found: (mu.len(), 1),
        });
    }
    if mu.iter().any(|m| !(*m >= 0.0)) || !mu.iter().any(|&m| m > 0.0) {
        return Err(Error::InvalidInput(
            "population means must be non-negative with a positive entry".into(),
        ));
    }
    let mut phi = DMatrix::zeros(k, j);
    for c in 0..j {
        let mut denom = 0.0;
        for l in 0..k {
            denom += mu[l] * h[(l, c)];
        }
        if !(denom > 0.0) {
            return Err(Error::ZeroDenominator(c));
        }
        for l in 0..k {
            phi[(l, c)] = mu[l] * h[(l, c)] / denom;
        }
    }
    Ok(AttributionMatrix::from_parts_unchecked(phi, default_source_labels(k)))
}

/// Draws profiles, process parameters and emissions for one replicate and
/// returns `Y = W H` together with the truth.
pub fn make_ground_truth(
    n: usize,
    j: usize,
    k: usize,
    process: Process,
    rng: RngSpec,
    options: GroundTruthOptions,
) -> Result<(ConcentrationMatrix, GroundTruth)> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if k == 0 || k >= j {
        return Err(Error::InvalidInput(format!("need 1 <= K < J, got K = {k}, J = {j}")));
    }
    let n_candidates = options.n_candidates.unwrap_or(10 * k);
    let h = generate_profile_matrix(j, k, n_candidates, rng.slot(PROFILE_SLOT))?;
    let (mut w, mu, params) = match process {
        Process::Ar1 => {
            let p = draw_ar1_params(k, rng.slot(PARAMS_SLOT))?;
            let w = simulate_log_ar1(n, &p, rng)?;
            (w, population_mean_log_ar1(&p)?, ProcessParams::Ar1(p))
        }
        Process::Mixture => {
            let p = draw_mixture_params(k, rng.slot(PARAMS_SLOT))?;
            let w = simulate_lognormal_mixture(n, &p, rng)?;
            (w, population_mean_mixture(&p)?, ProcessParams::Mixture(p))
        }
    };
    if options.plant_corners {
        w = w.insert_rows(n, k, 0.0);
        for s in 0..k {
            w[(n + s, s)] = mu[s];
        }
    }
    let y = ConcentrationMatrix::with_default_names(&w * &h)?;
    let phi_true = true_phi(&mu, &h)?;
    Ok((
        y,
        GroundTruth {
            w,
            h,
            mu,
            phi_true,
            params,
        },
    ))
}

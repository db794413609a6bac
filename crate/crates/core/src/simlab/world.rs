//! Synthetic data-generating processes with known laws of `z` and `y`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::seed::{derive_seed, rng_from};
use crate::choice::{softmax_in_place, ChoiceTask, Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::gmodel::{GModel, ParametricGParams};
use crate::inference::Population;

/// How the AI label and the human label are generated given the attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldKind {
    /// One constant attribute, `k = 1`. `P(z = 1) = alpha`, `P(y = z) = p`.
    Example1 { alpha: f64, p: f64 },
    /// `P(z = j | x) = softmax_j(zeta . x_j)` over `j = 1..k` only;
    /// `y` follows the parametric label model with `(theta_check, eta)`.
    Parametric {
        theta_check: Vec<f64>,
        zeta: Vec<f64>,
        eta: f64,
    },
    /// Explicit tables on a finite support: `z_law[i]` is `P(z | x_i)` and
    /// `y_law[i][z]` is `P(y | x_i, z)`.
    Custom {
        z_law: Vec<Vec<f64>>,
        y_law: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureLaw {
    /// `x` is `tasks[i]` with probability `probs[i]`.
    Support { tasks: Vec<DMatrix<f64>>, probs: Vec<f64> },
    /// Every attribute i.i.d. uniform on `[-1, 1]`.
    Uniform { k: usize, d: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub kind: WorldKind,
    pub features: FeatureLaw,
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum; take the last positive entry.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

fn check_dist(law: &[f64], len: usize, what: &str) -> Result<()> {
    if law.len() != len
        || law.iter().any(|p| !p.is_finite() || *p < 0.0)
        || (law.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::invalid(format!("{what} is not a distribution over {len} outcomes")));
    }
    Ok(())
}

impl WorldSpec {
    pub fn example1(alpha: f64, p: f64) -> Result<Self> {
        let w = Self {
            kind: WorldKind::Example1 { alpha, p },
            features: FeatureLaw::Support {
                tasks: vec![DMatrix::from_element(1, 1, 1.0)],
                probs: vec![1.0],
            },
        };
        w.validate()?;
        Ok(w)
    }

    /// Continuous world with uniform attributes; `d` is the length of `theta_check`.
    pub fn parametric(theta_check: Vec<f64>, zeta: Vec<f64>, eta: f64, k: usize) -> Result<Self> {
        let d = theta_check.len();
        let w = Self {
            kind: WorldKind::Parametric { theta_check, zeta, eta },
            features: FeatureLaw::Uniform { k, d },
        };
        w.validate()?;
        Ok(w)
    }

    /// `theta_check` and `zeta` with components drawn from `U[-2, 2]`.
    pub fn random_parametric(d: usize, k: usize, eta: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..=2.0)).collect();
        let zeta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..=2.0)).collect();
        Self::parametric(theta, zeta, eta, k)
    }

    pub fn custom(
        tasks: Vec<DMatrix<f64>>,
        probs: Vec<f64>,
        z_law: Vec<Vec<f64>>,
        y_law: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let w = Self {
            kind: WorldKind::Custom { z_law, y_law },
            features: FeatureLaw::Support { tasks, probs },
        };
        w.validate()?;
        Ok(w)
    }

    /// Same laws on a finite attribute support.
    pub fn with_support(mut self, tasks: Vec<DMatrix<f64>>, probs: Vec<f64>) -> Result<Self> {
        self.features = FeatureLaw::Support { tasks, probs };
        self.validate()?;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        match &self.features {
            FeatureLaw::Support { tasks, .. } => tasks.first().map_or(0, |t| t.nrows()),
            FeatureLaw::Uniform { k, .. } => *k,
        }
    }

    pub fn d(&self) -> usize {
        match &self.features {
            FeatureLaw::Support { tasks, .. } => tasks.first().map_or(0, |t| t.ncols()),
            FeatureLaw::Uniform { d, .. } => *d,
        }
    }

    pub fn has_finite_support(&self) -> bool {
        matches!(self.features, FeatureLaw::Support { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let (k, d) = (self.k(), self.d());
        if k == 0 || d == 0 {
            return Err(Error::invalid("world needs k >= 1 and d >= 1"));
        }
        if let FeatureLaw::Support { tasks, probs } = &self.features {
            if tasks.len() != probs.len() {
                return Err(Error::dims("one probability per support point is required"));
            }
            if tasks.iter().any(|t| t.shape() != (k, d) || t.iter().any(|v| !v.is_finite())) {
                return Err(Error::invalid("support tasks must share a finite k x d shape"));
            }
            check_dist(probs, probs.len(), "support probabilities")?;
        }
        match &self.kind {
            WorldKind::Example1 { alpha, p } => {
                check_unit("alpha", *alpha)?;
                check_unit("p", *p)?;
                if (k, d) != (1, 1) {
                    return Err(Error::invalid("example-1 world has k = d = 1"));
                }
            }
            WorldKind::Parametric { theta_check, zeta, eta } => {
                if theta_check.len() != d || zeta.len() != d {
                    return Err(Error::dims("theta_check and zeta must have length d"));
                }
                if theta_check.iter().chain(zeta).chain([eta]).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("world parameters".into()));
                }
            }
            WorldKind::Custom { z_law, y_law } => {
                let FeatureLaw::Support { tasks, .. } = &self.features else {
                    return Err(Error::invalid("custom worlds need a finite support"));
                };
                if z_law.len() != tasks.len() || y_law.len() != tasks.len() {
                    return Err(Error::dims("one z law and one y table per support point"));
                }
                for (zl, yl) in z_law.iter().zip(y_law) {
                    check_dist(zl, k + 1, "z law")?;
                    if yl.len() != k + 1 {
                        return Err(Error::dims("y table needs one row per z"));
                    }
                    for row in yl {
                        check_dist(row, k + 1, "y law")?;
                    }
                }
            }
        }
        Ok(())
    }

    /// `P(z | x)` for support index `idx` (ignored for continuous worlds).
    pub fn z_law(&self, idx: usize, x: &DMatrix<f64>) -> Vec<f64> {
        match &self.kind {
            WorldKind::Example1 { alpha, .. } => vec![1.0 - alpha, *alpha],
            WorldKind::Parametric { zeta, .. } => {
                let k = x.nrows();
                let mut u: Vec<f64> = (0..k).map(|j| x.row(j).iter().zip(zeta).map(|(a, b)| a * b).sum()).collect();
                softmax_among(&mut u);
                let mut out = vec![0.0];
                out.extend(u);
                out
            }
            WorldKind::Custom { z_law, .. } => z_law[idx].clone(),
        }
    }

    /// `P(y | x, z)`.
    pub fn y_law(&self, idx: usize, x: &DMatrix<f64>, z: usize) -> Vec<f64> {
        match &self.kind {
            WorldKind::Example1 { p, .. } => {
                if z == 1 {
                    vec![1.0 - p, *p]
                } else {
                    vec![*p, 1.0 - p]
                }
            }
            WorldKind::Parametric { theta_check, eta, .. } => parametric_law(x, theta_check, *eta, z),
            WorldKind::Custom { y_law, .. } => y_law[idx][z].clone(),
        }
    }

    /// The true conditional law of `y` as a parametric label model, when it
    /// lies in that family.
    pub fn true_g(&self) -> Result<GModel> {
        match &self.kind {
            WorldKind::Example1 { p, .. } => {
                let theta = logit(1.0 - p);
                Ok(GModel::Parametric(ParametricGParams::new(vec![theta], 2.0 * logit(*p))?))
            }
            WorldKind::Parametric { theta_check, eta, .. } => {
                Ok(GModel::Parametric(ParametricGParams::new(theta_check.clone(), *eta)?))
            }
            WorldKind::Custom { .. } => Err(Error::invalid("custom world has no parametric label model")),
        }
    }

    fn draw_x(&self, rng: &mut ChaCha8Rng) -> (usize, DMatrix<f64>) {
        match &self.features {
            FeatureLaw::Support { tasks, probs } => {
                let i = categorical(rng, probs);
                (i, tasks[i].clone())
            }
            FeatureLaw::Uniform { k, d } => (0, DMatrix::from_fn(*k, *d, |_, _| rng.random_range(-1.0..=1.0))),
        }
    }

    /// `draws` attribute draws from the feature law, unlabelled.
    pub fn draw_attributes(&self, draws: usize, seed: u64) -> Result<Vec<ChoiceTask>> {
        let mut rng = rng_from(seed);
        (0..draws).map(|_| ChoiceTask::new(self.draw_x(&mut rng).1, None, None)).collect()
    }

    /// Population over `(x, z)` cells. Finite supports are enumerated exactly;
    /// continuous worlds use `draws` attribute draws from `seed`.
    pub fn population(&self, draws: usize, seed: u64) -> Result<Population> {
        self.validate()?;
        match &self.features {
            FeatureLaw::Support { tasks, probs } => {
                let tasks: Vec<ChoiceTask> =
                    tasks.iter().map(|t| ChoiceTask::new(t.clone(), None, None)).collect::<Result<_>>()?;
                Population::from_laws(
                    &tasks,
                    probs,
                    |i| Ok(self.z_law(i, tasks[i].features())),
                    |i, z| Ok(self.y_law(i, tasks[i].features(), z)),
                )
            }
            FeatureLaw::Uniform { .. } => {
                if draws == 0 {
                    return Err(Error::invalid("continuous world needs a positive number of draws"));
                }
                self.population_on(&self.draw_attributes(draws, seed)?)
            }
        }
    }

    /// Population on given attribute draws, equally weighted.
    pub fn population_on(&self, tasks: &[ChoiceTask]) -> Result<Population> {
        if matches!(self.kind, WorldKind::Custom { .. }) {
            return Err(Error::invalid("custom worlds are defined on their own support"));
        }
        let w = vec![1.0 / tasks.len() as f64; tasks.len()];
        Population::from_laws(
            tasks,
            &w,
            |i| Ok(self.z_law(0, tasks[i].features())),
            |i, z| Ok(self.y_law(0, tasks[i].features(), z)),
        )
    }

    fn draw_task(&self, rng: &mut ChaCha8Rng, keep_y: bool) -> Result<ChoiceTask> {
        let (i, x) = self.draw_x(rng);
        let z = categorical(rng, &self.z_law(i, &x));
        let y = categorical(rng, &self.y_law(i, &x, z));
        ChoiceTask::new(x, keep_y.then_some(y), Some(z))
    }

    /// `m` primary and `n` auxiliary i.i.d. tasks. The two samples use
    /// separate streams, so a larger `m` or `n` extends the smaller sample.
    pub fn sample(&self, m: usize, n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let (k, d) = (self.k(), self.d());
        let mut rp = rng_from(derive_seed(seed, 0));
        let mut ra = rng_from(derive_seed(seed, 1));
        let p = (0..m).map(|_| self.draw_task(&mut rp, true)).collect::<Result<_>>()?;
        let a = (0..n).map(|_| self.draw_task(&mut ra, false)).collect::<Result<_>>()?;
        Ok((
            Dataset::with_shape(DatasetKind::Primary, k, d, p)?,
            Dataset::with_shape(DatasetKind::Auxiliary, k, d, a)?,
        ))
    }
}

/// Softmax without an outside option.
fn softmax_among(u: &mut [f64]) {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in u.iter_mut() {
        *v = (*v - max).exp();
        s += *v;
    }
    for v in u.iter_mut() {
        *v /= s;
    }
}

pub(crate) fn parametric_law(x: &DMatrix<f64>, theta: &[f64], eta: f64, z: usize) -> Vec<f64> {
    let k = x.nrows();
    let mut u = vec![0.0; k + 1];
    for j in 1..=k {
        u[j] = x.row(j - 1).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        if z == j {
            u[j] += eta;
        }
    }
    softmax_in_place(&mut u);
    u
}

/// `m` primary and `n` auxiliary tasks from `world`.
pub fn sample_dataset(world: &WorldSpec, m: usize, n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    world.sample(m, n, seed)
}

//! Analytical identification probabilities for the hypothesis-test
//! classifier.
//!
//! Under spatial multiplexing the statistic is central chi-square, so the
//! probability of a correct SM call is `1 - Pr_f` in closed form. Under the
//! Alamouti code, for the simplest configuration (a single antenna pair and
//! a single group), the normalized statistic decomposes as
//!
//! ```text
//! U = (a1 + X1)^2 + (a2 + X2)^2,   X1, X2 ~ N(0, 1),
//! ```
//!
//! where `a1`, `a2` collect the real and imaginary parts of the nonzero
//! Alamouti cross-correlations over the band, scaled by the estimator's
//! error standard deviation. Expanding a square gives `a^2 + 2aX + X^2`, so
//! the correct-identification probability reduces to a one-dimensional
//! integral of the CDF of `beta X + X^2` (with `beta = 2a`) against the
//! distribution of its independent twin — evaluated here by a midpoint rule
//! after substituting the underlying Gaussian variable.
//!
//! The error variance itself (given the channel) and the CDF of
//! `beta X + X^2` have closed forms, verified against Monte Carlo sampling
//! oracles in the tests.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::channel::ChannelRealization;
use crate::numerics::{erfc, marcum_q, riemann_integrate, NumericsError};

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A fixed, known channel and the operating point to analyze. Restricted to
/// the simplest statistic configuration: pair set `{(1,2)}` and one group.
#[derive(Debug, Clone)]
pub struct TheoryScenario {
    pub channel: ChannelRealization,
    pub sigma_s_sq: f64,
    pub sigma_w_sq: f64,
    pub n: usize,
    pub n_b: usize,
    pub eta: f64,
}

impl TheoryScenario {
    fn validate(&self) -> Result<(), TheoryError> {
        if self.channel.n_rx < 2 || self.channel.n_tx < 2 {
            return Err(TheoryError::InvalidScenario(
                "need at least a 2x2 channel".into(),
            ));
        }
        if self.channel.n != self.n || self.n % 2 != 0 || self.n == 0 {
            return Err(TheoryError::InvalidScenario(format!(
                "channel prepared for N = {}, scenario has N = {}",
                self.channel.n, self.n
            )));
        }
        if self.n_b == 0 || self.sigma_s_sq < 0.0 || self.sigma_w_sq < 0.0 {
            return Err(TheoryError::InvalidScenario(
                "nonpositive symbol count or negative variances".into(),
            ));
        }
        Ok(())
    }
}

/// Noncentrality ingredients of the Alamouti statistic for a fixed channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlCoefficients {
    pub a1: f64,
    pub a2: f64,
    /// Representative estimator-error standard deviation (band average).
    pub sigma_eps: f64,
}

/// Probability of correctly identifying SM at threshold `eta` with `q`
/// degrees of freedom:
/// `1 - exp(-eta/2) * sum_{m=1}^{q/2} (eta/2)^(m-1) / (m-1)!`.
pub fn pr_sm_given_sm(eta: f64, q: usize) -> Result<f64, TheoryError> {
    if q == 0 || q % 2 != 0 {
        return Err(TheoryError::InvalidScenario(format!(
            "q = {q} must be even and positive"
        )));
    }
    if eta < 0.0 {
        return Err(TheoryError::InvalidScenario(format!("eta = {eta} < 0")));
    }
    let half = eta / 2.0;
    let mut term = 1.0; // (eta/2)^(m-1) / (m-1)! at m = 1
    let mut sum = term;
    for m in 2..=(q / 2) {
        term *= half / (m as f64 - 1.0);
        sum += term;
    }
    Ok(1.0 - (-half).exp() * sum)
}

/// Error variance of one cross-correlation estimator component, given the
/// channel rows seen by the two receive antennas at the two sub-carriers:
///
/// ```text
/// sigma_eps^2 = sigma_s^4 / (2 N_b) |H1|^2 |H2|^2
///             + sigma_s^2 sigma_w^2 / (2 N_b) (|H1|^2 + |H2|^2)
///             + sigma_w^4 / (2 N_b)
/// ```
pub fn sigma_epsilon_sq(
    h_row_rx1: &[Complex64],
    h_row_rx2: &[Complex64],
    sigma_s_sq: f64,
    sigma_w_sq: f64,
    n_b: usize,
) -> f64 {
    let g1: f64 = h_row_rx1.iter().map(|h| h.norm_sqr()).sum();
    let g2: f64 = h_row_rx2.iter().map(|h| h.norm_sqr()).sum();
    let nb = n_b as f64;
    sigma_s_sq * sigma_s_sq / (2.0 * nb) * g1 * g2
        + sigma_s_sq * sigma_w_sq / (2.0 * nb) * (g1 + g2)
        + sigma_w_sq * sigma_w_sq / (2.0 * nb)
}

/// Alamouti cross-correlation at a codeword-aligned pair `(k, k+1)` for
/// receive antennas `(1, 2)`:
/// `(H_k^(1,1) H_{k+1}^(2,2) - H_k^(2,1) H_{k+1}^(1,2)) sigma_s^2`.
fn r_al(ch: &ChannelRealization, k: usize, sigma_s_sq: f64) -> Complex64 {
    (ch.coeff(k, 1, 1) * ch.coeff(k + 1, 2, 2) - ch.coeff(k, 2, 1) * ch.coeff(k + 1, 1, 2))
        * sigma_s_sq
}

/// Noncentrality coefficients for the fixed channel: band sums of the real
/// and imaginary Alamouti correlations, normalized by `sqrt(N/2)` times the
/// band-averaged error standard deviation.
pub fn al_coefficients(scenario: &TheoryScenario) -> Result<AlCoefficients, TheoryError> {
    scenario.validate()?;
    let n = scenario.n;
    let half_n = n / 2;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut var_acc = 0.0;
    for j in 1..=half_n {
        let (k1, k2) = (2 * j - 1, 2 * j);
        sum += r_al(&scenario.channel, k1, scenario.sigma_s_sq);
        var_acc += sigma_epsilon_sq(
            scenario.channel.rx_row(k1, 1),
            scenario.channel.rx_row(k2, 2),
            scenario.sigma_s_sq,
            scenario.sigma_w_sq,
            scenario.n_b,
        );
    }
    let sigma_eps = (var_acc / half_n as f64).sqrt();
    if !(sigma_eps > 0.0) {
        return Err(TheoryError::InvalidScenario(
            "zero estimator-error variance (no signal and no noise)".into(),
        ));
    }
    let scale = 1.0 / ((half_n as f64).sqrt() * sigma_eps);
    Ok(AlCoefficients {
        a1: sum.re * scale,
        a2: sum.im * scale,
        sigma_eps,
    })
}

/// CDF of `Y = beta X + X^2` for standard normal `X`: zero below
/// `-beta^2/4`, otherwise a difference of complementary error functions.
pub fn cdf_quadratic_gaussian(y: f64, beta: f64) -> Result<f64, TheoryError> {
    let floor = -beta * beta / 4.0;
    if y < floor {
        return Ok(0.0);
    }
    let s = (y + beta * beta / 4.0).sqrt();
    let sqrt2 = std::f64::consts::SQRT_2;
    let hi = erfc((-s - beta / 2.0) / sqrt2)?;
    let lo = erfc((s - beta / 2.0) / sqrt2)?;
    Ok(0.5 * (hi - lo))
}

/// Probability of correctly identifying AL for the simplest configuration:
///
/// `Pr(AL|AL) = 1 - integral F_{Y1}(eta - a1^2 - a2^2 - y2) dF_{Y2}(y2)`
///
/// with `Y_i = 2 a_i X_i + X_i^2`. The Stieltjes integral is evaluated by
/// substituting the underlying Gaussian (`y2 = 2 a2 x + x^2`, `x ~ N(0,1)`),
/// which turns it into a smooth midpoint-rule integral truncated where the
/// Gaussian density falls below 1e-8.
pub fn pr_al_given_al(scenario: &TheoryScenario) -> Result<f64, TheoryError> {
    let coeffs = al_coefficients(scenario)?;
    pr_al_from_coefficients(&coeffs, scenario.eta)
}

/// Same computation from precomputed coefficients.
pub fn pr_al_from_coefficients(
    coeffs: &AlCoefficients,
    eta: f64,
) -> Result<f64, TheoryError> {
    if eta <= 0.0 {
        return Ok(1.0);
    }
    let lambda = coeffs.a1 * coeffs.a1 + coeffs.a2 * coeffs.a2;
    let beta1 = 2.0 * coeffs.a1;
    let beta2 = 2.0 * coeffs.a2;
    // Truncate where the standard normal density drops below 1e-8.
    let x_max = 6.5;
    let center = -beta2 / 2.0; // vertex of y2(x); integrate symmetrically around it
    let lo = (center - x_max).min(-x_max);
    let hi = (center + x_max).max(x_max);
    let integrand = |x: f64| -> f64 {
        let density = (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density < 1e-12 {
            return 0.0;
        }
        let y2 = beta2 * x + x * x;
        let arg = eta - lambda - y2;
        let f = cdf_quadratic_gaussian(arg, beta1).unwrap_or(0.0);
        f * density
    };
    let miss = riemann_integrate(integrand, lo, hi, 1e-3)?;
    Ok((1.0 - miss).clamp(0.0, 1.0))
}

/// General-`q` correct-identification probability of the coded hypothesis
/// by Monte Carlo: `Pr( sum_m (a_m + X_m)^2 >= eta )` over standard normal
/// draws. Returns the estimate and its standard error.
pub fn pr_al_general(a: &[f64], eta: f64, samples: usize, seed: u64) -> (f64, f64) {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let mut u = 0.0;
        for &am in a {
            let x: f64 = rng.sample(StandardNormal);
            let s = am + x;
            u += s * s;
        }
        if u >= eta {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let se = (p * (1.0 - p) / samples as f64).sqrt();
    (p, se)
}

/// CDF of the noncentral chi-square law of the absolute-value statistic:
/// `Pr(T < lambda) = 1 - Q_D(|delta_mu|, sqrt(lambda))`.
pub fn noncentral_cdf(lambda: f64, d: usize, delta_mu_norm: f64) -> Result<f64, TheoryError> {
    if d == 0 {
        return Err(TheoryError::InvalidScenario("D must be >= 1".into()));
    }
    if lambda < 0.0 || delta_mu_norm < 0.0 {
        return Err(TheoryError::InvalidScenario(
            "lambda and |delta mu| must be nonnegative".into(),
        ));
    }
    Ok(1.0 - marcum_q(d as u32, delta_mu_norm, lambda.sqrt())?)
}

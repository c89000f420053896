//! Sampling the homogeneous problem and fitting the logarithmic modulus
//!
//! ```text
//!   ‖u‖_{1,Ω} ≤ C·M / log(C0·M / ‖u‖_{Γ_a})^κ
//! ```
//!
//! with `M` replaced by the computable proxy `‖q‖_{1/2,Γ_i} + ‖u‖_{1,Ω}`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::{boundary_l2_norm, norms, BoundaryVector, ForwardModel, ProblemData, ScalarField};
use crate::mesh::{Mesh, Tag};
use crate::spectral::{build_spectral_basis, FluxCoefficients, SpectralBasis};
use crate::vsc::round_up_on_grid;

/// Modes cycled through by the per-mode half of an ensemble.
pub const PROBE_MODES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySample {
    pub q: BoundaryVector,
    pub u: ScalarField,
    /// `‖u‖_{1,Ω}`
    pub h1_norm: f64,
    /// `‖u‖_{L²(Γ_a)}`
    pub trace_norm: f64,
    /// `‖q‖_{1/2,Γ_i}`
    pub flux_half_norm: f64,
    pub m_proxy: f64,
}

impl StabilitySample {
    /// The same sample for the flux `c·q`.
    pub fn scaled(&self, c: f64) -> Self {
        let a = c.abs();
        StabilitySample {
            q: self.q.scaled(c),
            u: ScalarField::from_values_unchecked(self.u.values().iter().map(|v| c * v).collect()),
            h1_norm: a * self.h1_norm,
            trace_norm: a * self.trace_norm,
            flux_half_norm: a * self.flux_half_norm,
            m_proxy: a * self.m_proxy,
        }
    }
}

/// Forward model with `f ≡ 0`, `u_a ≡ 0` plus the inner-loop spectral basis.
#[derive(Debug, Clone)]
pub struct StabilityProbe {
    model: ForwardModel,
    basis: SpectralBasis,
}

impl StabilityProbe {
    pub fn new(mesh: Arc<Mesh>, data: ProblemData) -> Result<Self> {
        if data.f.iter().any(|&v| v != 0.0) || data.u_a.values.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidData(
                "the homogeneous problem needs f = 0 and u_a = 0".into(),
            ));
        }
        let basis = build_spectral_basis(&mesh)?;
        let model = ForwardModel::new(mesh, data)?;
        Ok(StabilityProbe { model, basis })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn sample_homogeneous_solution(&self, q: &BoundaryVector) -> Result<StabilitySample> {
        let u = self.model.solve(q)?;
        let (_, h1_norm) = norms(self.model.mesh(), &u);
        let trace = self.model.trace(&u, Tag::GammaA)?;
        let trace_norm = boundary_l2_norm(self.model.outer(), &trace)?;
        let flux_half_norm = self.basis.sobolev_norm(0.5, q)?;
        Ok(StabilitySample {
            q: q.clone(),
            u,
            h1_norm,
            trace_norm,
            flux_half_norm,
            m_proxy: flux_half_norm + h1_norm,
        })
    }

    /// `n` samples normalized to unit `m_proxy`.
    ///
    /// Even indices are single eigenmodes cycling through the first
    /// [`PROBE_MODES`] modes, odd indices are random mixtures whose spectral
    /// decay rate is itself random, so the trace norms spread over many decades.
    pub fn generate_ensemble(&self, n: usize, seed: u64) -> Result<Vec<StabilitySample>> {
        let dim = self.basis.len();
        let modes = PROBE_MODES.min(dim);
        let lambdas = self.basis.lambdas();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut next_mode = 0;
        while out.len() < n {
            let q = if out.len() % 2 == 0 {
                let q = self.basis.eigenvector(next_mode);
                next_mode = (next_mode + 1) % modes;
                q
            } else {
                let decay: f64 = rng.random_range(0.5..4.0);
                let offset = rng.random_range(0..modes);
                let c = FluxCoefficients {
                    coeffs: (0..dim)
                        .map(|i| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            let rel = lambdas[i] / lambdas[offset];
                            z * rel.powf(-decay).min(1.0)
                        })
                        .collect(),
                };
                self.basis.synthesize(&c)?
            };
            let sample = self.sample_homogeneous_solution(&q)?;
            if sample.m_proxy > 0.0 && sample.trace_norm > 0.0 {
                out.push(sample.scaled(1.0 / sample.m_proxy));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityFit {
    pub c_fit: f64,
    pub c0_fit: f64,
    pub kappa: f64,
    /// Largest `‖u‖_{1,Ω} − bound` over the ensemble.
    pub max_violation: f64,
}

impl StabilityFit {
    /// `C·M / log(C0·M/t)^κ`, or `None` when the log argument is not above 1.
    pub fn bound(&self, m: f64, trace_norm: f64) -> Option<f64> {
        let arg = self.c0_fit * m / trace_norm;
        if !(arg > 1.0) {
            return None;
        }
        Some(self.c_fit * m / arg.ln().powf(self.kappa))
    }

    /// `bound − ‖u‖_{1,Ω}` with `C` scaled by `1 + slack`.
    pub fn slack(&self, sample: &StabilitySample, slack: f64) -> Option<f64> {
        let mut fit = *self;
        fit.c_fit *= 1.0 + slack;
        if sample.trace_norm == 0.0 {
            return Some(fit.c_fit * sample.m_proxy);
        }
        fit.bound(sample.m_proxy, sample.trace_norm).map(|b| b - sample.h1_norm)
    }

    /// Fraction of samples violating the bound at relative `slack` on `C`.
    pub fn violation_rate(&self, samples: &[StabilitySample], slack: f64) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let bad = samples
            .iter()
            .filter(|s| self.slack(s, slack).is_none_or(|v| v < 0.0))
            .count();
        bad as f64 / samples.len() as f64
    }
}

pub const MIN_FIT_SAMPLES: usize = 50;

/// `C0` is the smallest grid value at or above `e · max(‖u‖_{Γ_a}/M)`; `C` is then the smallest grid value validating every sample.
pub fn fit_stability_modulus(samples: &[StabilitySample], kappa: f64) -> Result<StabilityFit> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::ParameterDomain(format!("kappa = {kappa} must lie in (0, 1)")));
    }
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least {MIN_FIT_SAMPLES}",
            samples.len()
        )));
    }
    let usable: Vec<&StabilitySample> = samples
        .iter()
        .filter(|s| s.trace_norm > 0.0 && s.m_proxy > 0.0)
        .collect();
    if usable.is_empty() {
        return Err(Error::DegenerateEnsemble("all trace norms vanish".into()));
    }
    let max_ratio = usable
        .iter()
        .map(|s| s.trace_norm / s.m_proxy)
        .fold(0.0f64, f64::max);
    let c0 = round_up_on_grid(std::f64::consts::E * max_ratio);
    let c = usable
        .iter()
        .map(|s| s.h1_norm * (c0 * s.m_proxy / s.trace_norm).ln().powf(kappa) / s.m_proxy)
        .fold(0.0f64, f64::max);
    let mut fit = StabilityFit {
        c_fit: round_up_on_grid(c.max(f64::MIN_POSITIVE)),
        c0_fit: c0,
        kappa,
        max_violation: 0.0,
    };
    fit.max_violation = usable
        .iter()
        .map(|s| {
            fit.bound(s.m_proxy, s.trace_norm)
                .map_or(f64::INFINITY, |b| s.h1_norm - b)
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if fit.max_violation > 0.0 {
        return Err(Error::FitFailure(format!(
            "fitted modulus leaves a violation of {:e}",
            fit.max_violation
        )));
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearUniquenessReport {
    /// `(trace_norm, h1_norm)` sorted by trace norm, zero traces excluded.
    pub pairs: Vec<(f64, f64)>,
    /// `(decade, max h1_norm)` over populated trace-norm decades.
    pub decade_envelope: Vec<(i32, f64)>,
    pub envelope_monotone: bool,
    pub smallest_trace_below_median: bool,
    pub excluded: usize,
}

pub fn near_uniqueness_check(samples: &[StabilitySample]) -> NearUniquenessReport {
    let mut pairs: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.trace_norm > 0.0)
        .map(|s| (s.trace_norm, s.h1_norm))
        .collect();
    let excluded = samples.len() - pairs.len();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut decade_envelope: Vec<(i32, f64)> = Vec::new();
    for &(t, h) in &pairs {
        let d = t.log10().floor() as i32;
        match decade_envelope.last_mut() {
            Some((dd, m)) if *dd == d => *m = m.max(h),
            _ => decade_envelope.push((d, h)),
        }
    }
    let envelope_monotone = decade_envelope.windows(2).all(|w| w[1].1 >= w[0].1);
    let smallest_trace_below_median = if pairs.is_empty() {
        false
    } else {
        let mut h1: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        h1.sort_by(f64::total_cmp);
        let median = if h1.len() % 2 == 1 {
            h1[h1.len() / 2]
        } else {
            0.5 * (h1[h1.len() / 2 - 1] + h1[h1.len() / 2])
        };
        pairs[0].1 < median
    };
    NearUniquenessReport {
        pairs,
        decade_envelope,
        envelope_monotone,
        smallest_trace_below_median,
        excluded,
    }
}

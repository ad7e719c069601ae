//! End-to-end estimation: run one estimator on a panel, normalize, and
//! re-estimate the time index where the method calls for it.
//!
//! SVD, PPCA, and t-PPCA report the death-matched `k`; the Poisson GLM
//! estimates `k` inside its own likelihood and keeps it.

use crate::dataset::{log_rates, MortalityDataset};
use crate::gaussian::{fit_ppca_closed_form, fit_svd, normalize, LeeCarterFit, Method};
use crate::matching::match_all;
use crate::poisson::{fit_poisson_glm, GlmConfig};
use crate::tppca::{e_step, fit_tppca, t_loglik, TppcaConfig, TppcaParams};
use crate::Result;

/// Per-method settings for [`fit_method`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub glm: GlmConfig,
    pub tppca: TppcaConfig,
}

/// A completed fit plus run metadata for reporting.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub fit: LeeCarterFit,
    /// EM/IRLS cycles, where the method iterates.
    pub iterations: Option<usize>,
    /// Iterative methods only; closed forms report None. A false here
    /// means the iteration cap was hit (the t-PPCA ν crawl on data with
    /// no heavy tail is the common cause) with still-usable parameters.
    pub converged: Option<bool>,
    /// Final objective: marginal t log-likelihood for t-PPCA, Poisson
    /// log-likelihood for the GLM.
    pub final_loglik: Option<f64>,
    /// Pre-normalization t-PPCA parameters (outlier scoring needs the
    /// fitted scale matrix, which normalization would distort).
    pub tppca_params: Option<TppcaParams>,
}

/// Fit `method` on the panel and return reporting-ready parameters.
pub fn fit_method(ds: &MortalityDataset, method: Method, opts: &FitOptions) -> Result<FitOutcome> {
    let y = log_rates(ds);
    match method {
        Method::Svd => {
            let mut fit = fit_svd(&y)?;
            if !fit.degenerate {
                fit.k = match_all(&fit.a, &fit.b, ds)?;
            }
            Ok(FitOutcome {
                fit,
                iterations: None,
                converged: None,
                final_loglik: None,
                tppca_params: None,
            })
        }
        Method::Ppca => {
            let ppca = fit_ppca_closed_form(&y)?;
            let norm = normalize(&ppca.b_unnormalized, &alloc::vec![0.0; ds.n_years()])?;
            let k = match_all(&ppca.a, &norm.b, ds)?;
            Ok(FitOutcome {
                fit: LeeCarterFit {
                    a: ppca.a,
                    b: norm.b,
                    k,
                    method: Method::Ppca,
                    sigma2: Some(ppca.sigma2),
                    nu: None,
                    degenerate: false,
                },
                iterations: None,
                converged: None,
                final_loglik: None,
                tppca_params: None,
            })
        }
        Method::PoissonGlm => {
            let fit = fit_poisson_glm(ds, &opts.glm)?;
            let ll = crate::poisson::poisson_loglik(&fit, ds);
            // fit_poisson_glm only returns after its convergence test.
            Ok(FitOutcome {
                fit,
                iterations: None,
                converged: Some(true),
                final_loglik: Some(ll),
                tppca_params: None,
            })
        }
        Method::Tppca => {
            let (params, trace) = fit_tppca(&y, &opts.tppca)?;
            let exps = e_step(&params, &y);
            let norm = normalize(&params.b, &exps.k)?;
            let mut a = params.a.clone();
            for x in 0..a.len() {
                a[x] += norm.b[x] * norm.k_mean;
            }
            let k = match_all(&a, &norm.b, ds)?;
            let ll = t_loglik(&params, &y)?;
            Ok(FitOutcome {
                fit: LeeCarterFit {
                    a,
                    b: norm.b,
                    k,
                    method: Method::Tppca,
                    sigma2: Some(params.sigma2),
                    nu: Some(params.nu),
                    degenerate: false,
                },
                iterations: Some(trace.iterations),
                converged: Some(trace.converged),
                final_loglik: Some(ll),
                tppca_params: Some(params),
            })
        }
    }
}

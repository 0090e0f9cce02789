use statrs::function::gamma::gamma_lr;

use super::engine::HorizonView;
use super::EstimateCI;
use crate::error::SimError;
use crate::geometry::Point;

/// Binomial survival fraction with its standard error `√(p(1−p)/N)`.
pub fn estimate_survival(view: &HorizonView<'_>) -> Result<EstimateCI, SimError> {
    if view.paths == 0 {
        return Err(SimError::Empty);
    }
    let n = view.paths as f64;
    let p = view.survivors.len() as f64 / n;
    Ok(EstimateCI {
        estimate: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        paths: view.paths,
        method: "binomial".into(),
    })
}

/// Bandwidth for a kernel estimate at `y`: the requested one, or
/// `0.05·√t` shrunk so that the kernel support (radius `2h`) stays inside.
pub fn kde_bandwidth(view: &HorizonView<'_>, y: &Point, requested: Option<f64>) -> Result<f64, SimError> {
    let d = view.domain.distance_to_boundary(y)?;
    match requested {
        Some(h) if 2.0 * h < d => Ok(h),
        Some(h) => Err(SimError::TooCloseToBoundary {
            distance: d,
            required: 2.0 * h,
        }),
        None => {
            let h = (0.05 * view.t.sqrt()).min(0.4995 * d);
            if h > 0.0 {
                Ok(h)
            } else {
                Err(SimError::TooCloseToBoundary {
                    distance: d,
                    required: 0.0,
                })
            }
        }
    }
}

/// Kernel density estimate of the survivor density at `y`, which estimates
/// `p(t, x, y)`. The kernel is a Gaussian of scale `h` cut at radius `2h`
/// and renormalized; being radial it integrates harmonic functions exactly,
/// so the bias comes only from `Δ_y p = 2∂_t p`.
pub fn estimate_kernel_at(view: &HorizonView<'_>, y: &Point, bandwidth: Option<f64>) -> Result<EstimateCI, SimError> {
    if view.paths == 0 {
        return Err(SimError::Empty);
    }
    let h = kde_bandwidth(view, y, bandwidth)?;
    let n = view.domain.dimension as f64;
    let mass = gamma_lr(n / 2.0, 2.0);
    let norm = 1.0 / ((2.0 * std::f64::consts::PI * h * h).powf(n / 2.0) * mass);
    let cut = 4.0 * h * h;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for s in view.survivors {
        let d = s.position - *y;
        let r2 = d.dot(&d);
        if r2 < cut {
            let k = norm * (-r2 / (2.0 * h * h)).exp();
            sum += k;
            sum_sq += k * k;
        }
    }
    let mut ci = EstimateCI::from_moments(sum, sum_sq, view.paths, "truncated-gaussian-kde");
    ci.method = format!("truncated-gaussian-kde h={h}");
    Ok(ci)
}

//! Smoothing kernels (2D) and their radial derivatives.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    #[default]
    Wendland2,
    CubicSpline,
}

/// A compactly supported radial kernel with support radius `h`, normalized so
/// that its 2D integral over the support disk is one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    h: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, support_radius: f64) -> Kernel {
        assert!(support_radius > 0.0, "kernel support radius must be positive");
        Kernel {
            family,
            h: support_radius,
        }
    }

    pub fn wendland2(support_radius: f64) -> Kernel {
        Kernel::new(KernelFamily::Wendland2, support_radius)
    }

    pub fn cubic_spline(support_radius: f64) -> Kernel {
        Kernel::new(KernelFamily::CubicSpline, support_radius)
    }

    pub fn support_radius(&self) -> f64 {
        self.h
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Same kernel family rescaled to a new support radius. The anti-clump
    /// term uses this with support `dr/2`.
    pub fn rescaled(&self, support_radius: f64) -> Kernel {
        Kernel::new(self.family, support_radius)
    }

    /// Kernel value w(r). Zero for r >= h.
    pub fn w(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "kernel evaluated at negative radius {r}");
        if r >= self.h {
            return 0.0;
        }
        match self.family {
            KernelFamily::Wendland2 => {
                let q = r / self.h;
                let alpha = 7.0 / (std::f64::consts::PI * self.h * self.h);
                let omq = 1.0 - q;
                let omq2 = omq * omq;
                alpha * omq2 * omq2 * (1.0 + 4.0 * q)
            }
            KernelFamily::CubicSpline => {
                // M4 spline with smoothing length h/2 (support radius h).
                let hs = 0.5 * self.h;
                let sigma = 10.0 / (7.0 * std::f64::consts::PI * hs * hs);
                let q = r / hs;
                if q <= 1.0 {
                    sigma * (1.0 - 1.5 * q * q + 0.75 * q * q * q)
                } else {
                    let t = 2.0 - q;
                    sigma * 0.25 * t * t * t
                }
            }
        }
    }

    /// Radial derivative w'(r). Zero for r >= h; defined as 0 at r = 0.
    pub fn dw(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0, "kernel derivative at negative radius {r}");
        if r >= self.h {
            return 0.0;
        }
        match self.family {
            KernelFamily::Wendland2 => {
                let q = r / self.h;
                let alpha = 7.0 / (std::f64::consts::PI * self.h * self.h);
                let omq = 1.0 - q;
                -20.0 * alpha * q * omq * omq * omq / self.h
            }
            KernelFamily::CubicSpline => {
                let hs = 0.5 * self.h;
                let sigma = 10.0 / (7.0 * std::f64::consts::PI * hs * hs);
                let q = r / hs;
                if q <= 1.0 {
                    sigma * (-3.0 * q + 2.25 * q * q) / hs
                } else {
                    let t = 2.0 - q;
                    -sigma * 0.75 * t * t / hs
                }
            }
        }
    }
}

/// Anti-clump kernel: the given family rescaled to support radius `dr/2`.
pub fn make_anticlump_kernel(family: KernelFamily, dr: f64) -> Kernel {
    assert!(dr > 0.0);
    Kernel::new(family, 0.5 * dr)
}

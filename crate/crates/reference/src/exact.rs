use nalgebra::Vector3;

use fbsde_geom::{ManifoldKind, Point, TangentVector};

use crate::ReferenceError;

fn expect(p: &Point, kind: ManifoldKind) -> Result<(), ReferenceError> {
    if p.kind() != kind {
        return Err(ReferenceError::WrongManifold {
            expected: kind,
            got: p.kind(),
        });
    }
    Ok(())
}

/// Taylor–Green vortex `e^{−2νs}(sin x cos y, −cos x sin y)`.
pub fn taylor_green(s: f64, p: &Point, nu: f64) -> Result<TangentVector, ReferenceError> {
    expect(p, ManifoldKind::FlatTorus2)?;
    let c = p.coords();
    let a = (-2.0 * nu * s).exp();
    Ok(TangentVector::torus(
        *p,
        a * c.x.sin() * c.y.cos(),
        -a * c.x.cos() * c.y.sin(),
    ))
}

/// Viscous operator used with the rotation field on the sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KillingMode {
    /// `tr ∇²`: the rotation field has eigenvalue −1, decay `e^{−νs}`.
    Bochner,
    /// `Δ − Ric^♯`: eigenvalue −2, decay `e^{−2νs}`.
    Hodge,
}

impl KillingMode {
    pub fn rate(self, nu: f64) -> f64 {
        match self {
            KillingMode::Bochner => nu,
            KillingMode::Hodge => 2.0 * nu,
        }
    }
}

/// Decaying rigid rotation `e^{−rate·s} e₃ × x`. The advection term is a
/// gradient and is absorbed by the pressure.
pub fn sphere_killing(
    s: f64,
    p: &Point,
    nu: f64,
    mode: KillingMode,
) -> Result<TangentVector, ReferenceError> {
    expect(p, ManifoldKind::UnitSphere2)?;
    let k = Vector3::z().cross(p.coords());
    Ok(TangentVector::new_unchecked(
        *p,
        k * (-mode.rate(nu) * s).exp(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    TaylorGreen,
    SphereKillingBochner,
    SphereKillingHodge,
    /// `e^{−ν(m²+n²)s} sin(mx + ny) ∂_x`, a solution of the vector heat
    /// equation on the torus.
    TorusHeatMode {
        m: i64,
        n: i64,
    },
}

/// Closed-form solution with amplitude at `s = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactSolution {
    pub family: Family,
    pub nu: f64,
    pub amplitude: f64,
}

impl ExactSolution {
    pub fn new(family: Family, nu: f64, amplitude: f64) -> Self {
        ExactSolution {
            family,
            nu,
            amplitude,
        }
    }

    pub fn manifold(&self) -> ManifoldKind {
        match self.family {
            Family::TaylorGreen | Family::TorusHeatMode { .. } => ManifoldKind::FlatTorus2,
            Family::SphereKillingBochner | Family::SphereKillingHodge => ManifoldKind::UnitSphere2,
        }
    }

    /// Amplitude factor at time `s`.
    pub fn decay(&self, s: f64) -> f64 {
        let rate = match self.family {
            Family::TaylorGreen => 2.0 * self.nu,
            Family::SphereKillingBochner => self.nu,
            Family::SphereKillingHodge => 2.0 * self.nu,
            Family::TorusHeatMode { m, n } => self.nu * (m * m + n * n) as f64,
        };
        self.amplitude * (-rate * s).exp()
    }

    pub fn eval(&self, s: f64, p: &Point) -> Result<TangentVector, ReferenceError> {
        let v = match self.family {
            Family::TaylorGreen => taylor_green(0.0, p, self.nu)?,
            Family::SphereKillingBochner | Family::SphereKillingHodge => {
                sphere_killing(0.0, p, self.nu, KillingMode::Bochner)?
            }
            Family::TorusHeatMode { m, n } => {
                expect(p, ManifoldKind::FlatTorus2)?;
                let c = p.coords();
                TangentVector::torus(*p, (m as f64 * c.x + n as f64 * c.y).sin(), 0.0)
            }
        };
        Ok(TangentVector::new_unchecked(
            *p,
            v.components * self.decay(s),
        ))
    }
}

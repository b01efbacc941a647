//! Material parameters, the elastic-pressure / fluid-content reformulation
//! constants, and the two problem setups: a manufactured solution and the
//! Barry–Mercer benchmark.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::elements::Tensor2;
use crate::error::{Error, Result};
use crate::mesh::{FacetTag, Point, Rect, Subdomain};

/// Shear modulus convention of [`lame_from_young_poisson`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuConvention {
    /// `μ = E/(1+ν)`, twice the usual shear modulus. Used by the reference
    /// tables this solver reproduces.
    #[default]
    Doubled,
    /// `μ = E/(2(1+ν))`.
    Standard,
}

/// Lamé constants `(λ, μ)` from Young's modulus and Poisson's ratio.
pub fn lame_from_young_poisson(e: f64, nu: f64, convention: MuConvention) -> Result<(f64, f64)> {
    if !(e > 0.0) {
        return Err(Error::InvalidParameter(format!("Young's modulus must be positive, got {e}")));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(Error::InvalidParameter(format!("Poisson's ratio must lie in [0, 0.5), got {nu}")));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = match convention {
        MuConvention::Doubled => e / (1.0 + nu),
        MuConvention::Standard => e / (2.0 * (1.0 + nu)),
    };
    Ok((lambda, mu))
}

/// `(κ1, κ2, κ3) = (α, λ_P, c0) / (α² + c0 λ_P)`.
pub fn derived_kappas(alpha: f64, c0: f64, lambda_p: f64) -> Result<(f64, f64, f64)> {
    let d = alpha * alpha + c0 * lambda_p;
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!("α² + c0 λ_P must be positive, got {d}")));
    }
    Ok((alpha / d, lambda_p / d, c0 / d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub e_p: f64,
    pub e_e: f64,
    pub nu_p: f64,
    pub nu_e: f64,
    pub lambda_p: f64,
    pub lambda_e: f64,
    pub mu_p: f64,
    pub mu_e: f64,
    pub alpha: f64,
    pub c0: f64,
    pub permeability: Tensor2,
    pub mu_f: f64,
    pub rho_f: f64,
    pub gravity: [f64; 2],
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

/// Primary inputs from which [`ModelParams`] are derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSpec {
    pub e_p: f64,
    pub e_e: f64,
    pub nu_p: f64,
    pub nu_e: f64,
    pub alpha: f64,
    pub c0: f64,
    pub permeability: Tensor2,
    pub mu_f: f64,
    pub rho_f: f64,
    pub gravity: [f64; 2],
    pub convention: MuConvention,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self {
            e_p: 1e4,
            e_e: 1e4,
            nu_p: 0.2,
            nu_e: 0.2,
            alpha: 1.0,
            c0: 0.1,
            permeability: [[1.0, 0.0], [0.0, 1.0]],
            mu_f: 1.0,
            rho_f: 0.0,
            gravity: [0.0, 0.0],
            convention: MuConvention::Doubled,
        }
    }
}

impl MaterialSpec {
    /// Same Young's modulus and Poisson's ratio in both subdomains.
    pub fn uniform(e: f64, nu: f64) -> Self {
        Self { e_p: e, e_e: e, nu_p: nu, nu_e: nu, ..Self::default() }
    }

    pub fn build(&self) -> Result<ModelParams> {
        let (lambda_p, mu_p) = lame_from_young_poisson(self.e_p, self.nu_p, self.convention)?;
        let (lambda_e, mu_e) = lame_from_young_poisson(self.e_e, self.nu_e, self.convention)?;
        if !(self.alpha >= 0.0 && self.c0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("α = {} and c0 = {} must be nonnegative", self.alpha, self.c0)));
        }
        if !(self.mu_f > 0.0) {
            return Err(Error::InvalidParameter(format!("fluid viscosity must be positive, got {}", self.mu_f)));
        }
        if !(lambda_e > 0.0) {
            return Err(Error::InvalidParameter("the elastic subdomain needs ν_E > 0 so that λ_E is invertible".into()));
        }
        let k = self.permeability;
        let (tr, det) = (k[0][0] + k[1][1], k[0][0] * k[1][1] - k[0][1] * k[1][0]);
        if (k[0][1] - k[1][0]).abs() > 1e-14 * tr.abs() || !(tr > 0.0 && det > 0.0) {
            return Err(Error::InvalidParameter(format!("permeability {k:?} is not symmetric positive definite")));
        }
        let (kappa1, kappa2, kappa3) = derived_kappas(self.alpha, self.c0, lambda_p)?;
        Ok(ModelParams {
            e_p: self.e_p,
            e_e: self.e_e,
            nu_p: self.nu_p,
            nu_e: self.nu_e,
            lambda_p,
            lambda_e,
            mu_p,
            mu_e,
            alpha: self.alpha,
            c0: self.c0,
            permeability: k,
            mu_f: self.mu_f,
            rho_f: self.rho_f,
            gravity: self.gravity,
            kappa1,
            kappa2,
            kappa3,
        })
    }
}

impl ModelParams {
    pub fn lame(&self, sub: Subdomain) -> (f64, f64) {
        match sub {
            Subdomain::Poro => (self.lambda_p, self.mu_p),
            Subdomain::Elastic => (self.lambda_e, self.mu_e),
        }
    }

    /// `(ξ_P, η)` from pressure and volumetric strain.
    pub fn to_reformulated(&self, p: f64, div_u: f64) -> (f64, f64) {
        (self.alpha * p - self.lambda_p * div_u, self.c0 * p + self.alpha * div_u)
    }

    /// `(p, div u)` from `(ξ_P, η)`: `p = κ1 ξ + κ2 η`, `div u = κ1 η − κ3 ξ`.
    pub fn from_reformulated(&self, xi: f64, eta: f64) -> (f64, f64) {
        (self.kappa1 * xi + self.kappa2 * eta, self.kappa1 * eta - self.kappa3 * xi)
    }
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl Jet {
    pub fn constant(c: f64) -> Self {
        Self { value: c, ..Self::default() }
    }

    /// The affine function `a·x + b·y + c`.
    pub fn affine(a: f64, b: f64, c: f64, x: Point) -> Self {
        Self { value: a * x[0] + b * x[1] + c, grad: [a, b], hess: [[0.0; 2]; 2] }
    }

    /// `sin(kπx) sin(kπy)`.
    pub fn sine_product(k: f64, x: Point) -> Self {
        let w = k * PI;
        let (sx, cx) = (w * x[0]).sin_cos();
        let (sy, cy) = (w * x[1]).sin_cos();
        Self {
            value: sx * sy,
            grad: [w * cx * sy, w * sx * cy],
            hess: [[-w * w * sx * sy, w * w * cx * cy], [w * w * cx * cy, -w * w * sx * sy]],
        }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1]
    }

    pub fn scale(self, s: f64) -> Self {
        Self {
            value: s * self.value,
            grad: [s * self.grad[0], s * self.grad[1]],
            hess: [[s * self.hess[0][0], s * self.hess[0][1]], [s * self.hess[1][0], s * self.hess[1][1]]],
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut r = self;
        r.value += o.value;
        for i in 0..2 {
            r.grad[i] += o.grad[i];
            for j in 0..2 {
                r.hess[i][j] += o.hess[i][j];
            }
        }
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + o.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut r = Jet { value: self.value * o.value, ..Jet::default() };
        for i in 0..2 {
            r.grad[i] = self.grad[i] * o.value + self.value * o.grad[i];
            for j in 0..2 {
                r.hess[i][j] = self.hess[i][j] * o.value
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i]
                    + self.value * o.hess[i][j];
            }
        }
        r
    }
}

/// Vector field given by its two component jets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorJet(pub [Jet; 2]);

impl VectorJet {
    pub fn value(&self) -> [f64; 2] {
        [self.0[0].value, self.0[1].value]
    }

    pub fn div(&self) -> f64 {
        self.0[0].grad[0] + self.0[1].grad[1]
    }

    pub fn grad_div(&self) -> [f64; 2] {
        [self.0[0].hess[0][0] + self.0[1].hess[1][0], self.0[0].hess[0][1] + self.0[1].hess[1][1]]
    }

    /// `ε(u)` as a symmetric 2×2 array.
    pub fn strain(&self) -> [[f64; 2]; 2] {
        let off = 0.5 * (self.0[0].grad[1] + self.0[1].grad[0]);
        [[self.0[0].grad[0], off], [off, self.0[1].grad[1]]]
    }

    /// `−div(2μ ε(u) + λ div u I) = −μΔu − (μ+λ)∇div u`.
    pub fn elastic_operator(&self, lambda: f64, mu: f64) -> [f64; 2] {
        let gd = self.grad_div();
        [
            -mu * self.0[0].laplacian() - (mu + lambda) * gd[0],
            -mu * self.0[1].laplacian() - (mu + lambda) * gd[1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisplacementBc {
    Dirichlet,
    Traction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureBc {
    Dirichlet,
    Flux,
}

/// Closed-form reference fields of a scenario.
pub trait ExactSolution: Send + Sync {
    fn displacement(&self, sub: Subdomain, x: Point, t: f64) -> [f64; 2];
    fn pressure(&self, x: Point, t: f64) -> f64;
    /// `ξ_P` on the poroelastic side, `ξ_E` on the elastic side.
    fn elastic_pressure(&self, sub: Subdomain, x: Point, t: f64) -> f64;
    fn fluid_content(&self, x: Point, t: f64) -> f64;
}

/// Geometry, coefficients, forcing, boundary and initial data of one problem.
///
/// Boundary queries are only made for outer labels; the interface is
/// handled by the multiplier and carries no fluid flux.
pub trait Scenario: Send + Sync {
    fn name(&self) -> &str;
    fn params(&self) -> &ModelParams;
    fn time_horizon(&self) -> f64;
    fn default_dt(&self) -> f64;

    fn interface_height(&self) -> f64 {
        0.5
    }

    fn domain(&self, sub: Subdomain) -> Rect {
        let h = self.interface_height();
        match sub {
            Subdomain::Poro => Rect::new(0.0, 1.0, 0.0, h),
            Subdomain::Elastic => Rect::new(0.0, 1.0, h, 1.0),
        }
    }

    fn displacement_bc(&self, sub: Subdomain, tag: FacetTag, component: usize) -> DisplacementBc;
    fn pressure_bc(&self, tag: FacetTag) -> PressureBc;

    /// Prescribed displacement on Dirichlet pieces.
    fn boundary_displacement(&self, sub: Subdomain, x: Point, t: f64) -> [f64; 2];
    /// Prescribed total traction `σ̃·n` on traction pieces.
    fn traction(&self, sub: Subdomain, tag: FacetTag, x: Point, t: f64) -> [f64; 2];
    fn boundary_pressure(&self, x: Point, t: f64) -> f64;
    /// Prescribed inflow `z_w = −w·n` on flux pieces.
    fn boundary_flux(&self, _tag: FacetTag, _x: Point, _t: f64) -> f64 {
        0.0
    }

    fn body_force(&self, sub: Subdomain, x: Point, t: f64) -> [f64; 2];
    fn source(&self, x: Point, t: f64) -> f64;

    fn initial_displacement(&self, sub: Subdomain, x: Point) -> [f64; 2];
    fn initial_divergence(&self, sub: Subdomain, x: Point) -> f64;
    fn initial_pressure(&self, x: Point) -> f64;

    fn exact(&self) -> Option<&dyn ExactSolution> {
        None
    }
}

/// Stationary manufactured solution on the unit square split at `y = 1/2`:
/// `u_P = (s, s)` with `s = sin 2πx sin 2πy`, `p = sin πx sin πy`, and
/// `u_E = u_P + (0, −α p (y − 1/2)/(λ_P + 2μ_P))`.
#[derive(Debug, Clone)]
pub struct ManufacturedScenario {
    params: ModelParams,
    /// Impose the exact traction instead of the exact displacement on the
    /// left and right sides of both subdomains.
    pub traction_sides: bool,
}

impl ManufacturedScenario {
    pub fn new(params: ModelParams) -> Self {
        Self { params, traction_sides: false }
    }

    pub fn with_traction_sides(mut self, on: bool) -> Self {
        self.traction_sides = on;
        self
    }

    pub fn pressure_jet(&self, x: Point) -> Jet {
        Jet::sine_product(1.0, x)
    }

    pub fn displacement_jet(&self, sub: Subdomain, x: Point) -> VectorJet {
        let s = Jet::sine_product(2.0, x);
        match sub {
            Subdomain::Poro => VectorJet([s, s]),
            Subdomain::Elastic => {
                let c = self.params.alpha / (self.params.lambda_p + 2.0 * self.params.mu_p);
                let corr = (self.pressure_jet(x) * Jet::affine(0.0, 1.0, -0.5, x)).scale(-c);
                VectorJet([s, s + corr])
            }
        }
    }

    /// Total stress `2μ ε(u) + (λ div u − α p) I` (no pressure on the elastic side).
    pub fn stress(&self, sub: Subdomain, x: Point) -> [[f64; 2]; 2] {
        let u = self.displacement_jet(sub, x);
        let (lambda, mu) = self.params.lame(sub);
        let e = u.strain();
        let mut iso = lambda * u.div();
        if sub == Subdomain::Poro {
            iso -= self.params.alpha * self.pressure_jet(x).value;
        }
        [[2.0 * mu * e[0][0] + iso, 2.0 * mu * e[0][1]], [2.0 * mu * e[1][0], 2.0 * mu * e[1][1] + iso]]
    }

    /// `div w(p)` with `w = −(K/μ_f)(∇p − ρ_f g)`.
    pub fn flux_divergence(&self, x: Point) -> f64 {
        let h = self.pressure_jet(x).hess;
        let k = &self.params.permeability;
        -(k[0][0] * h[0][0] + k[0][1] * h[1][0] + k[1][0] * h[0][1] + k[1][1] * h[1][1]) / self.params.mu_f
    }
}

fn outward_normal(tag: FacetTag, sub: Subdomain) -> [f64; 2] {
    match tag {
        FacetTag::Right => [1.0, 0.0],
        FacetTag::Left => [-1.0, 0.0],
        FacetTag::Top => [0.0, 1.0],
        FacetTag::Bottom => [0.0, -1.0],
        FacetTag::Interface => match sub {
            Subdomain::Poro => [0.0, 1.0],
            Subdomain::Elastic => [0.0, -1.0],
        },
    }
}

impl ExactSolution for ManufacturedScenario {
    fn displacement(&self, sub: Subdomain, x: Point, _t: f64) -> [f64; 2] {
        self.displacement_jet(sub, x).value()
    }

    fn pressure(&self, x: Point, _t: f64) -> f64 {
        self.pressure_jet(x).value
    }

    fn elastic_pressure(&self, sub: Subdomain, x: Point, _t: f64) -> f64 {
        let d = self.displacement_jet(sub, x).div();
        match sub {
            Subdomain::Poro => self.params.alpha * self.pressure_jet(x).value - self.params.lambda_p * d,
            Subdomain::Elastic => -self.params.lambda_e * d,
        }
    }

    fn fluid_content(&self, x: Point, _t: f64) -> f64 {
        self.params.c0 * self.pressure_jet(x).value + self.params.alpha * self.displacement_jet(Subdomain::Poro, x).div()
    }
}

impl Scenario for ManufacturedScenario {
    fn name(&self) -> &str {
        "mms"
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn time_horizon(&self) -> f64 {
        1e-2
    }

    fn default_dt(&self) -> f64 {
        1e-4
    }

    fn displacement_bc(&self, _sub: Subdomain, tag: FacetTag, _component: usize) -> DisplacementBc {
        if self.traction_sides && matches!(tag, FacetTag::Left | FacetTag::Right) {
            DisplacementBc::Traction
        } else {
            DisplacementBc::Dirichlet
        }
    }

    fn pressure_bc(&self, _tag: FacetTag) -> PressureBc {
        PressureBc::Dirichlet
    }

    fn boundary_displacement(&self, sub: Subdomain, x: Point, t: f64) -> [f64; 2] {
        self.displacement(sub, x, t)
    }

    fn traction(&self, sub: Subdomain, tag: FacetTag, x: Point, _t: f64) -> [f64; 2] {
        let s = self.stress(sub, x);
        let n = outward_normal(tag, sub);
        [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
    }

    fn boundary_pressure(&self, x: Point, t: f64) -> f64 {
        self.pressure(x, t)
    }

    fn boundary_flux(&self, tag: FacetTag, x: Point, _t: f64) -> f64 {
        let g = self.pressure_jet(x).grad;
        let k = &self.params.permeability;
        let n = outward_normal(tag, Subdomain::Poro);
        let w = [-(k[0][0] * g[0] + k[0][1] * g[1]) / self.params.mu_f, -(k[1][0] * g[0] + k[1][1] * g[1]) / self.params.mu_f];
        -(w[0] * n[0] + w[1] * n[1])
    }

    fn body_force(&self, sub: Subdomain, x: Point, _t: f64) -> [f64; 2] {
        let u = self.displacement_jet(sub, x);
        let (lambda, mu) = self.params.lame(sub);
        let mut f = u.elastic_operator(lambda, mu);
        if sub == Subdomain::Poro {
            let gp = self.pressure_jet(x).grad;
            f[0] += self.params.alpha * gp[0];
            f[1] += self.params.alpha * gp[1];
        }
        f
    }

    fn source(&self, x: Point, _t: f64) -> f64 {
        self.flux_divergence(x)
    }

    fn initial_displacement(&self, sub: Subdomain, x: Point) -> [f64; 2] {
        self.displacement(sub, x, 0.0)
    }

    fn initial_divergence(&self, sub: Subdomain, x: Point) -> f64 {
        self.displacement_jet(sub, x).div()
    }

    fn initial_pressure(&self, x: Point) -> f64 {
        self.pressure(x, 0.0)
    }

    fn exact(&self) -> Option<&dyn ExactSolution> {
        Some(self)
    }
}

/// Barry–Mercer benchmark: a pressure pulse `p₂ = A sin t` on the middle of
/// the bottom edge of the poroelastic layer, roller conditions elsewhere.
#[derive(Debug, Clone)]
pub struct BarryMercerScenario {
    params: ModelParams,
    /// `A` in `p₂ = A sin t`; zero gives the trivial problem with the same layout.
    pub amplitude: f64,
    /// Loaded portion `[a, b]` of the bottom edge.
    pub loaded: (f64, f64),
    pub horizon: f64,
}

impl BarryMercerScenario {
    pub fn new(params: ModelParams) -> Self {
        Self { params, amplitude: 1.0, loaded: (0.2, 0.8), horizon: 1.0 }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Boundary pressure on the bottom edge.
    pub fn p2(&self, x: f64, t: f64) -> f64 {
        if x >= self.loaded.0 && x <= self.loaded.1 {
            self.amplitude * t.sin()
        } else {
            0.0
        }
    }
}

impl Scenario for BarryMercerScenario {
    fn name(&self) -> &str {
        "barry-mercer"
    }

    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn time_horizon(&self) -> f64 {
        self.horizon
    }

    fn default_dt(&self) -> f64 {
        1e-2
    }

    fn displacement_bc(&self, _sub: Subdomain, tag: FacetTag, component: usize) -> DisplacementBc {
        match (tag, component) {
            (FacetTag::Right | FacetTag::Left, 0) => DisplacementBc::Dirichlet,
            (FacetTag::Bottom | FacetTag::Top, 1) => DisplacementBc::Dirichlet,
            _ => DisplacementBc::Traction,
        }
    }

    fn pressure_bc(&self, tag: FacetTag) -> PressureBc {
        match tag {
            FacetTag::Interface => PressureBc::Flux,
            _ => PressureBc::Dirichlet,
        }
    }

    fn boundary_displacement(&self, _sub: Subdomain, _x: Point, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn traction(&self, sub: Subdomain, tag: FacetTag, x: Point, t: f64) -> [f64; 2] {
        if sub == Subdomain::Poro && tag == FacetTag::Bottom {
            [0.0, self.params.alpha * self.p2(x[0], t)]
        } else {
            [0.0, 0.0]
        }
    }

    fn boundary_pressure(&self, x: Point, t: f64) -> f64 {
        if x[1] <= self.domain(Subdomain::Poro).y0 + 1e-12 {
            self.p2(x[0], t)
        } else {
            0.0
        }
    }

    fn body_force(&self, _sub: Subdomain, _x: Point, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn source(&self, _x: Point, _t: f64) -> f64 {
        0.0
    }

    fn initial_displacement(&self, _sub: Subdomain, _x: Point) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn initial_divergence(&self, _sub: Subdomain, _x: Point) -> f64 {
        0.0
    }

    fn initial_pressure(&self, _x: Point) -> f64 {
        0.0
    }
}

/// Scenario selectable by name.
pub fn scenario_by_name(name: &str, params: ModelParams) -> Result<Box<dyn Scenario>> {
    match name {
        "mms" => Ok(Box::new(ManufacturedScenario::new(params))),
        "barry-mercer" => Ok(Box::new(BarryMercerScenario::new(params))),
        other => Err(Error::InvalidParameter(format!("unknown scenario '{other}' (expected mms or barry-mercer)"))),
    }
}

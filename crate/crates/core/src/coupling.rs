//! Cavity geometry and the position-dependent coupling constant.
//!
//! For a standing-wave mode with index `n_z` in a cavity of length `L`, the
//! atom-field coupling is
//!
//! ```text
//! g = sqrt( hbar w / (eps0 V) ) sin(k_z z) (d.e) / hbar ,
//! k_z = pi n_z / L,  w = c k_z,  V = A_perp L
//! ```
//!
//! reported in angular-frequency units (the square-root expression times the
//! dipole projection is an energy; dividing by hbar makes it a rate). The
//! sign of the sine is retained; consumers use |g|.
//!
//! This module is the only SI entry point of the crate: [`bind_x_to_model`]
//! converts the geometry signal x = dL/L into natural-unit model parameters
//! and emits the conversion record carried by downstream metadata.

use serde::Serialize;

use crate::dynamics::PhysicalParameters;
use crate::error::{Error, Result};

pub mod constants {
    /// Reduced Planck constant, J s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Vacuum permittivity, F/m.
    pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
    /// Speed of light, m/s.
    pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;
}

/// Standing-wave cavity geometry. Lengths in meters, dipole projection d.e
/// in C m; the physical constants are stored so unit systems other than SI
/// (e.g. hbar = eps0 = c = 1 in tests) stay expressible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CavityGeometry {
    pub length: f64,
    pub atom_position: f64,
    pub mode_index: u32,
    pub transverse_area: f64,
    pub dipole_projection: f64,
    pub vacuum_permittivity: f64,
    pub hbar: f64,
    pub speed_of_light: f64,
}

impl CavityGeometry {
    /// SI geometry with the standard constants.
    pub fn si(
        length: f64,
        atom_position: f64,
        mode_index: u32,
        transverse_area: f64,
        dipole_projection: f64,
    ) -> Self {
        Self {
            length,
            atom_position,
            mode_index,
            transverse_area,
            dipole_projection,
            vacuum_permittivity: constants::EPSILON_0,
            hbar: constants::HBAR,
            speed_of_light: constants::SPEED_OF_LIGHT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::InvalidParameter("cavity length must be positive".into()));
        }
        if !(0.0..=self.length).contains(&self.atom_position) {
            return Err(Error::InvalidParameter(format!(
                "atom position {} outside cavity [0, {}]",
                self.atom_position, self.length
            )));
        }
        if self.mode_index < 1 {
            return Err(Error::InvalidParameter("mode index must be >= 1".into()));
        }
        for (name, v) in [
            ("transverse_area", self.transverse_area),
            ("dipole_projection", self.dipole_projection),
            ("vacuum_permittivity", self.vacuum_permittivity),
            ("hbar", self.hbar),
            ("speed_of_light", self.speed_of_light),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// k_z = pi n_z / L.
    pub fn wavenumber(&self) -> f64 {
        std::f64::consts::PI * self.mode_index as f64 / self.length
    }

    /// w = c k_z (the mode is resonant with the atoms).
    pub fn angular_frequency(&self) -> f64 {
        self.speed_of_light * self.wavenumber()
    }

    /// V = A_perp L.
    pub fn mode_volume(&self) -> f64 {
        self.transverse_area * self.length
    }
}

/// Coupling constant in angular-frequency units; the sign of sin(k_z z) is
/// retained.
pub fn coupling_strength(geom: &CavityGeometry) -> Result<f64> {
    geom.validate()?;
    let field_scale =
        (geom.hbar * geom.angular_frequency() / (geom.vacuum_permittivity * geom.mode_volume()))
            .sqrt();
    let spatial = (geom.wavenumber() * geom.atom_position).sin();
    Ok(field_scale * spatial * geom.dipole_projection / geom.hbar)
}

/// Relative length change x = dL/L against a reference geometry.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LengthPerturbation {
    pub x: f64,
    pub reference: CavityGeometry,
    /// When set, the atom position scales with the cavity (z = fraction of
    /// L); the default keeps z fixed in the lab frame while the mirror moves.
    pub z_comoving: bool,
}

impl LengthPerturbation {
    pub fn new(x: f64, reference: CavityGeometry) -> Result<Self> {
        if !(x.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "|x| must be < 1 (relative length change), got {x}"
            )));
        }
        reference.validate()?;
        Ok(Self { x, reference, z_comoving: false })
    }

    pub fn with_comoving_atom(mut self) -> Self {
        self.z_comoving = true;
        self
    }

    /// The geometry at perturbed length L(1 + x); k_z, w, V all re-derive.
    pub fn perturbed_geometry(&self) -> CavityGeometry {
        let mut g = self.reference;
        g.length = self.reference.length * (1.0 + self.x);
        if self.z_comoving {
            g.atom_position = self.reference.atom_position * (1.0 + self.x);
        }
        g
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CouplingSensitivity {
    pub g_at_x: f64,
    /// dg/dL at the perturbed length.
    pub dg_dl: f64,
    /// dg/dx = L_ref dg/dL.
    pub dg_dx: f64,
}

/// Coupling and its analytic length derivative at the perturbed point.
pub fn coupling_sensitivity(pert: &LengthPerturbation) -> Result<CouplingSensitivity> {
    let geom = pert.perturbed_geometry();
    let g_at_x = coupling_strength(&geom)?;
    // g(L) = C sin(pi n z / L) / L with C independent of L; for a lab-fixed
    // atom dg/dL = -(C/L^2)(sin u + u cos u) with u = pi n z / L, while a
    // comoving atom keeps u fixed so dg/dL = -g/L.
    let length = geom.length;
    let u = geom.wavenumber() * geom.atom_position;
    let dg_dl = if pert.z_comoving {
        -g_at_x / length
    } else {
        let c_prefactor = (geom.hbar * geom.speed_of_light * std::f64::consts::PI
            * geom.mode_index as f64
            / (geom.vacuum_permittivity * geom.transverse_area))
            .sqrt()
            * geom.dipole_projection
            / geom.hbar;
        -(c_prefactor / (length * length)) * (u.sin() + u * u.cos())
    };
    Ok(CouplingSensitivity { g_at_x, dg_dl, dg_dx: pert.reference.length * dg_dl })
}

/// Conversion between the SI geometry scale and the natural units used by
/// the dynamics (one natural frequency unit = `frequency_scale` rad/s).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct UnitConversionRecord {
    pub frequency_scale_rad_per_s: f64,
    pub time_scale_s: f64,
    /// |g_SI| at x = 0.
    pub g_si_reference: f64,
}

/// The map x -> PhysicalParameters induced by a geometry and a natural-unit
/// parameter set: the natural g rescales with |g_SI(x)| / |g_SI(0)| while
/// kappa, gamma and N stay fixed.
#[derive(Clone, Debug, Serialize)]
pub struct XBinding {
    reference: CavityGeometry,
    z_comoving: bool,
    base: PhysicalParameters,
    g_si_reference: f64,
}

/// Bind the relative-length-change parameter to the model. Fails at a node
/// (g(0) = 0), where no finite natural-unit scale exists.
pub fn bind_x_to_model(
    pert: &LengthPerturbation,
    params: &PhysicalParameters,
) -> Result<XBinding> {
    params.validate()?;
    if !(params.g > 0.0) {
        return Err(Error::InvalidParameter(
            "binding needs a positive natural-unit g to set the scale".into(),
        ));
    }
    let g_si_reference = coupling_strength(&pert.reference)?.abs();
    // compare against the antinode magnitude so the sin(pi) rounding residue
    // at an exact node still counts as zero
    let geom = &pert.reference;
    let antinode = (geom.hbar * geom.angular_frequency()
        / (geom.vacuum_permittivity * geom.mode_volume()))
    .sqrt()
        * geom.dipole_projection.abs()
        / geom.hbar;
    if g_si_reference <= 1e-9 * antinode {
        return Err(Error::InvalidParameter(
            "reference atom sits at a node (g = 0); the unit conversion is undefined".into(),
        ));
    }
    Ok(XBinding {
        reference: pert.reference,
        z_comoving: pert.z_comoving,
        base: *params,
        g_si_reference,
    })
}

impl XBinding {
    /// Parameters at relative length change x, g replaced by |g(x)| in the
    /// natural units fixed at x = 0.
    pub fn params_at(&self, x: f64) -> Result<PhysicalParameters> {
        let mut pert = LengthPerturbation::new(x, self.reference)?;
        pert.z_comoving = self.z_comoving;
        let g_si = coupling_strength(&pert.perturbed_geometry())?;
        Ok(PhysicalParameters {
            g: self.base.g * g_si.abs() / self.g_si_reference,
            ..self.base
        })
    }

    pub fn unit_record(&self) -> UnitConversionRecord {
        let frequency_scale = self.g_si_reference / self.base.g;
        UnitConversionRecord {
            frequency_scale_rad_per_s: frequency_scale,
            time_scale_s: 1.0 / frequency_scale,
            g_si_reference: self.g_si_reference,
        }
    }

    pub fn base(&self) -> &PhysicalParameters {
        &self.base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// hbar = eps0 = c = 1 geometry for easy numbers.
    fn natural(length: f64, z: f64, n: u32, area: f64, d: f64) -> CavityGeometry {
        CavityGeometry {
            length,
            atom_position: z,
            mode_index: n,
            transverse_area: area,
            dipole_projection: d,
            vacuum_permittivity: 1.0,
            hbar: 1.0,
            speed_of_light: 1.0,
        }
    }

    #[test]
    fn antinode_and_node_values() {
        let n = 2u32;
        let length = 1.0;
        // antinode z = L/(2 n): sin = 1 exactly
        let geom = natural(length, length / (2.0 * n as f64), n, 0.5, 0.3);
        let g = coupling_strength(&geom).unwrap();
        let want = (geom.angular_frequency() / geom.mode_volume()).sqrt() * 0.3;
        assert!((g - want).abs() <= 1e-15 * want.abs());
        // node z = L/n: only the sin(pi) rounding residue survives
        let geom = natural(length, length / n as f64, n, 0.5, 0.3);
        let g = coupling_strength(&geom).unwrap();
        assert!(g.abs() <= 1e-15 * want.abs(), "node residue {g}");
    }

    #[test]
    fn linear_in_dipole_projection() {
        let geom = natural(2.0, 0.3, 3, 0.7, 0.11);
        let mut doubled = geom;
        doubled.dipole_projection = 0.22;
        let g1 = coupling_strength(&geom).unwrap();
        let g2 = coupling_strength(&doubled).unwrap();
        assert_eq!(g2, 2.0 * g1);
    }

    #[test]
    fn length_homogeneity_is_inverse_linear() {
        // with z a fixed fraction of L and A_perp fixed, w ~ 1/L and V ~ L
        // compound to g ~ 1/L
        let fraction = 0.31;
        let base = natural(1.0, fraction, 2, 0.5, 0.3);
        let g1 = coupling_strength(&base).unwrap();
        for alpha in [0.5, 2.0, 7.3] {
            let scaled = natural(alpha, fraction * alpha, 2, 0.5, 0.3);
            let g2 = coupling_strength(&scaled).unwrap();
            assert!(
                (g2 * alpha / g1 - 1.0).abs() <= 1e-12,
                "alpha={alpha}: ratio {}",
                g2 * alpha / g1
            );
        }
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let geom = natural(1.5, 0.4, 2, 0.6, 0.2);
        let pert = LengthPerturbation::new(0.0, geom).unwrap();
        let s = coupling_sensitivity(&pert).unwrap();
        assert_eq!(s.g_at_x, coupling_strength(&geom).unwrap());
    }

    #[test]
    fn analytic_derivative_matches_finite_differences() {
        let geom = natural(1.3, 0.37, 2, 0.5, 0.21);
        for &(x, comoving) in &[(0.0, false), (0.12, false), (-0.2, false), (0.1, true)] {
            let mut pert = LengthPerturbation::new(x, geom).unwrap();
            pert.z_comoving = comoving;
            let s = coupling_sensitivity(&pert).unwrap();
            // central difference on the perturbed length at relative step 1e-6
            let length = pert.perturbed_geometry().length;
            let h = 1e-6 * length;
            let eval = |l: f64| {
                let mut g = pert.perturbed_geometry();
                let scale = l / g.length;
                g.length = l;
                if comoving {
                    g.atom_position *= scale;
                }
                coupling_strength(&g).unwrap()
            };
            let fd = (eval(length + h) - eval(length - h)) / (2.0 * h);
            let rel = (s.dg_dl - fd).abs() / fd.abs().max(1e-300);
            assert!(rel < 1e-6, "x={x} comoving={comoving}: rel {rel}");
            assert_eq!(s.dg_dx, geom.length * s.dg_dl);
        }
    }

    #[test]
    fn derivative_at_node_is_cosine_dominated() {
        // at a node sin(u) = 0 but u cos(u) is not: dg/dL stays finite
        let n = 2u32;
        let geom = natural(1.0, 0.5, n, 0.5, 0.3); // u = pi: node
        let pert = LengthPerturbation::new(0.0, geom).unwrap();
        let s = coupling_sensitivity(&pert).unwrap();
        assert!(s.g_at_x.abs() < 1e-12);
        assert!(s.dg_dl.abs() > 1e-3, "dg_dl = {}", s.dg_dl);
    }

    #[test]
    fn coupling_magnitude_monotone_near_antinode() {
        let n = 1u32;
        let geom = natural(1.0, 0.5, n, 0.5, 0.3); // antinode of the n=1 mode
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let x = -1e-3 + 2e-3 * k as f64 / 20.0;
            let pert = LengthPerturbation::new(x, geom).unwrap();
            let g = coupling_sensitivity(&pert).unwrap().g_at_x.abs();
            assert!(g < prev, "|g| not strictly decreasing at x={x}");
            prev = g;
        }
    }

    #[test]
    fn binding_round_trips_units() {
        let geom = CavityGeometry::si(0.01, 0.0025, 1, 1e-6, 1e-29);
        let pert = LengthPerturbation::new(0.0, geom).unwrap();
        let params = PhysicalParameters { g: 1.0, kappa: 141.0, gamma: 0.0, n_atoms: 2 };
        let binding = bind_x_to_model(&pert, &params).unwrap();
        let record = binding.unit_record();
        // natural -> SI -> natural
        let p0 = binding.params_at(0.0).unwrap();
        assert!((p0.g - params.g).abs() <= 1e-12 * params.g);
        let g_si_back = p0.g * record.frequency_scale_rad_per_s;
        assert!((g_si_back - record.g_si_reference).abs() <= 1e-12 * record.g_si_reference);
        // x = 0 leaves kappa untouched
        assert_eq!(p0.kappa, params.kappa);
    }

    #[test]
    fn binding_rejects_node_reference() {
        let geom = natural(1.0, 0.5, 2, 0.5, 0.3); // node of the n=2 mode
        let pert = LengthPerturbation::new(0.0, geom).unwrap();
        let params = PhysicalParameters { g: 1.0, kappa: 10.0, gamma: 0.0, n_atoms: 2 };
        assert!(bind_x_to_model(&pert, &params).is_err());
    }

    #[test]
    fn perturbation_bounds_checked() {
        let geom = natural(1.0, 0.25, 1, 0.5, 0.3);
        assert!(LengthPerturbation::new(1.0, geom).is_err());
        assert!(LengthPerturbation::new(-1.0, geom).is_err());
        // shrinking the cavity below a lab-fixed atom pushes z outside
        let geom = natural(1.0, 0.9, 1, 0.5, 0.3);
        let pert = LengthPerturbation::new(-0.5, geom).unwrap();
        assert!(coupling_sensitivity(&pert).is_err());
    }
}

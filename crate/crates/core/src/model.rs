//! Tavis-Cummings model on the reduced basis.
//!
//! Internal units fix `hbar = 1` and measure time in `1/omega`, so the
//! dynamics depend only on the dimensionless groups `g / (hbar*omega)` and
//! `gamma * dt`. Each atom owns its photon mode; the rotating-wave coupling
//! exchanges one excitation between an atom's electron and its photon.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::subspace::Subspace;
use crate::tensor::ComplexMatrix;

/// Physical parameters of the model, in energy units with `hbar = 1`.
#[derive(Debug, Clone, Copy)]
pub struct ModelParams {
    pub n_at: usize,
    /// Photon / atom excitation energy `E = hbar*omega`.
    pub hbar_omega: f64,
    /// Field-electron coupling.
    pub g: f64,
    /// Dissipation intensity per channel.
    pub gamma: f64,
    /// Influx intensity per channel, strictly below `gamma` when present.
    pub gamma_prime: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_at == 0 {
            return Err(Error::InvalidModel("atom count must be positive".into()));
        }
        if self.hbar_omega < 0.0 || self.g < 0.0 {
            return Err(Error::InvalidModel(
                "energies hbar_omega and g must be non-negative".into(),
            ));
        }
        if self.gamma_prime < 0.0 {
            return Err(Error::InvalidModel("gamma' must be non-negative".into()));
        }
        // gamma' < gamma, except the fully closed system gamma = gamma' = 0.
        if self.gamma == 0.0 {
            if self.gamma_prime != 0.0 {
                return Err(Error::InvalidModel(
                    "gamma' requires a positive gamma".into(),
                ));
            }
        } else if self.gamma_prime >= self.gamma {
            return Err(Error::InvalidModel(format!(
                "gamma' = {} must be strictly below gamma = {}",
                self.gamma_prime, self.gamma
            )));
        }
        Ok(())
    }
}

/// Elementary jump `|target><source|` with its dissipation and influx rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    /// Basis index the excitation leaves (one photon present).
    pub source: usize,
    /// Basis index after the photon is lost.
    pub target: usize,
    pub gamma: f64,
    pub gamma_prime: f64,
}

/// Build the rotating-wave Hamiltonian on the reduced basis.
///
/// Diagonal entries are `hbar_omega` times the excitation number; the
/// coupling `g` connects states differing at exactly one atom by
/// `(0,1) <-> (1,0)`. The result is Hermitian by construction, bit for bit.
pub fn build_hamiltonian(params: &ModelParams, space: &Subspace) -> Result<ComplexMatrix> {
    params.validate()?;
    if space.n_at() != params.n_at {
        return Err(Error::InvalidModel(format!(
            "subspace built for {} atoms, model has {}",
            space.n_at(),
            params.n_at
        )));
    }
    let dim = space.dim();
    let mut h = ComplexMatrix::zeros(dim, dim);
    for (s_idx, s) in space.states().iter().enumerate() {
        for atom in 0..params.n_at {
            if s.letter(atom) == (true, true) {
                return Err(Error::InvalidModel(format!(
                    "state {} holds a photon and an excited electron at atom {atom}; \
                     the two-level coupling does not cover it",
                    s.bit_string()
                )));
            }
        }
        h.set(
            s_idx,
            s_idx,
            Complex64::new(params.hbar_omega * s.excitation_number() as f64, 0.0),
        );
        // photon emission partner: (0,1) -> (1,0) at one atom
        for atom in 0..params.n_at {
            if s.letter(atom) != (false, true) {
                continue;
            }
            let partner = s.with_letter(atom, (true, false));
            let t_idx = space
                .index_of(&partner)
                .ok_or(Error::ClosureViolation(partner.word()))?;
            let g = Complex64::new(params.g, 0.0);
            h.set(s_idx, t_idx, g);
            h.set(t_idx, s_idx, g);
        }
    }
    Ok(h)
}

/// Enumerate the photon-loss channels: one per (state, atom) pair with a
/// photon present, all with the model's uniform rates.
pub fn build_channels(params: &ModelParams, space: &Subspace) -> Result<Vec<Channel>> {
    params.validate()?;
    if space.n_at() != params.n_at {
        return Err(Error::InvalidModel(format!(
            "subspace built for {} atoms, model has {}",
            space.n_at(),
            params.n_at
        )));
    }
    if params.gamma == 0.0 {
        return Ok(Vec::new());
    }
    let mut channels = Vec::new();
    for (s_idx, s) in space.states().iter().enumerate() {
        for atom in 0..params.n_at {
            let (photon, electron) = s.letter(atom);
            if !photon {
                continue;
            }
            let after = s.with_letter(atom, (false, electron));
            let t_idx = space
                .index_of(&after)
                .ok_or(Error::ClosureViolation(after.word()))?;
            channels.push(Channel {
                source: s_idx,
                target: t_idx,
                gamma: params.gamma,
                gamma_prime: params.gamma_prime,
            });
        }
    }
    Ok(channels)
}

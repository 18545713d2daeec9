//! Dynamical subspace construction.
//!
//! Each atom carries a 2-bit letter `(p, l)`: free-photon count and electron
//! level. A basis state is the concatenation of those letters, encoded into
//! an integer word so ordering and matrix layouts are reproducible. The
//! subspace is the breadth-first closure of an initial state under a set of
//! per-atom rewrite rules.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Maximum supported atom count (two bits per atom in a `u64` word).
pub const MAX_ATOMS: usize = 32;

/// Per-atom occupation word: photon and electron bits per atom.
///
/// Atom 0 occupies the most significant pair so the encoded word reads
/// left-to-right as `p_0 l_0 p_1 l_1 ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState {
    word: u64,
    n_at: usize,
}

impl BasisState {
    pub fn from_word(word: u64, n_at: usize) -> Result<Self> {
        if n_at == 0 || n_at > MAX_ATOMS {
            return Err(Error::InvalidModel(format!(
                "atom count {n_at} outside 1..={MAX_ATOMS}"
            )));
        }
        if n_at < MAX_ATOMS && word >> (2 * n_at) != 0 {
            return Err(Error::InvalidModel(format!(
                "word {word:#x} has bits beyond {n_at} atoms"
            )));
        }
        Ok(Self { word, n_at })
    }

    /// All atoms in `(p, l) = (0, 0)`.
    pub fn ground(n_at: usize) -> Result<Self> {
        Self::from_word(0, n_at)
    }

    /// All atoms excited with no free photons: `(p, l) = (0, 1)` everywhere.
    pub fn all_excited(n_at: usize) -> Result<Self> {
        let mut s = Self::ground(n_at)?;
        for atom in 0..n_at {
            s = s.with_letter(atom, (false, true));
        }
        Ok(s)
    }

    pub fn word(&self) -> u64 {
        self.word
    }

    pub fn n_at(&self) -> usize {
        self.n_at
    }

    fn shift(&self, atom: usize) -> u32 {
        debug_assert!(atom < self.n_at);
        (2 * (self.n_at - 1 - atom)) as u32
    }

    /// `(photon, electron)` letter of one atom.
    pub fn letter(&self, atom: usize) -> (bool, bool) {
        let bits = (self.word >> self.shift(atom)) & 0b11;
        (bits & 0b10 != 0, bits & 0b01 != 0)
    }

    pub fn with_letter(&self, atom: usize, (photon, electron): (bool, bool)) -> Self {
        let shift = self.shift(atom);
        let bits = ((photon as u64) << 1 | electron as u64) << shift;
        Self {
            word: (self.word & !(0b11 << shift)) | bits,
            n_at: self.n_at,
        }
    }

    /// Total excitation count: sum of photon and electron bits over atoms.
    pub fn excitation_number(&self) -> usize {
        self.word.count_ones() as usize
    }

    /// Render as a `p_0 l_0 p_1 l_1 ...` bit string.
    pub fn bit_string(&self) -> String {
        (0..self.n_at)
            .map(|a| {
                let (p, l) = self.letter(a);
                format!("{}{}", p as u8, l as u8)
            })
            .collect()
    }
}

/// A local rewrite of one atom's letter; applying a rule to any atom whose
/// letter matches `from` yields a neighbouring state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionRule {
    pub from: (bool, bool),
    pub to: (bool, bool),
}

/// Generative rule set for the Tavis-Cummings model: photon exchange
/// `(0,1) <-> (1,0)` in both directions plus photon loss `(1,l) -> (0,l)`.
///
/// Influx channels retrace loss transitions backward: every state an influx
/// move could reach was already the source of a loss move, so they never
/// enlarge the closure and are not part of the generative set. The channel
/// rates carry the influx intensity instead.
pub fn tcm_rules() -> Vec<TransitionRule> {
    vec![
        TransitionRule {
            from: (false, true),
            to: (true, false),
        },
        TransitionRule {
            from: (true, false),
            to: (false, true),
        },
        TransitionRule {
            from: (true, false),
            to: (false, false),
        },
        TransitionRule {
            from: (true, true),
            to: (false, true),
        },
    ]
}

/// Reachable-state set with a deterministic ascending-word ordering.
#[derive(Debug, Clone)]
pub struct Subspace {
    n_at: usize,
    states: Vec<BasisState>,
    index: HashMap<u64, usize>,
}

impl Subspace {
    pub fn n_at(&self) -> usize {
        self.n_at
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Dimension of the full tensor-product space, `4^n_at`.
    pub fn full_dim(&self) -> u64 {
        1u64 << (2 * self.n_at)
    }

    pub fn state(&self, idx: usize) -> BasisState {
        self.states[idx]
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn index_of(&self, state: &BasisState) -> Option<usize> {
        self.index.get(&state.word).copied()
    }

    /// Excitation number per basis index, in index order.
    pub fn excitations(&self) -> Vec<usize> {
        self.states.iter().map(|s| s.excitation_number()).collect()
    }

    /// Write the `index -> bit word` listing used in docs and debugging.
    pub fn write_listing<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, s) in self.states.iter().enumerate() {
            writeln!(w, "{i}\t{}\t{}", s.bit_string(), s.excitation_number())?;
        }
        Ok(())
    }
}

/// Breadth-first closure of `initial` under the per-atom rules.
pub fn generate_subspace(
    n_at: usize,
    initial: BasisState,
    rules: &[TransitionRule],
) -> Result<Subspace> {
    if initial.n_at() != n_at {
        return Err(Error::InvalidModel(format!(
            "initial state describes {} atoms, expected {n_at}",
            initial.n_at()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(initial.word());
    queue.push_back(initial);
    while let Some(s) = queue.pop_front() {
        for atom in 0..n_at {
            let letter = s.letter(atom);
            for rule in rules {
                if rule.from == letter {
                    let next = s.with_letter(atom, rule.to);
                    if seen.insert(next.word()) {
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    let mut states: Vec<BasisState> = seen
        .into_iter()
        .map(|w| BasisState { word: w, n_at })
        .collect();
    states.sort();
    let index = states.iter().enumerate().map(|(i, s)| (s.word, i)).collect();
    Ok(Subspace {
        n_at,
        states,
        index,
    })
}

/// Squared dimension ratio: the memory fraction a dense matrix on the
/// reduced basis occupies relative to the full basis.
pub fn memory_ratio(reduced_dim: u64, full_dim: u64) -> Result<f64> {
    if reduced_dim == 0 || full_dim == 0 {
        return Err(Error::InvalidModel(
            "dimensions must be positive".into(),
        ));
    }
    if reduced_dim > full_dim {
        return Err(Error::InvalidModel(format!(
            "reduced dimension {reduced_dim} exceeds full dimension {full_dim}"
        )));
    }
    let r = reduced_dim as f64 / full_dim as f64;
    Ok(r * r)
}

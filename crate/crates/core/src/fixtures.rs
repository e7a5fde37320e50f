//! Two-qubit reference models.
//!
//! Basis order is `|00⟩, |01⟩, |10⟩, |11⟩` (first qubit is the most
//! significant index). The Hamiltonian is the exchange coupling
//! `ω(σ₁⁺σ₂⁻ + σ₁⁻σ₂⁺)/2` and `p0 = |00⟩⟨00|`.

use serde::{Deserialize, Serialize};

use crate::linalg::{kron, CMatrix, OperatorMatrix, OrthProjection, Tolerances, ONE};
use crate::model::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecaySites {
    /// Decay `σ₁⁻` on the first qubit only.
    Site1,
    /// Decay `σ₁⁻` and `σ₂⁻`.
    Both,
}

/// `|0⟩⟨1|` on a single qubit.
pub fn lowering() -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = ONE;
    m
}

pub fn sigma_minus(site: usize) -> CMatrix {
    let id = CMatrix::identity(2, 2);
    match site {
        1 => kron(&lowering(), &id),
        2 => kron(&id, &lowering()),
        _ => panic!("two-qubit site must be 1 or 2"),
    }
}

pub fn exchange_hamiltonian(omega: f64) -> CMatrix {
    let (s1, s2) = (sigma_minus(1), sigma_minus(2));
    (s1.adjoint() * &s2 + &s1 * s2.adjoint()).scale(omega / 2.0)
}

pub fn two_qubit(omega: f64, sites: DecaySites) -> ModelSpec {
    let tol = Tolerances::default();
    let h = OperatorMatrix::new(exchange_hamiltonian(omega)).expect("finite");
    let mut jumps = vec![OperatorMatrix::new(sigma_minus(1)).expect("finite")];
    if sites == DecaySites::Both {
        jumps.push(OperatorMatrix::new(sigma_minus(2)).expect("finite"));
    }
    let label = match sites {
        DecaySites::Site1 => format!("two_qubit_site1(omega={omega})"),
        DecaySites::Both => format!("two_qubit_both(omega={omega})"),
    };
    let p0 = OrthProjection::from_basis_indices(4, &[0]).expect("valid index");
    ModelSpec::new(label, h, jumps, p0, &tol).expect("fixture is valid")
}

/// Index of `|ij⟩` in the two-qubit basis.
pub fn ket_index(i: usize, j: usize) -> usize {
    2 * i + j
}

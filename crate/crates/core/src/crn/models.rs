//! Built-in networks used throughout the experiments.

use super::{PropensitySpec, Reaction, ReactionNetwork};

/// Repressilator parameters `(alpha0, alpha, n, beta, K, gamma)`; `gamma`
/// is the mRNA decay rate, fixed at 1.
pub const REPRESSILATOR_THETA: [f64; 6] = [1.0, 1000.0, 2.0, 5.0, 20.0, 1.0];
/// Initial state in the order `(M1, P1, M2, P2, M3, P3)`.
pub const REPRESSILATOR_X0: [f64; 6] = [0.0, 40.0, 0.0, 20.0, 0.0, 60.0];
pub const LV_THETA: [f64; 3] = [0.5, 0.0025, 0.3];
pub const TWO_POOL_THETA: [f64; 4] = [0.1, 0.2, 0.2, 0.5];

fn unit(d: usize, i: usize) -> Vec<u32> {
    let mut v = vec![0; d];
    v[i] = 1;
    v
}

fn mass_action(d: usize, rate: usize, reactant: Option<usize>, product: Option<usize>) -> Reaction {
    let nu_minus = reactant.map_or(vec![0; d], |i| unit(d, i));
    let nu_plus = product.map_or(vec![0; d], |i| unit(d, i));
    Reaction { propensity: PropensitySpec::MassAction { rate, orders: nu_minus.clone() }, nu_minus, nu_plus }
}

/// Three-gene Repressilator with species `(M1, P1, M2, P2, M3, P3)`.
///
/// Reactions come in blocks of four per gene `i`: mRNA transcription
/// (Hill-repressed by protein `P_j`, `j = (i+1) mod 3 + 1`), translation
/// `beta M_i`, protein decay `beta P_i`, mRNA decay `gamma M_i`.
pub fn repressilator() -> ReactionNetwork {
    let d = 6;
    let species = ["M1", "P1", "M2", "P2", "M3", "P3"].map(String::from).to_vec();
    let params = ["alpha0", "alpha", "n", "beta", "K", "gamma"].map(String::from).to_vec();
    let mut reactions = Vec::with_capacity(12);
    for gene in 0..3 {
        let m = 2 * gene;
        let p = m + 1;
        // 1-based j = (i + 1) mod 3 + 1 maps genes 1, 2, 3 to repressors P3, P1, P2.
        let repressor = 2 * ((gene + 2) % 3) + 1;
        reactions.push(Reaction {
            nu_minus: vec![0; d],
            nu_plus: unit(d, m),
            propensity: PropensitySpec::Hill { basal: 0, amplitude: 1, half_saturation: 4, exponent: 2, repressor },
        });
        reactions.push(Reaction {
            nu_minus: unit(d, m),
            nu_plus: {
                let mut v = unit(d, m);
                v[p] = 1;
                v
            },
            propensity: PropensitySpec::MassAction { rate: 3, orders: unit(d, m) },
        });
        reactions.push(mass_action(d, 3, Some(p), None));
        reactions.push(mass_action(d, 5, Some(m), None));
    }
    ReactionNetwork::new(species, params, reactions).expect("built-in network is valid")
}

/// Stochastic Lotka-Volterra: prey birth `X1 -> 2 X1`, predation
/// `X1 + X2 -> 2 X2`, predator death `X2 -> 0`.
pub fn lotka_volterra() -> ReactionNetwork {
    let species = vec!["X1".to_string(), "X2".to_string()];
    let params = vec!["theta1".to_string(), "theta2".to_string(), "theta3".to_string()];
    let reactions = vec![
        Reaction {
            nu_minus: vec![1, 0],
            nu_plus: vec![2, 0],
            propensity: PropensitySpec::MassAction { rate: 0, orders: vec![1, 0] },
        },
        Reaction {
            nu_minus: vec![1, 1],
            nu_plus: vec![0, 2],
            propensity: PropensitySpec::MassAction { rate: 1, orders: vec![1, 1] },
        },
        mass_action(2, 2, Some(1), None),
    ];
    ReactionNetwork::new(species, params, reactions).expect("built-in network is valid")
}

/// Two-pool decay/transfer model: `X1 -> 0`, `X2 -> 0`, `X1 -> X2`, `X2 -> X1`.
pub fn two_pool() -> ReactionNetwork {
    let species = vec!["X1".to_string(), "X2".to_string()];
    let params = (1..=4).map(|k| format!("theta{k}")).collect();
    let reactions = vec![
        mass_action(2, 0, Some(0), None),
        mass_action(2, 1, Some(1), None),
        mass_action(2, 2, Some(0), Some(1)),
        mass_action(2, 3, Some(1), Some(0)),
    ];
    ReactionNetwork::new(species, params, reactions).expect("built-in network is valid")
}

//! One user's Lagrangian block solved in closed form.
//!
//! cargo run --example local_subproblem

use comp_power::local::{kkt_residual, quadratic_root};
use comp_power::{solve_subproblem, SubproblemInput};

fn main() {
    let gammas = [2.5, 0.8, 0.1];
    let lambdas = [0.3, 0.6, 0.9];
    let aux = [0.4, 0.2, 0.0];
    let input = SubproblemInput {
        user: 0,
        gammas: &gammas,
        weight: 1.0,
        proximal: 3.0,
        lambdas: &lambdas,
        aux: &aux,
    };
    let sol = solve_subproblem(&input, &[4, 9, 11]);
    println!("active antennas {:?}", sol.omega);
    println!("powers {:?}", sol.powers);
    println!("s = {:.6}, objective {:.6}", sol.s, input.objective(&sol.powers));
    println!("KKT residual {:.2e}", kkt_residual(&input, &sol.powers));

    // single antenna, no price, no proximal center
    let s = quadratic_root(1.0, 0.0, 1.0 / std::f64::consts::LN_2);
    println!("single-antenna optimum p = {s:.10}");
}

//! The 2x2 square with plus boundary has 16 states; its mean absorption time
//! from all minus solves a 15x15 linear system exactly. Both engines must
//! reproduce it within Monte Carlo error.
//!
//! The oracle hand-codes the chain: neighbour lists of the 2x2 grid, the
//! boundary contribution (+2 per site) and the zero-temperature rates
//! (rate 1 against a strict majority, rate 1/2 on a tie). It shares nothing
//! with the simulator.

use std::sync::Arc;

use lifshitz_core::dynamics::{
    run_to_absorption, DynamicsState, Hitting, NoObserver, RejectionFreeEngine, SpinField,
};
use lifshitz_core::geometry::{hypercube, BoundaryCondition};
use lifshitz_core::randomness::EventStream;
use lifshitz_core::stats;

/// Exact mean hitting time of the all-plus state from all minus.
fn exact_mean_absorption() -> f64 {
    // grid sites in lexicographic order: (1,1), (1,2), (2,1), (2,2)
    const NBRS: [[usize; 2]; 4] = [[1, 2], [0, 3], [0, 3], [1, 2]];
    let n_states = 16usize; // bit set = spin +1
    let absorbing = 0b1111;
    let spin = |state: usize, site: usize| -> i32 {
        if state & (1 << site) != 0 {
            1
        } else {
            -1
        }
    };
    // flip rate of site x in state s
    let rate = |state: usize, site: usize| -> f64 {
        let sum: i32 = NBRS[site].iter().map(|&o| spin(state, o)).sum::<i32>() + 2;
        if sum > 0 {
            if spin(state, site) == -1 {
                1.0
            } else {
                0.0
            }
        } else if sum == 0 {
            0.5
        } else if spin(state, site) == 1 {
            1.0
        } else {
            0.0
        }
    };
    // mean absorption times u solve (-Q u)_s = 1 over transient states
    let transient: Vec<usize> = (0..n_states).filter(|&s| s != absorbing).collect();
    let index = |s: usize| transient.iter().position(|&t| t == s).unwrap();
    let m = transient.len();
    let mut a = vec![vec![0.0f64; m]; m];
    let mut b = vec![1.0f64; m];
    for (row, &s) in transient.iter().enumerate() {
        let mut diag = 0.0;
        for site in 0..4 {
            let r = rate(s, site);
            if r == 0.0 {
                continue;
            }
            diag += r;
            let target = s ^ (1 << site);
            if target != absorbing {
                a[row][index(target)] -= r;
            }
        }
        a[row][row] += diag;
    }
    // Gaussian elimination with partial pivoting
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-12, "singular system");
        for row in col + 1..m {
            let f = a[row][col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..m).rev() {
        let mut v = b[col];
        for k in col + 1..m {
            v -= a[col][k] * b[k];
        }
        b[col] = v / a[col][col];
    }
    b[index(0b0000)]
}

fn sample_graphical(seeds: std::ops::Range<u64>) -> Vec<f64> {
    let region = Arc::new(hypercube(2, 2).unwrap());
    let bc = BoundaryCondition::uniform(&region, 1).unwrap();
    seeds
        .map(|seed| {
            let mut state =
                DynamicsState::new(region.clone(), &bc, SpinField::all_minus(4)).unwrap();
            let mut stream = EventStream::new(seed, 4).unwrap();
            match run_to_absorption(&mut state, &mut stream, 1e6, &mut NoObserver).unwrap() {
                Hitting::Absorbed { time, .. } => time,
                Hitting::Timeout { .. } => panic!("2x2 run timed out"),
            }
        })
        .collect()
}

fn sample_rejection_free(seeds: std::ops::Range<u64>) -> Vec<f64> {
    let region = Arc::new(hypercube(2, 2).unwrap());
    let bc = BoundaryCondition::uniform(&region, 1).unwrap();
    seeds
        .map(|seed| {
            let mut state =
                DynamicsState::new(region.clone(), &bc, SpinField::all_minus(4)).unwrap();
            let mut engine = RejectionFreeEngine::new(&state, seed);
            match engine
                .run_to_absorption(&mut state, 1e6, &mut NoObserver)
                .unwrap()
            {
                Hitting::Absorbed { time, .. } => time,
                Hitting::Timeout { .. } => panic!("2x2 run timed out"),
            }
        })
        .collect()
}

#[test]
fn exact_solution_is_stable() {
    // frozen from the linear solve: 71/28
    let exact = exact_mean_absorption();
    assert!(
        (exact - 71.0 / 28.0).abs() < 1e-9,
        "oracle drifted: {exact}"
    );
}

#[test]
fn graphical_engine_matches_exact_chain() {
    let exact = exact_mean_absorption();
    let samples = sample_graphical(10_000..16_000);
    let mean = stats::mean(&samples);
    let se = stats::std_error(&samples);
    assert!(
        (mean - exact).abs() < 4.0 * se,
        "graphical mean {mean} vs exact {exact} (se {se})"
    );
}

#[test]
fn rejection_free_engine_matches_exact_chain() {
    let exact = exact_mean_absorption();
    let samples = sample_rejection_free(20_000..26_000);
    let mean = stats::mean(&samples);
    let se = stats::std_error(&samples);
    assert!(
        (mean - exact).abs() < 4.0 * se,
        "rejection-free mean {mean} vs exact {exact} (se {se})"
    );
}

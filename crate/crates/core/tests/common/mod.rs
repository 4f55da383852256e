//! Reference tables shared by the integration tests.
#![allow(dead_code)]

use serendip::bench::{run_level, ExperimentConfig, PcKind, Problem};
use serendip::fe_basis::Family;
use serendip::multigrid::PatchSmoothing;

/// DOF counts, 2D Poisson on 32^2..512^2: (family, k, [counts]).
pub const DOFS_2D: [(Family, usize, [usize; 5]); 6] = [
    (Family::S, 2, [3201, 12545, 49665, 197633, 788481]),
    (Family::S, 3, [5313, 20865, 82689, 329217, 1313793]),
    (Family::S, 4, [8449, 33281, 132097, 526337, 2101249]),
    (Family::Q, 2, [4225, 16641, 66049, 263169, 1050625]),
    (Family::Q, 3, [9409, 37249, 148225, 591361, 2362369]),
    (Family::Q, 4, [16641, 66049, 263169, 1050625, 4198401]),
];

/// DOF counts, 3D Poisson on 16^3, 32^3, 64^3.
pub const DOFS_3D: [(Family, usize, [usize; 3]); 6] = [
    (Family::S, 2, [18785, 140481, 1085825]),
    (Family::S, 3, [32657, 245025, 1897025]),
    (Family::S, 4, [59585, 450945, 3506945]),
    (Family::Q, 2, [35937, 274625, 2146689]),
    (Family::Q, 3, [117649, 912673, 7189057]),
    (Family::Q, 4, [274625, 2146689, 16974593]),
];

/// DOF counts, elasticity on 125x5 refined N = 2..5 times.
pub const DOFS_ELASTICITY: [(Family, usize, [usize; 4]); 6] = [
    (Family::S, 2, [62082, 244162, 968322, 3856642]),
    (Family::S, 3, [103122, 406242, 1612482, 6424962]),
    (Family::S, 4, [164162, 648322, 2576642, 10273282]),
    (Family::Q, 2, [82082, 324162, 1288322, 5136642]),
    (Family::Q, 3, [183122, 726242, 2892482, 11544962]),
    (Family::Q, 4, [324162, 1288322, 5136642, 20513282]),
];

/// Two-level iteration counts, 2D Poisson on 32^2..512^2.
pub const TWO_LEVEL_2D: [(Family, usize, [usize; 5]); 6] = [
    (Family::S, 2, [9, 9, 8, 8, 8]),
    (Family::S, 3, [9, 9, 9, 9, 8]),
    (Family::S, 4, [11, 11, 10, 10, 9]),
    (Family::Q, 2, [10, 9, 9, 10, 9]),
    (Family::Q, 3, [10, 9, 10, 10, 9]),
    (Family::Q, 4, [9, 9, 9, 9, 9]),
];

/// Multigrid iteration counts, 2D Poisson on 32^2..512^2.
pub const MG_2D: [(Family, usize, [usize; 5]); 6] = [
    (Family::S, 2, [13, 13, 12, 12, 12]),
    (Family::S, 3, [14, 13, 13, 13, 13]),
    (Family::S, 4, [14, 13, 12, 12, 12]),
    (Family::Q, 2, [13, 13, 12, 12, 12]),
    (Family::Q, 3, [13, 12, 12, 12, 12]),
    (Family::Q, 4, [13, 12, 12, 12, 12]),
];

/// Two-level iteration counts, 3D Poisson on 16^3, 32^3, 64^3.
pub const TWO_LEVEL_3D: [(Family, usize, [usize; 3]); 6] = [
    (Family::S, 2, [10, 9, 9]),
    (Family::S, 3, [11, 10, 10]),
    (Family::S, 4, [11, 11, 11]),
    (Family::Q, 2, [11, 11, 11]),
    (Family::Q, 3, [10, 10, 10]),
    (Family::Q, 4, [10, 10, 10]),
];

/// Two-level iteration counts, elasticity at N = 2..5.
pub const TWO_LEVEL_ELASTICITY: [(Family, usize, [usize; 4]); 6] = [
    (Family::S, 2, [9, 9, 9, 8]),
    (Family::S, 3, [9, 9, 9, 9]),
    (Family::S, 4, [9, 9, 9, 9]),
    (Family::Q, 2, [9, 9, 9, 9]),
    (Family::Q, 3, [9, 9, 9, 9]),
    (Family::Q, 4, [9, 9, 9, 9]),
];

/// Iterations of one solve at refinement `level` of the default base mesh.
pub fn iterations(problem: Problem, family: Family, k: usize, level: usize, pc: PcKind, smoothing: PatchSmoothing) -> usize {
    let mut c = ExperimentConfig::new(problem, family, k, level, pc);
    c.smoothing = smoothing;
    c.timing = false;
    let o = run_level(&c, level).expect("solve");
    assert!(o.row.converged, "{problem} {family}{k} level {level} {pc} did not converge");
    o.row.iterations
}

pub fn spread(v: &[usize]) -> usize {
    v.iter().max().unwrap() - v.iter().min().unwrap()
}

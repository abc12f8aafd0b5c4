//! Constructions of the flow `𝒳(s,t)` and of the inverse flow.
//!
//! All solvers consume the same [`WienerPaths`](crate::noise::WienerPaths),
//! so their outputs can be compared path by path.

mod chaos;
mod commutative;
mod doss_sussmann;
mod euler;

use std::fmt;
use std::io::Write;

use crate::error::{FlowError, Result};
use crate::noise::TimeGrid;
use crate::operators::{operator_norm, TruncatedOperator};

pub use chaos::{
    chaos_flow, chaos_orders, chaos_tail_bound, chaos_terminal_from_integrals, iterated_integrals,
    ChaosConfig, IteratedIntegrals, CHAOS_INDEX_LIMIT,
};
pub use commutative::{commutative_ito_flow, commutative_strat_flow};
pub use doss_sussmann::{default_lambda_ladder, doss_sussmann_flow, yosida};
pub use euler::{euler_flow, euler_flow_with, inverse_flow, EulerScheme};

/// Which construction produced a [`FlowSample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverTag {
    Euler,
    Chaos,
    CommutativeIto,
    CommutativeStrat,
    DossSussmann,
    InverseDual,
    PicardSchatten,
}

impl SolverTag {
    pub fn name(&self) -> &'static str {
        match self {
            SolverTag::Euler => "euler",
            SolverTag::Chaos => "chaos",
            SolverTag::CommutativeIto => "commutative_ito",
            SolverTag::CommutativeStrat => "commutative_strat",
            SolverTag::DossSussmann => "doss_sussmann",
            SolverTag::InverseDual => "inverse_dual",
            SolverTag::PicardSchatten => "picard_schatten",
        }
    }
}

impl fmt::Display for SolverTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One realization of `t ↦ 𝒳(s, t)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    grid: TimeGrid,
    frames: Vec<TruncatedOperator>,
    solver: SolverTag,
    seed: u64,
    origin: usize,
}

impl FlowSample {
    /// `frames[0]` must be exactly the identity and every frame finite.
    pub fn new(
        grid: TimeGrid,
        frames: Vec<TruncatedOperator>,
        solver: SolverTag,
        seed: u64,
        origin: usize,
    ) -> Result<Self> {
        if frames.len() != grid.steps() + 1 {
            return Err(FlowError::DimensionMismatch {
                expected: grid.steps() + 1,
                actual: frames.len(),
            });
        }
        let dim = frames[0].dim();
        if frames[0] != TruncatedOperator::identity(dim) {
            return Err(FlowError::InvalidOperator(
                "first frame of a flow must be the identity".into(),
            ));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.dim() != dim {
                return Err(FlowError::DimensionMismatch {
                    expected: dim,
                    actual: f.dim(),
                });
            }
            f.ensure_finite()
                .map_err(|e| e.context(format!("{solver} frame {i}")))?;
        }
        Ok(Self {
            grid,
            frames,
            solver,
            seed,
            origin,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn frames(&self) -> &[TruncatedOperator] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &TruncatedOperator {
        &self.frames[i]
    }

    pub fn terminal(&self) -> &TruncatedOperator {
        self.frames.last().expect("flow has at least one frame")
    }

    pub fn solver(&self) -> SolverTag {
        self.solver
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of `s` in the grid of the original noise sample.
    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    /// CSV with one row per grid time: `time`, then the row-major entries.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.dim();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        for i in 0..n {
            for j in 0..n {
                header.push(format!("x_{i}_{j}"));
            }
        }
        wtr.write_record(&header)?;
        for (i, f) in self.frames.iter().enumerate() {
            let mut row = vec![fmt_f64(self.grid.time(i))];
            row.extend(f.to_row_major().into_iter().map(fmt_f64));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Seventeen significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `‖restart(t_j, t_l)·flow(s, t_j) − flow(s, t_l)‖`.
///
/// `j` and `l` are indices in the grid of the original noise sample; `restart`
/// must be the flow re-solved from `t_j` on the same noise.
pub fn cocycle_defect(flow: &FlowSample, j: usize, l: usize, restart: &FlowSample) -> Result<f64> {
    if flow.seed != restart.seed {
        return Err(FlowError::SeedMismatch {
            flow: flow.seed,
            restart: restart.seed,
        });
    }
    if restart.origin != j {
        return Err(FlowError::Domain(format!(
            "restart starts at grid index {}, expected {j}",
            restart.origin
        )));
    }
    let last = flow.origin + flow.grid.steps();
    if !(flow.origin <= j && j <= l && l <= last) {
        return Err(FlowError::Domain(format!(
            "need {} <= j={j} <= l={l} <= {last}",
            flow.origin
        )));
    }
    let composed = restart
        .frame(l - j)
        .compose(flow.frame(j - flow.origin));
    operator_norm(&(&composed - flow.frame(l - flow.origin)))
}

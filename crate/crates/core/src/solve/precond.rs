use super::LinearOperator;
use crate::conforming::CoarseSolver;
use crate::dg::{AssembledSystem, DgSpace};
use crate::error::{invalid, Error, Result};
use crate::subspaces::BlockPreconditioner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PreconditionerKind {
    /// `T_B + B_C`: edge blocks and point Jacobi plus the coarse correction.
    Full,
    /// Point Jacobi on every element-boundary dof plus the coarse correction.
    Simplified,
    /// `diag(A)⁻¹`.
    Jacobi,
    Identity,
}

impl PreconditionerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Simplified => "simplified",
            Self::Jacobi => "jacobi",
            Self::Identity => "identity",
        }
    }
}

impl std::str::FromStr for PreconditionerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "simplified" => Ok(Self::Simplified),
            "jacobi" => Ok(Self::Jacobi),
            "identity" => Ok(Self::Identity),
            other => invalid(format!("unknown preconditioner '{other}'")),
        }
    }
}

pub struct Preconditioner<'a> {
    kind: PreconditionerKind,
    /// Diagonal scaling applied additively: all dofs for Jacobi, the
    /// element-boundary dofs for the simplified variant.
    scaling: Vec<f64>,
    coarse: Option<&'a CoarseSolver>,
    tb: Option<&'a BlockPreconditioner>,
}

impl Preconditioner<'_> {
    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }
}

/// Build the action of the requested preconditioner. `coarse` is required for
/// the full and simplified variants, `tb` for the full one.
pub fn compose_preconditioner<'a>(
    kind: PreconditionerKind,
    space: &DgSpace,
    system: &AssembledSystem,
    coarse: Option<&'a CoarseSolver>,
    tb: Option<&'a BlockPreconditioner>,
) -> Result<Preconditioner<'a>> {
    let n = system.diag.len();
    let inv = |j: usize| {
        let d = system.diag[j];
        if d > 0.0 {
            Ok(1.0 / d)
        } else {
            Err(Error::NotPositiveDefinite(format!("diagonal entry {j} is {d}")))
        }
    };
    let mut scaling = Vec::new();
    match kind {
        PreconditionerKind::Jacobi => {
            scaling = (0..n).map(inv).collect::<Result<_>>()?;
        }
        PreconditionerKind::Simplified => {
            scaling = vec![0.0; n];
            for j in space.boundary_dofs() {
                scaling[j] = inv(j)?;
            }
        }
        _ => {}
    }
    let needs_coarse = matches!(kind, PreconditionerKind::Full | PreconditionerKind::Simplified);
    if needs_coarse && coarse.is_none() {
        return invalid(format!("{} preconditioner needs the coarse solver", kind.name()));
    }
    if kind == PreconditionerKind::Full && tb.is_none() {
        return invalid("full preconditioner needs the edge-block smoother");
    }
    Ok(Preconditioner {
        kind,
        scaling,
        coarse: if needs_coarse { coarse } else { None },
        tb: if kind == PreconditionerKind::Full { tb } else { None },
    })
}

impl LinearOperator for Preconditioner<'_> {
    fn dim(&self) -> usize {
        self.tb.map(|t| t.dim()).or_else(|| self.coarse.map(|c| c.p.rows())).unwrap_or(self.scaling.len())
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.kind == PreconditionerKind::Identity {
            y.copy_from_slice(x);
            return;
        }
        y.iter_mut().for_each(|v| *v = 0.0);
        if !self.scaling.is_empty() {
            for ((y, x), d) in y.iter_mut().zip(x).zip(&self.scaling) {
                *y = d * x;
            }
        }
        if let Some(tb) = self.tb {
            tb.apply_add(x, y);
        }
        if let Some(c) = self.coarse {
            for (y, v) in y.iter_mut().zip(c.apply(x)) {
                *y += v;
            }
        }
    }
}

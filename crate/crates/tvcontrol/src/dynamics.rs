//! Second-order linear systems `M ẍ + C ẋ + K x = F(t) + B u(t)` on a uniform
//! time grid, their first-order companion form, and a Kalman controllability test.
//!
//! # System file format
//!
//! Plain text, whitespace-separated, `#` starts a comment to end of line.
//! In order:
//!
//! ```text
//! N p K T          # dofs, controls, time steps, horizon
//! M                # N*N values, row-major
//! C                # N*N values
//! K                # N*N values
//! B                # N*p values
//! F                # (K+1)*N values, one row per grid node
//! x0               # N values
//! x1               # N values
//! ```
//!
//! Values are written with shortest round-trip formatting, so a write/read
//! cycle reproduces every matrix bit-exactly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Uniform grid on `[0, T]` with `K` steps (`K + 1` nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be finite and positive, got {horizon}"
            )));
        }
        if steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 steps, got {steps}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node time `t_k = k·dt`.
    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub(crate) fn check_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.steps, self.horizon, other.steps, other.horizon
            )));
        }
        Ok(())
    }
}

/// `M ẍ + C ẋ + K x = F(t) + B u(t)` with initial data `x(0) = x0`, `ẋ(0) = x1`.
///
/// `forcing` holds nodal samples of `F`, one column per grid node (`N × (K+1)`).
/// The mass Cholesky factor is cached at construction; `M` must be symmetric
/// positive definite to 1e-10 relative symmetry tolerance.
#[derive(Debug, Clone)]
pub struct SecondOrderSystem {
    pub mass: DMatrix<f64>,
    pub damping: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub control_map: DMatrix<f64>,
    pub forcing: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub x1: DVector<f64>,
    grid: TimeGrid,
    mass_chol: Cholesky<f64, Dyn>,
}

const SYMMETRY_RTOL: f64 = 1e-10;

impl SecondOrderSystem {
    /// Validates dimensions and the SPD mass requirement.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        control_map: DMatrix<f64>,
        forcing: DMatrix<f64>,
        x0: DVector<f64>,
        x1: DVector<f64>,
        grid: TimeGrid,
    ) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty system".into()));
        }
        for (name, m) in [("M", &mass), ("C", &damping), ("K", &stiffness)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if control_map.nrows() != n || control_map.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B is {}x{}, expected {n} rows and at least one column",
                control_map.nrows(),
                control_map.ncols()
            )));
        }
        if forcing.nrows() != n || forcing.ncols() != grid.steps() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "forcing is {}x{}, expected {n}x{}",
                forcing.nrows(),
                forcing.ncols(),
                grid.steps() + 1
            )));
        }
        if x0.len() != n || x1.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial data of length {}/{}, expected {n}",
                x0.len(),
                x1.len()
            )));
        }
        let scale = mass.amax();
        let skew = (&mass - mass.transpose()).amax();
        if !(scale.is_finite()) || skew > SYMMETRY_RTOL * scale {
            return Err(Error::MassNotSpd(format!(
                "asymmetry {skew:.3e} exceeds {SYMMETRY_RTOL:.0e} relative"
            )));
        }
        let mass_chol = Cholesky::new(mass.clone())
            .ok_or_else(|| Error::MassNotSpd("Cholesky factorization failed".into()))?;
        Ok(Self {
            mass,
            damping,
            stiffness,
            control_map,
            forcing,
            x0,
            x1,
            grid,
            mass_chol,
        })
    }

    /// Zero-forcing convenience constructor.
    pub fn homogeneous(
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        control_map: DMatrix<f64>,
        x0: DVector<f64>,
        x1: DVector<f64>,
        grid: TimeGrid,
    ) -> Result<Self> {
        let forcing = DMatrix::zeros(mass.nrows(), grid.steps() + 1);
        Self::new(mass, damping, stiffness, control_map, forcing, x0, x1, grid)
    }

    /// Number of degrees of freedom.
    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    /// Number of control channels.
    pub fn p(&self) -> usize {
        self.control_map.ncols()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Solves `M y = rhs` with the cached Cholesky factor.
    pub fn solve_mass(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.mass_chol.solve(rhs)
    }

    pub(crate) fn solve_mass_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.mass_chol.solve(rhs)
    }

    /// Initial mechanical energy `½(ẋ₀ᵀMẋ₀ + |x₀ᵀKx₀|)`.
    ///
    /// The absolute value guards indefinite stiffness (the hydrofoil model's
    /// K has a zero column); for symmetric positive K this is the usual energy.
    pub fn initial_energy(&self) -> f64 {
        let kin = (&self.mass * &self.x1).dot(&self.x1);
        let pot = (&self.stiffness * &self.x0).dot(&self.x0).abs();
        0.5 * (kin + pot)
    }

    /// Companion first-order form.
    pub fn first_order_form(&self) -> FirstOrderForm {
        let n = self.n();
        let p = self.p();
        let minv_k = self.solve_mass_matrix(&self.stiffness);
        let minv_c = self.solve_mass_matrix(&self.damping);
        let minv_b = self.solve_mass_matrix(&self.control_map);
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
        a.view_mut((n, 0), (n, n)).copy_from(&(-&minv_k));
        a.view_mut((n, n), (n, n)).copy_from(&(-&minv_c));
        let mut b = DMatrix::zeros(2 * n, p);
        b.view_mut((n, 0), (n, p)).copy_from(&minv_b);
        FirstOrderForm { a, b }
    }

    /// Kalman rank test on the companion form.
    pub fn controllability_rank(&self) -> ControllabilityReport {
        let FirstOrderForm { a, b } = self.first_order_form();
        let dim = a.nrows();
        let p = b.ncols();
        let mut kalman = DMatrix::zeros(dim, dim * p);
        let mut block = b;
        for j in 0..dim {
            kalman.view_mut((0, j * p), (dim, p)).copy_from(&block);
            block = &a * &block;
        }
        let svd = kalman.svd(false, false);
        let sigma_max = svd.singular_values.max();
        let tol = dim as f64 * f64::EPSILON * sigma_max;
        let numeric_rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        ControllabilityReport {
            numeric_rank,
            dim,
            controllable: numeric_rank == dim,
        }
    }
}

/// State `z = (x, ẋ)`, dynamics `ż = a·z + b·u + (0, M⁻¹F)`.
#[derive(Debug, Clone)]
pub struct FirstOrderForm {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Outcome of the Kalman rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllabilityReport {
    pub numeric_rank: usize,
    pub dim: usize,
    pub controllable: bool,
}

/// Reads a system from the documented plain-text format.
pub fn read_system_file(path: &std::path::Path) -> Result<SecondOrderSystem> {
    let text = std::fs::read_to_string(path)?;
    parse_system(&text)
}

/// Parses the documented plain-text format from a string.
pub fn parse_system(text: &str) -> Result<SecondOrderSystem> {
    let mut tokens = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            tokens.push((idx + 1, tok));
        }
    }
    let mut pos = 0usize;
    let mut next = |what: &str| -> Result<(usize, f64)> {
        let (line, tok) = *tokens.get(pos).ok_or_else(|| Error::ParseError {
            line: tokens.last().map_or(1, |t| t.0),
            msg: format!("unexpected end of file while reading {what}"),
        })?;
        pos += 1;
        let v: f64 = tok.parse().map_err(|_| Error::ParseError {
            line,
            msg: format!("invalid number {tok:?} while reading {what}"),
        })?;
        Ok((line, v))
    };
    let usize_field = |(line, v): (usize, f64), what: &str| -> Result<usize> {
        if v.fract() != 0.0 || v < 0.0 || v > usize::MAX as f64 {
            return Err(Error::ParseError {
                line,
                msg: format!("{what} must be a nonnegative integer, got {v}"),
            });
        }
        Ok(v as usize)
    };

    let n = usize_field(next("N")?, "N")?;
    let p = usize_field(next("p")?, "p")?;
    let k = usize_field(next("K")?, "K")?;
    let t = next("T")?.1;
    let grid = TimeGrid::new(t, k)?;

    let mut read_matrix = |rows: usize, cols: usize, what: &str| -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = next(what)?.1;
            }
        }
        Ok(m)
    };

    let mass = read_matrix(n, n, "M")?;
    let damping = read_matrix(n, n, "C")?;
    let stiffness = read_matrix(n, n, "K")?;
    let control_map = read_matrix(n, p, "B")?;
    // Forcing rows are per-node in the file; stored as one column per node.
    let forcing_rows = read_matrix(k + 1, n, "F")?;
    let forcing = forcing_rows.transpose();
    let x0 = DVector::from_column_slice(read_matrix(1, n, "x0")?.as_slice());
    let x1 = DVector::from_column_slice(read_matrix(1, n, "x1")?.as_slice());

    if pos != tokens.len() {
        let (line, tok) = tokens[pos];
        return Err(Error::ParseError {
            line,
            msg: format!("trailing data starting at {tok:?}"),
        });
    }
    SecondOrderSystem::new(mass, damping, stiffness, control_map, forcing, x0, x1, grid)
}

/// Writes a system in the documented plain-text format (shortest round-trip
/// float formatting, so reading it back reproduces the system bit-exactly).
pub fn write_system_file(sys: &SecondOrderSystem, path: &std::path::Path) -> Result<()> {
    use std::fmt::Write as _;
    let n = sys.n();
    let p = sys.p();
    let grid = sys.grid();
    let mut out = String::new();
    let _ = writeln!(out, "# second-order system: N p K T");
    let _ = writeln!(out, "{} {} {} {}", n, p, grid.steps(), grid.horizon());
    let mut write_rows = |label: &str, m: &DMatrix<f64>, transpose: bool| {
        let _ = writeln!(out, "# {label}");
        let (rows, cols) = if transpose {
            (m.ncols(), m.nrows())
        } else {
            (m.nrows(), m.ncols())
        };
        for r in 0..rows {
            let mut line = String::new();
            for c in 0..cols {
                if c > 0 {
                    line.push(' ');
                }
                let v = if transpose { m[(c, r)] } else { m[(r, c)] };
                let _ = write!(line, "{v}");
            }
            let _ = writeln!(out, "{line}");
        }
    };
    write_rows("M", &sys.mass, false);
    write_rows("C", &sys.damping, false);
    write_rows("K", &sys.stiffness, false);
    write_rows("B", &sys.control_map, false);
    write_rows("F (one row per node)", &sys.forcing, true);
    let x0_m = DMatrix::from_row_slice(1, n, sys.x0.as_slice());
    let x1_m = DMatrix::from_row_slice(1, n, sys.x1.as_slice());
    write_rows("x0", &x0_m, false);
    write_rows("x1", &x1_m, false);
    std::fs::write(path, out)?;
    Ok(())
}

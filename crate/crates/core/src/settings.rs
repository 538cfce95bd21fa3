/// Numeric tolerances and enumeration limits shared by every solver in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    /// Primal feasibility tolerance of the simplex and of constraint checks.
    pub feasibility_tol: f64,
    /// Pivot elements with magnitude at or below this are treated as zero.
    pub rank_tol: f64,
    /// Reduced-cost tolerance used to declare optimality.
    pub optimality_tol: f64,
    /// Strict positivity threshold for max-min margin programs.
    pub positivity_tol: f64,
    /// Largest number of measure selections that may be enumerated.
    pub enumeration_cap: u64,
    /// Largest number of stopping times that may be enumerated.
    pub stopping_time_cap: u64,
    /// Cutting planes stop once the worst quadratic violation falls below this.
    pub cut_tol: f64,
    pub max_cuts: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            feasibility_tol: 1e-9,
            rank_tol: 1e-12,
            optimality_tol: 1e-11,
            positivity_tol: 1e-12,
            enumeration_cap: 1_000_000,
            stopping_time_cap: 1_000_000,
            cut_tol: 1e-8,
            max_cuts: 20_000,
        }
    }
}

impl Settings {
    pub fn with_enumeration_cap(mut self, cap: u64) -> Self {
        self.enumeration_cap = cap;
        self
    }
}

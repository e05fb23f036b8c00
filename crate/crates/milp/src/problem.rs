use std::fmt;

/// Index of a variable inside a [`Problem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn holds(self, lhs: i128, rhs: i128) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Ge => lhs >= rhs,
            Sense::Eq => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub lower: i64,
    /// `None` is +infinity.
    pub upper: Option<i64>,
    pub cost: i64,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, i64)>,
    pub sense: Sense,
    pub rhs: i64,
}

impl Constraint {
    pub fn activity(&self, values: &[i64]) -> i128 {
        self.terms
            .iter()
            .map(|&(v, a)| a as i128 * values[v.0] as i128)
            .sum()
    }
}

/// A minimization problem with integral data and finite lower bounds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
}

/// A constraint or bound that a candidate point fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub name: String,
    pub activity: i128,
    pub sense: Sense,
    pub rhs: i128,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} {} {} violated",
            self.name,
            self.activity,
            self.sense.symbol(),
            self.rhs
        )
    }
}

impl Problem {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: i64,
        upper: Option<i64>,
        cost: i64,
        integer: bool,
    ) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
            integer,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_int_var(&mut self, name: impl Into<String>, lower: i64, upper: Option<i64>, cost: i64) -> VarId {
        self.add_var(name, lower, upper, cost, true)
    }

    /// Adds a row. Repeated variables are merged and zero coefficients dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, i64)>,
        sense: Sense,
        rhs: i64,
    ) -> usize {
        let mut merged: Vec<(VarId, i64)> = Vec::new();
        for (v, a) in terms {
            assert!(v.0 < self.vars.len(), "unknown variable {v}");
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0);
        self.constraints.push(Constraint {
            name: name.into(),
            terms: merged,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_mut(&mut self, id: VarId) -> &mut Variable {
        &mut self.vars[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective(&self, values: &[i64]) -> i128 {
        self.vars
            .iter()
            .zip(values)
            .map(|(v, &x)| v.cost as i128 * x as i128)
            .sum()
    }

    /// Checks every bound and row in exact integer arithmetic.
    pub fn violations(&self, values: &[i64]) -> Vec<Violation> {
        assert_eq!(values.len(), self.vars.len());
        let mut out = Vec::new();
        for (v, &x) in self.vars.iter().zip(values) {
            if x < v.lower {
                out.push(Violation {
                    name: format!("{}.lower", v.name),
                    activity: x as i128,
                    sense: Sense::Ge,
                    rhs: v.lower as i128,
                });
            }
            if let Some(u) = v.upper {
                if x > u {
                    out.push(Violation {
                        name: format!("{}.upper", v.name),
                        activity: x as i128,
                        sense: Sense::Le,
                        rhs: u as i128,
                    });
                }
            }
        }
        for c in &self.constraints {
            let act = c.activity(values);
            if !c.sense.holds(act, c.rhs as i128) {
                out.push(Violation {
                    name: c.name.clone(),
                    activity: act,
                    sense: c.sense,
                    rhs: c.rhs as i128,
                });
            }
        }
        out
    }
}

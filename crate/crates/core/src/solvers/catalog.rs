use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Cg,
    Gmres,
    Bicgstab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerKind {
    None,
    Jacobi,
    BlockJacobi,
    Ssor,
    Ilu0,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Cg, SolverKind::Gmres, SolverKind::Bicgstab];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Cg => "cg",
            SolverKind::Gmres => "gmres",
            SolverKind::Bicgstab => "bicgstab",
        }
    }
}

impl PreconditionerKind {
    pub const ALL: [PreconditionerKind; 5] = [
        PreconditionerKind::None,
        PreconditionerKind::Jacobi,
        PreconditionerKind::BlockJacobi,
        PreconditionerKind::Ssor,
        PreconditionerKind::Ilu0,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PreconditionerKind::None => "none",
            PreconditionerKind::Jacobi => "jacobi",
            PreconditionerKind::BlockJacobi => "bjacobi",
            PreconditionerKind::Ssor => "ssor",
            PreconditionerKind::Ilu0 => "ilu0",
        }
    }
}

/// A solver paired with a preconditioner, written `solver+preconditioner`.
///
/// GMRES entries may fix their own restart length, written `gmres(20)+ilu0`;
/// without one the solve configuration's restart applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Method {
    pub solver: SolverKind,
    pub preconditioner: PreconditionerKind,
    pub restart: Option<u32>,
}

impl Method {
    pub const fn new(solver: SolverKind, preconditioner: PreconditionerKind) -> Self {
        Self { solver, preconditioner, restart: None }
    }

    /// GMRES with a fixed restart length.
    pub fn gmres(restart: u32, preconditioner: PreconditionerKind) -> Result<Self> {
        if restart == 0 {
            return Err(Error::ConfigError("GMRES restart must be at least 1".into()));
        }
        Ok(Self { solver: SolverKind::Gmres, preconditioner, restart: Some(restart) })
    }

    /// Operator applications (`A` times a preconditioned vector) per solver
    /// iteration. BiCGSTAB takes two per iteration, CG and GMRES one.
    pub const fn applications_per_iteration(&self) -> usize {
        match self.solver {
            SolverKind::Cg | SolverKind::Gmres => 1,
            SolverKind::Bicgstab => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.restart {
            Some(r) => write!(f, "{}({r})+{}", self.solver.as_str(), self.preconditioner.as_str()),
            None => write!(f, "{}+{}", self.solver.as_str(), self.preconditioner.as_str()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (solver, pc) = s
            .trim()
            .split_once('+')
            .ok_or_else(|| Error::ConfigError(format!("method '{s}' is not solver+preconditioner")))?;
        let (name, restart) = match solver.split_once('(') {
            Some((name, rest)) => {
                let digits = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::ConfigError(format!("unclosed restart in '{s}'")))?;
                let r: u32 = digits
                    .trim()
                    .parse()
                    .map_err(|_| Error::ConfigError(format!("invalid restart '{digits}' in '{s}'")))?;
                (name, Some(r))
            }
            None => (solver, None),
        };
        let solver = SolverKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| Error::ConfigError(format!("unknown solver '{name}'")))?;
        let preconditioner = PreconditionerKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(pc.trim()))
            .ok_or_else(|| Error::ConfigError(format!("unknown preconditioner '{pc}'")))?;
        match restart {
            Some(r) if solver == SolverKind::Gmres => Method::gmres(r, preconditioner),
            Some(_) => Err(Error::ConfigError(format!("only GMRES takes a restart length: '{s}'"))),
            None => Ok(Method::new(solver, preconditioner)),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered list of candidate methods; the position of an entry is its class
/// index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Method>", into = "Vec<Method>")]
pub struct MethodCatalog {
    entries: Vec<Method>,
}

impl TryFrom<Vec<Method>> for MethodCatalog {
    type Error = Error;

    fn try_from(entries: Vec<Method>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<MethodCatalog> for Vec<Method> {
    fn from(c: MethodCatalog) -> Self {
        c.entries
    }
}

impl Default for MethodCatalog {
    fn default() -> Self {
        let entries = SolverKind::ALL
            .into_iter()
            .flat_map(|s| PreconditionerKind::ALL.into_iter().map(move |p| Method::new(s, p)))
            .collect();
        Self { entries }
    }
}

impl MethodCatalog {
    pub fn new(entries: Vec<Method>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::ConfigError("a catalog needs at least two methods".into()));
        }
        for (i, m) in entries.iter().enumerate() {
            if entries[..i].contains(m) {
                return Err(Error::ConfigError(format!("duplicate catalog entry {m}")));
            }
        }
        Ok(Self { entries })
    }

    /// Parses a comma-separated list such as `cg+none,gmres+ilu0`.
    pub fn parse_list(list: &str) -> Result<Self> {
        Self::new(list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?)
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Method] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> Result<Method> {
        self.entries
            .get(index)
            .copied()
            .ok_or(Error::IndexError { index, len: self.entries.len() })
    }

    pub fn index_of(&self, method: Method) -> Option<usize> {
        self.entries.iter().position(|m| *m == method)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(ToString::to_string).collect()
    }

    /// Serialized form hashed by [`MethodCatalog::fingerprint`].
    pub fn canonical_string(&self) -> String {
        self.names().join(",")
    }

    /// First 16 hex digits of the SHA-256 of the canonical string.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        let mut out = String::with_capacity(16);
        for byte in &digest[..8] {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

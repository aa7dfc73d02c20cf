use crate::polyalg::{Polynomial, VarId};
use crate::problem::ModelSpec;

/// Polynomial equality `poly = 0` attached to one clique.
#[derive(Clone, Debug, PartialEq)]
pub struct SideCondition {
    pub clique: usize,
    pub poly: Polynomial,
}

/// Variable groups of the split criterion: fit cliques `0..T` followed by
/// penalty cliques `T..2T`.
#[derive(Clone, Debug, PartialEq)]
pub struct CliqueStructure {
    pub cliques: Vec<Vec<VarId>>,
    /// `overlaps[t-1]` is the set of signal variables shared by fit cliques
    /// `t-1` and `t`.
    pub overlaps: Vec<Vec<VarId>>,
    /// Signal variable shared by fit clique `t` and penalty clique `t`.
    pub couplings: Vec<VarId>,
    pub side_conditions: Vec<SideCondition>,
}

impl CliqueStructure {
    pub fn n_samples(&self) -> usize {
        self.couplings.len()
    }

    pub fn fit_clique(&self, t: usize) -> &[VarId] {
        &self.cliques[t]
    }

    pub fn penalty_clique(&self, t: usize) -> &[VarId] {
        &self.cliques[self.n_samples() + t]
    }

    pub fn side_conditions_of(&self, clique: usize) -> impl Iterator<Item = &Polynomial> {
        self.side_conditions.iter().filter(move |s| s.clique == clique).map(|s| &s.poly)
    }
}

pub fn build_cliques(spec: &ModelSpec) -> CliqueStructure {
    let t_len = spec.t;
    let mut cliques = Vec::with_capacity(2 * t_len);
    let mut side_conditions = Vec::new();
    for t in 0..t_len {
        let mut c: Vec<VarId> = spec.band(t).map(|j| spec.x_id(j)).collect();
        if spec.is_lifted() {
            c.push(spec.w_id(t));
            let coeffs: Vec<(VarId, f64)> = spec.band(t).map(|j| (spec.x_id(j), spec.h[t - j])).collect();
            let v = Polynomial::linear(0.0, &coeffs);
            side_conditions.push(SideCondition {
                clique: t,
                poly: &Polynomial::var(spec.w_id(t)).square() - &v.square(),
            });
        }
        cliques.push(c);
    }
    for t in 0..t_len {
        let mut c = vec![spec.x_id(t)];
        if spec.is_lifted() {
            c.push(spec.u_id(t));
            side_conditions.push(SideCondition {
                clique: t_len + t,
                poly: &Polynomial::var(spec.u_id(t)).square() - &Polynomial::var(spec.x_id(t)).square(),
            });
        }
        cliques.push(c);
    }
    let overlaps = (1..t_len)
        .map(|t| {
            cliques[t]
                .iter()
                .copied()
                .filter(|v| (*v as usize) < t_len && cliques[t - 1].contains(v))
                .collect()
        })
        .collect();
    CliqueStructure {
        cliques,
        overlaps,
        couplings: (0..t_len).map(|t| spec.x_id(t)).collect(),
        side_conditions,
    }
}

/// Running intersection property over an ordered list of cliques: each
/// clique's intersection with the union of its predecessors lies inside a
/// single predecessor.
pub fn verify_rip_sets(cliques: &[Vec<VarId>]) -> bool {
    let mut seen: Vec<VarId> = Vec::new();
    for (t, c) in cliques.iter().enumerate() {
        if t > 0 {
            let inter: Vec<VarId> = c.iter().copied().filter(|v| seen.contains(v)).collect();
            let covered = cliques[..t].iter().any(|p| inter.iter().all(|v| p.contains(v)));
            if !covered {
                return false;
            }
        }
        for &v in c {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
    }
    true
}

pub fn verify_rip(cs: &CliqueStructure) -> bool {
    verify_rip_sets(&cs.cliques)
}

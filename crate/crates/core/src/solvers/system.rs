//! Linear constraint system of a model class over the enlarged index
//! `theta_dates x paths`, shared by the primal and dual programs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::{enlarge, StopStatus};
use crate::lp::RowKind;
use crate::measures::{BandConditioning, ModelClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowRole {
    Mass,
    Martingale {
        date: usize,
        vertex: usize,
        status: Option<StopStatus>,
        coordinate: usize,
    },
    BandUpper {
        date: usize,
        vertex: usize,
        status: Option<StopStatus>,
        coordinate: usize,
    },
    BandLower {
        date: usize,
        vertex: usize,
        status: Option<StopStatus>,
        coordinate: usize,
    },
    Calibration {
        option: usize,
    },
}

impl RowRole {
    pub fn status(&self) -> Option<StopStatus> {
        match self {
            RowRole::Martingale { status, .. } | RowRole::BandUpper { status, .. } | RowRole::BandLower { status, .. } => {
                *status
            }
            _ => None,
        }
    }

    pub fn is_band(&self) -> bool {
        matches!(self, RowRole::BandUpper { .. } | RowRole::BandLower { .. })
    }
}

#[derive(Clone, Debug)]
pub struct SystemRow {
    pub role: RowRole,
    /// Coefficients on positions in `System::elements`.
    pub coeffs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// Rows `A w (<=, =, >=) b` over the enlarged elements of the included
/// paths. `elements[j] = (k, p)` is the stop-date position and path.
#[derive(Clone, Debug)]
pub struct System {
    pub theta_dates: Vec<usize>,
    pub num_paths: usize,
    pub elements: Vec<(usize, usize)>,
    pub rows: Vec<SystemRow>,
}

impl System {
    pub fn flat_index(&self, j: usize) -> usize {
        let (k, p) = self.elements[j];
        k * self.num_paths + p
    }
}

/// Builds the system for stop dates `theta_dates` (use `[T]` for plain path
/// measures). Paths with `include[p] == false` get no variables.
pub fn build_system(model: &ModelClass, theta_dates: &[usize], include: &[bool]) -> Result<System> {
    let tree = &model.tree;
    let n = tree.num_paths();
    let enl = enlarge(tree, theta_dates)?;
    let kk = enl.theta_dates.len();
    let mut pos = vec![usize::MAX; kk * n];
    let mut elements = Vec::new();
    for k in 0..kk {
        for p in 0..n {
            if include[p] {
                pos[k * n + p] = elements.len();
                elements.push((k, p));
            }
        }
    }
    let mut rows = vec![SystemRow {
        role: RowRole::Mass,
        coeffs: (0..elements.len()).map(|j| (j, 1.0)).collect(),
        kind: RowKind::Eq,
        rhs: 1.0,
    }];
    let dim = tree.dim();
    let aggregate_band = model.conditioning == BandConditioning::BaseAtom && kk > 1;
    for t in 0..tree.terminal() {
        for atom in &enl.atoms_by_date[t] {
            let v = atom.vertex;
            let vx = &tree.vertices[v];
            // (element position, child increment) for members of the atom.
            let mut members: Vec<(usize, Vec<f64>)> = Vec::new();
            for &c in &vx.children {
                let dx = tree.increment(v, c);
                for &k in &atom.thetas {
                    for p in tree.vertices[c].paths() {
                        let j = pos[k * n + p];
                        if j != usize::MAX {
                            members.push((j, dx.clone()));
                        }
                    }
                }
            }
            if members.is_empty() {
                continue;
            }
            for i in 0..dim {
                let coeffs: Vec<(usize, f64)> = members
                    .iter()
                    .filter(|(_, dx)| dx[i] != 0.0)
                    .map(|(j, dx)| (*j, dx[i]))
                    .collect();
                if !coeffs.is_empty() {
                    rows.push(SystemRow {
                        role: RowRole::Martingale {
                            date: t,
                            vertex: v,
                            status: Some(atom.status),
                            coordinate: i,
                        },
                        coeffs,
                        kind: RowKind::Eq,
                        rhs: 0.0,
                    });
                }
            }
            if !aggregate_band {
                let status = if kk > 1 { Some(atom.status) } else { None };
                push_band_rows(model, t, v, status, &members, &mut rows);
            }
        }
        if aggregate_band {
            for &v in &tree.by_date[t] {
                let vx = &tree.vertices[v];
                let mut members = Vec::new();
                for &c in &vx.children {
                    let dx = tree.increment(v, c);
                    for k in 0..kk {
                        for p in tree.vertices[c].paths() {
                            let j = pos[k * n + p];
                            if j != usize::MAX {
                                members.push((j, dx.clone()));
                            }
                        }
                    }
                }
                push_band_rows(model, t, v, None, &members, &mut rows);
            }
        }
    }
    for (i, g) in model.options.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = elements
            .iter()
            .enumerate()
            .filter(|(_, (_, p))| g[*p] != 0.0)
            .map(|(j, (_, p))| (j, g[*p]))
            .collect();
        if coeffs.is_empty() {
            continue;
        }
        rows.push(SystemRow {
            role: RowRole::Calibration { option: i },
            coeffs,
            kind: RowKind::Eq,
            rhs: 0.0,
        });
    }
    Ok(System {
        theta_dates: enl.theta_dates,
        num_paths: n,
        elements,
        rows,
    })
}

fn push_band_rows(
    model: &ModelClass,
    t: usize,
    v: usize,
    status: Option<StopStatus>,
    members: &[(usize, Vec<f64>)],
    rows: &mut Vec<SystemRow>,
) {
    let tree = &model.tree;
    if members.is_empty() || !tree.band_applies(t) {
        return;
    }
    let Some(band) = model.band.interval(v) else {
        return;
    };
    for i in 0..tree.x_dim {
        let upper: Vec<(usize, f64)> = members
            .iter()
            .map(|(j, dx)| (*j, dx[i] * dx[i] - band.hi[i]))
            .filter(|(_, a)| *a != 0.0)
            .collect();
        if upper.iter().any(|(_, a)| *a > 0.0) {
            rows.push(SystemRow {
                role: RowRole::BandUpper {
                    date: t,
                    vertex: v,
                    status,
                    coordinate: i,
                },
                coeffs: upper,
                kind: RowKind::Le,
                rhs: 0.0,
            });
        }
        if band.lo[i] > 0.0 {
            let lower: Vec<(usize, f64)> = members
                .iter()
                .map(|(j, dx)| (*j, dx[i] * dx[i] - band.lo[i]))
                .filter(|(_, a)| *a != 0.0)
                .collect();
            if lower.is_empty() {
                continue;
            }
            rows.push(SystemRow {
                role: RowRole::BandLower {
                    date: t,
                    vertex: v,
                    status,
                    coordinate: i,
                },
                coeffs: lower,
                kind: RowKind::Ge,
                rhs: 0.0,
            });
        }
    }
}

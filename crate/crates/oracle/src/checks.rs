//! The checks themselves. Every quantity is an exact finite sum; `ln 0`
//! is `-inf`, and cells where both sides of an identity are `-inf` are
//! left out of both.

use serde::Serialize;

use crate::{CondTable, Error, Joint, Result};

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn check_obs(values: impl IntoIterator<Item = usize>, size: usize) -> Result<()> {
    for value in values {
        if value >= size {
            return Err(Error::OutOfSupport { value, size });
        }
    }
    Ok(())
}

/// `p log p` summed, with `0 log 0 = 0`.
fn entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralReport {
    /// Largest `|P(a,b|c) - P(a|c) P(b|c)|` over all cells and choices of
    /// the conditioning language.
    pub independence: f64,
    /// Largest `|P(x|y,z) - P(x|y)|` or `|P(x|y,z) - P(x|z)|`.
    pub reduction: f64,
    /// Largest `|P(x|y,z) - sqrt(P(x|y) P(x|z))|`.
    pub sqrt_identity: f64,
    pub cells: usize,
}

impl StructuralReport {
    pub fn max_deviation(&self) -> f64 {
        self.independence
            .max(self.reduction)
            .max(self.sqrt_identity)
    }
}

/// Conditional-independence and the square-root identity, with every
/// language taking each role in turn.
pub fn check_structural_identities(j: &Joint) -> StructuralReport {
    let mut rep = StructuralReport {
        independence: 0.0,
        reduction: 0.0,
        sqrt_identity: 0.0,
        cells: 0,
    };
    for order in [[0, 1, 2], [1, 2, 0], [2, 0, 1]] {
        let j = j.permuted(order);
        for y in 0..j.ny {
            let py = j.py(y);
            for z in 0..j.nz {
                let pz = j.pz(z);
                let pyz = j.pyz(y, z);
                // with x as the conditioned-on variable: P(y,z|x) vs P(y|x) P(z|x)
                for x in 0..j.nx {
                    let px = j.px(x);
                    if px > 0.0 {
                        let lhs = j.p(x, y, z) / px;
                        let rhs = (j.pxy(x, y) / px) * (j.pxz(x, z) / px);
                        rep.independence = rep.independence.max((lhs - rhs).abs());
                    }
                }
                if pyz <= 0.0 {
                    continue;
                }
                for x in 0..j.nx {
                    rep.cells += 1;
                    let x_yz = j.p(x, y, z) / pyz;
                    let x_y = j.pxy(x, y) / py;
                    let x_z = j.pxz(x, z) / pz;
                    rep.reduction = rep
                        .reduction
                        .max((x_yz - x_y).abs())
                        .max((x_yz - x_z).abs());
                    rep.sqrt_identity = rep.sqrt_identity.max((x_yz - (x_y * x_z).sqrt()).abs());
                }
            }
        }
    }
    rep
}

/// `Σ_obs log Σ_{y,z} P(x|y,z) P(y,z)`.
pub fn exact_marginal_loglik(j: &Joint, obs: &[usize]) -> Result<f64> {
    check_obs(obs.iter().copied(), j.nx)?;
    let mut total = 0.0;
    for &x in obs {
        let mut s = 0.0;
        for y in 0..j.ny {
            for z in 0..j.nz {
                let pyz = j.pyz(y, z);
                if pyz > 0.0 {
                    s += j.p(x, y, z) / pyz * pyz;
                }
            }
        }
        total += ln(s);
    }
    Ok(total)
}

/// `Σ_obs log P(x)` from the x-marginal.
pub fn marginal_loglik_direct(j: &Joint, obs: &[usize]) -> Result<f64> {
    check_obs(obs.iter().copied(), j.nx)?;
    Ok(obs.iter().map(|&x| ln(j.px(x))).sum())
}

fn check_q(q: &CondTable, n_cond: usize, n_out: usize) -> Result<()> {
    if q.n_cond != n_cond || q.n_out != n_out {
        return Err(Error::Shape {
            got: q.n_cond * q.n_out,
            expected: n_cond * n_out,
        });
    }
    Ok(())
}

/// Pieces of the monolingual bound for one set of observations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    /// `E_q log P(x|y,z)`.
    pub reconstruction: f64,
    /// `½ E_q log P(x|y) + ½ E_q log P(x|z)`.
    pub weighted: f64,
    /// `E_q log P(x|y) + E_q log P(x|z)`, for reference.
    pub unweighted: f64,
    /// `E_q log P(y,z)`.
    pub prior: f64,
    /// `H(q(·,·|x))`.
    pub entropy: f64,
}

impl Decomposition {
    pub fn elbo(&self) -> f64 {
        self.reconstruction + self.prior + self.entropy
    }
}

/// `q` is indexed by `x` with outcomes `y * nz + z`.
pub fn elbo_mono_decomposed(j: &Joint, q: &CondTable, obs: &[usize]) -> Result<Decomposition> {
    check_obs(obs.iter().copied(), j.nx)?;
    check_q(q, j.nx, j.ny * j.nz)?;
    let mut d = Decomposition {
        reconstruction: 0.0,
        weighted: 0.0,
        unweighted: 0.0,
        prior: 0.0,
        entropy: 0.0,
    };
    for &x in obs {
        d.entropy += entropy(q.row(x));
        for y in 0..j.ny {
            for z in 0..j.nz {
                let w = q.q(x, y * j.nz + z);
                if w == 0.0 {
                    continue;
                }
                let pyz = j.pyz(y, z);
                let rec = if pyz > 0.0 {
                    ln(j.p(x, y, z) / pyz)
                } else {
                    f64::NEG_INFINITY
                };
                let (py, pz) = (j.py(y), j.pz(z));
                let x_y = if py > 0.0 {
                    ln(j.pxy(x, y) / py)
                } else {
                    f64::NEG_INFINITY
                };
                let x_z = if pz > 0.0 {
                    ln(j.pxz(x, z) / pz)
                } else {
                    f64::NEG_INFINITY
                };
                d.reconstruction += w * rec;
                d.weighted += w * (0.5 * x_y + 0.5 * x_z);
                d.unweighted += w * (x_y + x_z);
                d.prior += w * ln(pyz);
            }
        }
    }
    Ok(d)
}

/// `Σ_obs E_q[log P(x|y,z) + log P(y,z)] + H(q)`.
pub fn elbo_mono(j: &Joint, q: &CondTable, obs: &[usize]) -> Result<f64> {
    Ok(elbo_mono_decomposed(j, q, obs)?.elbo())
}

/// The exact posterior `P(y,z|x)` in the layout `elbo_mono` expects.
pub fn posterior_yz(j: &Joint) -> CondTable {
    CondTable::from_fn(j.nx, j.ny * j.nz, |x, o| j.p(x, o / j.nz, o % j.nz))
}

/// `P(z|x)`.
pub fn posterior_z_given_x(j: &Joint) -> CondTable {
    CondTable::from_fn(j.nx, j.nz, |x, z| j.pxz(x, z))
}

/// `P(z|y)`.
pub fn posterior_z_given_y(j: &Joint) -> CondTable {
    CondTable::from_fn(j.ny, j.nz, |y, z| j.pyz(y, z))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuxBound {
    /// `Σ log E_{z~P(z)} P(x,y|z)`.
    pub lhs: f64,
    /// Cross-translation terms plus the two `E log P(z)` terms.
    pub rhs: f64,
    /// `Σ H(q(z|x)) - E_{q(z|x)} log P(z)`: what the bound gives away when
    /// both `q`s equal the exact posterior.
    pub slack: f64,
}

/// The auxiliary-parallel-data bound over `pairs` of `(x, y)`.
pub fn elbo_aux(
    j: &Joint,
    q_from_x: &CondTable,
    q_from_y: &CondTable,
    pairs: &[(usize, usize)],
) -> Result<AuxBound> {
    check_obs(pairs.iter().map(|p| p.0), j.nx)?;
    check_obs(pairs.iter().map(|p| p.1), j.ny)?;
    check_q(q_from_x, j.nx, j.nz)?;
    check_q(q_from_y, j.ny, j.nz)?;
    let pz: Vec<f64> = (0..j.nz).map(|z| j.pz(z)).collect();
    let mut b = AuxBound {
        lhs: 0.0,
        rhs: 0.0,
        slack: 0.0,
    };
    for &(x, y) in pairs {
        let mut e = 0.0;
        for z in 0..j.nz {
            if pz[z] > 0.0 {
                e += pz[z] * (j.p(x, y, z) / pz[z]);
            }
        }
        b.lhs += ln(e);
        b.slack += entropy(q_from_x.row(x));
        for z in 0..j.nz {
            let (wy, wx) = (q_from_y.q(y, z), q_from_x.q(x, z));
            let x_z = if pz[z] > 0.0 {
                ln(j.pxz(x, z) / pz[z])
            } else {
                f64::NEG_INFINITY
            };
            let y_z = if pz[z] > 0.0 {
                ln(j.pyz(y, z) / pz[z])
            } else {
                f64::NEG_INFINITY
            };
            if wy > 0.0 {
                b.rhs += wy * (x_z + ln(pz[z]));
            }
            if wx > 0.0 {
                b.rhs += wx * (y_z + ln(pz[z]));
                b.slack -= wx * ln(pz[z]);
            }
        }
    }
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementGap {
    /// Largest per-pair `|cross-translation - (agreement - corrections + constants)|`.
    pub max_gap: f64,
    /// The same with the two `E log P(z)` corrections left out.
    pub max_gap_without_correction: f64,
    pub pairs: usize,
    /// Pairs with `P(x) = 0` or `P(y) = 0`, which have no identity to check.
    pub skipped: usize,
}

/// Compares `E_{q(z|x)} log P(y|z) + E_{q(z|y)} log P(x|z)` against
/// `E_{q(z|x)} log P(z|y) + E_{q(z|y)} log P(z|x) - E_{q(z|x)} log P(z)
/// - E_{q(z|y)} log P(z) + log P(y) + log P(x)` pair by pair. Where a `q`
/// puts mass on a `z` that cannot co-occur with the other sentence, both
/// sides are `-inf`; such cells are dropped and the constants are weighted
/// by the remaining mass.
pub fn agreement_identity_gap(
    j: &Joint,
    q_from_x: &CondTable,
    q_from_y: &CondTable,
    pairs: &[(usize, usize)],
) -> Result<AgreementGap> {
    check_obs(pairs.iter().map(|p| p.0), j.nx)?;
    check_obs(pairs.iter().map(|p| p.1), j.ny)?;
    check_q(q_from_x, j.nx, j.nz)?;
    check_q(q_from_y, j.ny, j.nz)?;
    let mut out = AgreementGap {
        max_gap: 0.0,
        max_gap_without_correction: 0.0,
        pairs: 0,
        skipped: 0,
    };
    for &(x, y) in pairs {
        let (px, py) = (j.px(x), j.py(y));
        if px <= 0.0 || py <= 0.0 {
            out.skipped += 1;
            continue;
        }
        out.pairs += 1;
        let (mut ct, mut agree, mut corr, mut consts) = (0.0, 0.0, 0.0, 0.0);
        // z ~ q(z|x) scores y; z ~ q(z|y) scores x
        let sides = [(q_from_x.row(x), py, false), (q_from_y.row(y), px, true)];
        for (q, marginal, scores_x) in sides {
            for (z, &w) in q.iter().enumerate() {
                let pz = j.pz(z);
                let pj = if scores_x { j.pxz(x, z) } else { j.pyz(y, z) };
                if w == 0.0 || pz <= 0.0 || pj <= 0.0 {
                    // both log P(.|z) and log P(z|.) are -inf here
                    continue;
                }
                ct += w * (pj / pz).ln();
                agree += w * (pj / marginal).ln();
                corr += w * pz.ln();
                consts += w * marginal.ln();
            }
        }
        let rhs = agree - corr + consts;
        out.max_gap = out.max_gap.max((ct - rhs).abs());
        out.max_gap_without_correction = out
            .max_gap_without_correction
            .max((ct - (rhs + corr)).abs());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupervisedReport {
    pub max_gap: f64,
    pub checked: usize,
    /// Cells with `P(x) = 0`.
    pub skipped: usize,
}

/// `log P(x,y) = log P(y|x) + log P(x)` cell by cell.
pub fn supervised_decomposition_check(
    j: &Joint,
    pairs: &[(usize, usize)],
) -> Result<SupervisedReport> {
    check_obs(pairs.iter().map(|p| p.0), j.nx)?;
    check_obs(pairs.iter().map(|p| p.1), j.ny)?;
    let mut r = SupervisedReport {
        max_gap: 0.0,
        checked: 0,
        skipped: 0,
    };
    for &(x, y) in pairs {
        let px = j.px(x);
        if px <= 0.0 {
            r.skipped += 1;
            continue;
        }
        r.checked += 1;
        let pxy = j.pxy(x, y);
        if pxy <= 0.0 {
            continue;
        }
        let gap = (pxy.ln() - ((pxy / px).ln() + px.ln())).abs();
        r.max_gap = r.max_gap.max(gap);
    }
    Ok(r)
}

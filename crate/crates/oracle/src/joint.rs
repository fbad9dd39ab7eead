use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution};

use crate::{Error, Result};

pub const MAX_SUPPORT: usize = 8;
const TOL: f64 = 1e-12;

/// An explicit joint table `P(x, y, z)`, row-major in `(x, y, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub table: Vec<f64>,
}

impl Joint {
    pub fn from_table(nx: usize, ny: usize, nz: usize, table: Vec<f64>) -> Result<Self> {
        for n in [nx, ny, nz] {
            if !(1..=MAX_SUPPORT).contains(&n) {
                return Err(Error::Support {
                    got: (nx, ny, nz),
                    max: MAX_SUPPORT,
                });
            }
        }
        if table.len() != nx * ny * nz {
            return Err(Error::Shape {
                got: table.len(),
                expected: nx * ny * nz,
            });
        }
        let sum: f64 = table.iter().sum();
        if table.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > TOL {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self { nx, ny, nz, table })
    }

    pub fn p(&self, x: usize, y: usize, z: usize) -> f64 {
        self.table[(x * self.ny + y) * self.nz + z]
    }

    pub fn px(&self, x: usize) -> f64 {
        (0..self.ny)
            .flat_map(|y| (0..self.nz).map(move |z| (y, z)))
            .map(|(y, z)| self.p(x, y, z))
            .sum()
    }

    pub fn py(&self, y: usize) -> f64 {
        (0..self.nx)
            .flat_map(|x| (0..self.nz).map(move |z| (x, z)))
            .map(|(x, z)| self.p(x, y, z))
            .sum()
    }

    pub fn pz(&self, z: usize) -> f64 {
        (0..self.nx)
            .flat_map(|x| (0..self.ny).map(move |y| (x, y)))
            .map(|(x, y)| self.p(x, y, z))
            .sum()
    }

    pub fn pxy(&self, x: usize, y: usize) -> f64 {
        (0..self.nz).map(|z| self.p(x, y, z)).sum()
    }

    pub fn pxz(&self, x: usize, z: usize) -> f64 {
        (0..self.ny).map(|y| self.p(x, y, z)).sum()
    }

    pub fn pyz(&self, y: usize, z: usize) -> f64 {
        (0..self.nx).map(|x| self.p(x, y, z)).sum()
    }

    /// The same distribution with the roles of the three languages permuted:
    /// `order[i]` names which original axis becomes axis `i`.
    pub fn permuted(&self, order: [usize; 3]) -> Joint {
        let dims = [self.nx, self.ny, self.nz];
        let nd = [dims[order[0]], dims[order[1]], dims[order[2]]];
        let mut table = vec![0.0; self.table.len()];
        for a in 0..nd[0] {
            for b in 0..nd[1] {
                for c in 0..nd[2] {
                    let mut orig = [0; 3];
                    orig[order[0]] = a;
                    orig[order[1]] = b;
                    orig[order[2]] = c;
                    table[(a * nd[1] + b) * nd[2] + c] = self.p(orig[0], orig[1], orig[2]);
                }
            }
        }
        Joint {
            nx: nd[0],
            ny: nd[1],
            nz: nd[2],
            table,
        }
    }

    /// Moves `eps` of probability mass onto one cell and renormalizes.
    pub fn perturbed(&self, cell: usize, eps: f64) -> Joint {
        let mut table = self.table.clone();
        table[cell] += eps;
        let s: f64 = table.iter().sum();
        table.iter_mut().for_each(|p| *p /= s);
        Joint {
            table,
            ..self.clone()
        }
    }
}

/// A conditional table `q(out | cond)`; each row sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct CondTable {
    pub n_cond: usize,
    pub n_out: usize,
    pub probs: Vec<f64>,
}

impl CondTable {
    pub fn new(n_cond: usize, n_out: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_cond * n_out {
            return Err(Error::Shape {
                got: probs.len(),
                expected: n_cond * n_out,
            });
        }
        for row in probs.chunks(n_out) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > TOL {
                return Err(Error::NotNormalized(s));
            }
        }
        Ok(Self {
            n_cond,
            n_out,
            probs,
        })
    }

    pub fn uniform(n_cond: usize, n_out: usize) -> Self {
        Self {
            n_cond,
            n_out,
            probs: vec![1.0 / n_out as f64; n_cond * n_out],
        }
    }

    /// Rows drawn from a symmetric Dirichlet(1).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_cond: usize, n_out: usize) -> Self {
        let probs = (0..n_cond).flat_map(|_| dirichlet1(rng, n_out)).collect();
        Self {
            n_cond,
            n_out,
            probs,
        }
    }

    /// Builds each row from `f(cond, out)` (unnormalized) and normalizes;
    /// an all-zero row becomes uniform.
    pub fn from_fn(n_cond: usize, n_out: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut probs = Vec::with_capacity(n_cond * n_out);
        for c in 0..n_cond {
            let row: Vec<f64> = (0..n_out).map(|o| f(c, o)).collect();
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                probs.extend(row.iter().map(|p| p / s));
            } else {
                probs.extend(std::iter::repeat(1.0 / n_out as f64).take(n_out));
            }
        }
        Self {
            n_cond,
            n_out,
            probs,
        }
    }

    /// One-hot at the row maximum (lowest index on ties).
    pub fn mode(&self) -> Self {
        Self::from_fn(self.n_cond, self.n_out, |c, o| {
            let row = self.row(c);
            let best = (0..self.n_out).fold(0, |b, i| if row[i] > row[b] { i } else { b });
            f64::from(u8::from(o == best))
        })
    }

    pub fn row(&self, cond: usize) -> &[f64] {
        &self.probs[cond * self.n_out..(cond + 1) * self.n_out]
    }

    pub fn q(&self, cond: usize, out: usize) -> f64 {
        self.probs[cond * self.n_out + out]
    }
}

pub(crate) fn dirichlet1<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    Dirichlet::new(&vec![1.0; n]).expect("n >= 2").sample(rng)
}

/// A joint generated by a latent concept `c`:
/// `P(x,y,z) = Σ_c P(c) P(x|c) P(y|c) P(z|c)`.
///
/// Every value of every language belongs to exactly one concept (its
/// conditional is supported on that concept's block), so any one variable
/// determines `c` and the other two are conditionally independent given it.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyJoint {
    pub concepts: usize,
    pub p_c: Vec<f64>,
    /// Per language, the concept each value belongs to.
    pub blocks: [Vec<usize>; 3],
    /// Per language, `P(value | c)` as a concepts × support table.
    pub conditionals: [CondTable; 3],
    pub joint: Joint,
}

impl ToyJoint {
    /// Samples concept and block-conditional tables from Dirichlet(1).
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        sizes: (usize, usize, usize),
        concepts: usize,
    ) -> Result<Self> {
        let dims = [sizes.0, sizes.1, sizes.2];
        if dims.iter().any(|n| !(1..=MAX_SUPPORT).contains(n)) {
            return Err(Error::Support {
                got: sizes,
                max: MAX_SUPPORT,
            });
        }
        if concepts < 1 || concepts > *dims.iter().min().unwrap() {
            return Err(Error::Concepts(concepts));
        }
        let p_c = dirichlet1(rng, concepts);
        let mut blocks: [Vec<usize>; 3] = Default::default();
        for (b, &n) in blocks.iter_mut().zip(&dims) {
            let mut owner: Vec<usize> = (0..n)
                .map(|v| {
                    if v < concepts {
                        v
                    } else {
                        rng.gen_range(0..concepts)
                    }
                })
                .collect();
            owner.shuffle(rng);
            *b = owner;
        }
        let conditionals = [0, 1, 2].map(|lang| {
            let n = dims[lang];
            let mut probs = vec![0.0; concepts * n];
            for c in 0..concepts {
                let members: Vec<usize> = (0..n).filter(|&v| blocks[lang][v] == c).collect();
                for (v, p) in members.iter().zip(dirichlet1(rng, members.len())) {
                    probs[c * n + v] = p;
                }
            }
            CondTable {
                n_cond: concepts,
                n_out: n,
                probs,
            }
        });
        Self::from_parts(p_c, blocks, conditionals)
    }

    /// Each concept has exactly one value per language.
    pub fn deterministic<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Self> {
        let p_c = dirichlet1(rng, n);
        let blocks = [0, 1, 2].map(|_| {
            let mut b: Vec<usize> = (0..n).collect();
            b.shuffle(rng);
            b
        });
        let conditionals = [0, 1, 2]
            .map(|l| CondTable::from_fn(n, n, |c, v| f64::from(u8::from(blocks[l][v] == c))));
        Self::from_parts(p_c, blocks, conditionals)
    }

    fn from_parts(
        p_c: Vec<f64>,
        blocks: [Vec<usize>; 3],
        conditionals: [CondTable; 3],
    ) -> Result<Self> {
        let [cx, cy, cz] = &conditionals;
        let (nx, ny, nz) = (cx.n_out, cy.n_out, cz.n_out);
        let mut table = vec![0.0; nx * ny * nz];
        for (c, &pc) in p_c.iter().enumerate() {
            for x in 0..nx {
                for y in 0..ny {
                    for z in 0..nz {
                        table[(x * ny + y) * nz + z] += pc * cx.q(c, x) * cy.q(c, y) * cz.q(c, z);
                    }
                }
            }
        }
        // Dirichlet draws are normalized only to rounding; fix the total.
        let s: f64 = table.iter().sum();
        table.iter_mut().for_each(|p| *p /= s);
        let joint = Joint::from_table(nx, ny, nz, table)?;
        Ok(Self {
            concepts: p_c.len(),
            p_c,
            blocks,
            conditionals,
            joint,
        })
    }
}

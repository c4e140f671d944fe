//! Reed–Muller erasure code with line-based local decoding.
//!
//! A message of `K = C(r + deg, deg)` symbols is interpolated by the unique
//! polynomial of total degree `<= deg` on the principal lattice (integer points
//! with coordinate sum `<= deg`), and the codeword is that polynomial evaluated
//! on all of `F_q^r`. Symbol `i` of the message is recovered from the `q - 1`
//! points of any line through the `i`-th lattice point, as long as at most
//! `floor(delta * (q - 1))` of them are erased.
//!
//! Points are indexed by `sum_k c_k * q^k`, i.e. the first coordinate varies
//! fastest. Every node derives the same index/point mapping locally.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gfield::{self, FPoint, FieldElement, FieldError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LdcError {
    #[error("invalid code parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("message has {got} symbols, code expects {expected}")]
    MessageLength { expected: usize, got: usize },
    #[error("codeword has {got} symbols, code expects {expected}")]
    CodewordLength { expected: usize, got: usize },
    #[error("{got} responses for a plan with {expected} queries")]
    ResponseLength { expected: usize, got: usize },
    #[error("message index {0} out of range")]
    TargetOutOfRange(usize),
    #[error("query direction must be a nonzero point of the right dimension")]
    BadDirection,
    #[error("unerased positions determine only rank {rank} of {k}")]
    Underdetermined { rank: usize, k: usize },
    #[error("codeword is not consistent with any low-degree polynomial")]
    Inconsistent,
}

pub type Result<T> = std::result::Result<T, LdcError>;

/// Configuration of the Reed–Muller code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdcParams {
    pub q: u32,
    pub r: usize,
    pub delta: Ratio<u64>,
    /// Total degree bound of the interpolating polynomial.
    pub deg: usize,
    /// Message length.
    pub k: usize,
    /// Codeword length, `q^r`.
    pub n: usize,
    /// Rate `K / N`.
    pub rho: Ratio<u64>,
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Instantiates the code for field size `q`, dimension `r` and erasure
/// tolerance `delta`, with `deg = floor((1 - delta)(q - 1)) - 1`.
pub fn make_params(q: u32, r: usize, delta: Ratio<u64>) -> Result<LdcParams> {
    gfield::check_modulus(q)?;
    if r == 0 {
        return Err(LdcError::Params("r must be at least 1".into()));
    }
    let zero = Ratio::from_integer(0);
    let one = Ratio::from_integer(1);
    if delta <= zero || delta >= one {
        return Err(LdcError::Params(format!("delta {delta} outside (0, 1)")));
    }
    let span = ((one - delta) * Ratio::from_integer(q as u64 - 1))
        .floor()
        .to_integer();
    if span < 1 {
        return Err(LdcError::Params(format!(
            "q = {q} too small for delta = {delta}: degree bound would be negative"
        )));
    }
    let deg = span as usize - 1;
    let n = (q as usize)
        .checked_pow(r as u32)
        .filter(|&n| n <= 1 << 24)
        .ok_or_else(|| LdcError::Params(format!("q^r too large for q = {q}, r = {r}")))?;
    let k = binomial(r + deg, deg);
    Ok(LdcParams {
        q,
        r,
        delta,
        deg,
        k,
        n,
        rho: Ratio::new(k as u64, n as u64),
    })
}

impl LdcParams {
    /// Largest number of erased queries a local decode tolerates.
    pub fn erasure_threshold(&self) -> usize {
        (self.delta * Ratio::from_integer(self.q as u64 - 1))
            .floor()
            .to_integer() as usize
    }

    /// Payload bits packed into one symbol, `floor(log2 q)`.
    pub fn bits_per_symbol(&self) -> usize {
        (u32::BITS - 1 - self.q.leading_zeros()) as usize
    }

    /// Number of distinct lines through any point.
    pub fn num_directions(&self) -> usize {
        (self.n - 1) / (self.q as usize - 1)
    }

    pub fn point(&self, index: usize) -> FPoint {
        assert!(index < self.n, "point index {index} out of range");
        let q = self.q as usize;
        let mut rest = index;
        let values: Vec<u32> = (0..self.r)
            .map(|_| {
                let c = rest % q;
                rest /= q;
                c as u32
            })
            .collect();
        FPoint::from_values(&values, self.q).expect("validated modulus")
    }

    pub fn index_of(&self, p: &FPoint) -> usize {
        assert_eq!(p.dim(), self.r, "point dimension mismatch");
        p.coords()
            .iter()
            .rev()
            .fold(0usize, |acc, c| acc * self.q as usize + c.value() as usize)
    }

    /// Lower bound on `K` for this instantiation: `N / ((2/(1-delta)) r)^r`.
    pub fn rate_lower_bound(&self) -> f64 {
        let one_minus = 1.0 - *self.delta.numer() as f64 / *self.delta.denom() as f64;
        let base = 2.0 / one_minus * self.r as f64;
        self.n as f64 / base.powi(self.r as i32)
    }
}

/// The principal lattice of total degree `deg`, ordered by point index.
pub fn interpolation_set(params: &LdcParams) -> Vec<FPoint> {
    exponent_vectors(params.r, params.deg)
        .into_iter()
        .map(|e| {
            let values: Vec<u32> = e.iter().map(|&x| x as u32).collect();
            FPoint::from_values(&values, params.q).expect("validated modulus")
        })
        .collect()
}

// All vectors of length r with nonnegative entries summing to <= deg, in the
// same order as their point indices (first coordinate fastest).
fn exponent_vectors(r: usize, deg: usize) -> Vec<Vec<usize>> {
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, out);
        }
    }
    let mut out = Vec::new();
    rec(0, deg, &mut vec![0; r], &mut out);
    out.sort_by_key(|e| e.iter().rev().fold(0usize, |acc, &c| acc * (deg + 1) + c));
    out
}

/// A message of `K` field symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message(pub Vec<FieldElement>);

/// A codeword of `N` symbols, `None` marking an erasure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Codeword(pub Vec<Option<FieldElement>>);

impl Codeword {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn erasures(&self) -> usize {
        self.0.iter().filter(|s| s.is_none()).count()
    }

    pub fn erase(&mut self, positions: impl IntoIterator<Item = usize>) {
        for p in positions {
            self.0[p] = None;
        }
    }
}

/// The non-adaptive query set of one local decode: the `q - 1` points
/// `s_i + a * direction`, `a = 1..q-1`, in order of `a`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryPlan {
    pub target_index: usize,
    pub direction: FPoint,
    pub queries: Vec<usize>,
}

/// Precomputed encoder/decoder for one parameter set.
#[derive(Debug, Clone)]
pub struct ReedMullerCode {
    params: LdcParams,
    lattice: Vec<FPoint>,
    lattice_index: Vec<usize>,
    monomials: Vec<Vec<usize>>,
    /// `interp[i][m]`: monomial `m` evaluated at lattice point `i`.
    interp: Vec<Vec<FieldElement>>,
    /// `evals[p][m]`: monomial `m` evaluated at point `p`.
    evals: Vec<Vec<FieldElement>>,
    directions: Vec<FPoint>,
    /// `lines[i][d]`: query positions of the line through `s_i` along
    /// canonical direction `d`.
    lines: Vec<Vec<Vec<usize>>>,
}

impl ReedMullerCode {
    pub fn new(params: LdcParams) -> Self {
        let lattice = interpolation_set(&params);
        let lattice_index = lattice.iter().map(|p| params.index_of(p)).collect();
        let monomials = exponent_vectors(params.r, params.deg);
        let eval_monomial = |p: &FPoint, e: &[usize]| {
            p.coords()
                .iter()
                .zip(e)
                .fold(FieldElement::one(params.q), |acc, (&c, &x)| acc * c.pow(x as u64))
        };
        let interp = lattice
            .iter()
            .map(|p| monomials.iter().map(|e| eval_monomial(p, e)).collect())
            .collect();
        let evals = (0..params.n)
            .map(|i| {
                let p = params.point(i);
                monomials.iter().map(|e| eval_monomial(&p, e)).collect()
            })
            .collect();
        let directions = canonical_directions(&params);
        let lines = lattice
            .iter()
            .map(|s| {
                directions
                    .iter()
                    .map(|dir| {
                        (1..params.q)
                            .map(|a| {
                                let a = FieldElement::reduce(a as u64, params.q);
                                params.index_of(&s.along(a, dir))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            params,
            lattice,
            lattice_index,
            monomials,
            interp,
            evals,
            directions,
            lines,
        }
    }

    pub fn params(&self) -> &LdcParams {
        &self.params
    }

    pub fn lattice(&self) -> &[FPoint] {
        &self.lattice
    }

    /// Codeword position of lattice point `s_i`.
    pub fn target_position(&self, i: usize) -> usize {
        self.lattice_index[i]
    }

    pub fn monomials(&self) -> &[Vec<usize>] {
        &self.monomials
    }

    /// Canonical line directions: first nonzero coordinate equal to one.
    pub fn directions(&self) -> &[FPoint] {
        &self.directions
    }

    pub fn encode(&self, m: &Message) -> Result<Codeword> {
        if m.0.len() != self.params.k {
            return Err(LdcError::MessageLength {
                expected: self.params.k,
                got: m.0.len(),
            });
        }
        if let Some(bad) = m.0.iter().find(|s| s.modulus() != self.params.q) {
            return Err(FieldError::ModulusMismatch(self.params.q, bad.modulus()).into());
        }
        let coeffs = gfield::solve_linear(&self.interp, &m.0)?;
        Ok(Codeword(
            gfield::mat_vec(&self.evals, &coeffs)
                .into_iter()
                .map(Some)
                .collect(),
        ))
    }

    pub fn make_query_plan(&self, i: usize, direction: &FPoint) -> Result<QueryPlan> {
        if i >= self.params.k {
            return Err(LdcError::TargetOutOfRange(i));
        }
        if direction.dim() != self.params.r
            || direction.is_zero()
            || direction.coords().iter().any(|c| c.modulus() != self.params.q)
        {
            return Err(LdcError::BadDirection);
        }
        let center = &self.lattice[i];
        let queries = (1..self.params.q)
            .map(|a| {
                let a = FieldElement::reduce(a as u64, self.params.q);
                self.params.index_of(&center.along(a, direction))
            })
            .collect();
        Ok(QueryPlan {
            target_index: i,
            direction: direction.clone(),
            queries,
        })
    }

    /// Query positions of the line through `s_i` along canonical direction `d`.
    pub fn line(&self, i: usize, d: usize) -> &[usize] {
        &self.lines[i][d]
    }

    /// Plan along the `d`-th canonical direction.
    pub fn plan_for_direction(&self, i: usize, d: usize) -> Result<QueryPlan> {
        if i >= self.params.k {
            return Err(LdcError::TargetOutOfRange(i));
        }
        let dir = self.directions.get(d).ok_or(LdcError::BadDirection)?;
        Ok(QueryPlan {
            target_index: i,
            direction: dir.clone(),
            queries: self.lines[i][d].clone(),
        })
    }

    /// Decodes `m[plan.target_index]` from the line responses; `Ok(None)` when
    /// too many of them are erased.
    pub fn local_decode(
        &self,
        plan: &QueryPlan,
        responses: &[Option<FieldElement>],
    ) -> Result<Option<FieldElement>> {
        let expected = plan.queries.len();
        if responses.len() != expected {
            return Err(LdcError::ResponseLength {
                expected,
                got: responses.len(),
            });
        }
        let erased = responses.iter().filter(|r| r.is_none()).count();
        if erased > self.params.erasure_threshold() {
            return Ok(None);
        }
        let samples: Vec<_> = responses
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.map(|y| (FieldElement::reduce(k as u64 + 1, self.params.q), y)))
            .collect();
        match gfield::lagrange_at_zero(&samples, self.params.deg) {
            Ok(v) => Ok(Some(v)),
            Err(FieldError::InconsistentSample { .. }) => Err(LdcError::Inconsistent),
            Err(e) => Err(e.into()),
        }
    }

    /// Recovers the whole message from every unerased position by an exact
    /// linear solve.
    pub fn block_decode(&self, c: &Codeword) -> Result<Message> {
        if c.len() != self.params.n {
            return Err(LdcError::CodewordLength {
                expected: self.params.n,
                got: c.len(),
            });
        }
        let k = self.params.k;
        let mut rows: Vec<Vec<FieldElement>> = c
            .0
            .iter()
            .enumerate()
            .filter_map(|(p, s)| {
                s.map(|v| {
                    let mut row = self.evals[p].clone();
                    row.push(v);
                    row
                })
            })
            .collect();
        let mut rank = 0;
        for col in 0..k {
            let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
                continue;
            };
            rows.swap(rank, pivot);
            let inv = rows[rank][col].inv()?;
            for e in rows[rank].iter_mut() {
                *e = *e * inv;
            }
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && !row[col].is_zero() {
                    let f = row[col];
                    for (e, &p) in row.iter_mut().zip(&pivot_row) {
                        *e = *e - f * p;
                    }
                }
            }
            rank += 1;
        }
        if rows[rank..].iter().any(|row| !row[k].is_zero()) {
            return Err(LdcError::Inconsistent);
        }
        if rank < k {
            return Err(LdcError::Underdetermined { rank, k });
        }
        let coeffs: Vec<FieldElement> = rows[..k].iter().map(|row| row[k]).collect();
        Ok(Message(gfield::mat_vec(&self.interp, &coeffs)))
    }
}

/// One representative per line direction, ordered by point index.
pub fn canonical_directions(params: &LdcParams) -> Vec<FPoint> {
    (1..params.n)
        .map(|i| params.point(i))
        .filter(|p| {
            p.coords()
                .iter()
                .find(|c| !c.is_zero())
                .is_some_and(|c| c.value() == 1)
        })
        .collect()
}

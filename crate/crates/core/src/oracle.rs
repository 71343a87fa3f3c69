//! Exact finite-state analysis of capped CPVL / CPLI on tiny graphs.
//!
//! Configurations in `{0..=cap}^V` are indexed in mixed radix (base
//! `cap + 1`, vertex 0 least significant). Transient laws are computed by
//! uniformization in time chunks with `q Δt <= 20`, which keeps every
//! Poisson weight representable.

use serde::Serialize;

use crate::engine::Configuration;
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::rates::{InfectionRate, Load, RateModel};

pub const MAX_VERTICES: usize = 6;
pub const MAX_CAP: Load = 4;
pub const MAX_STATES: usize = 1_000_000;
pub const DEFAULT_TOL: f64 = 1e-10;
const CHUNK_RATE_TIME: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessTag {
    Cpvl,
    Cpli,
}

/// Sparse generator `Q` in compressed-row form (off-diagonal entries) plus its diagonal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorModel {
    pub tag: ProcessTag,
    pub vertices: usize,
    pub cap: Load,
    pub states: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
    diag: Vec<f64>,
}

impl GeneratorModel {
    pub fn encode(&self, c: &Configuration) -> usize {
        let base = self.cap as usize + 1;
        c.loads().iter().rev().fold(0, |acc, &l| acc * base + l as usize)
    }

    pub fn decode(&self, mut idx: usize) -> Configuration {
        let base = self.cap as usize + 1;
        let mut loads = vec![0; self.vertices];
        for l in loads.iter_mut() {
            *l = (idx % base) as Load;
            idx /= base;
        }
        Configuration::from_loads(loads)
    }

    /// Off-diagonal entries `(target, rate)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.rates[k]))
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    pub fn nonzeros(&self) -> usize {
        self.cols.len()
    }

    /// Largest `|Σ_j Q_ij|` over rows.
    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.states)
            .map(|i| (self.row(i).map(|(_, r)| r).sum::<f64>() + self.diag[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().map(|d| -d).fold(0.0, f64::max)
    }

    /// Point mass at `c`.
    pub fn delta(&self, c: &Configuration) -> Result<Vec<f64>> {
        if c.len() != self.vertices || c.max_load() > self.cap {
            return Err(Error::invalid("configuration is outside the oracle state space"));
        }
        let mut p = vec![0.0; self.states];
        p[self.encode(c)] = 1.0;
        Ok(p)
    }

    /// Law of the value at `v` under the distribution `p`.
    pub fn vertex_marginal(&self, p: &[f64], v: usize) -> Vec<f64> {
        let base = self.cap as usize + 1;
        let stride = base.pow(v as u32);
        let mut out = vec![0.0; base];
        for (i, &pi) in p.iter().enumerate() {
            out[(i / stride) % base] += pi;
        }
        out
    }
}

/// Assemble the generator of CPVL (`Λ` = `infection`) or CPLI (`λ` = `infection.lambda()`).
#[allow(clippy::needless_range_loop)]
pub fn build_generator(g: &Graph, m: &RateModel, infection: &InfectionRate, tag: ProcessTag) -> Result<GeneratorModel> {
    let n = g.vertex_count();
    let cap = m
        .max_load()
        .ok_or_else(|| Error::invalid(format!("{m} has unbounded loads; the oracle needs a capped model")))?;
    let states = (cap as u128 + 1).pow(n as u32);
    if n > MAX_VERTICES || cap > MAX_CAP || states > MAX_STATES as u128 {
        return Err(Error::StateSpaceTooLarge { states, limit: MAX_STATES });
    }
    if tag == ProcessTag::Cpli && infection.as_constant().is_none() {
        return Err(Error::invalid("CPLI uses a constant reset rate λ"));
    }
    let states = states as usize;
    let mut gen = GeneratorModel {
        tag,
        vertices: n,
        cap,
        states,
        row_ptr: Vec::with_capacity(states + 1),
        cols: Vec::new(),
        rates: Vec::new(),
        diag: vec![0.0; states],
    };
    let base = cap as usize + 1;
    let strides: Vec<usize> = (0..n).map(|v| base.pow(v as u32)).collect();
    let lambda = infection.lambda();
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(3 * n);
    gen.row_ptr.push(0);
    for i in 0..states {
        let c = gen.decode(i);
        row.clear();
        for x in 0..n {
            let l = c.get(x);
            let (up, down, jump) = match tag {
                ProcessTag::Cpvl => {
                    let jump = if l == 0 {
                        g.neighbors(x).iter().filter(|&&y| c.get(y) > 0).map(|&y| infection.rate(c.get(y))).sum()
                    } else {
                        0.0
                    };
                    (m.birth(l), m.death(l), jump)
                }
                ProcessTag::Cpli => {
                    let jump = if l > 0 {
                        lambda * g.neighbors(x).iter().filter(|&&y| c.get(y) == 0).count() as f64
                    } else {
                        0.0
                    };
                    (m.death(l + 1), m.birth(l), jump)
                }
            };
            if up > 0.0 {
                if l >= cap {
                    return Err(Error::invalid(format!("positive up-rate at the cap {cap}")));
                }
                row.push((i + strides[x], up));
            }
            if down > 0.0 {
                row.push((i - strides[x], down));
            }
            if jump > 0.0 {
                // CPVL: 0 -> 1; CPLI: l -> 0
                let target = match tag {
                    ProcessTag::Cpvl => i + strides[x],
                    ProcessTag::Cpli => i - l as usize * strides[x],
                };
                row.push((target, jump));
            }
        }
        let exit: f64 = row.iter().map(|(_, r)| r).sum();
        gen.diag[i] = -exit;
        for &(j, r) in &row {
            gen.cols.push(j);
            gen.rates.push(r);
        }
        gen.row_ptr.push(gen.cols.len());
    }
    Ok(gen)
}

/// `p e^{tQ}` by uniformization, Poisson tail cut at `tol` in total.
pub fn transient_distribution(gen: &GeneratorModel, init: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
    if init.len() != gen.states {
        return Err(Error::invalid("initial distribution has the wrong length"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("time {t} must be finite and >= 0")));
    }
    let q = gen.max_exit_rate();
    if t == 0.0 || q == 0.0 {
        return Ok(init.to_vec());
    }
    let chunks = ((q * t) / CHUNK_RATE_TIME).ceil().max(1.0) as usize;
    let dt = t / chunks as f64;
    let chunk_tol = tol / chunks as f64;
    let mut p = init.to_vec();
    let mut term = vec![0.0; gen.states];
    let mut next = vec![0.0; gen.states];
    let mut acc = vec![0.0; gen.states];
    for _ in 0..chunks {
        let a = q * dt;
        let mut w = (-a).exp();
        let mut mass = w;
        term.copy_from_slice(&p);
        for (o, &x) in acc.iter_mut().zip(&term) {
            *o = w * x;
        }
        let mut k = 0usize;
        while 1.0 - mass > chunk_tol && k < 10_000 {
            k += 1;
            // term <- term · P with P = I + Q/q
            next.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..gen.states {
                let v = term[i];
                if v == 0.0 {
                    continue;
                }
                next[i] += v * (1.0 + gen.diag[i] / q);
                for (j, r) in gen.row(i) {
                    next[j] += v * r / q;
                }
            }
            std::mem::swap(&mut term, &mut next);
            w *= a / k as f64;
            mass += w;
            for (o, &x) in acc.iter_mut().zip(&term) {
                *o += w * x;
            }
        }
        for x in acc.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        p.copy_from_slice(&acc);
    }
    Ok(p)
}

/// Mass at the all-zero configuration at time `t` (CPVL: extinction by `t`).
pub fn exact_extinction_probability(gen: &GeneratorModel, init: &Configuration, t: f64) -> Result<f64> {
    if gen.tag != ProcessTag::Cpvl {
        return Err(Error::invalid("extinction probability needs a CPVL generator"));
    }
    let p = transient_distribution(gen, &gen.delta(init)?, t, DEFAULT_TOL)?;
    Ok(p[0])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityGap {
    /// `P(η_t ≤ ξ₀ | η₀)`.
    pub lhs: f64,
    /// `P(ξ_t ≥ η₀ | ξ₀)`.
    pub rhs: f64,
    pub gap: f64,
    pub state_space_size: usize,
}

/// Both sides of the duality identity from the exact transient laws.
pub fn exact_duality_gap(
    g: &Graph,
    m: &RateModel,
    lambda: f64,
    eta0: &Configuration,
    xi0: &Configuration,
    t: f64,
    tol: f64,
) -> Result<DualityGap> {
    let inf = InfectionRate::constant(lambda)?;
    let fwd = build_generator(g, m, &inf, ProcessTag::Cpvl)?;
    let dual = build_generator(g, m, &inf, ProcessTag::Cpli)?;
    let p = transient_distribution(&fwd, &fwd.delta(eta0)?, t, tol)?;
    let r = transient_distribution(&dual, &dual.delta(xi0)?, t, tol)?;
    let lhs: f64 = (0..fwd.states).filter(|&i| fwd.decode(i).le(xi0)).map(|i| p[i]).sum();
    let rhs: f64 = (0..dual.states).filter(|&i| eta0.le(&dual.decode(i))).map(|i| r[i]).sum();
    Ok(DualityGap { lhs, rhs, gap: (lhs - rhs).abs(), state_space_size: fwd.states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphKind;

    fn single() -> Graph {
        Graph::build(GraphKind::Complete { n: 1 }).unwrap()
    }

    #[test]
    fn single_vertex_cpvl_matches_hand_matrix() {
        // K = 1 power_law(2): loads {0,1,2}; b(1)=1, d(1)=2, d(2)=3
        let m = RateModel::power_law(2.0).unwrap().capped(1).unwrap();
        let inf = InfectionRate::constant(1.0).unwrap();
        let q = build_generator(&single(), &m, &inf, ProcessTag::Cpvl).unwrap();
        assert_eq!(q.states, 3);
        let dense = |i: usize| {
            let mut r = vec![0.0; 3];
            r[i] = q.diagonal(i);
            for (j, v) in q.row(i) {
                r[j] += v;
            }
            r
        };
        assert_eq!(dense(0), vec![0.0, 0.0, 0.0]);
        assert_eq!(dense(1), vec![2.0, -3.0, 1.0]);
        assert_eq!(dense(2), vec![0.0, 3.0, -3.0]);
    }

    #[test]
    fn classical_contact_generator_on_edge_pair() {
        let g = Graph::build(GraphKind::EdgePair).unwrap();
        let m = RateModel::classical_contact(1.0).unwrap();
        let inf = InfectionRate::constant(1.5).unwrap();
        let q = build_generator(&g, &m, &inf, ProcessTag::Cpvl).unwrap();
        assert_eq!(q.states, 4);
        // state (1,0) = index 1: recovery to 0 at rate 1, infection of vertex 1 at rate 1.5
        let row: Vec<(usize, f64)> = q.row(1).collect();
        assert_eq!(row, vec![(0, 1.0), (3, 1.5)]);
        assert_eq!(q.diagonal(3), -2.0);
        assert!(q.max_row_sum_error() < 1e-12);
    }

    #[test]
    fn codec_round_trip_and_row_bound() {
        let g = Graph::build(GraphKind::Cycle { n: 3 }).unwrap();
        let m = RateModel::power_law(2.0).unwrap().capped(2).unwrap();
        let inf = InfectionRate::power(0.8, 1.0).unwrap();
        for tag in [ProcessTag::Cpvl, ProcessTag::Cpli] {
            let q = build_generator(&g, &m, &InfectionRate::constant(0.8).unwrap(), tag).unwrap();
            for i in 0..q.states {
                assert_eq!(q.encode(&q.decode(i)), i);
                assert!(q.row(i).count() <= 3 * 3);
                assert!(q.row(i).all(|(_, r)| r > 0.0));
            }
            assert!(q.max_row_sum_error() < 1e-12);
        }
        assert!(build_generator(&g, &m, &inf, ProcessTag::Cpli).is_err());
        let big = Graph::build(GraphKind::Cycle { n: 7 }).unwrap();
        assert!(matches!(
            build_generator(&big, &m, &InfectionRate::constant(1.0).unwrap(), ProcessTag::Cpvl),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn transient_properties() {
        let m = RateModel::power_law(2.0).unwrap().capped(1).unwrap();
        let inf = InfectionRate::constant(1.0).unwrap();
        let q = build_generator(&single(), &m, &inf, ProcessTag::Cpvl).unwrap();
        let start = q.delta(&Configuration::from_loads(vec![1])).unwrap();
        assert_eq!(transient_distribution(&q, &start, 0.0, 1e-10).unwrap(), start);
        let p = transient_distribution(&q, &start, 100.0, 1e-10).unwrap();
        assert!(p[0] >= 0.999);
        let a = transient_distribution(&q, &start, 1.7, 1e-10).unwrap();
        let half = transient_distribution(&q, &start, 0.6, 1e-10).unwrap();
        let b = transient_distribution(&q, &half, 1.1, 1e-10).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-9));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn extinction_probability_is_monotone() {
        let g = Graph::build(GraphKind::EdgePair).unwrap();
        let m = RateModel::classical_contact(1.0).unwrap();
        let q = build_generator(&g, &m, &InfectionRate::constant(1.0).unwrap(), ProcessTag::Cpvl).unwrap();
        let init = Configuration::from_loads(vec![1, 0]);
        let mut prev = 0.0;
        for k in 0..20 {
            let p = exact_extinction_probability(&q, &init, k as f64 * 0.25).unwrap();
            assert!(p + 1e-12 >= prev);
            prev = p;
        }
        assert!((exact_extinction_probability(&q, &Configuration::zeros(2), 3.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duality_gap_small_cases() {
        let g = Graph::build(GraphKind::EdgePair).unwrap();
        let m = RateModel::power_law(2.0).unwrap().capped(1).unwrap();
        let gap = exact_duality_gap(&g, &m, 1.0, &Configuration::point(2, 0, 1), &Configuration::zeros(2), 0.7, 1e-10)
            .unwrap();
        assert!(gap.gap <= 1e-9, "{gap:?}");
        let z = exact_duality_gap(&g, &m, 1.0, &Configuration::zeros(2), &Configuration::point(2, 1, 1), 1.0, 1e-10)
            .unwrap();
        assert!((z.lhs - 1.0).abs() < 1e-9 && (z.rhs - 1.0).abs() < 1e-9);
        let one = single();
        let m2 = RateModel::power_law(1.5).unwrap().capped(2).unwrap();
        for (e, x) in [(1, 0), (2, 1), (3, 2), (1, 3)] {
            let gap = exact_duality_gap(
                &one,
                &m2,
                0.0,
                &Configuration::from_loads(vec![e]),
                &Configuration::from_loads(vec![x]),
                1.3,
                1e-10,
            )
            .unwrap();
            assert!(gap.gap <= 1e-9, "{e} {x} {gap:?}");
        }
    }
}

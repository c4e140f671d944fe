//! Concrete values for the protocol's loop bounds and phase lengths.

use num_rational::Ratio;
use serde::Serialize;

use super::ProtocolError;
use crate::circuit::CircuitReport;
use crate::derand::{delta_prime, DerandConfig};
use crate::netsim::ceil_log2;
use crate::rmldc::ReedMullerCode;

/// Knobs that replace the default constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overrides {
    /// Multiplier in `maxRetTime = ceil(ret_mult * ceil(Lambda q / n) * log2 n)`.
    pub ret_mult: f64,
    /// Fixed retrieve phase length, bypassing the formula.
    pub ret_time: Option<u64>,
    /// Fixed store phase length, bypassing the formula.
    pub store_time: Option<u64>,
    /// Fixed restart threshold, bypassing `max(1, floor(c_f n / (q log2 n)))`.
    pub threshold: Option<usize>,
    pub derand: DerandConfig,
}

impl Default for Overrides {
    fn default() -> Self {
        Self {
            ret_mult: 8.0,
            ret_time: None,
            store_time: None,
            threshold: None,
            derand: DerandConfig::default(),
        }
    }
}

impl Overrides {
    /// Applies `KEY=VAL`. Keys: ret_mult, ret_time, store_time, threshold,
    /// trials_mult, cap_mult, det_restarts.
    pub fn set(&mut self, key: &str, val: &str) -> Result<(), ProtocolError> {
        let bad = || ProtocolError::Config(format!("bad value {val:?} for override {key}"));
        match key {
            "ret_mult" => self.ret_mult = val.parse().ok().filter(|&x: &f64| x > 0.0).ok_or_else(bad)?,
            "ret_time" => self.ret_time = Some(val.parse().ok().filter(|&x| x > 0).ok_or_else(bad)?),
            "store_time" => self.store_time = Some(val.parse().ok().filter(|&x| x > 0).ok_or_else(bad)?),
            "threshold" => self.threshold = Some(val.parse().map_err(|_| bad())?),
            "trials_mult" => self.derand.trials_mult = val.parse().ok().filter(|&x| x > 0).ok_or_else(bad)?,
            "cap_mult" => self.derand.cap_mult = val.parse().ok().filter(|&x| x > 0).ok_or_else(bad)?,
            "det_restarts" => self.derand.restarts = val.parse().map_err(|_| bad())?,
            _ => return Err(ProtocolError::Config(format!("unknown override {key}"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConstants {
    pub n: usize,
    pub q: u32,
    pub alpha: Ratio<u64>,
    pub delta: Ratio<u64>,
    pub delta_prime: Ratio<u64>,
    /// `max(8 omega / ((1 - alpha) n), Delta, n)`.
    pub lambda: Ratio<u64>,
    /// NodeDoubling steps per repetition, `ceil(log2 n)`.
    pub l1_max: u32,
    /// AttemptDoubling steps per NodeDoubling step, `ceil(log2 Lambda)`.
    pub l2_max: u32,
    pub max_ret_time: u64,
    pub max_store_time: u64,
    pub c1: f64,
    pub c_f: f64,
    /// `c_f n / (q log2 n)` before flooring.
    pub analytic_threshold: f64,
    /// A repetition restarts once more than this many crashes occur in it.
    pub threshold: usize,
    /// `floor(floor(alpha n) / threshold)`.
    pub restart_limit: u32,
    /// Payload bits per symbol, `floor(log2 q)`.
    pub payload_bits: usize,
    /// Bits to transmit one symbol, `ceil(log2 q)`.
    pub symbol_bits: u32,
    pub derand: DerandConfig,
}

impl RunConstants {
    pub fn new(
        code: &ReedMullerCode,
        circuit: CircuitReport,
        alpha: Ratio<u64>,
        ov: &Overrides,
    ) -> Result<Self, ProtocolError> {
        let p = code.params();
        let n = p.n;
        if n < 2 {
            return Err(ProtocolError::Config("need at least two nodes".into()));
        }
        if alpha >= p.delta {
            return Err(ProtocolError::Config(format!(
                "alpha = {alpha} must be below delta = {}",
                p.delta
            )));
        }
        let one = Ratio::from_integer(1u64);
        let nr = Ratio::from_integer(n as u64);
        let lambda = (Ratio::from_integer(8 * circuit.width as u64) / ((one - alpha) * nr))
            .max(Ratio::from_integer(circuit.max_fan as u64))
            .max(nr);
        let lambda_ceil = lambda.ceil().to_integer();
        let log_n = (n as f64).log2();
        let per_node = (lambda * Ratio::from_integer(p.q as u64) / nr).ceil().to_integer();
        let max_ret_time = ov
            .ret_time
            .unwrap_or_else(|| (ov.ret_mult * per_node as f64 * log_n).ceil() as u64);
        let payload_bits = p.bits_per_symbol();
        let max_store_time = ov
            .store_time
            .unwrap_or_else(|| lambda_ceil.div_ceil((p.k * payload_bits) as u64));
        let c1 = ov.derand.c1(code);
        let alpha_f = *alpha.numer() as f64 / *alpha.denom() as f64;
        let c_f = ((1.0 - alpha_f) / 16.0).min(1.0 / (4.0 * c1));
        let analytic_threshold = c_f * n as f64 / (p.q as f64 * log_n);
        let threshold = ov
            .threshold
            .unwrap_or_else(|| (analytic_threshold.floor() as usize).max(1));
        if threshold == 0 {
            return Err(ProtocolError::Config("restart threshold must be positive".into()));
        }
        let budget = (alpha * nr).floor().to_integer() as usize;
        Ok(Self {
            n,
            q: p.q,
            alpha,
            delta: p.delta,
            delta_prime: delta_prime(alpha, p.delta),
            lambda,
            l1_max: ceil_log2(n as u64),
            l2_max: ceil_log2(lambda_ceil).max(1),
            max_ret_time,
            max_store_time,
            c1,
            c_f,
            analytic_threshold,
            threshold,
            restart_limit: (budget / threshold) as u32,
            payload_bits,
            symbol_bits: ceil_log2(p.q as u64),
            derand: ov.derand.clone(),
        })
    }

    /// Rounds of one AttemptDoubling step.
    pub fn step_rounds(&self) -> u64 {
        self.max_ret_time + self.max_store_time
    }

    /// `(d + restarts) * ceil(log2 n) * ceil(log2 Lambda) * (maxRetTime + maxStoreTime)`.
    pub fn round_bound(&self, depth: u32, restarts: u32) -> u64 {
        (depth + restarts) as u64 * self.l1_max as u64 * self.l2_max as u64 * self.step_rounds()
    }

    /// Whether `count` items fit under `Lambda / 2^(l2 - 1)`.
    pub fn within_halving(&self, count: usize, l2: u32) -> bool {
        Ratio::from_integer(count as u64) * Ratio::from_integer(1u64 << (l2 - 1)) <= self.lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmldc::make_params;

    fn consts(q: u32, r: usize, width: usize, max_fan: usize) -> RunConstants {
        let code = ReedMullerCode::new(make_params(q, r, Ratio::new(1, 2)).unwrap());
        let report = CircuitReport {
            depth: 4,
            width,
            max_fan,
        };
        RunConstants::new(&code, report, Ratio::new(1, 5), &Overrides::default()).unwrap()
    }

    #[test]
    fn desk_scale_values() {
        // n = 25: Lambda = max(8*40/20, 6, 25) = 25; ceil(25*5/25) = 5;
        // 8 * 5 * log2 25 = 185.75; ceil(25 / (3 * 2)) = 5.
        let c = consts(5, 2, 40, 6);
        assert_eq!(c.lambda, Ratio::from_integer(25));
        assert_eq!((c.l1_max, c.l2_max), (5, 5));
        assert_eq!((c.max_ret_time, c.max_store_time), (186, 5));
        assert_eq!((c.payload_bits, c.symbol_bits), (2, 3));
        assert_eq!(c.threshold, 1);
        assert_eq!(c.restart_limit, 5);

        // n = 49: 8 * 7 * log2 49 = 314.4; ceil(49 / 12) = 5.
        let c = consts(7, 2, 40, 6);
        assert_eq!((c.max_ret_time, c.max_store_time), (315, 5));

        // n = 27: K = 1 and one payload bit per symbol; 8 * 3 * log2 27 = 114.1.
        let c = consts(3, 3, 40, 6);
        assert_eq!((c.max_ret_time, c.max_store_time), (115, 27));
        assert_eq!(c.payload_bits, 1);
    }

    #[test]
    fn wide_circuit_raises_lambda() {
        // 8 * 400 / (0.8 * 25) = 160
        let c = consts(5, 2, 400, 6);
        assert_eq!(c.lambda, Ratio::from_integer(160));
        assert_eq!(c.l2_max, 8);
        assert!(c.within_halving(160, 1));
        assert!(c.within_halving(80, 2));
        assert!(!c.within_halving(81, 2));
    }

    #[test]
    fn constants_follow_definitions() {
        let c = consts(5, 2, 40, 6);
        assert!((c.c_f - ((0.8f64 / 16.0).min(1.0 / (4.0 * c.c1)))).abs() < 1e-12);
        assert!(c.analytic_threshold < 1.0);
    }

    #[test]
    fn overrides_parse() {
        let mut ov = Overrides::default();
        ov.set("ret_mult", "4").unwrap();
        ov.set("threshold", "3").unwrap();
        ov.set("cap_mult", "2").unwrap();
        assert_eq!(ov.ret_mult, 4.0);
        assert_eq!(ov.threshold, Some(3));
        assert_eq!(ov.derand.cap_mult, 2);
        assert!(ov.set("ret_mult", "-1").is_err());
        assert!(ov.set("nope", "1").is_err());
    }

    #[test]
    fn alpha_must_be_below_delta() {
        let code = ReedMullerCode::new(make_params(5, 2, Ratio::new(1, 2)).unwrap());
        let report = CircuitReport {
            depth: 1,
            width: 1,
            max_fan: 1,
        };
        assert!(RunConstants::new(&code, report, Ratio::new(1, 2), &Overrides::default()).is_err());
    }
}

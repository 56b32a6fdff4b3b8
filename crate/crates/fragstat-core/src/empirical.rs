//! The empirical measure `gamma_T` of the frozen population and its limit.
//!
//! `gamma_T(f) = sum_u X_u f(X_u / epsilon)` over frozen fragments; its
//! almost-sure limit is `gamma_inf(f) = eta(Phi(f))` with
//! `Phi(f)(y) = f(e^{-y})`. Injective q-fold versions are computed through
//! diagonal-correction identities for q = 2, 3 and by direct enumeration
//! above that.

use crate::fragtree::FragmentationOutcome;
use crate::harness::quadrature::quadrature;
use crate::harness::stats::KahanSum;
use crate::renewal::StationaryLaw;
use crate::{Error, Result};

/// Bounded test function on `[0, 1]`, built from the registry grammar
/// `const:<c>`, `power:<k>`, `centered:<base>`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Const(f64),
    Power(u32),
    Centered { base: Box<TestFunction>, shift: f64 },
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction::Const(c)
    }

    pub fn power(k: u32) -> Self {
        TestFunction::Power(k)
    }

    /// Centers `base` against the limit measure: `f - gamma_inf(f)`.
    pub fn centered(base: TestFunction, eta: &StationaryLaw) -> Result<Self> {
        if matches!(base, TestFunction::Centered { .. }) {
            return Ok(base);
        }
        let shift = gamma_infinity(&base, eta)?;
        Ok(TestFunction::Centered {
            base: Box::new(base),
            shift,
        })
    }

    /// Registry id, e.g. `centered:power:1`.
    pub fn id(&self) -> String {
        match self {
            TestFunction::Const(c) => format!("const:{c}"),
            TestFunction::Power(k) => format!("power:{k}"),
            TestFunction::Centered { base, .. } => format!("centered:{}", base.id()),
        }
    }

    /// Parses a registry id; `centered:` variants need the stationary law.
    pub fn parse(spec: &str, eta: Option<&StationaryLaw>) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("centered:") {
            let base = Self::parse(rest, eta)?;
            let eta = eta.ok_or_else(|| {
                Error::invalid(format!("function '{spec}' needs a stationary law for centering"))
            })?;
            return Self::centered(base, eta);
        }
        if spec == "const" {
            return Ok(TestFunction::Const(1.0));
        }
        if let Some(rest) = spec.strip_prefix("const:") {
            let c: f64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad constant in '{spec}'")))?;
            return Ok(TestFunction::Const(c));
        }
        if let Some(rest) = spec.strip_prefix("power:") {
            let k: u32 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad exponent in '{spec}'")))?;
            return Ok(TestFunction::Power(k));
        }
        Err(Error::invalid(format!(
            "unknown test function '{spec}' (expected const[:c], power:k, centered:...)"
        )))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Const(c) => *c,
            TestFunction::Power(k) => x.powi(*k as i32),
            TestFunction::Centered { base, shift } => base.eval(x) - shift,
        }
    }

    /// The conjugated function on log scale: `Phi(f)(y) = f(e^{-y})`.
    pub fn phi(&self, y: f64) -> f64 {
        self.eval((-y).exp())
    }

    /// Sup-norm bound on `[0, 1]`.
    pub fn bound(&self) -> f64 {
        match self {
            TestFunction::Const(c) => c.abs(),
            TestFunction::Power(_) => 1.0,
            TestFunction::Centered { base, shift } => base.bound() + shift.abs(),
        }
    }

    /// Spot-checks `|f| <= bound` on a thousand-point grid.
    pub fn bound_holds_on_grid(&self) -> bool {
        let b = self.bound() + 1e-12;
        (0..=1000).all(|i| self.eval(i as f64 / 1000.0).abs() <= b)
    }
}

/// The transform `Phi(f)(y) = f(e^{-y})` as a standalone closure.
pub fn phi_transform(f: &TestFunction) -> impl Fn(f64) -> f64 + '_ {
    move |y| f.phi(y)
}

/// Mass-weighted atoms of a frozen population on the rescaled axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    /// `(location X_u / epsilon, weight X_u)`.
    pub atoms: Vec<(f64, f64)>,
    pub epsilon: f64,
}

impl EmpiricalMeasure {
    pub fn from_outcome(outcome: &FragmentationOutcome) -> Self {
        EmpiricalMeasure {
            atoms: outcome
                .fragments
                .iter()
                .map(|f| (f.size / outcome.epsilon, f.size))
                .collect(),
            epsilon: outcome.epsilon,
        }
    }

    pub fn from_sizes(sizes: &[f64], epsilon: f64) -> Self {
        EmpiricalMeasure {
            atoms: sizes.iter().map(|&s| (s / epsilon, s)).collect(),
            epsilon,
        }
    }

    /// `gamma_T(f)`, compensated single pass.
    pub fn gamma(&self, f: &TestFunction) -> f64 {
        let mut sum = KahanSum::default();
        for &(x, w) in &self.atoms {
            sum.add(w * f.eval(x));
        }
        sum.value()
    }

    /// Diagonal sum `sum_u w_u^k prod_i f_i(x_u)`.
    fn diagonal(&self, fs: &[&TestFunction], k: u32) -> f64 {
        let mut sum = KahanSum::default();
        for &(x, w) in &self.atoms {
            let mut v = w.powi(k as i32);
            for f in fs {
                v *= f.eval(x);
            }
            sum.add(v);
        }
        sum.value()
    }

    /// Injective q-fold sum `gamma^{circled-dot q}(f_1 x ... x f_q)`.
    ///
    /// q = 2 and 3 use the diagonal-correction identities; larger q walks
    /// all injective tuples directly and is guarded to a thousand atoms.
    pub fn gamma_injective(&self, fs: &[&TestFunction]) -> Result<f64> {
        match fs.len() {
            0 => Err(Error::invalid("gamma_injective needs q >= 1")),
            1 => Ok(self.gamma(fs[0])),
            2 => {
                let g = self.gamma(fs[0]) * self.gamma(fs[1]);
                Ok(g - self.diagonal(fs, 2))
            }
            3 => {
                let g1 = self.gamma(fs[0]);
                let g2 = self.gamma(fs[1]);
                let g3 = self.gamma(fs[2]);
                let d12 = self.diagonal(&[fs[0], fs[1]], 2);
                let d13 = self.diagonal(&[fs[0], fs[2]], 2);
                let d23 = self.diagonal(&[fs[1], fs[2]], 2);
                let d123 = self.diagonal(fs, 3);
                Ok(g1 * g2 * g3 - d12 * g3 - d13 * g2 - d23 * g1 + 2.0 * d123)
            }
            q => {
                if self.atoms.len() > 1000 {
                    return Err(Error::invalid(format!(
                        "direct enumeration of injective {q}-tuples over {} atoms refused; \
                         reduce epsilon or q",
                        self.atoms.len()
                    )));
                }
                let mut used = vec![false; self.atoms.len()];
                Ok(self.enumerate_injective(fs, 0, 1.0, &mut used))
            }
        }
    }

    fn enumerate_injective(
        &self,
        fs: &[&TestFunction],
        depth: usize,
        acc: f64,
        used: &mut [bool],
    ) -> f64 {
        if depth == fs.len() {
            return acc;
        }
        let mut total = 0.0;
        for (i, &(x, w)) in self.atoms.iter().enumerate() {
            if used[i] {
                continue;
            }
            used[i] = true;
            total += self.enumerate_injective(fs, depth + 1, acc * w * fs[depth].eval(x), used);
            used[i] = false;
        }
        total
    }

    /// The tensor q-fold sum (no injectivity): product of marginals.
    pub fn gamma_tensor(&self, fs: &[&TestFunction]) -> f64 {
        fs.iter().map(|f| self.gamma(f)).product()
    }
}

/// `gamma_T(f)` straight off a frozen outcome.
pub fn gamma(outcome: &FragmentationOutcome, f: &TestFunction) -> f64 {
    let mut sum = KahanSum::default();
    let inv = 1.0 / outcome.epsilon;
    for frag in &outcome.fragments {
        sum.add(frag.size * f.eval(frag.size * inv));
    }
    sum.value()
}

/// `gamma_inf(f) = eta(Phi(f))` by quadrature.
pub fn gamma_infinity(f: &TestFunction, eta: &StationaryLaw) -> Result<f64> {
    quadrature(|y| f.phi(y) * eta.density(y), 0.0, eta.upper(), 1e-10)
}

/// Streaming accumulator of `gamma_T(f_i)` for several functions at once;
/// feed it fragment sizes as they are emitted.
pub struct GammaAccumulator<'a> {
    fns: &'a [TestFunction],
    sums: Vec<KahanSum>,
    inv_epsilon: f64,
}

impl<'a> GammaAccumulator<'a> {
    pub fn new(fns: &'a [TestFunction], epsilon: f64) -> Self {
        GammaAccumulator {
            fns,
            sums: vec![KahanSum::default(); fns.len()],
            inv_epsilon: 1.0 / epsilon,
        }
    }

    #[inline]
    pub fn visit(&mut self, size: f64) {
        let x = size * self.inv_epsilon;
        for (f, s) in self.fns.iter().zip(&mut self.sums) {
            s.add(size * f.eval(x));
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s.value()).collect()
    }
}

//! Payoff expression trees over the fixing vectors of an exotic option.
//!
//! Payoffs parse from a prefix-notation text form, e.g.
//! `(call (avg x1 x2) 100)` for an average-price call over the first and
//! second fixing. Atoms are numeric literals and fixing references `x<k>`
//! (coordinate selection `x<k>_<i>` for multi-asset fixings, 1-based).
//! Operators: `+ - * max min avg call put digital`.
//!
//! Local Lipschitz metadata `(p, L)` is declared by the user and spot-checked
//! with random perturbation pairs; it is not derived symbolically.

use rand::Rng;

use crate::error::{PathwiseError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// `fixing` indexes the schedule (0-based), `coord` the asset (0-based).
    Fixing { fixing: usize, coord: usize },
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Mul(Vec<Expr>),
    Max(Vec<Expr>),
    Min(Vec<Expr>),
    Avg(Vec<Expr>),
    /// `(arg - strike)^+` or `(strike - arg)^+`.
    Hinge { arg: Box<Expr>, strike: f64, put: bool },
    /// Indicator `arg >= strike`; discontinuous.
    Digital { arg: Box<Expr>, strike: f64 },
}

impl Expr {
    pub fn eval(&self, fixings: &[Vec<f64>]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Fixing { fixing, coord } => fixings[*fixing][*coord],
            Expr::Add(args) => args.iter().map(|e| e.eval(fixings)).sum(),
            Expr::Sub(a, b) => a.eval(fixings) - b.eval(fixings),
            Expr::Neg(a) => -a.eval(fixings),
            Expr::Mul(args) => args.iter().map(|e| e.eval(fixings)).product(),
            Expr::Max(args) => args.iter().map(|e| e.eval(fixings)).fold(f64::MIN, f64::max),
            Expr::Min(args) => args.iter().map(|e| e.eval(fixings)).fold(f64::MAX, f64::min),
            Expr::Avg(args) => {
                args.iter().map(|e| e.eval(fixings)).sum::<f64>() / args.len() as f64
            }
            Expr::Hinge { arg, strike, put } => {
                let v = arg.eval(fixings);
                if *put {
                    (strike - v).max(0.0)
                } else {
                    (v - strike).max(0.0)
                }
            }
            Expr::Digital { arg, strike } => {
                if arg.eval(fixings) >= *strike {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Fixing { .. } => {}
            Expr::Add(v) | Expr::Mul(v) | Expr::Max(v) | Expr::Min(v) | Expr::Avg(v) => {
                for e in v {
                    e.visit(f);
                }
            }
            Expr::Sub(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Neg(a) => a.visit(f),
            Expr::Hinge { arg, .. } | Expr::Digital { arg, .. } => arg.visit(f),
        }
    }

    /// Set of fixing indices the expression reads.
    pub fn reads(&self) -> std::collections::BTreeSet<usize> {
        let mut set = std::collections::BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Fixing { fixing, .. } = e {
                set.insert(*fixing);
            }
        });
        set
    }

    pub fn is_discontinuous(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Digital { .. }) {
                found = true;
            }
        });
        found
    }
}

/// Tokenize and parse the prefix form.
pub fn parse(text: &str) -> Result<Expr> {
    let mut tokens = tokenize(text);
    tokens.reverse();
    let expr = parse_expr(&mut tokens)?;
    if !tokens.is_empty() {
        return Err(PathwiseError::PayoffParse(format!(
            "trailing input after expression: {:?}",
            tokens.last().unwrap()
        )));
    }
    Ok(expr)
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

fn parse_expr(tokens: &mut Vec<String>) -> Result<Expr> {
    let tok = tokens
        .pop()
        .ok_or_else(|| PathwiseError::PayoffParse("unexpected end of input".into()))?;
    if tok == "(" {
        let op = tokens
            .pop()
            .ok_or_else(|| PathwiseError::PayoffParse("missing operator after '('".into()))?;
        let mut args = Vec::new();
        while let Some(next) = tokens.last() {
            if next == ")" {
                tokens.pop();
                return build(&op, args);
            }
            args.push(parse_expr(tokens)?);
        }
        Err(PathwiseError::PayoffParse("missing ')'".into()))
    } else if tok == ")" {
        Err(PathwiseError::PayoffParse("unexpected ')'".into()))
    } else {
        atom(&tok)
    }
}

fn atom(tok: &str) -> Result<Expr> {
    if let Some(rest) = tok.strip_prefix('x') {
        let (fix_str, coord) = match rest.split_once('_') {
            Some((f, c)) => {
                let coord: usize = c.parse().map_err(|_| {
                    PathwiseError::PayoffParse(format!("bad coordinate in '{tok}'"))
                })?;
                if coord == 0 {
                    return Err(PathwiseError::PayoffParse(format!(
                        "coordinates are 1-based in '{tok}'"
                    )));
                }
                (f, coord - 1)
            }
            None => (rest, 0),
        };
        if let Ok(fixing) = fix_str.parse::<usize>() {
            return Ok(Expr::Fixing { fixing, coord });
        }
    }
    tok.parse::<f64>()
        .map(Expr::Const)
        .map_err(|_| PathwiseError::PayoffParse(format!("unrecognized atom '{tok}'")))
}

fn build(op: &str, mut args: Vec<Expr>) -> Result<Expr> {
    let need = |n: usize| -> Result<()> {
        if args.len() == n {
            Ok(())
        } else {
            Err(PathwiseError::PayoffParse(format!("'{op}' needs {n} arguments, got {}", args.len())))
        }
    };
    let need_some = |args: &[Expr]| -> Result<()> {
        if args.is_empty() {
            Err(PathwiseError::PayoffParse(format!("'{op}' needs at least one argument")))
        } else {
            Ok(())
        }
    };
    let strike_of = |e: &Expr| -> Result<f64> {
        match e {
            Expr::Const(c) => Ok(*c),
            Expr::Neg(inner) => match **inner {
                Expr::Const(c) => Ok(-c),
                _ => Err(PathwiseError::PayoffParse(format!("'{op}' strike must be numeric"))),
            },
            _ => Err(PathwiseError::PayoffParse(format!("'{op}' strike must be numeric"))),
        }
    };
    match op {
        "+" => {
            need_some(&args)?;
            Ok(Expr::Add(args))
        }
        "-" => {
            if args.len() == 1 {
                Ok(Expr::Neg(Box::new(args.pop().unwrap())))
            } else {
                need(2)?;
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::Sub(Box::new(a), Box::new(b)))
            }
        }
        "*" => {
            need_some(&args)?;
            Ok(Expr::Mul(args))
        }
        "max" => {
            need_some(&args)?;
            Ok(Expr::Max(args))
        }
        "min" => {
            need_some(&args)?;
            Ok(Expr::Min(args))
        }
        "avg" => {
            need_some(&args)?;
            Ok(Expr::Avg(args))
        }
        "call" | "put" => {
            need(2)?;
            let strike = strike_of(&args.pop().unwrap())?;
            let arg = args.pop().unwrap();
            Ok(Expr::Hinge { arg: Box::new(arg), strike, put: op == "put" })
        }
        "digital" => {
            need(2)?;
            let strike = strike_of(&args.pop().unwrap())?;
            let arg = args.pop().unwrap();
            Ok(Expr::Digital { arg: Box::new(arg), strike })
        }
        _ => Err(PathwiseError::PayoffParse(format!("unknown operator '{op}'"))),
    }
}

/// A payoff with declared local-Lipschitz metadata.
#[derive(Debug, Clone)]
pub struct PayoffSpec {
    pub expr: Expr,
    /// Declared polynomial growth exponent of the Lipschitz constant.
    pub lipschitz_exponent: f64,
    /// Declared Lipschitz scale.
    pub lipschitz_const: f64,
}

/// Result of the empirical local-Lipschitz probe.
#[derive(Debug, Clone, Copy)]
pub struct LipschitzProbe {
    /// Largest observed `|h(x) - h(y)| / ((1 + m^p) sum_i |x_i - y_i|)`.
    pub worst_ratio: f64,
    /// Whether the observed ratio stays within the declared constant
    /// (5% slack for sampling noise).
    pub consistent: bool,
    pub pairs: usize,
}

impl PayoffSpec {
    pub fn new(expr: Expr, lipschitz_exponent: f64, lipschitz_const: f64) -> Result<Self> {
        if lipschitz_exponent < 0.0 || lipschitz_const.is_nan() || lipschitz_const <= 0.0 {
            return Err(PathwiseError::Validation(
                "Lipschitz metadata needs p >= 0 and L > 0".into(),
            ));
        }
        Ok(Self { expr, lipschitz_exponent, lipschitz_const })
    }

    pub fn parse(text: &str, lipschitz_exponent: f64, lipschitz_const: f64) -> Result<Self> {
        Self::new(parse(text)?, lipschitz_exponent, lipschitz_const)
    }

    pub fn eval(&self, fixings: &[Vec<f64>]) -> f64 {
        self.expr.eval(fixings)
    }

    pub fn reads(&self) -> std::collections::BTreeSet<usize> {
        self.expr.reads()
    }

    pub fn is_discontinuous(&self) -> bool {
        self.expr.is_discontinuous()
    }

    /// Random-perturbation consistency check of the declared `(p, L)` pair
    /// over `pairs` samples with fixing values drawn from `(lo, hi)` per
    /// coordinate. Skipped (trivially consistent) for discontinuous payoffs,
    /// which carry no Lipschitz claim.
    pub fn lipschitz_probe(
        &self,
        n_fixings: usize,
        dimension: usize,
        lo: f64,
        hi: f64,
        pairs: usize,
        rng: &mut impl Rng,
    ) -> LipschitzProbe {
        if self.is_discontinuous() {
            return LipschitzProbe { worst_ratio: f64::NAN, consistent: true, pairs: 0 };
        }
        let m = lo.abs().max(hi.abs());
        let growth = 1.0 + m.powf(self.lipschitz_exponent);
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let draw = |rng: &mut dyn rand::RngCore| -> Vec<Vec<f64>> {
                (0..=n_fixings)
                    .map(|_| (0..dimension).map(|_| rng.gen_range(lo..hi)).collect())
                    .collect()
            };
            let x = draw(rng);
            // y is a small perturbation of x half the time, a fresh draw else
            let y: Vec<Vec<f64>> = if rng.gen_bool(0.5) {
                x.iter()
                    .map(|v| {
                        v.iter()
                            .map(|&c| {
                                (c + rng.gen_range(-0.01..0.01) * (hi - lo)).clamp(lo, hi)
                            })
                            .collect()
                    })
                    .collect()
            } else {
                draw(rng)
            };
            let dist: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| {
                    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
                })
                .sum();
            if dist < 1e-14 {
                continue;
            }
            let dh = (self.eval(&x) - self.eval(&y)).abs();
            worst = worst.max(dh / (growth * dist));
        }
        LipschitzProbe {
            worst_ratio: worst,
            consistent: worst <= self.lipschitz_const * 1.05,
            pairs,
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{print_expr, BinOp, Expr, UnOp};

/// Expression types: sorts collapse to numbers and booleans for checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ty {
    Num,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SortError {
    #[error("sort error in `{expr}`: expected {expected:?}, found {found:?}")]
    Mismatch {
        expr: String,
        expected: Ty,
        found: Ty,
    },
    #[error("unbound variable `{0}`")]
    Unbound(String),
}

/// Scoped sort context. Message variables bound without a declared sort
/// (process branch binders) start flexible and take the sort of their first
/// use. State variables are numeric unless declared otherwise.
#[derive(Debug, Clone, Default)]
pub struct SortCtx {
    scopes: Vec<(String, Option<Ty>)>,
    state: BTreeMap<String, Ty>,
    allow_free: bool,
}

impl SortCtx {
    pub fn new() -> SortCtx {
        SortCtx::default()
    }

    /// Free message variables are accepted (formulae may be open).
    pub fn open() -> SortCtx {
        SortCtx {
            allow_free: true,
            ..SortCtx::default()
        }
    }

    pub fn with_state(mut self, state: BTreeMap<String, Ty>) -> SortCtx {
        self.state = state;
        self
    }

    pub fn push(&mut self, x: &str, ty: Option<Ty>) {
        self.scopes.push((x.to_string(), ty));
    }

    pub fn pop(&mut self) {
        self.scopes.pop();
    }

    pub fn lookup(&self, x: &str) -> Option<Option<Ty>> {
        self.scopes
            .iter()
            .rev()
            .find(|(n, _)| n == x)
            .map(|(_, t)| *t)
    }

    /// Type of the first-pushed binding of `x`.
    pub fn outermost(&self, x: &str) -> Option<Option<Ty>> {
        self.scopes.iter().find(|(n, _)| n == x).map(|(_, t)| *t)
    }

    fn set(&mut self, x: &str, ty: Ty) {
        if let Some(slot) = self.scopes.iter_mut().rev().find(|(n, _)| n == x) {
            slot.1 = Some(ty);
        } else if self.allow_free {
            self.scopes.insert(0, (x.to_string(), Some(ty)));
        }
    }

    fn state_ty(&self, x: &str) -> Ty {
        self.state.get(x).copied().unwrap_or(Ty::Num)
    }

    /// Infers the type of `e`; `None` if it is a still-flexible variable.
    pub fn infer(&mut self, e: &Expr) -> Result<Option<Ty>, SortError> {
        match e {
            Expr::Lit(v) => Ok(Some(v.ty())),
            Expr::State(x) => Ok(Some(self.state_ty(x))),
            Expr::Var(x) => match self.lookup(x) {
                Some(t) => Ok(t),
                None if self.allow_free => Ok(None),
                None => Err(SortError::Unbound(x.clone())),
            },
            Expr::Unary(UnOp::Neg, a) => {
                self.check(a, Ty::Num)?;
                Ok(Some(Ty::Num))
            }
            Expr::Unary(UnOp::Not, a) => {
                self.check(a, Ty::Bool)?;
                Ok(Some(Ty::Bool))
            }
            Expr::Binary(op, a, b) => match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul => {
                    self.check(a, Ty::Num)?;
                    self.check(b, Ty::Num)?;
                    Ok(Some(Ty::Num))
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    self.check(a, Ty::Num)?;
                    self.check(b, Ty::Num)?;
                    Ok(Some(Ty::Bool))
                }
                BinOp::And | BinOp::Or => {
                    self.check(a, Ty::Bool)?;
                    self.check(b, Ty::Bool)?;
                    Ok(Some(Ty::Bool))
                }
                BinOp::Eq | BinOp::Ne => {
                    match (self.infer(a)?, self.infer(b)?) {
                        (Some(ta), _) => self.check(b, ta)?,
                        (None, Some(tb)) => self.check(a, tb)?,
                        (None, None) => {
                            self.check(a, Ty::Num)?;
                            self.check(b, Ty::Num)?;
                        }
                    }
                    Ok(Some(Ty::Bool))
                }
            },
        }
    }

    pub fn check(&mut self, e: &Expr, ty: Ty) -> Result<(), SortError> {
        match self.infer(e)? {
            Some(t) if t == ty => Ok(()),
            Some(t) => Err(SortError::Mismatch {
                expr: print_expr(e),
                expected: ty,
                found: t,
            }),
            None => {
                if let Expr::Var(x) = e {
                    self.set(x, ty);
                }
                Ok(())
            }
        }
    }
}

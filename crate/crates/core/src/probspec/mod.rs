//! Problem files: the expression language, Taylor jets of expressions and
//! the JSON schema that instantiates a [`crate::reduction::DegenerateSystemSpec`].

pub mod expr;
pub mod jet;
pub mod problem;

pub use expr::{parse_expression, parse_expression_with, Bindings, Expr, Var};
pub use jet::Jet2;
pub use problem::{
    instantiate, instantiate_with, load_problem, oracle_deviation, parse_problem, Instance, Oracle,
    Overrides, ProblemFile,
};

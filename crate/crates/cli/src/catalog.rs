//! Built-in operators with their known theoretical facts.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Parameter {
    pub name: &'static str,
    pub kind: &'static str,
    pub default: Option<f64>,
    pub meaning: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fact {
    pub quantity: &'static str,
    pub value: String,
    pub oracle: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub dim: Option<usize>,
    pub operator: &'static str,
    pub parameters: Vec<Parameter>,
    pub facts: Vec<Fact>,
}

fn fact(quantity: &'static str, value: impl Into<String>, oracle: &'static str) -> Fact {
    Fact {
        quantity,
        value: value.into(),
        oracle,
    }
}

pub fn list_builtin_operators() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "laplacian_1d",
            dim: Some(1),
            operator: "P = -u''",
            parameters: vec![],
            facts: vec![
                fact("lambda0", "0", "Dirichlet eigenvalues (pi/2r)^2 -> 0"),
                fact("class", "NullCritical", "Gaussian kernel (4 pi t)^(-1/2)"),
                fact("large_time_limit", "0", "Gaussian kernel"),
            ],
        },
        CatalogEntry {
            name: "laplacian_2d",
            dim: Some(2),
            operator: "P = -(u_11 + u_22)",
            parameters: vec![],
            facts: vec![
                fact("lambda0", "0", "Dirichlet eigenvalues 2 (pi/2r)^2 -> 0"),
                fact("class", "NullCritical", "Gaussian kernel (4 pi t)^(-1)"),
            ],
        },
        CatalogEntry {
            name: "ou_1d",
            dim: Some(1),
            operator: "P = -u'' + rate x u'",
            parameters: vec![Parameter {
                name: "rate",
                kind: "number > 0",
                default: Some(1.0),
                meaning: "mean-reversion rate of dX = -rate X dt + sqrt(2) dW",
            }],
            facts: vec![
                fact("lambda0", "0", "constants are ground states"),
                fact("class", "PositiveCritical", "Mehler kernel"),
                fact(
                    "large_time_limit",
                    "sqrt(rate / (2 pi)) at x = y = 0",
                    "Mehler kernel, stationary Gaussian density",
                ),
                fact("phi_star", "exp(-rate x^2 / 2)", "stationary density"),
            ],
        },
        CatalogEntry {
            name: "drifted_bm_1d",
            dim: Some(1),
            operator: "P = -u'' - b u'",
            parameters: vec![Parameter {
                name: "b",
                kind: "number",
                default: Some(1.0),
                meaning: "velocity of dX = b dt + sqrt(2) dW",
            }],
            facts: vec![
                fact("lambda0", "b^2 / 4", "gauge transform by exp(-b x / 2)"),
                fact("class", "Subcritical (b != 0)", "drifted Gaussian kernel"),
                fact("large_time_limit", "0", "drifted Gaussian kernel"),
            ],
        },
        CatalogEntry {
            name: "tabulated",
            dim: None,
            operator: "P = -sum a_ij d_i d_j + sum b_i d_i + c from a per-node table",
            parameters: vec![Parameter {
                name: "path",
                kind: "CSV file, header x[,y],a11[,a12,a22],b1[,b2],c",
                default: None,
                meaning: "one row per grid node in lexicographic order",
            }],
            facts: vec![],
        },
    ]
}
